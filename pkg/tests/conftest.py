"""Shared fixtures.  Expensive builds happen once per session and are reused.

Every fixture is deterministic: fixed example parameters, fixed seeds, no
wall-clock dependence.  Tests that need to measure runtime build their own
objects instead of using these.
"""

import warnings

import pytest

from otflow.pathology import (build_counterexample, probe_non_integrability,
                              probe_velocity_growth)
from otflow.registry import get_example
from otflow.sudakov import BallMeasure, assemble_field, decompose, verify_nd


def _built(name):
    ex = get_example(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        field = ex.build()
    return ex, field


@pytest.fixture(scope="session")
def affine_built():
    """The uniform-to-uniform slope-3 problem with its built field."""
    return _built("affine")


@pytest.fixture(scope="session")
def gaussian_built():
    """The standard normal to N(1, 4) problem with its built field."""
    return _built("gaussian")


@pytest.fixture(scope="session")
def bad_fixed_point_built():
    """The indeterminate-fixed-point problem with its built field."""
    return _built("bad-fixed-point")


@pytest.fixture(scope="session")
def accumulating_c1_built():
    """The oscillatory map with fixed points at 1/n, cubic envelope."""
    return _built("accumulating-c1")


@pytest.fixture(scope="session")
def accumulating_cinf_built():
    """The oscillatory map with fixed points at 1/n, flat envelope."""
    return _built("accumulating-cinf")


@pytest.fixture(scope="session")
def quadratic_probe():
    """Counterexample map (quadratic gap sequence) with its growth scan."""
    cmap = build_counterexample("quadratic")
    return cmap, probe_velocity_growth(cmap)


@pytest.fixture(scope="session")
def log_squared_probe():
    """Counterexample map (log-squared gaps) with its divergence table."""
    cmap = build_counterexample("log_squared")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dive = probe_non_integrability(cmap)
    return cmap, dive


@pytest.fixture(scope="session")
def radial_disks():
    """Concentric disks radius 1 -> 2: family, assembled field, report."""
    m0 = BallMeasure((0.0, 0.0), 1.0)
    m1 = BallMeasure((0.0, 0.0), 2.0)
    family = decompose(m0, m1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        field_nd = assemble_field(family)
        report = verify_nd(field_nd, n_samples=10000, n_rays=64)
    return family, field_nd, report
