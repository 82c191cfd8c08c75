"""Autonomous velocity fields realizing monotone transport between measures."""

from .config import DEFAULT_CONFIG, BuildConfig
from .errors import (ConstructionError, DegenerateOrbitError, InputError,
                     InvalidMapError, MeasureSpecError, NormalizationError,
                     SearchFailureError, SeedCompatibilityError, SeedSignError,
                     TransportError, UnsupportedDecompositionError)
from .measures import (AffineImage, Gaussian, Measure1D, PiecewiseDensity,
                       Uniform, l1_distance, parse_measure, pushforward_by_map,
                       translate, wasserstein1)
from .monotone import (FixedPointPartition, MonotoneMap, MovingInterval,
                       compute_monotone_map, find_fixed_points,
                       map_from_callables)
from .velocity import (ApproximateResult, SeedSpec, TruncationZone,
                       VelocityField1D, approximate_lipschitz, build_general,
                       build_no_fixed_point, build_one_fixed_point,
                       build_two_fixed_points, build_velocity, julia_residual,
                       time_normalize)
from .flow import (PushResult, TransportReport, flow, push_measure,
                   verify_transport)
from .pathology import (CounterexampleMap, DivergenceResult, GrowthResult,
                        build_counterexample, probe_non_integrability,
                        probe_velocity_growth)
from .sudakov import (BallMeasure, MeasureND, NdTransportReport, ProductMeasure,
                      RadiusLaw, Ray, RayFamilyND, VelocityFieldND,
                      assemble_field, decompose, measure_nd_to_dict,
                      parse_measure_nd, per_ray_monotone_map, translate_nd,
                      verify_nd)
from .registry import ExampleProblem, example_names, get_example

__version__ = "0.1.0"
