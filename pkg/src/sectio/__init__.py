"""Weighted sections of star bodies and the generalized Busemann-Petty problem."""
from .bodies import (ConvexityReport, StarBody, convexity_check, ellipsoid, from_radial_samples,
                     lp_ball, minkowski_functional, random_convex_body)
from .bpgm import (BPInstance, construct_counterexample, elementary_inequality_residual,
                   iterated_section_comparison, kernel, lp_ratio_table, section_integral_lower_bound,
                   verify_bpgm)
from .errors import ConfigError, NumericalFailure, PreconditionRefusal
from .harmonics import (HarmonicExpansion, expand, fourier_multiplier, fourier_on_sphere,
                        radon_inverse, radon_multiplier, radon_transform)
from .measures import (Density, SectionProfile, body_measure, body_power, gaussian, lebesgue,
                       lp_power, reconstruct_from_sections, section_measure_direct,
                       section_measure_fourier, section_profile)
from .sphere import (SphereGrid, build_sphere_grid, great_subsphere_grid, integrate_on_grid,
                     orthonormal_complement)

__version__ = "0.1.0"
