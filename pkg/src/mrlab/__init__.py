"""Weighted trace, extension, and maximal regularity laboratory.

Anisotropic scale block analysis on grids, weighted mixed norms, trace
and extension operators with kernel families, boundary flattening maps
for special Lipschitz domains, and a Dirichlet heat solver on boundary
strips with stability studies over random data families.
"""

from .fields import AnisotropyDescriptor, GridField
from .lpanalysis import (LpSequence, LpTruncationError, lp_blocks,
                         lp_partial_sum)
from .params import (AdmissibilityReport, CompatibilityMode, ParamSet,
                     compatibility_mode, power_weight_in_Ap,
                     trace_space_orders, validate_domain_trace,
                     validate_halfspace_trace, validate_heat_theorem)
from .spaces import (AxisWeight, SpaceSpec, besov_tl_norm, lp_norm,
                     sobolev_norm, space_norm, weighted_mixed_norm)
from .synth import SynthField, random_synth
from .traceext import (RhoFamily, ext_j, make_rho, trace_m, trace_working)
from .geometry import (Atlas, PullbackMap, SpecialDomain, domain_preset,
                       boundary_besov_norm, domain_extension, domain_trace,
                       make_atlas, make_dks_pullback)
from .heat import (HeatOperator, HeatProblem, StripGrid, make_strip_grid,
                   mr_stability_study, solve_inhomogeneous)
from .cli import emit_plot, main

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport", "AnisotropyDescriptor", "Atlas", "AxisWeight",
    "CompatibilityMode", "GridField", "HeatOperator", "HeatProblem",
    "LpSequence", "LpTruncationError", "ParamSet", "PullbackMap",
    "RhoFamily", "SpaceSpec", "SpecialDomain", "StripGrid", "SynthField",
    "besov_tl_norm", "boundary_besov_norm", "compatibility_mode",
    "domain_extension", "domain_preset", "domain_trace", "emit_plot",
    "ext_j", "lp_blocks", "lp_norm", "lp_partial_sum", "main",
    "make_atlas", "make_dks_pullback", "make_rho", "make_strip_grid",
    "mr_stability_study", "power_weight_in_Ap", "random_synth",
    "sobolev_norm", "solve_inhomogeneous", "space_norm", "trace_m",
    "trace_space_orders", "trace_working", "validate_domain_trace",
    "validate_halfspace_trace", "validate_heat_theorem",
    "weighted_mixed_norm", "__version__",
]
