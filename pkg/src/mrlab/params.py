"""Parameter admissibility for the weighted trace and heat theorems.

All interval checks run in exact rational arithmetic (floats are exact binary
rationals, so Fraction conversion is lossless).  Membership in the excluded
sets gamma = j*p - 1 and the critical compatibility line additionally flags
anything within 1e-12, the documented tolerance for inputs that are rational
approximations of irrational targets.
"""

from dataclasses import dataclass, field
import enum
from fractions import Fraction
import json
import math

EXACT_TOL = Fraction(1, 10 ** 12)


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(float(x))  # exact binary expansion


@dataclass(frozen=True)
class ParamSet:
    """Integrability, weight, and smoothness parameters.

    p, q     : spatial / temporal integrability, both in (1, oo)
    gamma    : spatial power-weight exponent (distance to the boundary axis)
    mu       : temporal power-weight exponent
    kappa    : Hoelder index of the boundary graph, in [0, 1)
    k        : extra spatial smoothness shift
    k1       : trace smoothness budget (positive integer)
    ell      : temporal smoothness (positive integer)
    m        : highest trace order
    r        : integer smoothness of the boundary graph
    d        : ambient dimension
    """

    p: float
    q: float
    gamma: float
    mu: float = 0.0
    kappa: float = 0.0
    k: int = 0
    k1: int = 1
    ell: int = 1
    m: int = 0
    r: int = 1
    d: int = 2

    def __post_init__(self):
        if not (self.p > 1 and self.q > 1):
            raise ValueError("p and q must be > 1")
        for name in ("k", "k1", "ell", "m", "r", "d"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValueError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))
        if self.k < 0 or self.m < 0:
            raise ValueError("k and m must be >= 0")
        if self.k1 < 1 or self.ell < 1 or self.r < 1 or self.d < 1:
            raise ValueError("k1, ell, r, d must be >= 1")
        if not (0 <= self.kappa < 1):
            raise ValueError("kappa must be in [0, 1)")


class CompatibilityMode(enum.Enum):
    NoConditionAtZero = "NoConditionAtZero"
    RequireGZeroAtZero = "RequireGZeroAtZero"
    Critical = "Critical"


@dataclass(frozen=True)
class AdmissibilityReport:
    theorem: str
    verdict: bool
    violated_conditions: tuple = ()
    excluded_set_hits: tuple = field(default=())

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "verdict": bool(self.verdict),
            "violations": list(self.violated_conditions),
            "excluded_hits": list(self.excluded_set_hits),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _excluded_hits(gamma, p):
    """j >= 1 with gamma = j*p - 1 (exact or within tolerance)."""
    g, pf = _frac(gamma), _frac(p)
    jmax = math.ceil((g + 1) / pf) + 1
    hits = []
    for j in range(1, int(jmax) + 1):
        if abs(g - (j * pf - 1)) <= EXACT_TOL:
            hits.append(j)
    return tuple(hits)


def _mu_violations(ps):
    mu, q = _frac(ps.mu), _frac(ps.q)
    if not (-1 < mu < q - 1):
        return (f"mu={ps.mu} outside (-1, q-1)",)
    return ()


def validate_halfspace_trace(ps):
    """Admissibility of the order-m trace on the flat half-space."""
    g, p = _frac(ps.gamma), _frac(ps.p)
    violations = []
    if ps.k1 <= ps.m:
        violations.append(f"trace budget exhausted: k1={ps.k1} <= m={ps.m}")
    upper = (ps.k1 - ps.m) * p - 1
    if not (-1 < g < upper):
        violations.append(
            f"gamma={ps.gamma} outside (-1, (k1-m)p-1) = (-1, {float(upper)})")
    hits = _excluded_hits(ps.gamma, ps.p)
    if hits:
        violations.append(f"gamma on excluded line j*p-1 for j in {list(hits)}")
    violations.extend(_mu_violations(ps))
    return AdmissibilityReport("halfspace-trace", not violations,
                               tuple(violations), hits)


def validate_domain_trace(ps):
    """Admissibility of the order-m trace on a special graph domain."""
    g, p = _frac(ps.gamma), _frac(ps.p)
    rk = _frac(ps.r) + _frac(ps.kappa)
    violations = []
    if not (_frac(ps.k1) >= rk):
        violations.append(f"k1={ps.k1} < r+kappa={float(rk)}")
    if not (rk > ps.m):
        violations.append(f"r+kappa={float(rk)} <= m={ps.m}")
    lower = (ps.k1 - rk) * p - 1
    upper = (ps.k1 - ps.m) * p - 1
    if not (lower < g < upper):
        violations.append(
            f"gamma={ps.gamma} outside ((k1-r-kappa)p-1, (k1-m)p-1) = "
            f"({float(lower)}, {float(upper)})")
    hits = _excluded_hits(ps.gamma, ps.p)
    if hits:
        violations.append(f"gamma on excluded line j*p-1 for j in {list(hits)}")
    violations.extend(_mu_violations(ps))
    return AdmissibilityReport("domain-trace", not violations,
                               tuple(violations), hits)


def validate_heat_theorem(ps):
    """Admissibility for the inhomogeneous Dirichlet heat problem.

    Interpreted at the heat scaling: k1 = 2, ell = 1, m = 0, r = 1; the
    boundary graph class is C^{1,kappa} with kappa from ps.
    """
    g, p = _frac(ps.gamma), _frac(ps.p)
    q, mu = _frac(ps.q), _frac(ps.mu)
    violations = []
    lower = (1 - _frac(ps.kappa)) * p - 1
    upper = 2 * p - 1
    if not (lower < g < upper):
        violations.append(
            f"gamma={ps.gamma} outside ((1-kappa)p-1, 2p-1) = "
            f"({float(lower)}, {float(upper)})")
    hits = tuple(j for j in _excluded_hits(ps.gamma, ps.p) if j == 1)
    if hits:
        violations.append("gamma on excluded line p-1")
    violations.extend(_mu_violations(ps))
    lhs = 1 - (mu + 1) / q
    rhs = (g + 1) / (2 * p)
    if abs(lhs - rhs) <= EXACT_TOL:
        violations.append(
            "critical compatibility line 1-(mu+1)/q = (gamma+1)/(2p)")
    return AdmissibilityReport("heat-dirichlet", not violations,
                               tuple(violations), hits)


def trace_space_orders(ps, j):
    """(temporal, spatial) smoothness orders of the j-th trace component."""
    if j > ps.m:
        raise ValueError(f"trace order j={j} exceeds m={ps.m}")
    if j < 0:
        raise ValueError("trace order must be >= 0")
    g, p = _frac(ps.gamma), _frac(ps.p)
    ell, k1 = Fraction(ps.ell), Fraction(ps.k1)
    time_order = ell - (ell / k1) * (j + (g + 1) / p)
    space_order = k1 - j - (g + 1) / p
    return float(time_order), float(space_order)


def compatibility_mode(ps):
    """Which side of the critical line the zero-time trace condition sits on."""
    q, mu = _frac(ps.q), _frac(ps.mu)
    g, p = _frac(ps.gamma), _frac(ps.p)
    lhs = 1 - (mu + 1) / q
    rhs = (g + 1) / (2 * p)
    if abs(lhs - rhs) <= EXACT_TOL:
        return CompatibilityMode.Critical
    if lhs < rhs:
        return CompatibilityMode.NoConditionAtZero
    return CompatibilityMode.RequireGZeroAtZero


def power_weight_in_Ap(gamma, p):
    """Muckenhoupt window: |x1|^gamma is A_p iff gamma in (-1, p-1)."""
    g, pf = _frac(gamma), _frac(p)
    return -1 < g < pf - 1
