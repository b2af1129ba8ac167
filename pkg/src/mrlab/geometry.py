"""Graph domains, boundary straightening, charts, and domain trace norms.

A special domain is the region above the graph of a compactly supported
function h on the line (planar domains; the half-space machinery itself
is dimension-agnostic, the curved geometry here is realised for d = 2).
The straightening map mollifies h at a scale proportional to the height,

    Phi^{-1}(y_1, yt) = (y_1 + (K_{eps |y_1|} * h)(yt), yt),

with K an even smooth probability kernel.  Evenness cancels the odd
moments, so the map stays smooth across y_1 = 0 despite the |y_1|, and
the hyperplane maps onto the graph exactly: Phi^{-1}(0, yt) = (h(yt), yt).
The forward map inverts the first component with a safeguarded Newton
iteration; the mollifier scale keeps dG/dy_1 >= 1/2, so the inverse is
well defined on the whole sampling window.

Charts are tangential intervals on the periodic sampling window.  The
cutoffs are built as eta_n = b_n / sqrt(sum_k b_k^2) from plateau bumps
b_n, which makes sum_n eta_n^2 = 1 exact in floating point wherever the
plateaus cover.  Every chart of a graph domain shares the one global
straightening map; the chart structure only localises the data.

Domain fields are closures f(x1, xt) evaluable on broadcast coordinate
arrays (the synthetic test families satisfy this).  Boundary fields live
on the tangential grid of the sampling window.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from . import config
from .fields import AnisotropyDescriptor, GridField
from .lpanalysis import LpSequence, smooth_step, spectral_derivative
from .spaces import AxisWeight, besov_tl_norm, sobolev_norm
from .synth import random_synth
from .traceext import (TraceVector, drop_first_axis, ext_series, kernel_box,
                       make_rho)

__all__ = [
    "SpecialDomain", "domain_preset", "domain_from_config", "DOMAIN_PRESETS",
    "distance_to_boundary", "PullbackMap", "make_dks_pullback", "pushforward",
    "inner_normal", "PulledNormal", "pulled_vector_field",
    "directional_trace_N", "TriangularChange", "triangular_change_matrix",
    "Chart", "Atlas", "make_atlas", "DomainTraceVector", "domain_trace",
    "DomainExtension", "domain_extension", "boundary_besov_norm",
    "dks_contract_report", "domain_roundtrip_report",
    "pushforward_norm_bracket", "chart_independence_bracket",
]


def _map_charts(fn, items):
    """Apply fn per chart, in parallel when configured; order preserved."""
    if config.THREADS > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.THREADS) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _plateau(u, r0, r1):
    """1 for u <= r0, 0 for u >= r1, smooth monotone in between.

    The quadrature behind smooth_step only runs on the transition zone.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    s = (np.atleast_1d(u) - r0) / (r1 - r0)
    out = np.zeros(s.shape)
    out[s <= 0.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    if mid.any():
        out[mid] = smooth_step(s[mid])
    return out[0] if scalar else out


def _wrap(t, half):
    """Reduce offsets into [-half, half) on the periodic window."""
    period = 2.0 * half
    return t - period * np.round(t / period)


# ---------------------------------------------------------------------------
# special domains


class SpecialDomain:
    """Region above the graph of a compactly supported boundary function.

    h and grad_h are vectorized closures of the tangential coordinate.
    window is the half-width of the periodic sampling window (same
    convention as grid boxes), support_radius the declared radius outside
    which h vanishes identically.  The declared regularity is (r, kappa)
    with seminorm = the C^{r,kappa} seminorm of h; a finite-difference
    Holder estimate of grad h on the sample grid must stay within 1.1 x
    the declared value.
    """

    def __init__(self, h, grad_h, support_radius, window, r=1, kappa=1.0,
                 seminorm=None, name="custom", samples=4096):
        if not (0 < support_radius < window):
            raise ValueError("need 0 < support_radius < window")
        self.h = h
        self.name = str(name)
        self.r = int(r)
        self.kappa = float(kappa)
        self.support_radius = float(support_radius)
        self.window = float(window)
        n = int(samples)
        self.xt_samples = (np.arange(n) - n // 2) * (2.0 * window / n)
        if grad_h is None:
            step = window / 2.0 ** 20
            grad_h = lambda t: (h(t + step) - h(t - step)) / (2.0 * step)
        self.grad_h = grad_h
        self.h_samples = np.asarray(h(self.xt_samples), dtype=float)
        self.grad_samples = np.asarray(grad_h(self.xt_samples), dtype=float)
        self.h_max = float(np.abs(self.h_samples).max())
        self.lip = float(np.abs(self.grad_samples).max())
        outside = np.abs(self.xt_samples) >= self.support_radius
        tail = np.abs(self.h_samples[outside]).max() if outside.any() else 0.0
        if tail > 1e-13 * max(1.0, self.h_max):
            raise ValueError("h does not vanish outside the declared ball "
                             "(max tail %.2e)" % tail)
        measured = self._holder_estimate()
        self.holder_measured = measured
        self.seminorm = measured if seminorm is None else float(seminorm)
        if measured > self.seminorm * 1.1:
            raise ValueError(
                "sampled Holder ratio %.3e of grad h exceeds declared "
                "seminorm %.3e x 1.1" % (measured, self.seminorm))

    def _holder_estimate(self):
        g = self.grad_samples
        dx = self.xt_samples[1] - self.xt_samples[0]
        worst = 0.0
        lag = 1
        while lag < g.size:
            d = np.abs(g[lag:] - g[:-lag]).max()
            worst = max(worst, d / (lag * dx) ** self.kappa)
            lag *= 2
        return float(worst)

    # -- geometry ------------------------------------------------------------

    def contains(self, x1, xt, slack=0.0):
        return np.asarray(x1) >= np.asarray(self.h(xt)) - slack

    def distance(self, x1, xt):
        """Distance to the boundary graph; error for points below it.

        Minimum over the refined boundary samples, then a Newton polish
        of the foot-point equation (y - xt) = (x1 - h(y)) h'(y).
        """
        x1 = np.asarray(x1, dtype=float)
        xt_in = np.asarray(xt, dtype=float)
        shape = np.broadcast_shapes(x1.shape, xt_in.shape)
        x1 = np.broadcast_to(x1, shape).ravel().astype(float)
        xt = np.broadcast_to(xt_in, shape).ravel().astype(float)
        gap = x1 - np.asarray(self.h(xt), dtype=float)
        if (gap < -1e-12 * max(1.0, self.h_max)).any():
            raise ValueError("point below the boundary graph")
        if self.lip == 0.0:
            return x1.reshape(shape) if shape else float(x1[0])
        ys, hs = self.xt_samples, self.h_samples
        best = np.empty(x1.size)
        foot = np.empty(x1.size)
        step = max(1, (1 << 22) // ys.size)
        for i0 in range(0, x1.size, step):
            sl = slice(i0, i0 + step)
            d2 = (x1[sl, None] - hs[None, :]) ** 2 \
                + (xt[sl, None] - ys[None, :]) ** 2
            idx = np.argmin(d2, axis=1)
            best[sl] = np.sqrt(d2[np.arange(idx.size), idx])
            foot[sl] = ys[idx]
        dx = ys[1] - ys[0]
        y = foot.copy()
        fd = 1e-6
        for _ in range(40):
            res = (y - xt) - (x1 - self.h(y)) * self.grad_h(y)
            rp = (y + fd - xt) - (x1 - self.h(y + fd)) * self.grad_h(y + fd)
            rm = (y - fd - xt) - (x1 - self.h(y - fd)) * self.grad_h(y - fd)
            slope = (rp - rm) / (2.0 * fd)
            upd = np.where(np.abs(slope) > 1e-12, res / np.where(
                slope == 0.0, 1.0, slope), 0.0)
            upd = np.clip(upd, -dx, dx)
            y = np.clip(y - upd, foot - dx, foot + dx)
            if np.abs(upd).max() < 1e-12:
                break
        polished = np.hypot(x1 - self.h(y), xt - y)
        out = np.minimum(best, polished)
        return out.reshape(shape) if shape else float(out[0])


def distance_to_boundary(x1, xt, dom):
    """dist((x1, xt), boundary graph of dom); x1 exactly for a flat dom."""
    return dom.distance(x1, xt)


# -- analytic presets --------------------------------------------------------


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    m = np.abs(u) < 1.0
    if m.any():
        v = u[m]
        out[m] = np.exp(1.0 - 1.0 / (1.0 - v * v))
    return out


def _bump_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    m = np.abs(u) < 1.0
    if m.any():
        v = u[m]
        q = 1.0 - v * v
        out[m] = np.exp(1.0 - 1.0 / q) * (-2.0 * v / q ** 2)
    return out


def _preset_flat(window=10.0, samples=4096):
    zero = lambda t: np.zeros(np.shape(t))
    return SpecialDomain(zero, zero, support_radius=1.0, window=window,
                         r=1, kappa=1.0, name="flat", samples=samples)


def _poly_cut(u, r0, r1):
    """Cubic cutoff: 1 below r0, 0 above r1.  Cheap, C^1."""
    s = np.clip((np.asarray(u, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def _poly_cut_prime(u, r0, r1):
    s = np.clip((np.asarray(u, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)
    return -6.0 * s * (1.0 - s) / (r1 - r0)


def _preset_gaussian_bump(amplitude=0.6, width=1.0, window=10.0,
                          samples=4096):
    """Gaussian profile cut off where it has decayed to ~1e-11.

    The sharp spectral decay of the profile keeps the boundary data of
    curved-domain problems resolvable with few dyadic shells; the cutoff
    sits so deep in the tail that it never shows above that decay.
    """
    A, w = float(amplitude), float(width)
    r0, r1 = 5.0 * w, 6.5 * w

    def h(t):
        t = np.asarray(t, dtype=float)
        return A * np.exp(-(t / w) ** 2) * _poly_cut(np.abs(t), r0, r1)

    def gh(t):
        t = np.asarray(t, dtype=float)
        core = A * np.exp(-(t / w) ** 2)
        return (core * (-2.0 * t / w ** 2) * _poly_cut(np.abs(t), r0, r1)
                + core * _poly_cut_prime(np.abs(t), r0, r1) * np.sign(t))

    return SpecialDomain(h, gh, support_radius=r1, window=window, r=1,
                         kappa=1.0, name="gaussian-bump", samples=samples)


def _preset_cone_smoothed(amplitude=0.6, radius=2.0, window=10.0,
                          samples=4096):
    A, R = float(amplitude), float(radius)

    def h(t):
        q = np.maximum(0.0, 1.0 - (np.asarray(t, dtype=float) / R) ** 2)
        return A * q * q

    def gh(t):
        t = np.asarray(t, dtype=float)
        q = np.maximum(0.0, 1.0 - (t / R) ** 2)
        return -4.0 * A * t * q / R ** 2

    return SpecialDomain(h, gh, support_radius=R, window=window, r=1,
                         kappa=1.0, name="cone-smoothed", samples=samples)


def _preset_rough(amplitude=0.5, radius=2.0, kappa=0.5, levels=5,
                  window=10.0, samples=4096):
    A, R = float(amplitude), float(radius)
    levels = int(levels)
    # shifts keep every scaled bump inside |t| < R: |s_i| + 1 <= 2^i
    shifts = [0.6 * (2.0 ** i - 1.0) * (-1.0) ** i for i in range(levels)]
    weights = [2.0 ** (-i * (1.0 + kappa)) for i in range(levels)]

    def h(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for w, s, i in zip(weights, shifts, range(levels)):
            out += w * _bump(2.0 ** i * t / R - s)
        return A * out

    def gh(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for w, s, i in zip(weights, shifts, range(levels)):
            out += w * _bump_prime(2.0 ** i * t / R - s) * 2.0 ** i / R
        return A * out

    return SpecialDomain(h, gh, support_radius=R, window=window, r=1,
                         kappa=kappa, name="rough-c1k", samples=samples)


DOMAIN_PRESETS = {
    "flat": _preset_flat,
    "gaussian-bump": _preset_gaussian_bump,
    "cone-smoothed": _preset_cone_smoothed,
    "rough-c1k": _preset_rough,
}


def domain_preset(name, **params):
    """Build a named analytic boundary preset."""
    try:
        builder = DOMAIN_PRESETS[name]
    except KeyError:
        raise ValueError("unknown domain preset %r (have %s)"
                         % (name, sorted(DOMAIN_PRESETS))) from None
    return builder(**params)


def domain_from_config(section):
    """SpecialDomain from a config mapping (string values allowed)."""
    params = {}
    for key in ("amplitude", "radius", "width", "window", "kappa"):
        if key in section:
            params[key] = float(section[key])
    for key in ("levels", "samples"):
        if key in section:
            params[key] = int(section[key])
    return domain_preset(section.get("preset", "flat"), **params)


# ---------------------------------------------------------------------------
# the straightening pullback

# even smooth probability kernel on (-1, 1); quadrature weights normalised
# so the discrete kernel has exact unit mass and exact zero odd moments
_KNODES, _KW = roots_legendre(32)
_KW = _KW * np.exp(-1.0 / (1.0 - _KNODES ** 2))
_KW = _KW / _KW.sum()


class PullbackMap:
    """Boundary-straightening map for a special domain.

    Phi^{-1}(y1, yt) = (y1 + psi(y1, yt), yt) with psi the h-mollification
    at scale eps |y1|; Phi inverts the first component by Newton iteration
    (dG/dy1 >= 1/2 is checked on a sample cloud at construction).
    """

    def __init__(self, dom, eps):
        self.dom = dom
        self.eps = float(eps)
        yt = dom.xt_samples[::4]
        heights = np.linspace(-dom.window, dom.window, 33)
        slope = self.dg_dy1(heights[:, None], yt[None, :])
        self._slope_min = float(slope.min())
        if self._slope_min < 0.5:
            raise ValueError(
                "mollification scale too large: dG/dy1 reaches %.3f < 1/2"
                % self._slope_min)
        self.roundtrip_error = None
        self.boundary_error = None

    # -- explicit inverse ----------------------------------------------------

    def mollified_h(self, y1, yt):
        """(K_{eps |y1|} * h)(yt), elementwise over broadcast arrays."""
        y1 = np.asarray(y1, dtype=float)
        yt = np.asarray(yt, dtype=float)
        shape = np.broadcast_shapes(y1.shape, yt.shape)
        y1 = np.broadcast_to(y1, shape).ravel()
        yt = np.broadcast_to(yt, shape).ravel()
        out = np.empty(y1.shape)
        step = max(1, (1 << 21) // _KNODES.size)
        for i0 in range(0, y1.size, step):
            sl = slice(i0, i0 + step)
            args = yt[sl, None] - (self.eps * np.abs(y1[sl]))[:, None] * _KNODES
            out[sl] = self.dom.h(args) @ _KW
        return out.reshape(shape)

    def dg_dy1(self, y1, yt):
        """d/dy1 of the first inverse component G = y1 + psi."""
        y1 = np.asarray(y1, dtype=float)
        yt = np.asarray(yt, dtype=float)
        shape = np.broadcast_shapes(y1.shape, yt.shape)
        y1 = np.broadcast_to(y1, shape).ravel()
        yt = np.broadcast_to(yt, shape).ravel()
        out = np.empty(y1.shape)
        step = max(1, (1 << 21) // _KNODES.size)
        zw = _KNODES * _KW
        for i0 in range(0, y1.size, step):
            sl = slice(i0, i0 + step)
            args = yt[sl, None] - (self.eps * np.abs(y1[sl]))[:, None] * _KNODES
            out[sl] = 1.0 - self.eps * np.sign(y1[sl]) \
                * (self.dom.grad_h(args) @ zw)
        return out.reshape(shape)

    def inverse_first(self, y1, yt):
        return np.asarray(y1, dtype=float) + self.mollified_h(y1, yt)

    def inverse_map(self, y1, yt):
        """Phi^{-1}: half-space coordinates to domain coordinates."""
        shape = np.broadcast_shapes(np.shape(y1), np.shape(yt))
        return self.inverse_first(y1, yt), np.broadcast_to(yt, shape)

    # -- forward map ---------------------------------------------------------

    def forward_first(self, x1, xt, y_init=None):
        """Solve y1 + psi(y1, xt) = x1 for y1 (safeguarded Newton)."""
        x1 = np.asarray(x1, dtype=float)
        xt = np.asarray(xt, dtype=float)
        shape = np.broadcast_shapes(x1.shape, xt.shape)
        x1 = np.broadcast_to(x1, shape).ravel()
        xt = np.broadcast_to(xt, shape).ravel()
        H = self.dom.h_max
        lo, hi = x1 - H, x1 + H
        if y_init is None:
            y = x1 - np.asarray(self.dom.h(xt), dtype=float)
        else:
            y = np.broadcast_to(np.asarray(y_init, dtype=float),
                                shape).ravel().copy()
        tol = 1e-13 * max(1.0, float(np.abs(x1).max()) + H)
        for _ in range(60):
            res = y + self.mollified_h(y, xt) - x1
            if np.abs(res).max() <= tol:
                break
            y = np.clip(y - res / self.dg_dy1(y, xt), lo, hi)
        else:
            # monotone G brackets the root in [x1 - H, x1 + H]
            for _ in range(90):
                mid = 0.5 * (lo + hi)
                high = mid + self.mollified_h(mid, xt) > x1
                hi = np.where(high, mid, hi)
                lo = np.where(high, lo, mid)
                y = 0.5 * (lo + hi)
        return y.reshape(shape)

    def forward_map(self, x1, xt, y_init=None):
        """Phi: domain coordinates to half-space coordinates."""
        shape = np.broadcast_shapes(np.shape(x1), np.shape(xt))
        return self.forward_first(x1, xt, y_init), np.broadcast_to(xt, shape)

    # -- Jacobian -------------------------------------------------------------

    def dphi(self, x1, xt, step, y_init=None):
        """DPhi by centered differences of the forward map.

        Only the first row needs differencing: the tangential components
        of Phi are the identity, so the remaining rows are exact.
        """
        x1 = np.asarray(x1, dtype=float)
        xt = np.asarray(xt, dtype=float)
        shape = np.broadcast_shapes(x1.shape, xt.shape)
        x1 = np.broadcast_to(x1, shape).ravel()
        xt = np.broadcast_to(xt, shape).ravel()
        half = 0.5 * float(step)
        J = np.zeros(x1.shape + (2, 2))
        J[:, 0, 0] = (self.forward_first(x1 + half, xt, y_init)
                      - self.forward_first(x1 - half, xt, y_init)) / step
        J[:, 0, 1] = (self.forward_first(x1, xt + half, y_init)
                      - self.forward_first(x1, xt - half, y_init)) / step
        J[:, 1, 1] = 1.0
        return J.reshape(shape + (2, 2))


def make_dks_pullback(dom, eps=None, n_cloud=10000, seed=0, tol=1e-8):
    """Straightening map with its contract checked on a sample cloud."""
    if eps is None:
        eps = 0.25 / (1.0 + dom.lip)
    pmap = PullbackMap(dom, eps)
    rng = np.random.default_rng(seed)
    y1 = np.concatenate([rng.uniform(0.0, dom.window, n_cloud // 2),
                         2.0 ** -rng.uniform(0.0, 20.0, n_cloud // 2)])
    y1 = y1 * rng.choice([-1.0, 1.0], y1.size)
    yt = rng.uniform(-dom.window, dom.window, y1.size)
    x1, xtc = pmap.inverse_map(y1, yt)
    back = pmap.forward_first(x1, xtc)
    pmap.roundtrip_error = float(np.abs(back - y1).max())
    bt = dom.xt_samples
    bfirst = pmap.forward_first(np.asarray(dom.h(bt), dtype=float), bt)
    pmap.boundary_error = float(np.abs(bfirst).max())
    if pmap.roundtrip_error >= tol:
        raise ValueError("pullback round trip error %.3e exceeds %.1e"
                         % (pmap.roundtrip_error, tol))
    if pmap.boundary_error >= tol:
        raise ValueError("boundary-to-boundary error %.3e exceeds %.1e"
                         % (pmap.boundary_error, tol))
    return pmap


def pushforward(f, pmap, shape, box, descriptor=None, tags=()):
    """Samples of f(Phi^{-1}(y)) on the half-space grid."""
    n1, nt = shape
    box1, boxt = float(box[0]), float(box[1])
    y1 = (np.arange(n1) - n1 // 2) * (2.0 * box1 / n1)
    yt = (np.arange(nt) - nt // 2) * (2.0 * boxt / nt)
    X1 = pmap.inverse_first(y1[:, None], yt[None, :])
    vals = f(X1, np.broadcast_to(yt[None, :], X1.shape))
    if descriptor is None:
        descriptor = AnisotropyDescriptor.isotropic(2)
    return GridField(np.asarray(vals, dtype=complex), (box1, boxt),
                     descriptor, tags)


# ---------------------------------------------------------------------------
# normals


def inner_normal(dom):
    """Unit inner normal as a closure of the tangential coordinate.

    Extended to the whole space by ignoring the height coordinate (the
    C^1 recipe n(x) = normal at (h(xt), xt)).
    """
    if dom.r < 1:
        raise ValueError("normal needs a differentiable boundary (r >= 1)")

    def ntilde(xt):
        g = np.asarray(dom.grad_h(xt), dtype=float)
        den = np.sqrt(1.0 + g * g)
        return np.stack([1.0 / den, -g / den], axis=-1)

    return ntilde


@dataclass(frozen=True)
class PulledNormal:
    """DPhi . n on a half-space grid, plus the reported boundary margin c."""
    values: np.ndarray          # (d, n1, nt)
    c: float                    # min of the first component on the boundary
    box: tuple
    descriptor: AnisotropyDescriptor
    step: float


def pulled_vector_field(pmap, ntilde, shape, box, step=None):
    """N(y) = DPhi(Phi^{-1}(y)) n(Phi^{-1}(y)) sampled on the grid."""
    n1, nt = shape
    box1, boxt = float(box[0]), float(box[1])
    if step is None:
        step = 0.5 * min(2.0 * box1 / n1, 2.0 * boxt / nt)
    y1 = (np.arange(n1) - n1 // 2) * (2.0 * box1 / n1)
    yt = (np.arange(nt) - nt // 2) * (2.0 * boxt / nt)
    Y1 = np.broadcast_to(y1[:, None], (n1, nt)).ravel()
    YT = np.broadcast_to(yt[None, :], (n1, nt)).ravel()
    X1 = pmap.inverse_first(Y1, YT)
    J = pmap.dphi(X1, YT, step, y_init=Y1)
    nv = ntilde(YT)
    N = np.einsum("nij,nj->ni", J, nv)
    vals = np.moveaxis(N.reshape(n1, nt, 2), -1, 0).copy()
    c = float(vals[0, n1 // 2, :].min())
    if c <= 0.0:
        raise ValueError("non-tangentiality failure: min N_1 = %.3e on the "
                         "boundary grid" % c)
    return PulledNormal(vals, c, (box1, boxt),
                        AnisotropyDescriptor.isotropic(2), float(step))


def directional_trace_N(v, N, m):
    """Traces of (N . grad)^j v, j = 0..m, on the hyperplane x1 = 0.

    Derivatives are spectral on the grid of v, products pointwise; v must
    carry the decaying tag along axis 0 whenever derivatives are taken.
    """
    vals = N.values if isinstance(N, PulledNormal) else np.asarray(N)
    if vals.shape != (v.ndim,) + v.shape:
        raise ValueError("vector field shape %s does not match field %s"
                         % (vals.shape, v.shape))
    if m >= 1 and not any(t.startswith("decaying") for t in v.tags):
        raise ValueError("directional derivatives need a decaying-tagged "
                         "field")
    i0 = v.zero_index(0)
    tang_desc = drop_first_axis(v.descriptor)
    w = v.data
    rows = [w[i0]]
    eye = np.eye(v.ndim, dtype=int)
    for _ in range(int(m)):
        wf = v.with_data(w, tags=())
        w = sum(vals[ax] * spectral_derivative(wf, tuple(eye[ax])).data
                for ax in range(v.ndim))
        rows.append(w[i0])
    return TraceVector([GridField(r, v.box[1:], tang_desc) for r in rows])


# ---------------------------------------------------------------------------
# the triangular change between d_1-traces and N-traces


class TriangularChange:
    """Lower-triangular operator matrix I with g = I h on trace vectors.

    h_j are the d_1-traces, g_j the N-directional traces; the diagonal
    entries multiply by N_1^j, so forward substitution inverts the matrix
    whenever N_1 is bounded away from zero on the boundary.
    """

    def __init__(self, N, m):
        if not isinstance(N, PulledNormal):
            raise TypeError("need a PulledNormal")
        self.m = int(m)
        if self.m > 2:
            raise NotImplementedError(
                "directional trace change implemented for orders <= 2")
        d, n1 = N.values.shape[0], N.values.shape[1]
        i0 = n1 // 2
        self.bvals = N.values[:, i0]              # (d, tang shape)
        self.N1 = self.bvals[0]
        peak = np.abs(self.N1).max()
        if self.N1.min() <= 1e-12 * max(peak, 1.0):
            raise ValueError("degenerate N_1 on the boundary")
        self._tang_box = tuple(N.box[1:])
        self._tang_desc = drop_first_axis(N.descriptor)
        if self.m >= 2:
            # boundary values of grad N, by spectral derivatives of the
            # components on the full grid
            full = [GridField(N.values[i], N.box, N.descriptor)
                    for i in range(d)]
            eye = np.eye(len(N.box), dtype=int)
            self.dN = np.array(
                [[spectral_derivative(full[i], tuple(eye[k])).data[i0].real
                  for i in range(d)] for k in range(d)])
            self.conv = np.einsum("k...,ki...->i...", self.bvals, self.dN)

    def _field(self, arr):
        return GridField(arr, self._tang_box, self._tang_desc)

    def _dt(self, arr, axis):
        eye = np.eye(len(self._tang_box), dtype=int)
        return spectral_derivative(self._field(arr), tuple(eye[axis])).data

    def _tangential_sum(self, arr, weights):
        """sum_t weights[t] d_t arr over the tangential axes."""
        return sum(weights[t + 1] * self._dt(arr, t)
                   for t in range(len(self._tang_box)))

    def entry(self, j, i):
        """Operator I_{j,i} as a callable on tangential data, None above
        the diagonal (structural zeros)."""
        if i > j:
            return None
        if (j, i) == (0, 0):
            return lambda a: np.asarray(a) + 0.0
        if (j, i) == (1, 1):
            return lambda a: self.N1 * a
        if (j, i) == (1, 0):
            return lambda a: self._tangential_sum(a, self.bvals)
        if (j, i) == (2, 2):
            return lambda a: self.N1 ** 2 * a
        if (j, i) == (2, 1):
            return lambda a: (2.0 * self.N1
                              * self._tangential_sum(a, self.bvals)
                              + self.conv[0] * a)
        if (j, i) == (2, 0):
            def op(a):
                out = np.zeros(np.shape(a), dtype=complex)
                for t in range(len(self._tang_box)):
                    for s in range(len(self._tang_box)):
                        out += self.bvals[t + 1] * self.bvals[s + 1] \
                            * self._dt(self._dt(a, s), t)
                    out += self.conv[t + 1] * self._dt(a, t)
                return out
            return op
        raise ValueError("entry outside the matrix")

    @property
    def entries(self):
        return [[self.entry(j, i) for i in range(self.m + 1)]
                for j in range(self.m + 1)]

    def apply(self, hvec):
        """g = I h."""
        if len(hvec) != self.m + 1:
            raise ValueError("trace vector length mismatch")
        out = []
        for j in range(self.m + 1):
            acc = np.zeros(hvec[0].shape, dtype=complex)
            for i in range(j + 1):
                acc += self.entry(j, i)(hvec[i].data)
            out.append(hvec[0].with_data(acc))
        return TraceVector(out)

    def solve(self, gvec):
        """h = I^{-1} g by forward substitution (diagonal = N_1^j)."""
        if len(gvec) != self.m + 1:
            raise ValueError("trace vector length mismatch")
        hs = []
        for j in range(self.m + 1):
            acc = gvec[j].data.astype(complex)
            for i in range(j):
                acc = acc - self.entry(j, i)(hs[i])
            hs.append(acc / self.N1 ** j)
        return TraceVector([gvec[0].with_data(a) for a in hs])


def triangular_change_matrix(N, m):
    """The (m+1) x (m+1) triangular operator matrix relating trace types."""
    return TriangularChange(N, m)


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class Chart:
    """One tangential cover interval with its plateau cutoffs."""
    center: float
    r_plateau: float
    r_support: float
    zr_plateau: float
    zr_support: float
    window: float

    def bump(self, xt):
        d = np.abs(_wrap(np.asarray(xt, dtype=float) - self.center,
                         self.window))
        return _plateau(d, self.r_plateau, self.r_support)

    def zeta(self, xt):
        d = np.abs(_wrap(np.asarray(xt, dtype=float) - self.center,
                         self.window))
        return _plateau(d, self.zr_plateau, self.zr_support)


class Atlas:
    """Charts over the periodic tangential window of one special domain.

    All charts share the global straightening map of the domain; eta_n =
    b_n / sqrt(sum b_k^2) makes the square partition exact, and each
    zeta_n equals 1 on supp eta_n, so products eta_n^2 * (d zeta_n) vanish
    identically.  V_n records the covering ball of chart n in the plane.
    """

    def __init__(self, dom, pmap, charts):
        self.dom = dom
        self.pmap = pmap
        self.charts = tuple(charts)
        self.window = dom.window
        self.balls = tuple(
            ((float(dom.h(np.array([c.center]))[0]), c.center),
             math.hypot(c.zr_support, dom.h_max) + 0.1)
            for c in self.charts)
        defect = self.partition_defect(dom.xt_samples)
        if defect > 1e-10:
            raise ValueError("partition of unity defect %.3e" % defect)

    def bump_all(self, xt):
        return np.stack([c.bump(xt) for c in self.charts])

    def eta_all(self, xt):
        b = self.bump_all(xt)
        ss = np.sum(b * b, axis=0)
        if (ss <= 0.0).any():
            raise ValueError("chart coverage gap: a boundary sample lies in "
                             "no cover interval")
        return b / np.sqrt(ss)

    def zeta_all(self, xt):
        return np.stack([c.zeta(xt) for c in self.charts])

    def partition_defect(self, xt):
        e = self.eta_all(xt)
        return float(np.abs(np.sum(e * e, axis=0) - 1.0).max())


def make_atlas(dom, pmap, n_charts, chart_overlap=0.4):
    """Evenly spaced periodic cover with exact square partition.

    chart_overlap sets the width of the cutoff transition zone as a
    fraction of the chart spacing; plateaus always overlap, so the
    partition denominator never vanishes.
    """
    n_charts = int(n_charts)
    if n_charts < 1:
        raise ValueError("need at least one chart")
    W = dom.window
    if n_charts == 1:
        charts = [Chart(0.0, 2.0 * W, 3.0 * W, 2.5 * W, 4.0 * W, W)]
        return Atlas(dom, pmap, charts)
    spacing = 2.0 * W / n_charts
    lam = float(chart_overlap)
    if not 0.1 <= lam <= 0.45:
        raise ValueError("chart_overlap must lie in [0.1, 0.45]")
    r_p = 0.55 * spacing
    r_s = r_p + lam * spacing
    zr_p = r_s * 1.01
    zr_s = zr_p + lam * spacing
    centers = [-W + (i + 0.5) * spacing for i in range(n_charts)]
    charts = [Chart(c, r_p, r_s, zr_p, zr_s, W) for c in centers]
    return Atlas(dom, pmap, charts)


# ---------------------------------------------------------------------------
# domain traces and extensions


class DomainTraceVector:
    """Per-chart N-directional traces; assembly sums the charts."""

    def __init__(self, charts, atlas):
        self.charts = tuple(charts)
        self.atlas = atlas

    def __len__(self):
        return len(self.charts[0])

    def assembled(self):
        """Boundary trace functions: entrywise sum over the charts."""
        out = []
        for j in range(len(self)):
            acc = sum(tv[j].data for tv in self.charts)
            out.append(self.charts[0][j].with_data(acc))
        return TraceVector(out)


def _half_space_grid(shape, box):
    n1, nt = shape
    box1, boxt = float(box[0]), float(box[1])
    y1 = (np.arange(n1) - n1 // 2) * (2.0 * box1 / n1)
    yt = (np.arange(nt) - nt // 2) * (2.0 * boxt / nt)
    return y1, yt


def domain_trace(u, atlas, m, shape, box, N=None, step=None):
    """Order 0..m traces of a domain field, chart by chart.

    Chart n contributes the N-directional traces of the pushforward of
    eta_n^2 u; summing the charts reassembles the boundary trace because
    the squared cutoffs sum to one near the boundary.
    """
    pmap = atlas.pmap
    if N is None:
        N = pulled_vector_field(pmap, inner_normal(atlas.dom), shape, box,
                                step)
    y1, yt = _half_space_grid(shape, box)
    X1 = pmap.inverse_first(y1[:, None], yt[None, :])
    U = np.asarray(u(X1, np.broadcast_to(yt[None, :], X1.shape)),
                   dtype=complex)
    eta2 = atlas.eta_all(yt) ** 2
    desc = AnisotropyDescriptor.isotropic(2)
    tags = ("decaying:0",) if m >= 1 else ()

    def one(n):
        v = GridField(U * eta2[n][None, :], (box[0], box[1]), desc, tags)
        return directional_trace_N(v, N, m)

    charts = _map_charts(one, list(range(len(atlas.charts))))
    return DomainTraceVector(charts, atlas)


class DomainExtension:
    """Domain field u(x) = sum_n zeta_n(xt) v_n(Phi(x)) for chart data v_n."""

    def __init__(self, atlas, series, normal):
        self.atlas = atlas
        self.series = tuple(series)
        self.normal = normal

    def __call__(self, x1, xt):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(xt))
        x1 = np.broadcast_to(np.asarray(x1, dtype=float), shape).ravel()
        xt = np.broadcast_to(np.asarray(xt, dtype=float), shape).ravel()
        y1 = self.atlas.pmap.forward_first(x1, xt)
        zet = self.atlas.zeta_all(xt)
        out = np.zeros(x1.size, dtype=complex)
        cols = xt.reshape(-1, 1)
        for n, S in enumerate(self.series):
            live = zet[n] > 0.0
            if not live.any():
                continue
            out[live] += zet[n][live] * S.eval(y1[live], cols[live])
        return out.reshape(shape)


def domain_extension(g, atlas, rho, shape, box, lps_t=None, n_max=None,
                     N=None, step=None):
    """Right inverse of domain_trace for boundary data g = (g_0..g_m).

    Per chart the data is localised by eta_n^2, converted to d_1-traces
    through the triangular change, and extended with the kernel family;
    the chart fields are glued with the zeta_n cutoffs.
    """
    if len(g) != rho.m + 1:
        raise ValueError("trace vector length %d does not match kernel "
                         "family m=%d" % (len(g), rho.m))
    pmap = atlas.pmap
    if N is None:
        N = pulled_vector_field(pmap, inner_normal(atlas.dom), shape, box,
                                step)
    if lps_t is None:
        lps_t = LpSequence(g[0].descriptor)
    if n_max is None:
        nyq1 = np.pi * shape[0] / (2.0 * float(box[0]))
        cap = int(math.floor(math.log2(0.9 * nyq1 / lps_t.B)))
        n_max = min(cap, lps_t.n_max(g[0]))
    change = triangular_change_matrix(N, rho.m)
    _, yt = _half_space_grid(shape, box)
    eta2 = atlas.eta_all(yt) ** 2

    def one(n):
        gvec = TraceVector([gj.with_data(eta2[n] * gj.data) for gj in g])
        hvec = change.solve(gvec)
        return ext_series(hvec, 1.0, lps_t, rho, n_max)

    series = _map_charts(one, list(range(len(atlas.charts))))
    return DomainExtension(atlas, series, N)


def boundary_besov_norm(g, s, p, q, atlas, lps_t=None):
    """sum_n || eta_n^2 g ||_{B^s_{p,q}} over the chart boundary grids."""
    if lps_t is None:
        lps_t = LpSequence(g.descriptor)
    yt = g.axis_coords(0)
    eta2 = atlas.eta_all(yt) ** 2

    def one(n):
        return besov_tl_norm(g.with_data(eta2[n] * g.data), lps_t, s, p, q)

    return float(sum(_map_charts(one, list(range(len(atlas.charts))))))


# ---------------------------------------------------------------------------
# experiments


def dks_contract_report(preset_names=("gaussian-bump", "cone-smoothed",
                                      "rough-c1k"),
                        n_levels=6, shape=(128, 128), seed=2):
    """Straightening contract on the named presets.

    Reports the round-trip and boundary errors, per-dyadic-height distance
    comparability brackets with their level-to-level drift, and the
    minimum of N_1 on the boundary against the graph lower bound.
    """
    out = {}
    for name in preset_names:
        dom = domain_preset(name)
        pmap = make_dks_pullback(dom)
        yt = np.linspace(-dom.window, dom.window, 2049)[:-1]
        brackets = []
        for lev in range(1, n_levels + 1):
            h1 = 2.0 ** (-lev)
            x1, xtc = pmap.inverse_map(np.full(yt.shape, h1), yt)
            ratio = dom.distance(x1, xtc) / h1
            brackets.append((float(ratio.min()), float(ratio.max())))
        los = np.array([b[0] for b in brackets])
        his = np.array([b[1] for b in brackets])
        drift = max(float(los.max() / los.min()),
                    float(his.max() / his.min()))
        box = (4.0, dom.window)
        N = pulled_vector_field(pmap, inner_normal(dom), shape, box)
        bound = 1.0 / math.sqrt(1.0 + dom.lip ** 2) - 1e-3
        out[name] = {
            "eps": pmap.eps,
            "roundtrip_error": pmap.roundtrip_error,
            "boundary_error": pmap.boundary_error,
            "distance_brackets": brackets,
            "bracket_drift": drift,
            "n1_min": N.c,
            "n1_bound": bound,
        }
    return out


def domain_roundtrip_report(m, n_members=5, seed=13, preset="gaussian-bump",
                            n_charts=4, shape=None, boxt=10.0, max_freq=1.3,
                            n_max=None):
    """Relative error of domain_trace(domain_extension(g)) over a family.

    The default grid for m >= 1 carries one extra dyadic shell: the
    triangular change mixes the geometry coefficients into the data, so
    first-order boundary data needs more resolved scales than the g
    themselves.
    """
    dom = domain_preset(preset, window=boxt)
    pmap = make_dks_pullback(dom)
    atlas = make_atlas(dom, pmap, n_charts)
    rho = make_rho(m)
    box = (kernel_box(m), boxt)
    if shape is None:
        shape = (4096, 256) if m == 0 else (8192, 256)
    N = pulled_vector_field(pmap, inner_normal(dom), shape, box)
    desc_t = AnisotropyDescriptor.isotropic(1)
    lps_t = LpSequence(desc_t)
    if n_max is None:
        caps = [math.floor(math.log2(0.45 * np.pi * n / b / lps_t.B))
                for n, b in zip(shape, box)]
        n_max = int(min(caps))
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_members):
        g = TraceVector([
            random_synth(rng, box=(boxt,), max_freq=max_freq, n_modes=8,
                         envelope=0.22, dim=1).on_grid((shape[1],), (boxt,),
                                                       desc_t)
            for _ in range(m + 1)])
        u = domain_extension(g, atlas, rho, shape, box, lps_t=lps_t,
                             n_max=n_max, N=N)
        tv = domain_trace(u, atlas, m, shape, box, N=N)
        asm = tv.assembled()
        worst = 0.0
        for j in range(m + 1):
            num = np.abs(asm[j].data - g[j].data).max()
            den = np.abs(g[j].data).max()
            worst = max(worst, float(num / den))
        errors.append(worst)
    return {"m": m, "errors": errors, "max_error": max(errors),
            "grid": {"shape": shape, "box": box, "charts": n_charts,
                     "n_max": n_max}}


def _domain_weighted_sobolev(f, dom, k, p, gamma, shape, box, weight=None):
    """Quadrature W^{k,p}(O, dist^gamma) norm of a closure, derivatives by
    centered differences; returns (norm, cached weight grid)."""
    n1, nt = shape
    x1 = (np.arange(n1) - n1 // 2) * (2.0 * float(box[0]) / n1)
    xt = (np.arange(nt) - nt // 2) * (2.0 * float(box[1]) / nt)
    X1 = np.broadcast_to(x1[:, None], (n1, nt))
    XT = np.broadcast_to(xt[None, :], (n1, nt))
    if weight is None:
        inside = dom.contains(X1, XT)
        w = np.zeros((n1, nt))
        pts = inside.nonzero()
        w[pts] = dom.distance(X1[pts], XT[pts]) ** gamma
        w *= (x1[1] - x1[0]) * (xt[1] - xt[0])
        weight = w
    fd = 1e-4
    total = 0.0
    for a1 in range(k + 1):
        for a2 in range(k + 1 - a1):
            if a1 == 0 and a2 == 0:
                vals = f(X1, XT)
            elif (a1, a2) == (1, 0):
                vals = (f(X1 + fd, XT) - f(X1 - fd, XT)) / (2 * fd)
            elif (a1, a2) == (0, 1):
                vals = (f(X1, XT + fd) - f(X1, XT - fd)) / (2 * fd)
            else:
                raise NotImplementedError("k <= 1 quadrature norms only")
            total += float(np.sum(np.abs(vals) ** p * weight)) ** (1.0 / p)
    return total, weight


def pushforward_norm_bracket(preset="gaussian-bump", n_members=20, k=1,
                             p=2.0, gamma=2.0, shape=(128, 128),
                             box=(6.0, 10.0), seed=4, refine=1):
    """Ratio bracket of half-space vs domain weighted Sobolev norms.

    For each member the half-space norm uses the positive-side power
    weight in y_1, the domain norm the distance-to-boundary weight on a
    masked cell quadrature.
    """
    dom = domain_preset(preset, window=box[1])
    pmap = make_dks_pullback(dom)
    rng = np.random.default_rng(seed)
    members = [random_synth(rng, box=box, max_freq=(1.5, 1.2), n_modes=8,
                            envelope=0.2, dim=2) for _ in range(n_members)]
    out = {}
    for lev in range(refine + 1):
        sh = (shape[0] * 2 ** lev, shape[1] * 2 ** lev)
        weights = (AxisWeight(0, gamma, side="positive"),)
        cache = None
        ratios = []
        for f in members:
            F = pushforward(f, pmap, sh, box, tags=())
            up = sobolev_norm(F, k, p, weights)
            down, cache = _domain_weighted_sobolev(f, dom, k, p, gamma, sh,
                                                   box, cache)
            ratios.append(up / down)
        ratios = np.array(ratios)
        out[lev] = {"bracket": (float(ratios.min()), float(ratios.max())),
                    "spread": float(ratios.max() / ratios.min())}
    return out


def chart_independence_bracket(counts=(2, 5), s=0.5, p=2.0, q=2.0,
                               n_members=12, nt=256, boxt=10.0, seed=9):
    """Ratio bracket of boundary Besov norms under two admissible atlases."""
    dom = domain_preset("flat", window=boxt)
    pmap = make_dks_pullback(dom)
    atlases = [make_atlas(dom, pmap, c) for c in counts]
    desc_t = AnisotropyDescriptor.isotropic(1)
    lps_t = LpSequence(desc_t)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(n_members):
        g = random_synth(rng, box=(boxt,), max_freq=2.0, n_modes=10,
                         envelope=0.25, dim=1).on_grid((nt,), (boxt,), desc_t)
        a = boundary_besov_norm(g, s, p, q, atlases[0], lps_t)
        b = boundary_besov_norm(g, s, p, q, atlases[1], lps_t)
        ratios.append(a / b)
    ratios = np.array(ratios)
    return {"bracket": (float(ratios.min()), float(ratios.max())),
            "spread": float(ratios.max() / ratios.min())}
