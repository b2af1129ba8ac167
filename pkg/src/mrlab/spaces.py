"""Weighted mixed-norm quadrature and smoothness-space norms.

Geometry conventions follow fields.GridField: uniform per-axis grids with
x = 0 exactly at index n // 2, time (when present) is the last axis.

Power weights |x_axis|^e are integrated by a cell rule: the field is
averaged to cell midpoints on [x_i, x_{i+1}] and the weight contributes its
exact integral over each cell.  x = 0 is always a cell endpoint, so the
singular point is never sampled and never divided by.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from . import config
from .fields import AnisotropyDescriptor, GridField
from .lpanalysis import (LpSequence, LpTruncationError, lp_blocks, smooth_step,
                         spectral_derivative, partial_bessel_apply)


@dataclass(frozen=True)
class AxisWeight:
    """|x_axis|^exponent on the full axis or on the x_axis > 0 half."""

    axis: int
    exponent: float
    side: str = "both"

    def __post_init__(self):
        if self.exponent <= -1.0:
            raise ValueError("weight exponent must be > -1 to be integrable")
        if self.side not in ("both", "positive"):
            raise ValueError("side must be 'both' or 'positive'")


def _weight_map(weights):
    wmap = {}
    for w in weights:
        if w.axis in wmap:
            raise ValueError("duplicate weight axis %d" % w.axis)
        wmap[w.axis] = w
    return wmap


def _axis_cells(coords, exponent, side):
    """Left cell indices and exact per-cell integrals of |x|^exponent."""
    n = coords.size
    i0 = n // 2 if side == "positive" else 0
    left = coords[i0:n - 1]
    right = coords[i0 + 1:n]
    e1 = exponent + 1.0
    a = np.abs(left) ** e1
    b = np.abs(right) ** e1
    w = np.where(right <= 0.0, (a - b) / e1, (b - a) / e1)
    # no cell straddles zero: 0 sits exactly at index n // 2
    return i0, w


def _partial_lp(arr, f, axes, p, wmap, keepdims):
    """(integral over the given original axes of |arr|^p d(weight))^(1/p).

    Weighted axes are resampled to cell midpoints before taking |.|^p, so
    the array may shrink by one along those axes.  Unreduced axes keep
    their position and length.
    """
    p = float(p)
    vecs = {}
    for ax in sorted(axes):
        if ax in wmap:
            w = wmap[ax]
            i0, cw = _axis_cells(f.axis_coords(ax), w.exponent, w.side)
            idx = np.arange(i0, f.shape[ax] - 1)
            arr = 0.5 * (np.take(arr, idx, axis=ax) + np.take(arr, idx + 1, axis=ax))
            vecs[ax] = cw
        else:
            vecs[ax] = np.full(f.shape[ax], f.spacing(ax))
    out = np.abs(arr) ** p
    for ax, vec in vecs.items():
        shape = [1] * out.ndim
        shape[ax] = vec.size
        out = out * vec.reshape(shape)
    out = out.sum(axis=tuple(sorted(axes)), keepdims=keepdims)
    return out ** (1.0 / p)


def weighted_mixed_norm(f, exponents, weights=()):
    """Iterated norm, innermost block first.

    exponents: one integrability exponent per descriptor block (a scalar
    is broadcast; then the result equals the flat L^p norm).
    """
    desc = f.descriptor
    if np.isscalar(exponents):
        exponents = (float(exponents),) * desc.nblocks
    if len(exponents) != desc.nblocks:
        raise ValueError("need one exponent per block")
    wmap = _weight_map(weights)
    arr = f.data
    for sl, p in zip(desc.block_slices(), exponents):
        arr = _partial_lp(arr, f, range(sl.start, sl.stop), p, wmap, keepdims=True)
    return float(arr.reshape(()).real)


def lp_norm(f, p, weights=()):
    return weighted_mixed_norm(f, float(p), weights)


def _multi_indices(d, kmax, kmin=0):
    out = []
    def rec(prefix, rem):
        if len(prefix) == d:
            if sum(prefix) >= kmin:
                out.append(tuple(prefix))
            return
        for j in range(rem + 1):
            rec(prefix + [j], rem - j)
    rec([], kmax)
    return out


def sobolev_norm(f, k, p, weights=()):
    """sum over |alpha| <= k of the weighted L^p norms of d^alpha f."""
    total = 0.0
    for alpha in _multi_indices(f.ndim, int(k)):
        total += lp_norm(spectral_derivative(f, alpha), p, weights)
    return total


def aniso_sobolev_norm(f, orders, exponents, weights=()):
    """Mixed-derivative scale: f itself plus single-block derivatives.

    orders: per-block derivative counts n_j.  The index set is {0} together
    with all alpha supported in one block with 1 <= |alpha| <= n_j.
    """
    desc = f.descriptor
    if len(orders) != desc.nblocks:
        raise ValueError("need one order per block")
    total = weighted_mixed_norm(f, exponents, weights)
    for sl, nj in zip(desc.block_slices(), orders):
        db = sl.stop - sl.start
        for alpha_b in _multi_indices(db, int(nj), kmin=1):
            alpha = [0] * f.ndim
            alpha[sl.start:sl.stop] = alpha_b
            total += weighted_mixed_norm(spectral_derivative(f, alpha), exponents, weights)
    return total


def aniso_bessel_norm(f, s_blocks, exponents, weights=()):
    """sum over blocks of the partial Bessel norms (1 + |xi_j|^2)^(s_j/2)."""
    desc = f.descriptor
    if len(s_blocks) != desc.nblocks:
        raise ValueError("need one smoothness per block")
    total = 0.0
    for bi, s in enumerate(s_blocks):
        total += weighted_mixed_norm(partial_bessel_apply(f, float(s), bi), exponents, weights)
    return total


def besov_norm(f, lps, s, p, q, weights=(), n_max=None):
    """ell^q over scales of 2^(n s) ||S_n f||_Lp  (norms first, then sum)."""
    blocks = lp_blocks(f, lps, n_max)
    acc = 0.0
    for n, bl in enumerate(blocks):
        acc += (2.0 ** (n * s) * lp_norm(bl, p, weights)) ** q
    return acc ** (1.0 / q)


def besov_tl_norm(f, lps, s, p, q, weights=(), flavor="B", n_max=None):
    """Scale-weighted block norm; flavor "B" sums norms over scales,
    flavor "F" takes the pointwise ell^q over scales first."""
    if flavor == "B":
        return besov_norm(f, lps, s, p, q, weights, n_max)
    if flavor == "F":
        return tl_norm(f, lps, s, p, q, weights, n_max)
    raise ValueError("flavor must be 'B' or 'F'")


def bessel_norm(f, s, p, weights=()):
    from .lpanalysis import bessel_apply
    return lp_norm(bessel_apply(f, s), p, weights)


def aniso_tl_norm(f, lps, s, exponents, q, weights=(), n_max=None):
    """tl_norm with per-block integrability; anisotropy comes from lps."""
    return tl_norm(f, lps, s, exponents, q, weights, n_max)


def tl_norm(f, lps, s, exponents, q, weights=(), n_max=None):
    """Pointwise ell^q over scales, then the weighted mixed norm.

    exponents may be a scalar (classical F^s_{p,q}) or one exponent per
    block (mixed-integrability version).
    """
    blocks = lp_blocks(f, lps, n_max)
    acc = np.zeros(f.shape, dtype=float)
    for n, bl in enumerate(blocks):
        acc += (2.0 ** (n * s) * np.abs(bl.data)) ** q
    g = f.with_data(acc ** (1.0 / q))
    return weighted_mixed_norm(g, exponents, weights)


_AXIS_SHELL_CACHE = {}


def _axis_shell_profiles(n, L, A, B):
    """Dyadic shell multipliers for a single (isotropic) axis."""
    key = (n, float(L), float(A), float(B))
    hit = _AXIS_SHELL_CACHE.get(key)
    if hit is not None:
        return hit
    tau = 2.0 * np.pi * np.fft.fftfreq(n, d=2.0 * L / n)
    r = np.abs(tau)
    nyq = np.pi * n / (2.0 * L)
    n_top = math.floor(math.log2(0.9 * nyq / B))
    if n_top < 0:
        raise LpTruncationError("axis too coarse for even one shell")
    prof = lambda rr: smooth_step((rr - A) / (B - A))
    shells = [prof(r)]
    for m in range(1, n_top + 1):
        shells.append(prof(2.0 ** (-m) * r) - prof(2.0 ** (-m + 1) * r))
    out = np.stack(shells)
    _AXIS_SHELL_CACHE[key] = out
    return out


def time_tl_norm(f, s, q, p, time_weight=None, space_weights=(), A=1.0, B=2.0,
                 micro=None, n_max=None):
    """Scale-square-function norm in the last axis with L^p space values.

    G_n(t) = || S_n^t f (., t) ||_{L^p(space, space_weights)},
    result  = || ( sum_n (2^(n s) G_n)^micro )^(1/micro) ||_{L^q(time_weight)}.

    micro defaults to p.  time_weight: AxisWeight for the last axis or None
    for the plain rectangle rule over the whole time axis.
    """
    if micro is None:
        micro = p
    shells = _axis_shell_profiles(f.shape[-1], f.box[-1], A, B)
    if n_max is not None:
        if n_max + 1 > shells.shape[0]:
            raise LpTruncationError("requested more time shells than resolved")
        shells = shells[:n_max + 1]
    spec = sfft.fft(f.data, axis=-1, workers=config.THREADS)
    wmap = _weight_map(space_weights)
    space_axes = tuple(range(f.ndim - 1))
    acc = None
    for nsh in range(shells.shape[0]):
        block = sfft.ifft(spec * shells[nsh], axis=-1, workers=config.THREADS)
        gn = _partial_lp(block, f, space_axes, p, wmap, keepdims=False)
        term = (2.0 ** (nsh * s) * gn) ** micro
        acc = term if acc is None else acc + term
    big_g = acc ** (1.0 / micro)
    return _time_axis_integral(big_g, f, q, time_weight)


def time_besov_slices_norm(f, s, p, q, time_weight=None, space_weights=(),
                           space_a=None, A=1.0, B=2.0, n_max=None):
    """L^q over time of the spatial B^s_{p,p} norms of the slices.

    The spatial analysis runs over all axes but the last, with per-axis
    scaling exponents space_a (isotropic when omitted).
    """
    d_sp = f.ndim - 1
    if space_a is None:
        space_a = (1.0,) * d_sp
    mesh = [f.axis_freqs(i) for i in range(d_sp)]
    grids = np.meshgrid(*mesh, indexing="ij")
    r = sum(np.abs(g) ** (2.0 / a) for g, a in zip(grids, space_a)) ** 0.5
    resolved = min(f.nyquist(i) ** (1.0 / space_a[i]) for i in range(d_sp))
    n_top = math.floor(math.log2(0.9 * resolved / B))
    if n_top < 0:
        raise LpTruncationError("spatial axes too coarse for even one shell")
    if n_max is not None:
        if n_max > n_top:
            raise LpTruncationError("requested more spatial shells than resolved")
        n_top = n_max
    prof = lambda rr: smooth_step((rr - A) / (B - A))
    spec = sfft.fftn(f.data, axes=tuple(range(d_sp)), workers=config.THREADS)
    wmap = _weight_map(space_weights)
    space_axes = tuple(range(d_sp))
    acc = None
    for nsh in range(n_top + 1):
        mult = prof(2.0 ** (-nsh) * r)
        if nsh > 0:
            mult = mult - prof(2.0 ** (-nsh + 1) * r)
        block = sfft.ifftn(spec * mult[..., None], axes=space_axes, workers=config.THREADS)
        bn = _partial_lp(block, f, space_axes, p, wmap, keepdims=False)
        term = (2.0 ** (nsh * s) * bn) ** p
        acc = term if acc is None else acc + term
    big_b = acc ** (1.0 / p)
    return _time_axis_integral(big_b, f, q, time_weight)


def _time_axis_integral(values, f, q, time_weight):
    """(integral |values(t)|^q d(weight))^(1/q) along the time axis."""
    tax = f.ndim - 1
    if time_weight is None:
        return float((np.sum(np.abs(values) ** q) * f.spacing(tax)) ** (1.0 / q))
    if time_weight.axis not in (tax, -1):
        raise ValueError("time weight must sit on the last axis")
    i0, cw = _axis_cells(f.axis_coords(tax), time_weight.exponent, time_weight.side)
    mid = 0.5 * (values[i0:-1] + values[i0 + 1:])
    return float((np.sum(np.abs(mid) ** q * cw)) ** (1.0 / q))


def hardy_check(f, gamma, p, weights_extra=()):
    """||u / x_1||_Lp(|x_1|^gamma) over the weighted W^{1,p} norm of u.

    The quotient is formed at cell midpoints of the first axis, so the
    division never touches x_1 = 0.  Extra axes use the rectangle rule
    (or the supplied extra weights).  When gamma - p < -1 the quotient is
    only integrable for u vanishing at x_1 = 0; a visibly nonzero boundary
    slice is rejected.
    """
    zero_slice = np.abs(f.data[f.zero_index(0)])
    bmax = float(zero_slice.max()) if zero_slice.size else float(zero_slice)
    peak = float(np.abs(f.data).max())
    if gamma - p < -1.0 and peak > 0 and bmax > 1e-6 * peak:
        raise ValueError("u must vanish at x_1 = 0 for gamma - p < -1")
    coords = f.axis_coords(0)
    n = coords.size
    i0, cw = _axis_cells(coords, gamma, "both")
    mids = 0.5 * (coords[:-1] + coords[1:])
    arr = 0.5 * (f.data[:-1] + f.data[1:])
    arr = arr / mids.reshape((-1,) + (1,) * (f.ndim - 1))
    num_p = np.abs(arr) ** p * cw.reshape((-1,) + (1,) * (f.ndim - 1))
    wmap = _weight_map(weights_extra)
    for ax in range(1, f.ndim):
        if ax in wmap:
            w = wmap[ax]
            j0, cwx = _axis_cells(f.axis_coords(ax), w.exponent, w.side)
            idx = np.arange(j0, f.shape[ax] - 1)
            num_p = 0.5 * (np.take(num_p, idx, axis=ax) + np.take(num_p, idx + 1, axis=ax))
            shape = [1] * num_p.ndim
            shape[ax] = cwx.size
            num_p = num_p * cwx.reshape(shape)
        else:
            num_p = num_p * f.spacing(ax)
    num = float(num_p.sum() ** (1.0 / p))
    den = sobolev_norm(f, 1, p, (AxisWeight(0, gamma),) + tuple(weights_extra))
    return {
        "numerator": num,
        "denominator": den,
        "ratio": num / den if den > 0 else math.inf,
        "boundary_max": bmax,
    }


@dataclass(frozen=True)
class SpaceSpec:
    """Declarative norm description, dispatched by space_norm.

    family: lebesgue | sobolev | bessel | besov | tl | aniso-sobolev |
            aniso-bessel | aniso-tl | intersection
    exponents: scalar p or per-block tuple; orders: integer vector for the
    Sobolev families; s: smoothness; q: microscopic exponent; parts: two
    SpaceSpecs for intersection (norm = sum of part norms).
    """

    family: str
    exponents: object = 2.0
    s: object = None
    orders: object = None
    q: object = None
    weights: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        if self.family in ("sobolev", "aniso-sobolev") and self.orders is not None:
            orders = self.orders if not np.isscalar(self.orders) else (self.orders,)
            for o in orders:
                if int(o) != o or o < 0:
                    raise ValueError("derivative orders must be nonneg integers")


def space_norm(f, spec, lps=None, n_max=None):
    """Evaluate the norm described by a SpaceSpec on a field."""
    fam = spec.family
    w = tuple(spec.weights)
    if fam == "lebesgue":
        return weighted_mixed_norm(f, spec.exponents, w)
    if fam == "sobolev":
        return sobolev_norm(f, int(spec.orders), spec.exponents, w)
    if fam == "bessel":
        return bessel_norm(f, spec.s, spec.exponents, w)
    if fam == "besov":
        return besov_tl_norm(f, lps, spec.s, spec.exponents, spec.q, w, "B", n_max)
    if fam == "tl":
        return besov_tl_norm(f, lps, spec.s, spec.exponents, spec.q, w, "F", n_max)
    if fam == "aniso-sobolev":
        return aniso_sobolev_norm(f, spec.orders, spec.exponents, w)
    if fam == "aniso-bessel":
        return aniso_bessel_norm(f, spec.s, spec.exponents, w)
    if fam == "aniso-tl":
        return aniso_tl_norm(f, lps, spec.s, spec.exponents, spec.q, w, n_max)
    if fam == "intersection":
        return sum(space_norm(f, part, lps, n_max) for part in spec.parts)
    raise ValueError("unknown space family %r" % fam)


def check_intersection_representation(p=2.4, q=2.0, s=1.0, seed=7, n_members=8,
                                      shape=(64, 512), box=(6.0, 2.0), refine=2):
    """Two-sided comparison of the mixed scale norm with its split form.

    For scaling (1, 2) in (space, time) the joint norm with inner L^p in
    space and outer L^q in time is compared against

        time-scale norm at smoothness s/2 with L^p space values
      + L^q over time of the spatial B^{s}_{p,p} slice norms.

    Members are random band-limited bumps, sampled exactly on a coarse and
    a refined grid.  Returns the member ratios, their brackets on both
    levels, the bracket spread, and the drift factor between levels.
    """
    from .synth import random_synth

    desc = AnisotropyDescriptor(((1, 1.0), (1, 2.0)))
    lps = LpSequence(desc)
    rng = np.random.default_rng(seed)
    members = [random_synth(rng, box, max_freq=(6.0, 8.0), n_modes=12, envelope=0.25)
               for _ in range(n_members)]

    probe = members[0].on_grid(shape, box, desc)
    n_cap = lps.n_max(probe)
    t_cap = _axis_shell_profiles(shape[-1], box[-1], 1.0, 2.0).shape[0] - 1
    sp_cap = math.floor(math.log2(0.9 * (np.pi * shape[0] / (2.0 * box[0])) / lps.B))

    def ratios(shp):
        out = []
        for m in members:
            fld = m.on_grid(shp, box, desc)
            lhs = tl_norm(fld, lps, s, (p, q), p, n_max=n_cap)
            rhs = (time_tl_norm(fld, s / 2.0, q, p, n_max=t_cap)
                   + time_besov_slices_norm(fld, s, p, q, n_max=sp_cap))
            out.append(lhs / rhs)
        return out

    rc = ratios(shape)
    rf = ratios(tuple(refine * n for n in shape))
    b0 = (min(rc), max(rc))
    b1 = (min(rf), max(rf))
    drift = max(b1[0] / b0[0], b0[0] / b1[0], b1[1] / b0[1], b0[1] / b1[1])
    return {
        "ratios_coarse": rc,
        "ratios_fine": rf,
        "bracket_coarse": b0,
        "bracket_fine": b1,
        "spread": b0[1] / b0[0],
        "spread_fine": b1[1] / b1[0],
        "drift": drift,
    }
