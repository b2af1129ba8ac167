"""Anisotropic Littlewood-Paley decomposition on periodic grids.

The generator profile is psi((r - A)/(B - A)) in the anisotropic distance
r = |xi|_{d,a}, where psi is the smooth decreasing step built from the
normalized integral of t -> exp(-1/(t(1-t))) on (0,1): psi = 1 on (-oo, 0],
psi = 0 on [1, oo).  Shell n >= 1 is the dilation difference

    phi_hat_n(xi) = phi_hat(delta_{2^-n} xi) - phi_hat(delta_{2^-n+1} xi),

and shell 0 is phi_hat itself, so partial sums telescope exactly to
phi_hat(delta_{2^-N} xi).  Because the anisotropic distance is homogeneous,
phi_hat(delta_lambda xi) = profile(lambda * r(xi)) and one cached radius grid
serves every shell.

Block applications S_n f are sharp multiplier products in FFT space; fields
are assumed spectrally concentrated inside the resolved band.
"""

import numpy as np
import scipy.fft

from . import config
from .fields import AnisotropyDescriptor, GridField


class LpTruncationError(ValueError):
    """Requested shells extend beyond the trusted part of the frequency box."""


def _fftn(a):
    return scipy.fft.fftn(a, workers=config.THREADS)


def _ifftn(a):
    return scipy.fft.ifftn(a, workers=config.THREADS)


# ---------------------------------------------------------------------------
# anisotropic distance and dilations


def aniso_distance(x, descriptor):
    """|x|_{d,a} = (sum_j |x_j|^(2/a_j))^(1/2), |x_j| euclidean per block.

    x: either an array whose last axis has length descriptor.dim (points), or
    a sequence of dim broadcastable component arrays (mesh form).
    """
    comps = _components(x, descriptor)
    acc = 0.0
    for sl, (d, a) in zip(descriptor.block_slices(), descriptor.blocks):
        block = comps[sl.start:sl.stop]
        norm2 = sum(np.abs(c).astype(float) ** 2 for c in block)
        acc = acc + norm2 ** (1.0 / a)
    return np.sqrt(acc)


def aniso_dilate(x, descriptor, lam):
    """delta_lambda x = (lambda^{a_j} x_j); returns the same structure as x."""
    if lam <= 0:
        raise ValueError("dilation parameter must be positive")
    comps = _components(x, descriptor)
    scales = descriptor.axis_exponents()
    out = [comps[i] * lam ** scales[i] for i in range(descriptor.dim)]
    if isinstance(x, (list, tuple)):
        return out
    return np.stack(np.broadcast_arrays(*out), axis=-1)


def _components(x, descriptor):
    d = descriptor.dim
    if isinstance(x, (list, tuple)):
        if len(x) != d:
            raise ValueError("component count does not match descriptor")
        return [np.asarray(c) for c in x]
    x = np.asarray(x)
    if x.shape[-1] != d:
        raise ValueError("last axis must match descriptor dimension")
    return [x[..., i] for i in range(d)]


# ---------------------------------------------------------------------------
# smooth step

_STEP_NODES, _STEP_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _bump01(s):
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
    return out


_STEP_TOTAL = None


def _step_total():
    global _STEP_TOTAL
    if _STEP_TOTAL is None:
        s = 0.5 * (_STEP_NODES + 1.0)
        _STEP_TOTAL = 0.5 * np.sum(_STEP_WEIGHTS * _bump01(s))
    return _STEP_TOTAL


def smooth_step(t):
    """psi(t): 1 for t <= 0, 0 for t >= 1, C^infty monotone in between."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    out[t >= 1.0] = 0.0
    mid = (t > 0.0) & (t < 1.0)
    if np.any(mid):
        tm = t[mid]
        # integral of the bump over [0, t], Gauss-Legendre per point
        nodes = 0.5 * tm[:, None] * (_STEP_NODES[None, :] + 1.0)
        vals = _bump01(nodes)
        part = 0.5 * tm * (vals @ _STEP_WEIGHTS)
        out[mid] = 1.0 - part / _step_total()
    return out


# ---------------------------------------------------------------------------
# generator and sequence


class LpSequence:
    """Generator profile plus cached radius grids for shell evaluation."""

    def __init__(self, descriptor, A=1.0, B=2.0):
        if not (0 < A < B):
            raise ValueError("need 0 < A < B")
        self.descriptor = descriptor
        self.A = float(A)
        self.B = float(B)
        self._radius_cache = {}

    def profile(self, r):
        """phi_hat as a function of the anisotropic distance."""
        r = np.asarray(r, dtype=float)
        return smooth_step((r - self.A) / (self.B - self.A))

    def generator(self, xi_components):
        """phi_hat(xi) on mesh components (list of dim arrays)."""
        return self.profile(aniso_distance(xi_components, self.descriptor))

    # -- grid plumbing ------------------------------------------------------

    def _key(self, grid):
        return (grid.shape, grid.box)

    def radius_grid(self, grid):
        key = self._key(grid)
        if key not in self._radius_cache:
            if grid.descriptor != self.descriptor:
                raise ValueError("grid descriptor does not match sequence")
            self._radius_cache[key] = aniso_distance(grid.freq_mesh(),
                                                     self.descriptor)
        return self._radius_cache[key]

    def resolved_radius(self, grid):
        """Largest anisotropic distance fully inside the frequency box."""
        a = self.descriptor.axis_exponents()
        return min(grid.nyquist(i) ** (1.0 / a[i]) for i in range(grid.ndim))

    def n_max(self, grid):
        """Largest N with B * 2^N <= 0.9 x resolved radius."""
        lim = 0.9 * self.resolved_radius(grid) / self.B
        if lim < 1.0:
            raise LpTruncationError(
                "grid cannot resolve even the base shell")
        return int(np.floor(np.log2(lim)))

    def partial_sum_values(self, grid, N):
        # telescoped: sum_{n<=N} phi_hat_n = phi_hat(delta_{2^-N} xi)
        return self.profile(2.0 ** (-N) * self.radius_grid(grid))

    def shell_values(self, grid, n):
        r = self.radius_grid(grid)
        if n == 0:
            return self.profile(r)
        return (self.profile(2.0 ** (-n) * r)
                - self.profile(2.0 ** (-n + 1) * r))


def make_generator(descriptor, A=1.0, B=2.0):
    """Build the Littlewood-Paley sequence for a block structure."""
    return LpSequence(descriptor, A, B)


def lp_blocks(f, lps, n_max=None):
    """S_n f = phi_n * f for n = 0..n_max, via sharp FFT multipliers."""
    grid_nmax = lps.n_max(f)
    if n_max is None:
        n_max = grid_nmax
    elif n_max > grid_nmax:
        raise LpTruncationError(
            f"shells to n={n_max} unresolved: B*2^n exceeds 0.9 x grid band "
            f"(max trusted n={grid_nmax})")
    spec = _fftn(f.data)
    out = []
    for n in range(n_max + 1):
        block = _ifftn(lps.shell_values(f, n) * spec)
        out.append(f.with_data(block, tags=()))
    return out


def lp_partial_sum(f, lps, N):
    """phi_hat(delta_{2^-N} .) f, the exact sum of blocks 0..N."""
    if N > lps.n_max(f):
        raise LpTruncationError("partial sum order exceeds resolved band")
    spec = _fftn(f.data)
    return f.with_data(_ifftn(lps.partial_sum_values(f, N) * spec), tags=())


# ---------------------------------------------------------------------------
# Bessel potentials


def bessel_apply(f, s):
    """(1 + |xi|^2)^{s/2} multiplier (euclidean |xi|, all axes)."""
    mesh = f.freq_mesh()
    mag2 = sum(c ** 2 for c in mesh)
    mult = (1.0 + mag2) ** (0.5 * s)
    return f.with_data(_ifftn(mult * _fftn(f.data)), tags=())


def partial_bessel_apply(f, s, block):
    """(1 + |xi_block|^2)^{s/2}: Bessel potential in one block's frequencies."""
    sl = f.descriptor.block_slices()[block]
    mesh = f.freq_mesh()
    mag2 = sum(mesh[i] ** 2 for i in range(sl.start, sl.stop))
    mult = (1.0 + mag2) ** (0.5 * s)
    return f.with_data(_ifftn(mult * _fftn(f.data)), tags=())


def spectral_derivative(f, order):
    """partial^alpha f via (i xi)^alpha multiplier; order = multi-index."""
    if len(order) != f.ndim:
        raise ValueError("multi-index length must match field dimension")
    spec = _fftn(f.data)
    for ax, k in enumerate(order):
        if k:
            shape = [1] * f.ndim
            shape[ax] = f.shape[ax]
            xi = f.axis_freqs(ax).reshape(shape)
            spec = spec * (1j * xi) ** int(k)
    return f.with_data(_ifftn(spec), tags=())
