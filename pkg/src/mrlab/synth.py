"""Deterministic band-limited test fields.

A SynthField is a finite trigonometric sum times an optional Gaussian
envelope.  It is an analytic function, so the same member can be sampled
exactly on any grid (refinement studies need the function, not its samples,
to stay fixed).
"""

import numpy as np

from .fields import GridField


class SynthField:
    """sum_k c_k exp(i <xi_k, x>) * exp(-sum (x_i/sigma_i)^2)."""

    def __init__(self, freqs, coeffs, sigmas=None):
        self.freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.sigmas = None if sigmas is None else np.asarray(sigmas, dtype=float)

    @property
    def dim(self):
        return self.freqs.shape[1]

    def __call__(self, *mesh):
        pts = np.broadcast_arrays(*mesh)
        out = np.zeros(pts[0].shape, dtype=complex)
        for xi, c in zip(self.freqs, self.coeffs):
            phase = sum(xi[i] * pts[i] for i in range(self.dim))
            out = out + c * np.exp(1j * phase)
        if self.sigmas is not None:
            rr = sum((pts[i] / self.sigmas[i]) ** 2 for i in range(self.dim))
            out = out * np.exp(-rr)
        return out

    def on_grid(self, shape, box, descriptor, tags=()):
        if np.isscalar(box):
            box = (float(box),) * len(shape)
        axes = [(np.arange(n) - n // 2) * (2.0 * L / n)
                for n, L in zip(shape, box)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return GridField(self(*mesh), box, descriptor, tags)


def random_synth(rng, box, max_freq, n_modes=10, envelope=0.25, dim=None):
    """Random member: modes on the box lattice within |xi_i| <= max_freq_i.

    box / max_freq: scalars or per-axis sequences.  envelope: sigma as a
    fraction of the box half-width (None for pure trigonometric sums).
    """
    if np.isscalar(box):
        if dim is None:
            raise ValueError("pass dim when box is scalar")
        box = (float(box),) * dim
    box = np.asarray(box, dtype=float)
    d = box.size
    if np.isscalar(max_freq):
        max_freq = (float(max_freq),) * d
    kmax = np.maximum(1, np.floor(np.asarray(max_freq) * box / np.pi)).astype(int)
    n_modes = int(n_modes)
    ks = np.stack([rng.integers(-kmax[i], kmax[i] + 1, size=n_modes)
                   for i in range(d)], axis=1)
    freqs = ks * (np.pi / box)
    coeffs = rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)
    sig = None if envelope is None else envelope * box
    return SynthField(freqs, coeffs, sig)
