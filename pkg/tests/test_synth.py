"""Synthetic band-limited members: determinism and grid sampling."""

import numpy as np
import pytest

from mrlab.fields import AnisotropyDescriptor
from mrlab.synth import SynthField, random_synth

ISO1 = AnisotropyDescriptor.isotropic(1)
ISO2 = AnisotropyDescriptor.isotropic(2)


def test_single_mode_values():
    sf = SynthField([[2.0, 0.0]], [1.0])
    x = np.array([0.3, -0.7])
    y = np.array([0.1, 0.4])
    got = sf(x, y)
    assert np.allclose(got, np.exp(2j * x))
    assert sf.dim == 2


def test_envelope_and_grid_sampling():
    sf = SynthField([[1.0]], [2.0], sigmas=[3.0])
    f = sf.on_grid((64,), 6.0, ISO1)
    x = f.axis_coords(0)
    assert np.allclose(f.data, 2.0 * np.exp(1j * x) * np.exp(-(x / 3.0) ** 2))
    # same member resampled on a finer grid agrees at shared points
    g = sf.on_grid((128,), 6.0, ISO1)
    assert np.allclose(g.data[::2], f.data)


def test_random_synth_is_deterministic():
    a = random_synth(np.random.default_rng(5), 4.0, 2.0, dim=2)
    b = random_synth(np.random.default_rng(5), 4.0, 2.0, dim=2)
    assert np.array_equal(a.freqs, b.freqs)
    assert np.array_equal(a.coeffs, b.coeffs)
    pts = np.linspace(-4, 4, 17)
    assert np.allclose(a(pts, pts), b(pts, pts))


def test_random_synth_band_limit():
    rng = np.random.default_rng(0)
    sf = random_synth(rng, 4.0, 2.0, n_modes=40, dim=2)
    # modes stay on the box lattice within the requested band
    assert np.all(np.abs(sf.freqs) <= 2.0 + 1e-12)
    k = sf.freqs * 4.0 / np.pi
    assert np.allclose(k, np.round(k))
    with pytest.raises(ValueError):
        random_synth(rng, 4.0, 2.0)  # scalar box needs dim


def test_envelope_decay_tag_compatible():
    rng = np.random.default_rng(3)
    sf = random_synth(rng, 5.0, 1.5, dim=1, envelope=0.2)
    f = sf.on_grid((128,), 5.0, ISO1, tags=("decaying",))
    assert f.boundary_ratio() < 1e-8
