"""Grid conventions, anisotropy blocks, decay tags, and the cache format."""

import io

import numpy as np
import pytest

from mrlab.fields import DECAY_TOL, AnisotropyDescriptor, GridField


def gaussian_field(n=64, box=8.0, sigma=1.0):
    x = (np.arange(n) - n // 2) * (2.0 * box / n)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    data = np.exp(-(xx ** 2 + yy ** 2) / (2 * sigma ** 2))
    return GridField(data, box, AnisotropyDescriptor.isotropic(2))


def test_grid_conventions():
    f = gaussian_field(n=64, box=8.0)
    assert f.spacing(0) == 2.0 * 8.0 / 64
    c = f.axis_coords(0)
    assert c[0] == -8.0                      # left edge included
    assert c[f.zero_index(0)] == 0.0         # zero is an exact node
    assert c[-1] == 8.0 - f.spacing(0)       # right edge excluded
    assert f.nyquist(0) == np.pi * 64 / 16.0
    xi = f.axis_freqs(0)
    assert xi[0] == 0.0
    assert np.isclose(xi[1], 2 * np.pi / 16.0)


def test_descriptor_blocks():
    d = AnisotropyDescriptor(((1, 2.0), (2, 1.0)))
    assert d.dim == 3
    assert d.nblocks == 2
    assert [s.start for s in d.block_slices()] == [0, 1]
    assert list(d.axis_exponents()) == [2.0, 1.0, 1.0]
    assert AnisotropyDescriptor.isotropic(2).blocks == ((2, 1.0),)
    with pytest.raises(ValueError):
        AnisotropyDescriptor(())
    with pytest.raises(ValueError):
        AnisotropyDescriptor(((2, -1.0),))


def test_axis_counts_must_be_pow2():
    desc = AnisotropyDescriptor.isotropic(1)
    with pytest.raises(ValueError):
        GridField(np.zeros(6), 1.0, desc)
    with pytest.raises(ValueError):
        GridField(np.zeros(2), 1.0, desc)
    GridField(np.zeros(4), 1.0, desc)


def test_decay_tag():
    # gaussian on a wide box decays; on a narrow box it must be rejected
    f = gaussian_field(n=64, box=8.0)
    assert f.boundary_ratio() < DECAY_TOL
    GridField(f.data, f.box, f.descriptor, ("decaying",))
    g = gaussian_field(n=64, box=3.0)
    print("narrow-box boundary ratio:", g.boundary_ratio())
    assert g.boundary_ratio() > DECAY_TOL
    with pytest.raises(ValueError):
        GridField(g.data, g.box, g.descriptor, ("decaying",))
    with pytest.raises(ValueError):
        GridField(g.data, g.box, g.descriptor, ("decaying:0",))


def test_axis_specific_decay_tag():
    # decays along axis 0 only; axis-1 boundary carries mass
    n, box = 64, 8.0
    x = (np.arange(n) - n // 2) * (2.0 * box / n)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    data = np.exp(-xx ** 2) * np.cos(yy)
    desc = AnisotropyDescriptor.isotropic(2)
    GridField(data, box, desc, ("decaying:0",))
    with pytest.raises(ValueError):
        GridField(data, box, desc, ("decaying:1",))


def test_boundary_ratio_value():
    desc = AnisotropyDescriptor.isotropic(1)
    data = np.zeros(8)
    data[0] = 0.25
    data[4] = 2.0
    f = GridField(data, 1.0, desc)
    assert f.boundary_ratio() == 0.125


def test_with_data_and_geometry():
    f = gaussian_field()
    g = f.with_data(2.0 * f.data)
    assert g.same_geometry(f)
    assert g.tags == f.tags
    h = f.with_data(f.data, tags=("decaying",))
    assert h.tags == frozenset(("decaying",))
    other = gaussian_field(box=9.0)
    assert not other.same_geometry(f)


def test_serialization_roundtrip():
    f = GridField((np.arange(32) / 7.0 + 1j * np.arange(32)).reshape(4, 8),
                  (1.0, 2.5), AnisotropyDescriptor(((1, 2.0), (1, 1.0))),
                  ("decaying-not-really",))
    raw = f.to_bytes()
    assert raw.startswith(b"MRGF\x01")
    g = GridField.parse(io.BytesIO(raw))
    assert g.shape == f.shape
    assert g.box == f.box
    assert g.descriptor == f.descriptor
    assert g.tags == f.tags
    # samples are cached in complex64, so the roundtrip is float32-exact
    err = np.abs(g.data - f.data).max() / np.abs(f.data).max()
    print("cache roundtrip rel err:", err)
    assert err < 1.5e-7


def test_serialization_deterministic():
    f = gaussian_field(n=16, box=4.0)
    assert f.to_bytes() == f.to_bytes()


def test_parse_rejects_bad_magic():
    with pytest.raises(ValueError):
        GridField.parse(io.BytesIO(b"NOPE" + b"\x00" * 64))
