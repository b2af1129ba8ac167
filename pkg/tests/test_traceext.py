"""Kernel family, traces, extensions, and their composition."""

import numpy as np
import pytest

from mrlab.fields import AnisotropyDescriptor, GridField
from mrlab.lpanalysis import LpSequence
from mrlab.params import ParamSet
from mrlab.synth import random_synth
from mrlab.traceext import (TraceVector, check_biorthogonality, drop_first_axis,
                            ext_j, ext_series, ext_vector, kernel_box, make_rho,
                            prepend_axis, trace_continuity_ratio, trace_m,
                            trace_series_tail, trace_working)

ISO1 = AnisotropyDescriptor.isotropic(1)
ISO2 = AnisotropyDescriptor.isotropic(2)


def test_kernel_moment_residuals():
    for m in (0, 2):
        fam = make_rho(m)
        assert fam.moment_residuals.max() < 1e-10
        # profile supported on (1, 2) only
        vals = fam.profile(np.array([0.5, 1.0, 2.0, 2.5]))
        assert np.all(vals == 0)
    print("kernel conds:", make_rho(0).cond, make_rho(2).cond)


def test_kernel_pointwise_derivatives():
    # d^i rho_j (0) = delta_ij, checked by central differences
    rho = make_rho(2)
    h = 1e-3
    for j in range(3):
        f0 = rho.eval_points(np.array([0.0]), j)[0]
        fp = rho.eval_points(np.array([h]), j)[0]
        fm = rho.eval_points(np.array([-h]), j)[0]
        d1 = (fp - fm) / (2 * h)
        d2 = (fp - 2 * f0 + fm) / h ** 2
        tgt = [1.0 if i == j else 0.0 for i in range(3)]
        assert abs(f0 - tgt[0]) < 1e-4
        assert abs(d1 - tgt[1]) < 1e-4
        assert abs(d2 - tgt[2]) < 1e-4
    with pytest.raises(ValueError):
        rho.profile(np.array([1.5]), j=5)


def test_kernel_box_policy():
    assert kernel_box(0) == 250.0
    assert kernel_box(1) == 350.0
    assert kernel_box(3) > kernel_box(1)


def test_trace_of_pure_mode():
    # mode inside the restriction plateau: trace entries are exact
    n, box = 128, 8.0 * np.pi
    x = (np.arange(n) - n // 2) * (2.0 * box / n)
    X1, XT = np.meshgrid(x, x, indexing="ij")
    xi1, xit = 1.0, 0.75
    f = GridField(np.exp(1j * (xi1 * X1 + xit * XT)), box, ISO2)
    lps = LpSequence(ISO2)
    tv = trace_m(f, 2, lps)
    ref = np.exp(1j * xit * x)
    for j in range(3):
        assert np.allclose(tv[j].data, (1j * xi1) ** j * ref, atol=1e-10)
    assert tv[0].box == (box,)
    # tail vanishes when the deeper plateau already covers the content
    g = GridField(np.exp(1j * (0.75 * X1 + 0.5 * XT)), box, ISO2)
    assert trace_series_tail(g, lps) < 1e-13


def test_trace_time_spectator():
    n, box = 64, 8.0 * np.pi
    x = (np.arange(n) - n // 2) * (2.0 * box / n)
    X1, XT, T = np.meshgrid(x, x, x, indexing="ij")
    # spatial radius 0.901 stays on the scale-0 plateau of this coarse grid
    data = np.exp(1j * (0.75 * X1 + 0.5 * XT + 7.0 * T))
    desc = AnisotropyDescriptor(((2, 1.0), (1, 2.0)))
    f = GridField(data, box, desc)
    lps = LpSequence(ISO2)
    tv = trace_m(f, 1, lps, time_last=True)
    ref = np.exp(1j * (0.5 * XT[0] + 7.0 * T[0]))
    assert np.allclose(tv[0].data, ref, atol=1e-9)
    assert np.allclose(tv[1].data, 0.75j * ref, atol=1e-9)
    assert tv[0].descriptor.blocks == ((1, 1.0), (1, 2.0))


def test_trace_vector_and_descriptor_helpers():
    g = GridField(np.ones((8,), dtype=complex), 2.0, ISO1)
    h = GridField(np.ones((16,), dtype=complex), 2.0, ISO1)
    with pytest.raises(ValueError):
        TraceVector([g, h])
    with pytest.raises(ValueError):
        TraceVector([])
    assert drop_first_axis(AnisotropyDescriptor(((1, 1.0), (1, 2.0)))).blocks \
        == ((1, 2.0),)
    assert drop_first_axis(AnisotropyDescriptor(((2, 1.0),))).blocks == ((1, 1.0),)
    with pytest.raises(ValueError):
        drop_first_axis(ISO1)
    assert prepend_axis(ISO1, 2.0).blocks == ((1, 2.0), (1, 1.0))


def test_biorthogonality_small_family():
    # identity pattern of trace after extension, frozen small-family bounds
    for m, bound in ((0, 1e-8), (1, 1e-8)):
        rep = check_biorthogonality(m, n_members=3, seed=3)
        print("biorth m=%d max error %.3e" % (m, rep["max_error"]))
        assert rep["max_error"] < bound


def test_ext_series_matches_grid_extension():
    rng = np.random.default_rng(7)
    desc_t = ISO1
    lps_t = LpSequence(desc_t)
    for m in (0, 1):
        rho = make_rho(m)
        g = random_synth(rng, 10.0, 1.9, n_modes=8, envelope=None,
                         dim=1).on_grid((64,), 10.0, desc_t)
        tv = TraceVector([g] + [g.with_data(0.3 * g.data)] * m)
        ef = ext_vector(tv, 1.0, lps_t, rho)
        assert "decaying:0" in ef.tags
        es = ext_series(tv, 1.0, lps_t, rho)
        i1 = rng.integers(0, ef.shape[0], 200)
        it = rng.integers(0, ef.shape[1], 200)
        vals = es.eval(ef.axis_coords(0)[i1], g.axis_coords(0)[it].reshape(-1, 1))
        rel = np.abs(vals - ef.data[i1, it]).max() / np.abs(ef.data).max()
        print("m=%d series-vs-grid rel %.3e" % (m, rel))
        assert rel < 1e-7
    with pytest.raises(ValueError):
        ext_j(g, 2, 1.0, lps_t, make_rho(1))
    with pytest.raises(ValueError):
        ext_vector(TraceVector([g, g]), 1.0, lps_t, make_rho(0))


def test_trace_continuity_smoke():
    ps = ParamSet(p=2.0, q=2.0, gamma=0.5, k1=1)
    rep = trace_continuity_ratio(ps, n_members=3, shape=(64, 32, 32))
    print("continuity bracket %s spread %.4f drift %.6f"
          % (rep["bracket_coarse"], rep["spread"], rep["drift"]))
    assert rep["spread"] < 10.0
    assert rep["drift"] < 1.5
    with pytest.raises(ValueError):
        trace_continuity_ratio(ParamSet(p=2.0, q=2.0, gamma=5.0, k1=1))
