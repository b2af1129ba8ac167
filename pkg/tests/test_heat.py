"""Strip heat solver: operator consistency, manufactured solutions,
boundary extension coupling, and the stability-study invariants."""

import numpy as np
import pytest

from mrlab.geometry import domain_preset, make_dks_pullback
from mrlab.heat import (HeatOperator, HeatProblem, boundary_norm,
                        make_strip_grid, mms_1d, mms_strip, mr_stability_study,
                        solve_homogeneous, solve_inhomogeneous,
                        strip_coefficients, strip_extension, _cells_one_sided,
                        _random_member)
from mrlab.params import ParamSet
from mrlab.traceext import make_rho

# gamma below p-1 sits in the admissibility window only for kappa > 1/4
PS_LOW = ParamSet(p=2.0, q=2.0, gamma=0.5, kappa=0.5)
PS_HIGH = ParamSet(p=2.0, q=2.0, gamma=2.0)


def test_strip_grid_construction():
    g = make_strip_grid(16, 4.0)
    assert g.n1 == 16 and g.height == 4.0 and g.nt is None
    assert np.allclose(np.diff(g.nodes1), 0.25)

    gg = make_strip_grid(64, 6.0, nt=32, window=10.0, grade=0.85)
    d = np.diff(gg.nodes1)
    assert gg.nodes1[0] == 0.0 and abs(gg.nodes1[-1] - 6.0) < 1e-12
    assert d.min() == d[0] and d.max() <= d[-1] + 1e-15
    print("graded cell range:", d.min(), d.max())
    assert d.min() < d.max() / 50

    with pytest.raises(ValueError):
        make_strip_grid(16, 4.0, grade=1.5)
    with pytest.raises(ValueError):
        make_strip_grid(16, 4.0, nt=32)  # window missing

    cw = _cells_one_sided(np.linspace(0.0, 2.0, 5), 0.5)
    assert np.isclose(cw.sum(), 2.0 ** 1.5 / 1.5, rtol=1e-13)


def test_operator_consistency():
    # uniform axis: centered stencil truncation pi^4 dx^2 / 12 on sin(pi x)
    g = make_strip_grid(64, 1.0)
    u = np.sin(np.pi * g.nodes1)
    err = np.abs(HeatOperator(g).apply(u)
                 + np.pi ** 2 * np.sin(np.pi * g.nodes1)[1:-1]).max()
    print("uniform 1d apply err:", err)
    assert np.isclose(err, np.pi ** 4 / 12 / 64 ** 2, rtol=0.05)

    # graded axis, cubic: nonuniform weights stay consistent
    gg = make_strip_grid(64, 1.0, grade=0.85)
    errg = np.abs(HeatOperator(gg).apply(gg.nodes1 ** 3)
                  - 6.0 * gg.nodes1[1:-1]).max()
    print("graded 1d apply err:", errg)
    assert errg < 0.02

    # flat 2-d separable mode
    g2 = make_strip_grid(32, 6.0, nt=64, window=10.0)
    w = np.sin(np.pi * g2.nodes1[:, None] / 6.0) \
        * np.cos(np.pi * g2.yt[None, :] / 10.0)
    lam = (np.pi / 6) ** 2 + (np.pi / 10) ** 2
    rel = np.abs(HeatOperator(g2).apply(w) + lam * w[1:-1]).max() \
        / (lam * np.abs(w).max())
    print("flat 2d apply rel err:", rel)
    assert rel < 1.5e-3


def test_curved_operator_consistency():
    # harmonic pullbacks: w = x1 and w = x1^2 have known images under the
    # mapped laplacian; residuals must drop ~4x per refinement
    dom = domain_preset("gaussian-bump")
    pm = make_dks_pullback(dom)
    resids = []
    for n1, nt in ((48, 64), (96, 128)):
        grid = make_strip_grid(n1, 6.0, nt=nt, window=10.0)
        op = HeatOperator(grid, strip_coefficients(pm, grid))
        Y1 = np.broadcast_to(grid.nodes1[:, None], (n1 + 1, nt))
        YT = np.broadcast_to(grid.yt[None, :], (n1 + 1, nt))
        psi = Y1 + pm.mollified_h(Y1.ravel(), YT.ravel()).reshape(YT.shape)
        r1 = np.abs(op.apply(psi)).max()
        r2 = np.abs(op.apply(psi ** 2) - 2.0).max()
        resids.append((r1, r2))
        print("curved resid", (n1, nt), r1, r2)
    assert resids[0][0] < 0.09 and resids[0][1] < 0.62
    assert resids[1][0] < resids[0][0] / 3.0
    assert resids[1][1] < resids[0][1] / 3.0


def test_mms_1d_second_order():
    out = mms_1d(levels=3, n0=16, T=0.5, c_dt=2.0)
    print("1d mms errors:", out["errors"])
    print("1d mms orders:", out["orders"])
    assert all(o > 1.9 for o in out["orders"])
    assert out["errors"][-1] < 6e-5
    assert all(m["solver_residual"] < 1e-12 for m in out["meshes"])


def test_steady_state():
    from mrlab.heat import steady_state_1d
    err = steady_state_1d()
    print("steady-state err:", err)
    assert err < 1e-4


def test_homogeneous_zero_source():
    grid = make_strip_grid(16, 2.0, nt=16, window=4.0)
    f = np.zeros((8, 17, 16))
    u, info = solve_homogeneous(f, grid, T=1.0)
    assert np.abs(u).max() == 0.0
    assert info["residual"] == 0.0


def test_extension_trace_row():
    grid = make_strip_grid(32, 6.0, nt=64, window=10.0)
    rho = make_rho(0)
    gs = np.array([np.zeros(64), np.exp(-(grid.yt / 2.0) ** 2)])
    E = strip_extension(gs, grid, rho)
    assert E.shape == (2, 33, 64) and E.dtype == complex
    err = np.abs(E[1][0] - gs[1]).max()
    print("extension trace row err:", err)
    assert err < 1e-10
    assert np.abs(E[0]).max() == 0.0


def test_problem_guards():
    rng = np.random.default_rng(11)
    f, g = _random_member(rng, 2.0, 6.0, 10.0)
    with pytest.raises(ValueError, match="inadmissible"):
        HeatProblem(f, g, ParamSet(p=2.0, q=2.0, gamma=1.0))  # excluded line
    with pytest.raises(ValueError, match="inadmissible"):
        # 1 - (mu+1)/q = 0.4 = (gamma+1)/(2p): the critical line
        HeatProblem(f, g, ParamSet(p=2.0, q=2.0, gamma=0.6, mu=0.2,
                                   kappa=0.5))
    with pytest.raises(ValueError, match="vanish at t = 0"):
        HeatProblem(f, lambda t, yt: np.ones_like(yt), PS_LOW)
    prob = HeatProblem(f, g, PS_LOW)
    assert prob.compatibility == "RequireGZeroAtZero"
    with pytest.raises(ValueError, match="power of two"):
        solve_inhomogeneous(prob, (32, 32), 12)


def test_mms_strip_convergence():
    out = mms_strip(levels=2, shape0=(32, 32), steps0=8)
    print("strip mms errors:", out["errors"])
    print("strip trace residuals:", out["trace_residuals"])
    assert out["errors"][0] < 0.05
    assert out["errors"][1] < out["errors"][0] / 3.0
    assert max(out["trace_residuals"]) < 1e-12
    rep = out["report_finest"]
    assert rep["initial_sup"] == 0.0
    assert rep["pde_residual"] < 1e-10
    assert rep["ratio_defined"] and 0.5 < rep["ratio"] < 20.0


def test_linearity_and_zero_data():
    rng = np.random.default_rng(11)
    f1, g1 = _random_member(rng, 2.0, 6.0, 10.0)
    f2, g2 = _random_member(rng, 2.0, 6.0, 10.0)
    rho = make_rho(0)
    u1, _ = solve_inhomogeneous(HeatProblem(f1, g1, PS_LOW), (48, 64), 16,
                                rho=rho)
    u2, _ = solve_inhomogeneous(HeatProblem(f2, g2, PS_LOW), (48, 64), 16,
                                rho=rho)
    p12 = HeatProblem(lambda t, a, b: f1(t, a, b) + f2(t, a, b),
                      lambda t, b: g1(t, b) + g2(t, b), PS_LOW)
    u12, _ = solve_inhomogeneous(p12, (48, 64), 16, rho=rho)
    rel = np.abs(u12 - (u1 + u2)).max() / np.abs(u12).max()
    print("linearity rel:", rel)
    assert rel < 1e-12

    pz = HeatProblem(lambda t, a, b: 0.0, lambda t, b: 0.0, PS_LOW)
    uz, rz = solve_inhomogeneous(pz, (32, 32), 8, rho=rho)
    assert np.abs(uz).max() == 0.0
    assert not rz.ratio_defined
    assert rz.norm_f == rz.norm_g == rz.norm_u == 0.0


def test_boundary_norm_properties():
    ts = np.linspace(0.0, 2.0, 17)
    yt = (np.arange(64) - 32) * (20.0 / 64)
    gs = np.array([np.sin(np.pi * t / 2.0) ** 2 * np.exp(-(yt / 3.0) ** 2)
                   for t in ts])
    n_k0 = boundary_norm(gs, PS_HIGH, 2.0, 10.0)
    n_k1 = boundary_norm(gs, ParamSet(p=2.0, q=2.0, gamma=2.0, k=1), 2.0, 10.0)
    print("boundary norm:", n_k0)
    # the trace-space orders do not involve the smoothness shift k
    assert n_k0 == n_k1
    assert np.isclose(n_k0, 3.2845192365512963, rtol=1e-8)
    assert np.isclose(boundary_norm(2 * gs, PS_HIGH, 2.0, 10.0) / n_k0, 2.0,
                      rtol=1e-13)
    n_mu = boundary_norm(gs, ParamSet(p=2.0, q=2.0, gamma=2.0, mu=0.5),
                         2.0, 10.0)
    print("boundary norm mu=0.5:", n_mu)
    assert np.isclose(n_mu, 3.19598193725227, rtol=1e-8)
    with pytest.raises(ValueError, match="power-of-two"):
        boundary_norm(gs[:16], PS_HIGH, 2.0, 10.0)  # 15 steps


def test_mr_study_small():
    out = mr_stability_study(PS_HIGH, n_members=3, levels=2, seed=5,
                             shape0=(64, 64), steps0=32)
    print("ratios:", out["ratios"])
    print("brackets:", out["brackets"], "drift:", out["drift"])
    assert all(s < 10.0 for s in out["spreads"])
    assert out["drift"] < 1.5
    assert out["scale_deviation"] == 0.0
    lo, hi = out["brackets"][0]
    assert np.isclose(lo, 3.692656820250061, rtol=1e-3)
    assert np.isclose(hi, 7.9165897760231765, rtol=1e-3)
