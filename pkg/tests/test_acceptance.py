"""End to end acceptance runs with pinned tolerances.

One test per criterion; each prints a single summary line, and the
pytest verdict for that test is the pass/fail line of the criterion.
Expected values are either bounds fixed ahead of time or values frozen
from independent runs of the oracles in the unit test modules.
"""

import numpy as np

from mrlab.cli import main
from mrlab.fields import AnisotropyDescriptor
from mrlab.geometry import dks_contract_report, domain_roundtrip_report
from mrlab.heat import mms_strip, mr_stability_study
from mrlab.lpanalysis import LpSequence, lp_blocks
from mrlab.params import (ParamSet, validate_domain_trace,
                          validate_halfspace_trace, validate_heat_theorem)
from mrlab.spaces import check_intersection_representation
from mrlab.synth import random_synth
from mrlab.traceext import (check_biorthogonality, trace_continuity_ratio,
                            trace_working)

ISO2 = AnisotropyDescriptor.isotropic(2)

TELESCOPE_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-8
BIORTHO_TOL = 1e-5
RESTRICTION_TOL = 1e-6
BRACKET_SPREAD_TOL = 10.0
DRIFT_TOL = 2.0
CONTINUITY_SPREAD_TOL = 100.0
K_COMPARE_TOL = 10.0
ROUNDTRIP_TOL = 1e-8
BOUNDARY_TOL = 1e-8
DISTANCE_DRIFT_TOL = 1.5
DOMAIN_ROUNDTRIP_TOL = 1e-4
ORDER_FLOOR = 1.8
TRACE_RESIDUAL_TOL = 1e-3
INITIAL_SUP_TOL = 1e-10
MR_SPREAD_TOL = 100.0
SCALE_EXACT = 0.0


def test_c01_scale_block_identities():
    """Telescoping is exact and block sums rebuild decaying fields."""
    lps = LpSequence(ISO2)
    rng = np.random.default_rng(0)
    tel, rec = [], []
    for _ in range(8):
        synth = random_synth(rng, (10.0, 10.0), (2.0, 2.0),
                             n_modes=8, envelope=0.2)
        f = synth.on_grid((128, 128), (10.0, 10.0), ISO2,
                          tags=("decaying",))
        n_top = lps.n_max(f)
        acc = sum(lps.shell_values(f, j) for j in range(n_top + 1))
        tel.append(float(np.abs(acc - lps.partial_sum_values(f, n_top)).max()))
        total = sum(b.data for b in lp_blocks(f, lps))
        rec.append(float(np.abs(total - f.data).max()
                         / np.abs(f.data).max()))
    print("[1/10] telescope %.3e (tol %g), reconstruction %.3e (tol %g)"
          % (max(tel), TELESCOPE_TOL, max(rec), RECONSTRUCTION_TOL))
    assert max(tel) < TELESCOPE_TOL
    assert max(rec) < RECONSTRUCTION_TOL


def test_c02_kernel_biorthogonality():
    """Trace of the order-j extension reproduces g exactly on line j."""
    worst = {}
    for m in (0, 1, 2, 3):
        out = check_biorthogonality(m, n_members=20, seed=3)
        assert out["matrix"].shape == (m + 1, m + 1)
        worst[m] = out["max_error"]
    print("[2/10] biorthogonality max per m: "
          + ", ".join("m=%d %.2e" % (m, e) for m, e in worst.items())
          + " (tol %g)" % BIORTHO_TOL)
    # frozen ceilings one order above measured runs guard regressions
    for m, ceil in ((0, 1e-13), (1, 1e-11), (2, 1e-10), (3, 1e-7)):
        assert worst[m] < ceil
    assert max(worst.values()) < BIORTHO_TOL


def test_c03_working_trace_matches_restriction():
    """Summed restricted blocks equal the pointwise boundary row."""
    lps = LpSequence(ISO2)
    rng = np.random.default_rng(0)
    sups = []
    for _ in range(10):
        synth = random_synth(rng, (8.0, 8.0), (2.0, 2.0),
                             n_modes=8, envelope=0.2)
        f = synth.on_grid((128, 128), (8.0, 8.0), ISO2, tags=("decaying",))
        tr = trace_working(f, lps)
        ref = f.data[64]
        sups.append(float(np.abs(tr.data - ref).max() / np.abs(ref).max()))
    print("[3/10] restriction sup %.3e over 10 fields (tol %g)"
          % (max(sups), RESTRICTION_TOL))
    assert max(sups) < RESTRICTION_TOL


def test_c04_intersection_norm_bracket():
    """Intersection space norms stay equivalent across a 50 member family."""
    out = check_intersection_representation(n_members=50, seed=7)
    print("[4/10] bracket (%.4f, %.4f) spread %.4f drift %.6f"
          % (*out["bracket_coarse"], out["spread"], out["drift"]))
    assert out["spread"] <= BRACKET_SPREAD_TOL
    assert out["drift"] <= DRIFT_TOL
    # frozen from this family and seed
    assert np.isclose(out["spread"], 1.453314, rtol=1e-3)
    assert out["drift"] < 1.001


def test_c05_trace_continuity_brackets():
    """Trace norm ratios stay bracketed for four admissible tuples."""
    cases = {
        "low-gamma": (ParamSet(p=2.0, q=2.0, gamma=0.5, kappa=0.5),
                      (0.258556, 0.325134)),
        "high-gamma": (ParamSet(p=2.0, q=2.0, gamma=2.0, k1=2),
                       (0.110441, 0.159158)),
        "mu-weighted": (ParamSet(p=2.4, q=2.0, gamma=1.2, mu=0.3),
                        (0.233873, 0.293059)),
        "time-derivative": (ParamSet(p=2.0, q=2.0, gamma=2.0, k=1, k1=2),
                            (0.017966, 0.030756)),
    }
    brackets = {}
    for name, (ps, frozen) in cases.items():
        assert validate_halfspace_trace(ps).verdict
        out = trace_continuity_ratio(ps, n_members=5, seed=11,
                                     shape=(64, 32, 32))
        assert out["spread"] <= CONTINUITY_SPREAD_TOL
        assert out["drift"] <= DRIFT_TOL
        assert np.allclose(out["bracket_coarse"], frozen, rtol=1e-3)
        brackets[name] = out["bracket_coarse"]
    b0, b1 = brackets["high-gamma"], brackets["time-derivative"]
    k_factor = max(b0[1], b1[1]) / min(b0[0], b1[0])
    print("[5/10] four admissible tuples bracketed; k0/k1 factor %.3f "
          "(tol %g)" % (k_factor, K_COMPARE_TOL))
    assert k_factor <= K_COMPARE_TOL


def test_c06_flattening_map_contracts():
    """Pullback maps invert, fix the boundary, and bound the normal."""
    out = dks_contract_report()
    lines = []
    for name in ("gaussian-bump", "cone-smoothed", "rough-c1k"):
        rep = out[name]
        assert rep["roundtrip_error"] < ROUNDTRIP_TOL
        assert rep["boundary_error"] < BOUNDARY_TOL
        assert rep["bracket_drift"] <= DISTANCE_DRIFT_TOL
        assert rep["n1_min"] >= rep["n1_bound"]
        lines.append("%s rt %.1e drift %.4f normal %.3f>=%.3f"
                     % (name, rep["roundtrip_error"], rep["bracket_drift"],
                        rep["n1_min"], rep["n1_bound"]))
    print("[6/10] " + "; ".join(lines))


def test_c07_domain_trace_extension_roundtrip():
    """Trace of the domain extension returns g on the bump boundary."""
    rel = {}
    out0 = domain_roundtrip_report(0, n_members=3)
    rel[0] = max(out0["errors"])
    out1 = domain_roundtrip_report(1, n_members=2)
    rel[1] = max(out1["errors"])
    print("[7/10] roundtrip rel err m=0 %.3e, m=1 %.3e (tol %g)"
          % (rel[0], rel[1], DOMAIN_ROUNDTRIP_TOL))
    # frozen from this seed and family
    assert np.isclose(rel[0], 1.4637e-05, rtol=5e-3)
    assert np.isclose(rel[1], 3.1422e-06, rtol=5e-3)
    assert rel[0] < DOMAIN_ROUNDTRIP_TOL
    assert rel[1] < DOMAIN_ROUNDTRIP_TOL


def test_c08_heat_convergence_and_stability():
    """Manufactured convergence at order 2 and scale-exact ratios."""
    conv = mms_strip(levels=3)
    assert min(conv["orders"]) >= ORDER_FLOOR
    assert max(conv["trace_residuals"]) < TRACE_RESIDUAL_TOL
    assert max(m["initial_sup"] for m in conv["meshes"]) < INITIAL_SUP_TOL
    assert np.isclose(conv["errors"][0], 0.037605, rtol=1e-3)

    combos = {
        "g0.5-k0": (ParamSet(p=2.0, q=2.0, gamma=0.5, kappa=0.5), 1.542),
        "g0.5-k1": (ParamSet(p=2.0, q=2.0, gamma=0.5, kappa=0.5, k=1), 10.68),
        "g2-k0": (ParamSet(p=2.0, q=2.0, gamma=2.0), 3.170),
        "g2-k1": (ParamSet(p=2.0, q=2.0, gamma=2.0, k=1), 26.55),
    }
    drifts = {}
    for name, (ps, spread_frozen) in combos.items():
        assert validate_heat_theorem(ps).verdict
        out = mr_stability_study(ps, n_members=10, levels=2, seed=0)
        assert out["scale_deviation"] == SCALE_EXACT
        assert out["drift"] <= DRIFT_TOL
        assert max(out["spreads"]) <= MR_SPREAD_TOL
        assert max(out["spreads"]) < spread_frozen * 1.01
        drifts[name] = out["drift"]
    print("[8/10] orders %s; scale deviation exactly 0; drifts %s"
          % ([round(o, 3) for o in conv["orders"]],
             {k: round(v, 4) for k, v in drifts.items()}))


def test_c09_validators_match_hand_table():
    """Thirty hand-worked tuples spanning every admissibility condition."""
    H, D, T = (validate_halfspace_trace, validate_domain_trace,
               validate_heat_theorem)
    table = [
        # windows, budget, excluded lines, and mu for the flat trace
        (H, dict(p=2.0, q=2.0, gamma=0.5), True),
        (H, dict(p=2.0, q=2.0, gamma=2.0, k1=2), True),
        (H, dict(p=2.0, q=2.0, gamma=-1.0), False),
        (H, dict(p=2.0, q=2.0, gamma=3.0, k1=2), False),
        (H, dict(p=2.0, q=2.0, gamma=1.0, k1=2), False),
        (H, dict(p=2.0, q=2.0, gamma=0.5, m=2, k1=2), False),
        (H, dict(p=2.0, q=2.0, gamma=0.5, m=1, k1=2), True),
        (H, dict(p=2.0, q=2.0, gamma=0.5, mu=1.5), False),
        (H, dict(p=2.0, q=2.0, gamma=0.5, mu=-1.0), False),
        (H, dict(p=2.0, q=3.0, gamma=0.5, mu=1.5), True),
        # graph domain: regularity budget, window shifts with kappa
        (D, dict(p=2.0, q=2.0, gamma=0.5, kappa=0.0, k1=2), False),
        (D, dict(p=2.0, q=2.0, gamma=2.0, kappa=0.0, k1=2), True),
        (D, dict(p=2.0, q=2.0, gamma=2.0, kappa=0.9, k1=2), True),
        (D, dict(p=2.0, q=2.0, gamma=-0.5, kappa=0.9, k1=2), True),
        (D, dict(p=2.0, q=2.0, gamma=0.5, kappa=0.5, k1=1), False),
        (D, dict(p=2.0, q=2.0, gamma=2.5, m=1, k1=3, kappa=0.0), False),
        (D, dict(p=2.0, q=2.0, gamma=2.5, m=1, k1=3, kappa=0.5), True),
        (D, dict(p=2.0, q=2.0, gamma=3.0, kappa=0.9, k1=2), False),
        (D, dict(p=2.0, q=2.0, gamma=1.0, kappa=0.9, k1=2), False),
        (D, dict(p=2.0, q=2.0, gamma=2.0, kappa=0.9, k1=2, mu=-1.0), False),
        (D, dict(p=3.0, q=2.0, gamma=1.5, kappa=0.5, k1=2), True),
        (D, dict(p=3.0, q=2.0, gamma=2.0, kappa=0.5, k1=2), False),
        # heat window, excluded line, mu, and the critical line
        (T, dict(p=2.0, q=2.0, gamma=2.0), True),
        (T, dict(p=2.0, q=2.0, gamma=0.5, kappa=0.0), False),
        (T, dict(p=2.0, q=2.0, gamma=0.5, kappa=0.5), True),
        (T, dict(p=2.0, q=2.0, gamma=3.0), False),
        (T, dict(p=2.0, q=2.0, gamma=1.0, kappa=0.5, mu=0.2), False),
        (T, dict(p=2.0, q=2.0, gamma=0.6, kappa=0.5, mu=0.2), False),
        (T, dict(p=2.0, q=2.0, gamma=2.0, mu=1.0), False),
        (T, dict(p=2.5, q=3.0, gamma=2.2, kappa=0.2, mu=0.5), True),
    ]
    assert len(table) == 30
    mismatches = []
    for i, (validator, kwargs, expected) in enumerate(table):
        rep = validator(ParamSet(**kwargs))
        if rep.verdict != expected:
            mismatches.append((i, kwargs, rep.violated_conditions))
    print("[9/10] 30 hand-worked tuples, %d mismatches" % len(mismatches))
    assert not mismatches, mismatches


def test_c10_reports_are_byte_identical(tmp_path):
    """Identical config and seed reproduce report.json byte for byte."""
    pairs = []
    for tag, args in (("ext", ["ext-check", "--m", "1", "--seed", "7"]),
                      ("heat", ["heat-solve", "--case", "manufactured-1",
                                "--levels", "2", "--seed", "3"])):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / (tag + run)
            assert main(args + ["--out", str(out)]) == 0
            outs.append((out / "report.json").read_bytes())
        pairs.append(outs[0] == outs[1])
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[family]\ncount = 4\n")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / ("lp" + run)
        assert main(["lp-check", "--config", str(cfg), "--seed", "5",
                     "--out", str(out)]) == 0
        outs.append((out / "report.json").read_bytes())
    pairs.append(outs[0] == outs[1])
    print("[10/10] byte-identical reruns: %s" % pairs)
    assert all(pairs)
