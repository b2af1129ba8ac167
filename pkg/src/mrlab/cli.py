"""Config-driven study runner writing reproducible report bundles.

Each subcommand reads an INI config, runs one study, and writes a bundle
under --out: report.json (deterministic, byte-identical for identical
config and seed), tables/*.csv, plots/*.svg, and meta.json (timing and
environment, kept outside the deterministic surface).  The exit code is
0 exactly when every declared check passes, 1 on a failed check or an
admissibility refusal, and 2 on config or usage errors.
"""

import argparse
import configparser
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as runtime_config
from .fields import AnisotropyDescriptor, GridField
from .geometry import chart_independence_bracket, dks_contract_report
from .heat import mms_1d, mms_strip, mr_stability_study, steady_state_1d
from .lpanalysis import LpSequence, lp_blocks
from .params import (ParamSet, compatibility_mode, power_weight_in_Ap,
                     trace_space_orders, validate_domain_trace,
                     validate_halfspace_trace, validate_heat_theorem)
from .spaces import (AxisWeight, besov_tl_norm,
                     check_intersection_representation, lp_norm, sobolev_norm)
from .synth import random_synth
from .traceext import check_biorthogonality, trace_continuity_ratio, trace_working

SCHEMA = "mr-lab/1"

SUBCOMMANDS = ("validate", "lp-check", "norm-check", "intersection-check",
               "trace-check", "ext-check", "pullback-check",
               "boundary-norm-check", "heat-solve", "mr-study")

# threshold names each subcommand declares; --tolerance may override these
DEFAULT_TOLERANCES = {
    "validate": {},
    "lp-check": {"telescope": 1e-12, "reconstruction": 1e-8},
    "norm-check": {"closed_form": 1e-9},
    "intersection-check": {"spread": 10.0, "drift": 2.0},
    "trace-check": {"restriction": 1e-6, "spread": 100.0, "drift": 2.0},
    "ext-check": {"biorthogonality": 1e-5},
    "pullback-check": {"roundtrip": 1e-8, "boundary": 1e-8, "drift": 1.5},
    "boundary-norm-check": {"spread": 2.0},
    "heat-solve": {"order": 1.8, "trace_residual": 1e-3, "initial": 1e-10,
                   "residual": 1e-10, "steady_error": 1e-3},
    "mr-study": {"drift": 2.0, "spread": 100.0, "scale": 1e-10},
}

KNOWN_KEYS = {
    "params": {"p", "q", "gamma", "mu", "kappa", "k", "k1", "ell", "m", "r", "d"},
    "grid": {"n", "box", "dim"},
    "domain": {"preset", "presets", "n_charts"},
    "family": {"count", "max_freq", "envelope"},
    "study": {"case", "theorems", "m", "counts", "s", "levels"},
    "tolerances": None,
}

INT_PARAM_KEYS = {"k", "k1", "ell", "m", "r", "d"}


class ConfigError(Exception):
    """Bad config file, key, or flag value; maps to exit code 2."""


class AdmissibilityRefusal(Exception):
    """Requested parameters violate a theorem precondition; exit code 1."""

    def __init__(self, payload):
        super().__init__(payload.get("theorem", "admissibility"))
        self.payload = payload


# ---------------------------------------------------------------------------
# config loading


class RunConfig:
    """Everything a runner needs, already parsed and validated."""

    def __init__(self):
        self.subcommand = ""
        self.seed = 0
        self.out = Path("mrlab_out")
        self.levels = None
        self.case = None
        self.m = None
        self.threads = 1
        self.tolerances = {}
        self.params = {}
        self.grid = {}
        self.domain = {}
        self.family = {}
        self.study = {}
        self.config_text = ""

    def config_hash(self):
        parts = ["schema=" + SCHEMA,
                 "subcommand=" + self.subcommand,
                 "seed=%d" % self.seed]
        if self.levels is not None:
            parts.append("levels=%d" % self.levels)
        if self.case is not None:
            parts.append("case=%s" % self.case)
        if self.m is not None:
            parts.append("m=%d" % self.m)
        parts.append("tolerances=" + ",".join(
            "%s=%.17g" % (k, v) for k, v in sorted(self.tolerances.items())))
        parts.append("config=" + self.config_text)
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def _coerce(section, key, raw, cast):
    try:
        return cast(raw)
    except ValueError:
        kind = "an integer" if cast is int else "a number"
        raise ConfigError("key '%s' in [%s] must be %s, got '%s'"
                          % (key, section, kind, raw))


def _load_ini(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("cannot read config '%s': %s" % (path, exc))
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("cannot parse config '%s': %s"
                          % (path, str(exc).replace("\n", " ")))
    for section in cp.sections():
        if section not in KNOWN_KEYS:
            raise ConfigError("unknown section [%s]; expected one of: %s"
                              % (section, ", ".join(sorted(KNOWN_KEYS))))
        allowed = KNOWN_KEYS[section]
        if allowed is None:
            continue
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError("unknown key '%s' in [%s]; known keys: %s"
                                  % (key, section, ", ".join(sorted(allowed))))
    return cp, text


def _parse_tolerance_flag(item):
    if "=" not in item:
        raise ConfigError("--tolerance expects NAME=VALUE, got '%s'" % item)
    name, _, raw = item.partition("=")
    name = name.strip()
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError("tolerance '%s' needs a numeric value, got '%s'"
                          % (name, raw))
    return name, value


def _load_config(args):
    rc = RunConfig()
    rc.subcommand = args.subcommand
    rc.seed = args.seed if args.seed is not None else 0
    rc.out = Path(args.out) if args.out else Path("mrlab_out")
    rc.levels = args.levels
    rc.case = getattr(args, "case", None)
    rc.m = getattr(args, "m", None)
    rc.tolerances = dict(DEFAULT_TOLERANCES[rc.subcommand])

    if args.config:
        cp, rc.config_text = _load_ini(args.config)
        if cp.has_section("params"):
            for key, raw in cp["params"].items():
                cast = int if key in INT_PARAM_KEYS else float
                rc.params[key] = _coerce("params", key, raw, cast)
        for section in ("grid", "domain", "family", "study"):
            if cp.has_section(section):
                setattr(rc, section, dict(cp[section]))
        if cp.has_section("tolerances"):
            for key, raw in cp["tolerances"].items():
                if key not in rc.tolerances:
                    raise ConfigError(
                        "tolerance '%s' is not used by %s; valid names: %s"
                        % (key, rc.subcommand,
                           ", ".join(sorted(rc.tolerances)) or "(none)"))
                rc.tolerances[key] = _coerce("tolerances", key, raw, float)

    for item in args.tolerance or ():
        name, value = _parse_tolerance_flag(item)
        if name not in rc.tolerances:
            raise ConfigError("tolerance '%s' is not used by %s; valid names: %s"
                              % (name, rc.subcommand,
                                 ", ".join(sorted(rc.tolerances)) or "(none)"))
        rc.tolerances[name] = value

    rc.threads = runtime_config.set_threads(args.threads)
    return rc


def _study_int(rc, key, default):
    return _coerce("study", key, rc.study.get(key, default), int)


def _study_float(rc, key, default):
    return _coerce("study", key, rc.study.get(key, default), float)


def _family_int(rc, key, default):
    return _coerce("family", key, rc.family.get(key, default), int)


def _family_float(rc, key, default):
    return _coerce("family", key, rc.family.get(key, default), float)


def _grid_int(rc, key, default):
    return _coerce("grid", key, rc.grid.get(key, default), int)


def _grid_float(rc, key, default):
    return _coerce("grid", key, rc.grid.get(key, default), float)


def _levels_or(rc, default):
    if rc.levels is not None:
        return rc.levels
    return _study_int(rc, "levels", default)


def _paramset(rc, **defaults):
    kwargs = dict(defaults)
    kwargs.update(rc.params)
    try:
        return ParamSet(**kwargs)
    except (TypeError, ValueError) as exc:
        raise AdmissibilityRefusal({
            "theorem": "parameter-domain",
            "verdict": False,
            "violations": [str(exc)],
            "excluded_hits": [],
        })


def _require(report):
    """Turn a failed validator report into a structured refusal."""
    if not report.verdict:
        raise AdmissibilityRefusal(report.to_dict())
    return report


# ---------------------------------------------------------------------------
# checks and serialization


def _check(name, value, threshold, op):
    value = float(value)
    threshold = float(threshold)
    passed = value <= threshold if op == "<=" else value >= threshold
    return {"name": name, "value": value, "threshold": threshold,
            "op": op, "passed": bool(passed)}


def _verdict_check(name, verdict):
    return {"name": name, "value": bool(verdict), "threshold": True,
            "op": "is", "passed": bool(verdict)}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_bundle(out, report, tables, plots, meta):
    out.mkdir(parents=True, exist_ok=True)
    (out / "tables").mkdir(exist_ok=True)
    (out / "plots").mkdir(exist_ok=True)
    payload = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    (out / "report.json").write_text(payload)
    for name in sorted(tables):
        header, rows = tables[name]
        with open(out / "tables" / name, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    for name, svg in plots:
        (out / "plots" / name).write_text(svg)
    meta_payload = json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n"
    (out / "meta.json").write_text(meta_payload)


# ---------------------------------------------------------------------------
# SVG plotting

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _esc(text):
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


def emit_plot(series, labels=None, path=None, loglog=False, title="",
              annotate_slope=False):
    """Render line series into a self-contained SVG string.

    series is a nonempty list of (x, y) pairs; empty input raises.  With
    loglog both axes are log10 scaled and all data must be positive.
    annotate_slope fits the first series by least squares in the plotted
    coordinates and prints the slope, which for loglog data estimates the
    convergence order.  Output depends only on the inputs.  When path is
    given the SVG text is also written there.
    """
    cleaned = []
    for pair in series:
        x = np.asarray(pair[0], dtype=float).ravel()
        y = np.asarray(pair[1], dtype=float).ravel()
        if x.size == 0 or x.size != y.size:
            raise ValueError("each series needs matching nonempty x and y")
        cleaned.append((x, y))
    if not cleaned:
        raise ValueError("emit_plot needs at least one series")
    if loglog:
        for x, y in cleaned:
            if x.min() <= 0.0 or y.min() <= 0.0:
                raise ValueError("loglog needs strictly positive data")
        plotted = [(np.log10(x), np.log10(y)) for x, y in cleaned]
    else:
        plotted = cleaned

    xs = np.concatenate([p[0] for p in plotted])
    ys = np.concatenate([p[1] for p in plotted])
    xmin, xmax = float(xs.min()), float(xs.max())
    ymin, ymax = float(ys.min()), float(ys.max())
    if xmax - xmin < 1e-12:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    xpad = 0.05 * (xmax - xmin)
    ypad = 0.05 * (ymax - ymin)
    xmin, xmax = xmin - xpad, xmax + xpad
    ymin, ymax = ymin - ypad, ymax + ypad

    width, height = 640.0, 480.0
    ml, mr, mt, mb = 80.0, 24.0, 42.0, 56.0

    def sx(v):
        return ml + (v - xmin) / (xmax - xmin) * (width - ml - mr)

    def sy(v):
        return height - mb - (v - ymin) / (ymax - ymin) * (height - mt - mb)

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="640" '
             'height="480" viewBox="0 0 640 480">',
             '<rect x="0" y="0" width="640" height="480" fill="#ffffff"/>',
             '<rect x="%.2f" y="%.2f" width="%.2f" height="%.2f" fill="none" '
             'stroke="#444444"/>' % (ml, mt, width - ml - mr, height - mt - mb)]
    for i in range(5):
        tv = xmin + (xmax - xmin) * i / 4.0
        label = 10.0 ** tv if loglog else tv
        px = sx(tv)
        parts.append('<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" '
                     'stroke="#444444"/>' % (px, height - mb, px, height - mb + 5))
        parts.append('<text x="%.2f" y="%.2f" font-size="12" '
                     'font-family="monospace" text-anchor="middle">%s</text>'
                     % (px, height - mb + 20, "%.3g" % label))
        tv = ymin + (ymax - ymin) * i / 4.0
        label = 10.0 ** tv if loglog else tv
        py = sy(tv)
        parts.append('<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" '
                     'stroke="#444444"/>' % (ml - 5, py, ml, py))
        parts.append('<text x="%.2f" y="%.2f" font-size="12" '
                     'font-family="monospace" text-anchor="end">%s</text>'
                     % (ml - 8, py + 4, "%.3g" % label))
    for i, (px, py) in enumerate(plotted):
        color = _PALETTE[i % len(_PALETTE)]
        if px.size > 1:
            pts = " ".join("%.2f,%.2f" % (sx(a), sy(b)) for a, b in zip(px, py))
            parts.append('<polyline points="%s" fill="none" stroke="%s" '
                         'stroke-width="1.5"/>' % (pts, color))
        for a, b in zip(px, py):
            parts.append('<circle cx="%.2f" cy="%.2f" r="3" fill="%s"/>'
                         % (sx(a), sy(b), color))
        name = labels[i] if labels and i < len(labels) else "series %d" % i
        ly = mt + 16.0 + 16.0 * i
        parts.append('<rect x="%.2f" y="%.2f" width="10" height="10" '
                     'fill="%s"/>' % (width - mr - 150.0, ly - 9.0, color))
        parts.append('<text x="%.2f" y="%.2f" font-size="12" '
                     'font-family="monospace">%s</text>'
                     % (width - mr - 136.0, ly, _esc(name)))
    if annotate_slope and plotted[0][0].size >= 2:
        slope = float(np.polyfit(plotted[0][0], plotted[0][1], 1)[0])
        parts.append('<text x="%.2f" y="%.2f" font-size="13" '
                     'font-family="monospace">fitted slope %.2f</text>'
                     % (ml + 10.0, mt + 18.0, slope))
    if title:
        parts.append('<text x="%.2f" y="24" font-size="14" '
                     'font-family="monospace" text-anchor="middle">%s</text>'
                     % (width / 2.0, _esc(title)))
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(svg)
    return svg


# ---------------------------------------------------------------------------
# subcommand runners; each returns (results, checks, tables, plots)


def run_validate(rc):
    ps = _paramset(rc, p=2.0, q=2.0, gamma=2.0, k1=2)
    validators = {"halfspace": validate_halfspace_trace,
                  "domain": validate_domain_trace,
                  "heat": validate_heat_theorem}
    names = [s.strip() for s in
             rc.study.get("theorems", "halfspace,domain,heat").split(",")]
    checks, reports, rows = [], {}, []
    for name in names:
        if name not in validators:
            raise ConfigError("unknown theorem '%s'; expected: %s"
                              % (name, ", ".join(sorted(validators))))
        rep = validators[name](ps)
        reports[name] = rep.to_dict()
        checks.append(_verdict_check(name + "-admissible", rep.verdict))
        rows.append([name, rep.verdict,
                     "; ".join(map(str, rep.violated_conditions)),
                     "; ".join(map(str, rep.excluded_set_hits))])
    results = {
        "params": {"p": ps.p, "q": ps.q, "gamma": ps.gamma, "mu": ps.mu,
                   "kappa": ps.kappa, "k": ps.k, "k1": ps.k1, "ell": ps.ell,
                   "m": ps.m, "r": ps.r, "d": ps.d},
        "reports": reports,
        "compatibility_mode": compatibility_mode(ps).value,
        "power_weight_in_Ap": power_weight_in_Ap(ps.gamma, ps.p),
    }
    if reports.get("halfspace", {}).get("verdict"):
        results["trace_orders"] = [list(trace_space_orders(ps, j))
                                   for j in range(ps.m + 1)]
    tables = {"verdicts.csv":
              (["theorem", "verdict", "violated", "excluded_hits"], rows)}
    return results, checks, tables, []


def run_lp_check(rc):
    dim = _grid_int(rc, "dim", 2)
    n = _grid_int(rc, "n", 128)
    box = _grid_float(rc, "box", 10.0)
    count = _family_int(rc, "count", 6)
    max_freq = _family_float(rc, "max_freq", 2.0)
    envelope = _family_float(rc, "envelope", 0.2)
    desc = AnisotropyDescriptor.isotropic(dim)
    lps = LpSequence(desc)
    rng = np.random.default_rng(rc.seed)
    rows = []
    tel_errs, rec_errs = [], []
    for member in range(count):
        synth = random_synth(rng, (box,) * dim, (max_freq,) * dim,
                             n_modes=8, envelope=envelope)
        f = synth.on_grid((n,) * dim, (box,) * dim, desc, tags=("decaying",))
        n_top = lps.n_max(f)
        acc = sum(lps.shell_values(f, j) for j in range(n_top + 1))
        tel = float(np.abs(acc - lps.partial_sum_values(f, n_top)).max())
        total = sum(block.data for block in lp_blocks(f, lps))
        rec = float(np.abs(total - f.data).max() / np.abs(f.data).max())
        tel_errs.append(tel)
        rec_errs.append(rec)
        rows.append([member, n_top, tel, rec])
    checks = [
        _check("telescope", max(tel_errs), rc.tolerances["telescope"], "<="),
        _check("reconstruction", max(rec_errs),
               rc.tolerances["reconstruction"], "<="),
    ]
    results = {"members": count, "grid": {"n": n, "box": box, "dim": dim},
               "telescope_errors": tel_errs, "reconstruction_errors": rec_errs}
    tables = {"members.csv":
              (["member", "n_max", "telescope_err", "reconstruction_err"], rows)}
    plots = [("errors.svg",
              emit_plot([(np.arange(count) + 1, tel_errs),
                         (np.arange(count) + 1, rec_errs)],
                        labels=["telescope", "reconstruction"],
                        title="scale block identities"))]
    return results, checks, tables, plots


def run_norm_check(rc):
    iso1 = AnisotropyDescriptor.isotropic(1)
    iso2 = AnisotropyDescriptor.isotropic(2)
    rows = []

    const2 = GridField(np.full((64, 64), 3.0, dtype=complex), 2.0, iso2)
    for p in (1.0, 2.0, 3.5):
        got = lp_norm(const2, p)
        want = 3.0 * 4.0 ** (2.0 / p)
        rows.append(["const-lp-p%g" % p, got, want])

    box, n = 2.0, 64
    dx = 2.0 * box / n
    const1 = GridField(np.full((n,), 1.0, dtype=complex), box, iso1)
    for gamma in (-0.5, 1.0, 2.5):
        got = lp_norm(const1, 2.0, (AxisWeight(0, gamma),))
        e1 = gamma + 1.0
        want = ((box ** e1 + (box - dx) ** e1) / e1) ** 0.5
        rows.append(["power-weight-g%g" % gamma, got, want])

    nm, boxm = 512, 16.0 * np.pi
    x = (np.arange(nm) - nm // 2) * (2.0 * boxm / nm)
    mesh = np.meshgrid(x, x, indexing="ij")
    mode2 = GridField(np.exp(1j * 2.0 * mesh[0]), boxm, iso2)
    lps = LpSequence(iso2)
    mass = lp_norm(mode2, 2.0)
    for s, q in ((0.5, 1.0), (1.0, 2.0)):
        for flavor in ("B", "F"):
            got = besov_tl_norm(mode2, lps, s, 2.0, q, flavor=flavor)
            rows.append(["shell-%s-s%g-q%g" % (flavor, s, q),
                         got, 2.0 ** s * mass])

    mode3 = GridField(np.exp(1j * 3.0 * mesh[0]), boxm, iso2)
    mass3 = lp_norm(mode3, 2.0)
    rows.append(["sobolev-mode", sobolev_norm(mode3, 1, 2.0), 4.0 * mass3])

    rel_errs = []
    table_rows = []
    for name, got, want in rows:
        rel = abs(got - want) / abs(want)
        rel_errs.append(float(rel))
        table_rows.append([name, float(got), float(want), float(rel)])
    checks = [_check("closed_form", max(rel_errs),
                     rc.tolerances["closed_form"], "<=")]
    results = {"oracles": [r[0] for r in rows], "rel_errors": rel_errs}
    tables = {"oracles.csv":
              (["name", "measured", "expected", "rel_err"], table_rows)}
    plots = [("oracles.svg",
              emit_plot([(np.arange(len(rel_errs)) + 1, rel_errs)],
                        labels=["rel err"], title="norm oracles"))]
    return results, checks, tables, plots


def run_intersection_check(rc):
    p = rc.params.get("p", 2.4)
    q = rc.params.get("q", 2.0)
    s = _study_float(rc, "s", 1.0)
    count = _family_int(rc, "count", 8)
    out = check_intersection_representation(p=p, q=q, s=s, seed=rc.seed,
                                            n_members=count)
    checks = [
        _check("spread", out["spread"], rc.tolerances["spread"], "<="),
        _check("drift", out["drift"], rc.tolerances["drift"], "<="),
    ]
    rows = [[i, rc_val, rf_val] for i, (rc_val, rf_val)
            in enumerate(zip(out["ratios_coarse"], out["ratios_fine"]))]
    tables = {"ratios.csv": (["member", "coarse", "fine"], rows)}
    members = np.arange(count) + 1
    plots = [("ratios.svg",
              emit_plot([(members, out["ratios_coarse"]),
                         (members, out["ratios_fine"])],
                        labels=["coarse", "fine"],
                        title="intersection norm ratios"))]
    return _jsonable(out), checks, tables, plots


def run_trace_check(rc):
    n = _grid_int(rc, "n", 128)
    box = _grid_float(rc, "box", 8.0)
    count = _family_int(rc, "count", 10)
    max_freq = _family_float(rc, "max_freq", 2.0)
    envelope = _family_float(rc, "envelope", 0.2)
    desc = AnisotropyDescriptor.isotropic(2)
    lps = LpSequence(desc)
    rng = np.random.default_rng(rc.seed)
    sup_errs = []
    for _ in range(count):
        synth = random_synth(rng, (box, box), (max_freq, max_freq),
                             n_modes=8, envelope=envelope)
        f = synth.on_grid((n, n), (box, box), desc, tags=("decaying",))
        tr = trace_working(f, lps)
        ref = f.data[n // 2]
        sup = np.abs(tr.data - ref).max() / np.abs(ref).max()
        sup_errs.append(float(sup))

    ps = _paramset(rc, p=2.0, q=2.0, gamma=2.0, k1=2)
    _require(validate_halfspace_trace(ps))
    members = _study_int(rc, "m", 3)
    cont = trace_continuity_ratio(ps, n_members=members, seed=rc.seed + 1,
                                  shape=(64, 32, 32))
    checks = [
        _check("restriction", max(sup_errs), rc.tolerances["restriction"], "<="),
        _check("spread", cont["spread"], rc.tolerances["spread"], "<="),
        _check("drift", cont["drift"], rc.tolerances["drift"], "<="),
    ]
    results = {"restriction_errors": sup_errs,
               "continuity": _jsonable({k: v for k, v in cont.items()
                                        if k != "orders"}),
               "trace_orders": _jsonable(cont["orders"])}
    rows = [[i, e] for i, e in enumerate(sup_errs)]
    crow = [[i, a, b] for i, (a, b) in enumerate(
        zip(cont["ratios_coarse"], cont["ratios_fine"]))]
    tables = {"restriction.csv": (["member", "sup_err"], rows),
              "continuity.csv": (["member", "coarse", "fine"], crow)}
    idx = np.arange(members) + 1
    plots = [("continuity.svg",
              emit_plot([(idx, cont["ratios_coarse"]),
                         (idx, cont["ratios_fine"])],
                        labels=["coarse", "fine"],
                        title="trace continuity ratios"))]
    return results, checks, tables, plots


def run_ext_check(rc):
    m = rc.m if rc.m is not None else _study_int(rc, "m", 1)
    count = _family_int(rc, "count", 6)
    out = check_biorthogonality(m, n_members=count, seed=rc.seed)
    errs = out["matrix"]
    checks = [_check("biorthogonality", out["max_error"],
                     rc.tolerances["biorthogonality"], "<=")]
    header = ["j_row"] + ["j%d" % j for j in range(m + 1)]
    rows = [[j1] + [float(errs[j1, j]) for j in range(m + 1)]
            for j1 in range(m + 1)]
    tables = {"error_matrix.csv": (header, rows)}
    idx = np.arange(m + 1)
    plots = [("errors.svg",
              emit_plot([(idx, errs[j1]) for j1 in range(m + 1)],
                        labels=["row %d" % j1 for j1 in range(m + 1)],
                        title="trace of extension vs identity"))]
    results = {"m": m, "members": count, "max_error": out["max_error"],
               "rho_cond": out["rho_cond"], "grid": out["grid"],
               "matrix": _jsonable(errs)}
    return results, checks, tables, plots


def run_pullback_check(rc):
    raw = rc.domain.get("presets", rc.domain.get("preset", "gaussian-bump"))
    presets = tuple(s.strip() for s in raw.split(",") if s.strip())
    n_levels = _levels_or(rc, 6)
    out = dks_contract_report(preset_names=presets, n_levels=n_levels,
                              seed=rc.seed)
    checks = []
    rows = []
    plots = []
    for name in presets:
        rep = out[name]
        checks.append(_check(name + "-roundtrip", rep["roundtrip_error"],
                             rc.tolerances["roundtrip"], "<="))
        checks.append(_check(name + "-boundary", rep["boundary_error"],
                             rc.tolerances["boundary"], "<="))
        checks.append(_check(name + "-drift", rep["bracket_drift"],
                             rc.tolerances["drift"], "<="))
        checks.append(_check(name + "-normal-floor", rep["n1_min"],
                             rep["n1_bound"], ">="))
        heights = [2.0 ** -(i + 1) for i in range(n_levels)]
        lo = [b[0] for b in rep["distance_brackets"]]
        hi = [b[1] for b in rep["distance_brackets"]]
        for h, a, b in zip(heights, lo, hi):
            rows.append([name, h, a, b])
        plots.append(("brackets_%s.svg" % name,
                      emit_plot([(heights, lo), (heights, hi)],
                                labels=["lower", "upper"],
                                title="distance ratio bracket: " + name)))
    tables = {"brackets.csv": (["preset", "height", "lower", "upper"], rows)}
    return _jsonable(out), checks, tables, plots


def run_boundary_norm_check(rc):
    raw = rc.study.get("counts", "2,5")
    counts = tuple(_coerce("study", "counts", s.strip(), int)
                   for s in raw.split(","))
    s = _study_float(rc, "s", 0.5)
    p = rc.params.get("p", 2.0)
    q = rc.params.get("q", 2.0)
    count = _family_int(rc, "count", 8)
    out = chart_independence_bracket(counts=counts, s=s, p=p, q=q,
                                     n_members=count, seed=rc.seed)
    checks = [_check("spread", out["spread"], rc.tolerances["spread"], "<=")]
    results = {"counts": list(counts), "s": s, "p": p, "q": q,
               "bracket": list(out["bracket"]), "spread": out["spread"]}
    tables = {"bracket.csv": (["lower", "upper", "spread"],
                              [[out["bracket"][0], out["bracket"][1],
                                out["spread"]]])}
    plots = [("bracket.svg",
              emit_plot([([1, 2], list(out["bracket"]))],
                        labels=["bracket"],
                        title="atlas change norm ratio bracket"))]
    return results, checks, tables, plots


def run_heat_solve(rc):
    case = rc.case or rc.study.get("case", "manufactured-1")
    checks = []
    plots = []
    if case == "manufactured-1":
        levels = _levels_or(rc, 3)
        out = mms_1d(levels=levels)
        hs = [1.0 / m["n1"] for m in out["meshes"]]
        rows = [[h, e, e / h ** 2] for h, e in zip(hs, out["errors"])]
        checks.append(_check("order", min(out["orders"]),
                             rc.tolerances["order"], ">="))
        checks.append(_check("residual",
                             max(m["solver_residual"] for m in out["meshes"]),
                             rc.tolerances["residual"], "<="))
        plots.append(("convergence.svg",
                      emit_plot([(hs, out["errors"])], labels=["max err"],
                                loglog=True, annotate_slope=True,
                                title="interval heat convergence")))
        results = _jsonable(out)
    elif case == "manufactured-strip":
        levels = _levels_or(rc, 3)
        ps = None
        if rc.params:
            ps = _paramset(rc, p=2.0, q=2.0, gamma=0.5, kappa=0.5)
            _require(validate_heat_theorem(ps))
        out = mms_strip(levels=levels, ps=ps)
        hs = [6.0 / m["shape"][0] for m in out["meshes"]]
        rows = [[h, e, e / h ** 2] for h, e in zip(hs, out["errors"])]
        checks.append(_check("order", min(out["orders"]),
                             rc.tolerances["order"], ">="))
        checks.append(_check("trace_residual", max(out["trace_residuals"]),
                             rc.tolerances["trace_residual"], "<="))
        checks.append(_check("initial",
                             max(m["initial_sup"] for m in out["meshes"]),
                             rc.tolerances["initial"], "<="))
        checks.append(_check("residual", out["report_finest"]["pde_residual"],
                             rc.tolerances["residual"], "<="))
        plots.append(("convergence.svg",
                      emit_plot([(hs, out["errors"])], labels=["sup err"],
                                loglog=True, annotate_slope=True,
                                title="strip heat convergence")))
        results = _jsonable(out)
    elif case == "steady-1d":
        err = steady_state_1d()
        rows = [[1.0 / 64.0, err, err / (1.0 / 64.0) ** 2]]
        checks.append(_check("steady_error", err,
                             rc.tolerances["steady_error"], "<="))
        plots.append(("convergence.svg",
                      emit_plot([([1.0 / 64.0], [err])], labels=["err"],
                                title="steady state error")))
        results = {"error": float(err), "n1": 64}
    else:
        raise ConfigError("unknown heat case '%s'; expected manufactured-1, "
                          "manufactured-strip, or steady-1d" % case)
    tables = {"convergence.csv": (["h", "error", "C"], rows)}
    results["case"] = case
    return results, checks, tables, plots


def run_mr_study(rc):
    ps = _paramset(rc, p=2.0, q=2.0, gamma=2.0)
    _require(validate_heat_theorem(ps))
    levels = _levels_or(rc, 2)
    count = _family_int(rc, "count", 3)
    out = mr_stability_study(ps, n_members=count, levels=levels, seed=rc.seed)
    checks = [
        _check("drift", out["drift"], rc.tolerances["drift"], "<="),
        _check("spread", max(out["spreads"]), rc.tolerances["spread"], "<="),
        _check("scale", out["scale_deviation"], rc.tolerances["scale"], "<="),
    ]
    header = ["member"] + ["level%d" % i for i in range(levels)]
    rows = [[i] + [out["ratios"][lev][i] for lev in range(levels)]
            for i in range(count)]
    tables = {"ratios.csv": (header, rows)}
    idx = np.arange(count) + 1
    plots = [("ratios.svg",
              emit_plot([(idx, out["ratios"][lev]) for lev in range(levels)],
                        labels=["level %d" % lev for lev in range(levels)],
                        title="stability ratios by level"))]
    return _jsonable(out), checks, tables, plots


RUNNERS = {
    "validate": run_validate,
    "lp-check": run_lp_check,
    "norm-check": run_norm_check,
    "intersection-check": run_intersection_check,
    "trace-check": run_trace_check,
    "ext-check": run_ext_check,
    "pullback-check": run_pullback_check,
    "boundary-norm-check": run_boundary_norm_check,
    "heat-solve": run_heat_solve,
    "mr-study": run_mr_study,
}


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed for random families (default 0)")
    common.add_argument("--out", help="output directory (default mrlab_out)")
    common.add_argument("--tolerance", action="append", metavar="NAME=VALUE",
                        help="override a named tolerance; repeatable")
    common.add_argument("--levels", type=int, default=None,
                        help="refinement levels where the study uses them")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default MRLAB_THREADS or 1)")
    parser = argparse.ArgumentParser(
        prog="mrlab", description="parameter validation and numerical "
        "studies for weighted trace and regularity estimates")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "validate": "check a parameter tuple against the three theorems",
        "lp-check": "scale block telescoping and reconstruction identities",
        "norm-check": "norm quadrature against closed forms",
        "intersection-check": "intersection space norm equivalence bracket",
        "trace-check": "trace operator restriction and continuity bracket",
        "ext-check": "extension kernel biorthogonality",
        "pullback-check": "boundary flattening map contracts",
        "boundary-norm-check": "boundary norm chart independence",
        "heat-solve": "heat equation convergence cases",
        "mr-study": "stability ratios over a random data family",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "ext-check":
            sp.add_argument("--m", type=int, default=None,
                            help="kernel family order")
        if name == "heat-solve":
            sp.add_argument("--case", default=None,
                            choices=("manufactured-1", "manufactured-strip",
                                     "steady-1d"))
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        rc = _load_config(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2

    started = time.time()
    base_report = {
        "schema": SCHEMA,
        "subcommand": rc.subcommand,
        "seed": rc.seed,
        "config_hash": rc.config_hash(),
        "tolerances": dict(rc.tolerances),
    }
    meta = {"threads": rc.threads, "out": str(rc.out),
            "python": sys.version.split()[0], "numpy": np.__version__}
    try:
        results, checks, tables, plots = RUNNERS[rc.subcommand](rc)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except AdmissibilityRefusal as exc:
        report = dict(base_report)
        report.update({"results": {}, "checks": [], "passed": False,
                       "refusal": exc.payload})
        meta["elapsed_seconds"] = time.time() - started
        _write_bundle(rc.out, report, {"checks.csv":
                      (["name", "value", "threshold", "op", "passed"], [])},
                      [], meta)
        violated = (exc.payload.get("violations")
                    or exc.payload.get("excluded_hits") or [])
        print("admissibility failure (%s): %s"
              % (exc.payload.get("theorem", "?"),
                 "; ".join(map(str, violated))),
              file=sys.stderr)
        print("wrote %s" % (rc.out / "report.json"), file=sys.stderr)
        return 1

    passed = all(c["passed"] for c in checks)
    report = dict(base_report)
    report.update({"results": results, "checks": checks, "passed": passed})
    tables = dict(tables)
    tables["checks.csv"] = (
        ["name", "value", "threshold", "op", "passed"],
        [[c["name"], c["value"], c["threshold"], c["op"], c["passed"]]
         for c in checks])
    meta["elapsed_seconds"] = time.time() - started
    _write_bundle(rc.out, report, tables, plots, meta)
    for c in checks:
        state = "pass" if c["passed"] else "FAIL"
        print("[%s] %s: %s %s %s" % (state, c["name"], _cell(c["value"]),
                                     c["op"], _cell(c["threshold"])))
    print("wrote %s" % (rc.out / "report.json"))
    print("overall: %s" % ("PASS" if passed else "FAIL"))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
