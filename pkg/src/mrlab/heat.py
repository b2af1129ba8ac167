"""Dirichlet heat equation on a boundary strip with weighted-norm reports.

The solver works in straightened coordinates: the domain is the strip
y_1 in (0, H) over a periodic tangential window, the boundary sits at
y_1 = 0 and a zero lid closes the strip at y_1 = H.  Curved domains enter
only through the coefficients of the transformed Laplacian

    Lap_x u = A11 d11 + 2 A12 d12 + d22 + b1 d1   (A22 = 1)

computed from finite differences of the explicit inverse straightening
map.  Time stepping is implicit Euler with the spatial matrix factored
once, so each run is a sequence of direct solves.

Boundary data enters through the decomposition u = utilde + E: E extends
g from the boundary with the order-zero kernel family evaluated at the
strip heights, ftilde = f - (d_t - Lap)E uses the same discrete operators
as the solver, and utilde solves the zero-boundary problem.  The discrete
equation for u then holds to solver roundoff by construction; accuracy
against the continuum is measured by manufactured solutions.

Data must vanish at t = 0 (checked): the scheme always starts from u = 0,
so a nonzero initial boundary trace would be inconsistent.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import onenormest, splu, LinearOperator
from scipy.special import roots_legendre

from . import config
from .fields import AnisotropyDescriptor, GridField
from .lpanalysis import LpSequence, lp_blocks
from .params import (CompatibilityMode, ParamSet, compatibility_mode,
                     validate_heat_theorem)
from .spaces import AxisWeight, time_besov_slices_norm, time_tl_norm
from .synth import random_synth
from .traceext import make_rho

GRADE_DEPTH = 40


def _map_members(fn, items):
    if config.THREADS > 1:
        with ThreadPoolExecutor(max_workers=config.THREADS) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------------------
# strip grids


class StripGrid:
    """Nodes of the solver grid: graded y_1 in [0, H], periodic tangential.

    nodes1 always contains both endpoints; the tangential axis (when
    present) is uniform and centered like every other grid in the package.
    """

    def __init__(self, nodes1, window=None, nt=None):
        self.nodes1 = np.asarray(nodes1, dtype=float)
        if self.nodes1[0] != 0.0 or np.any(np.diff(self.nodes1) <= 0):
            raise ValueError("nodes1 must increase from 0")
        self.height = float(self.nodes1[-1])
        self.window = None if window is None else float(window)
        self.nt = None if nt is None else int(nt)
        if (self.nt is None) != (self.window is None):
            raise ValueError("tangential axis needs both nt and window")

    @property
    def n1(self):
        return self.nodes1.size - 1

    @property
    def yt(self):
        return (np.arange(self.nt) - self.nt // 2) \
            * (2.0 * self.window / self.nt)

    @property
    def dyt(self):
        return 2.0 * self.window / self.nt

    def full_shape(self):
        return (self.n1 + 1,) if self.nt is None else (self.n1 + 1, self.nt)


def make_strip_grid(n1, height, nt=None, window=None, grade=None):
    """grade: geometric cell-growth factor in (0, 1) applied near y_1 = 0."""
    n1 = int(n1)
    if grade is None:
        nodes = np.linspace(0.0, float(height), n1 + 1)
    else:
        grade = float(grade)
        if not 0.0 < grade < 1.0:
            raise ValueError("grading factor must lie in (0, 1)")
        depth = min(GRADE_DEPTH, n1 // 2)
        cells = grade ** np.maximum(depth - np.arange(n1), 0).astype(float)
        nodes = np.concatenate([[0.0], np.cumsum(cells)])
        nodes *= float(height) / nodes[-1]
    return StripGrid(nodes, window, nt)


# ---------------------------------------------------------------------------
# transformed Laplacian coefficients


@dataclass(frozen=True)
class StripCoefficients:
    """A11, A12 and b1 of the mapped Laplacian on the full node grid."""
    A11: np.ndarray
    A12: np.ndarray
    b1: np.ndarray


def strip_coefficients(pmap, grid, step=1e-4):
    """Coefficient fields from finite differences of the inverse map.

    With x_1 = Psi(y_1, yt) the forward derivatives follow from implicit
    differentiation, so only the explicit Psi is ever evaluated.
    """
    if grid.nt is None:
        raise ValueError("mapped coefficients need a tangential axis")
    Y1 = np.broadcast_to(grid.nodes1[:, None],
                         (grid.n1 + 1, grid.nt)).ravel()
    YT = np.broadcast_to(grid.yt[None, :], (grid.n1 + 1, grid.nt)).ravel()

    def psi(a, b):
        return a + pmap.mollified_h(a, b)

    s = float(step)
    P1 = (psi(Y1 + s, YT) - psi(Y1 - s, YT)) / (2 * s)
    P2 = (psi(Y1, YT + s) - psi(Y1, YT - s)) / (2 * s)
    P0 = psi(Y1, YT)
    P11 = (psi(Y1 + s, YT) - 2 * P0 + psi(Y1 - s, YT)) / s ** 2
    P22 = (psi(Y1, YT + s) - 2 * P0 + psi(Y1, YT - s)) / s ** 2
    P12 = (psi(Y1 + s, YT + s) - psi(Y1 + s, YT - s)
           - psi(Y1 - s, YT + s) + psi(Y1 - s, YT - s)) / (4 * s ** 2)
    G1 = 1.0 / P1
    G2 = -P2 / P1
    G11 = -P11 / P1 ** 3
    # tangential derivatives along x follow the graph y_1 = G(x)
    D2P1 = P11 * G2 + P12
    D2P2 = P12 * G2 + P22
    G22 = -(D2P2 * P1 - P2 * D2P1) / P1 ** 2
    shape = (grid.n1 + 1, grid.nt)
    return StripCoefficients((G1 ** 2 + G2 ** 2).reshape(shape),
                             G2.reshape(shape),
                             (G11 + G22).reshape(shape))


def _flat_coefficients(grid):
    shape = grid.full_shape() if grid.nt is not None else (grid.n1 + 1, 1)
    return StripCoefficients(np.ones(shape), np.zeros(shape),
                             np.zeros(shape))


# ---------------------------------------------------------------------------
# discrete operator


def _second_diff_weights(nodes):
    """3-point second-derivative weights on a nonuniform axis."""
    hl = np.diff(nodes)[:-1]
    hr = np.diff(nodes)[1:]
    lo = 2.0 / (hl * (hl + hr))
    hi = 2.0 / (hr * (hl + hr))
    return lo, -(lo + hi), hi


def _first_diff_weights(nodes):
    """3-point centered first-derivative weights on a nonuniform axis."""
    hl = np.diff(nodes)[:-1]
    hr = np.diff(nodes)[1:]
    lo = -hr / (hl * (hl + hr))
    hi = hl / (hr * (hl + hr))
    return lo, -(lo + hi), hi


def _interior_matrix(weights, n):
    lo, mid, hi = weights
    return sparse.diags([lo[1:], mid, hi[:-1]], [-1, 0, 1],
                        shape=(n, n), format="csr")


def _periodic_second(nt, dyt):
    e = np.ones(nt) / dyt ** 2
    mat = sparse.diags([e[1:], -2 * e, e[:-1]], [-1, 0, 1],
                       shape=(nt, nt), format="lil")
    mat[0, -1] = 1.0 / dyt ** 2
    mat[-1, 0] = 1.0 / dyt ** 2
    return mat.tocsr()


def _periodic_first(nt, dyt):
    e = np.ones(nt) / (2 * dyt)
    mat = sparse.diags([-e[1:], e[:-1]], [-1, 1],
                       shape=(nt, nt), format="lil")
    mat[0, -1] = -1.0 / (2 * dyt)
    mat[-1, 0] = 1.0 / (2 * dyt)
    return mat.tocsr()


class HeatOperator:
    """Sparse mapped Laplacian over interior nodes plus boundary closure.

    matrix acts on the interior unknowns (y_1 rows 1..n1-1, all tangential
    columns); boundary_terms supplies the stencil contribution of given
    bottom and top rows, so apply(full) = matrix @ interior + closure is
    the full-grid operator.
    """

    def __init__(self, grid, coeffs=None):
        self.grid = grid
        if coeffs is None:
            coeffs = _flat_coefficients(grid)
        self.coeffs = coeffs
        n1 = grid.n1
        w11 = _second_diff_weights(grid.nodes1)
        w1 = _first_diff_weights(grid.nodes1)
        self._w11 = w11
        self._w1 = w1
        D11 = _interior_matrix(w11, n1 - 1)
        D1 = _interior_matrix(w1, n1 - 1)
        if grid.nt is None:
            a11 = coeffs.A11[1:-1, 0]
            b1 = coeffs.b1[1:-1, 0]
            self.matrix = (sparse.diags(a11) @ D11
                           + sparse.diags(b1) @ D1).tocsr()
        else:
            nt = grid.nt
            D22 = _periodic_second(nt, grid.dyt)
            D2 = _periodic_first(nt, grid.dyt)
            I1 = sparse.identity(n1 - 1, format="csr")
            It = sparse.identity(nt, format="csr")
            a11 = sparse.diags(coeffs.A11[1:-1].ravel())
            a12 = sparse.diags(coeffs.A12[1:-1].ravel())
            b1 = sparse.diags(coeffs.b1[1:-1].ravel())
            self.matrix = (a11 @ sparse.kron(D11, It)
                           + 2.0 * a12 @ sparse.kron(D1, D2)
                           + sparse.kron(I1, D22)
                           + b1 @ sparse.kron(D1, It)).tocsr()
        self.n_interior = self.matrix.shape[0]

    def _d2(self, row):
        if self.grid.nt is None:
            return 0.0
        dyt = self.grid.dyt
        return (np.roll(row, -1, axis=-1) - np.roll(row, 1, axis=-1)) \
            / (2 * dyt)

    def boundary_terms(self, bottom, top):
        """Interior contribution of the two Dirichlet rows."""
        g = self.grid
        lo11, _, hi11 = self._w11
        lo1, _, hi1 = self._w1
        shape = (g.n1 - 1,) if g.nt is None else (g.n1 - 1, g.nt)
        out = np.zeros(shape, dtype=np.result_type(bottom, top, float))
        c = self.coeffs
        sl0 = (1, Ellipsis) if g.nt is not None else (1, 0)
        slt = (-2, Ellipsis) if g.nt is not None else (-2, 0)
        out[0] += c.A11[sl0] * lo11[0] * bottom + c.b1[sl0] * lo1[0] * bottom
        out[-1] += c.A11[slt] * hi11[-1] * top + c.b1[slt] * hi1[-1] * top
        if g.nt is not None:
            out[0] += 2.0 * c.A12[sl0] * lo1[0] * self._d2(bottom)
            out[-1] += 2.0 * c.A12[slt] * hi1[-1] * self._d2(top)
        return out

    def apply(self, full):
        """Mapped Laplacian of a full-node array (boundary rows included)."""
        interior = full[1:-1]
        out = (self.matrix @ interior.ravel()).reshape(interior.shape)
        return out + self.boundary_terms(full[0], full[-1])


def solve_homogeneous(ftilde, grid, coeffs=None, T=1.0, op=None):
    """Implicit-Euler march of the zero-boundary, zero-initial problem.

    ftilde holds the source at times t_1..t_M on the full node grid
    (boundary rows ignored).  Returns the solution on all nodes at
    t_0..t_M and an info dict with the discrete residual and a condition
    estimate of the time-step system.
    """
    ftilde = np.asarray(ftilde)
    M = ftilde.shape[0]
    if M < 1:
        raise ValueError("need at least one time step")
    dt = float(T) / M
    if op is None:
        op = HeatOperator(grid, coeffs)
    n = op.n_interior
    system = (sparse.identity(n, format="csr") - dt * op.matrix).tocsc()
    lu = splu(system)
    inv = LinearOperator((n, n), matvec=lambda v: lu.solve(v),
                         rmatvec=lambda v: lu.solve(v, trans="T"))
    cond_est = float(onenormest(system) * onenormest(inv))

    complex_data = np.iscomplexobj(ftilde)
    shape = ftilde.shape[1:]
    u = np.zeros((M + 1,) + shape,
                 dtype=complex if complex_data else float)
    cur = np.zeros(n, dtype=u.dtype)
    residual = 0.0
    fscale = float(np.abs(ftilde).max())
    for m in range(M):
        rhs = cur + dt * ftilde[m][1:-1].ravel()
        if complex_data:
            xy = lu.solve(np.column_stack([rhs.real, rhs.imag]))
            nxt = xy[:, 0] + 1j * xy[:, 1]
        else:
            nxt = lu.solve(rhs)
        if not np.all(np.isfinite(nxt)):
            raise RuntimeError("time-step solve diverged at step %d" % (m + 1))
        res = (nxt - cur) / dt - op.matrix @ nxt - ftilde[m][1:-1].ravel()
        residual = max(residual, float(np.abs(res).max()))
        u[m + 1][1:-1] = nxt.reshape(u[m + 1][1:-1].shape)
        cur = nxt
    info = {"residual": residual / max(fscale, 1e-300),
            "cond_est": cond_est, "dt": dt, "unknowns": n}
    return u, info


# ---------------------------------------------------------------------------
# boundary extension on the strip


def strip_extension(g_samples, grid, rho, lps_t=None, n_max=None):
    """Slicewise kernel extension of order-zero boundary data.

    g_samples: (M+1, nt) time slices of g on the tangential grid.  Each
    slice splits into tangential scale blocks; block n is multiplied by
    the kernel profile rho_0(2^n y_1) evaluated exactly at the strip
    heights.  Output shape (M+1, n1+1, nt), complex.
    """
    g_samples = np.asarray(g_samples)
    desc_t = AnisotropyDescriptor.isotropic(1)
    if lps_t is None:
        lps_t = LpSequence(desc_t)
    probe = GridField(g_samples[0].astype(complex), (grid.window,), desc_t)
    if n_max is None:
        n_max = lps_t.n_max(probe)
    profs = [rho.eval_points(grid.nodes1, 0, scale=2.0 ** n)
             for n in range(n_max + 1)]
    out = np.zeros((g_samples.shape[0], grid.n1 + 1, grid.nt), dtype=complex)
    for m in range(g_samples.shape[0]):
        if not np.abs(g_samples[m]).max():
            continue
        gf = GridField(g_samples[m].astype(complex), (grid.window,), desc_t)
        for n, bl in enumerate(lp_blocks(gf, lps_t, n_max)):
            out[m] += profs[n][:, None] * bl.data[None, :]
    return out


# ---------------------------------------------------------------------------
# problems and reports


@dataclass
class HeatProblem:
    """Forcing f(t, y1, yt), boundary data g(t, yt), and the parameters.

    Data are analytic callables so refinement studies resample the same
    member.  domain is None for the flat strip or a straightening map for
    a curved boundary.  Data must vanish at t = 0.
    """

    f: object
    g: object
    ps: ParamSet
    T: float = 2.0
    height: float = 6.0
    window: float = 10.0
    domain: object = None
    grade_factor: float = 0.85
    name: str = "problem"

    def __post_init__(self):
        rep = validate_heat_theorem(self.ps)
        if not rep.verdict:
            raise ValueError("inadmissible heat parameters: %s"
                             % rep.to_dict())
        mode = compatibility_mode(self.ps)
        if mode is CompatibilityMode.Critical:
            raise ValueError("critical compatibility line")
        self.compatibility = mode.value
        probe = np.linspace(-self.window, self.window, 257)
        g0 = np.abs(np.asarray(self.g(0.0, probe))).max()
        if g0 >= 1e-10:
            raise ValueError("boundary data must vanish at t = 0 "
                             "(max %.2e)" % g0)

    def grid(self, n1, nt):
        grade = self.grade_factor if self.ps.gamma >= self.ps.p - 1 else None
        return make_strip_grid(n1, self.height, nt, self.window, grade)

    def operator(self, grid):
        coeffs = None if self.domain is None \
            else strip_coefficients(self.domain, grid)
        return HeatOperator(grid, coeffs)


@dataclass
class MRReport:
    norm_f: float
    norm_g: float
    norm_u: float
    trace_residual: float
    initial_sup: float
    pde_residual: float
    ratio: float
    ratio_defined: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "norm_f": self.norm_f, "norm_g": self.norm_g,
            "norm_u": self.norm_u, "trace_residual": self.trace_residual,
            "initial_sup": self.initial_sup,
            "pde_residual": self.pde_residual,
            "ratio": self.ratio, "ratio_defined": self.ratio_defined,
            "meta": dict(self.meta),
        }


# ---------------------------------------------------------------------------
# weighted norms on the strip


def _cells_one_sided(nodes, exponent):
    """Exact integrals of y^exponent over the cells of a one-sided axis."""
    e1 = exponent + 1.0
    b = nodes[1:] ** e1
    a = nodes[:-1] ** e1
    return (b - a) / e1


def _strip_lp(vals, grid, p, gamma):
    """L^p over the strip with weight y_1^gamma (cell-exact in y_1)."""
    cw = _cells_one_sided(grid.nodes1, gamma)
    mid = 0.5 * (vals[:-1] + vals[1:])
    acc = np.abs(mid) ** p * cw.reshape((-1,) + (1,) * (mid.ndim - 1))
    total = acc.sum()
    if grid.nt is not None:
        total = total * grid.dyt
    return float(total ** (1.0 / p))


def _d_axis0(vals, grid):
    return np.gradient(vals, grid.nodes1, axis=0, edge_order=2)


def _d_axis1(vals, grid):
    return (np.roll(vals, -1, axis=1) - np.roll(vals, 1, axis=1)) \
        / (2 * grid.dyt)


def _strip_sobolev(vals, grid, k, p, gamma):
    """Sum over |alpha| <= k of the weighted L^p norms of D^alpha."""
    total = _strip_lp(vals, grid, p, gamma)
    alphas = {(): vals}
    for order in range(1, k + 1):
        nxt = {}
        for alpha, arr in alphas.items():
            for ax in range(2 if grid.nt is not None else 1):
                na = tuple(sorted(alpha + (ax,)))
                if na in nxt:
                    continue
                nxt[na] = _d_axis0(arr, grid) if ax == 0 \
                    else _d_axis1(arr, grid)
        alphas = nxt
        for arr in alphas.values():
            total += _strip_lp(arr, grid, p, gamma)
    return total


def _time_lq(values, T, q, mu):
    """(int_0^T |v|^q t^mu dt)^(1/q) on the uniform time nodes."""
    M = values.size - 1
    tnodes = np.linspace(0.0, float(T), M + 1)
    cw = _cells_one_sided(tnodes, mu)
    mid = 0.5 * (values[:-1] + values[1:])
    return float((np.sum(np.abs(mid) ** q * cw)) ** (1.0 / q))


def source_norm(fvals, grid, ps, T):
    """L^q(v_mu; W^{k,p}(w_{gamma+kp})) of a space-time sample array."""
    w = ps.gamma + ps.k * ps.p
    per_t = np.array([_strip_sobolev(fvals[m], grid, ps.k, ps.p, w)
                      for m in range(fvals.shape[0])])
    return _time_lq(per_t, T, ps.q, ps.mu)


def solution_norm(u, grid, ps, T):
    """W^{1,q}(v_mu; W^{k,p}) plus L^q(v_mu; W^{k+2,p}), weight gamma+kp."""
    w = ps.gamma + ps.k * ps.p
    M = u.shape[0] - 1
    dt = float(T) / M
    du = np.gradient(u, dt, axis=0, edge_order=2)
    total = 0.0
    for arr, k in ((u, ps.k), (du, ps.k), (u, ps.k + 2)):
        per_t = np.array([_strip_sobolev(arr[m], grid, k, ps.p, w)
                          for m in range(M + 1)])
        total += _time_lq(per_t, T, ps.q, ps.mu)
    return total


def boundary_norm(g_samples, ps, T, window):
    """The two-part trace-space norm of order-zero boundary data.

    Time regularity 1 - (gamma+1)/(2p) as a scale square function, space
    regularity 2 - (gamma+1)/p as a slicewise dyadic norm; both orders are
    independent of the smoothness index k.  The signal is embedded in a
    centered time box (zero for t < 0), so the measured time axis carries
    the one-sided data with the |t|^mu weight intact.
    """
    g_samples = np.asarray(g_samples)
    M = g_samples.shape[0] - 1
    nt = g_samples.shape[1]
    if M & (M - 1):
        raise ValueError("boundary norm needs a power-of-two step count")
    arr = np.zeros((nt, 2 * M), dtype=complex)
    arr[:, M:] = g_samples[:M].T
    desc = AnisotropyDescriptor(((1, 1.0), (1, 2.0)))
    gf = GridField(arr, (window, float(T)), desc)
    p, q = float(ps.p), float(ps.q)
    s_time = 1.0 - (ps.gamma + 1.0) / (2.0 * p)
    s_space = 2.0 - (ps.gamma + 1.0) / p
    tw = None if ps.mu == 0.0 else AxisWeight(1, float(ps.mu), "both")
    return (time_tl_norm(gf, s_time, q, p, time_weight=tw)
            + time_besov_slices_norm(gf, s_space, p, q, time_weight=tw))


# ---------------------------------------------------------------------------
# the inhomogeneous solve


def solve_inhomogeneous(problem, shape=(64, 64), n_steps=32, rho=None,
                        op=None, grid=None):
    """u = utilde + E with the measured maximal-regularity report."""
    n1, nt = shape
    M = int(n_steps)
    if M < 2 or M & (M - 1):
        raise ValueError("n_steps must be a power of two: the boundary "
                         "norm embeds the samples in a dyadic time box")
    if grid is None:
        grid = problem.grid(n1, nt)
    if op is None:
        op = problem.operator(grid)
    if rho is None:
        rho = make_rho(0)
    T = float(problem.T)
    dt = T / M
    tnodes = np.linspace(0.0, T, M + 1)
    yt = grid.yt

    g_samples = np.array(
        [np.broadcast_to(np.asarray(problem.g(t, yt), dtype=float), (nt,))
         for t in tnodes])
    g_samples[0] = 0.0
    E = strip_extension(g_samples, grid, rho)

    Y1 = grid.nodes1[:, None]
    YT = yt[None, :]
    fvals = np.array(
        [np.broadcast_to(np.asarray(problem.f(t, Y1, YT)),
                         grid.full_shape()) for t in tnodes])

    lap_E = np.array([op.apply(E[m]) for m in range(M + 1)])
    ftilde = np.zeros((M,) + grid.full_shape(), dtype=complex)
    for m in range(1, M + 1):
        ftilde[m - 1][1:-1] = fvals[m][1:-1] \
            - (E[m][1:-1] - E[m - 1][1:-1]) / dt + lap_E[m]
    utilde, info = solve_homogeneous(ftilde, grid, T=T, op=op)
    u = utilde + E

    # discrete residual of the assembled solution against the data
    lap_u = np.array([op.apply(u[m]) for m in range(M + 1)])
    resid = np.zeros_like(u)
    for m in range(1, M + 1):
        resid[m][1:-1] = fvals[m][1:-1] \
            - (u[m][1:-1] - u[m - 1][1:-1]) / dt + lap_u[m]
    pde_residual = source_norm(resid, grid, problem.ps, T)

    gmax = np.abs(g_samples).max()
    trace_err = np.abs(u[:, 0, :] - g_samples).max()
    trace_residual = float(trace_err / gmax) if gmax > 0 else float(trace_err)
    initial_sup = float(np.abs(u[0]).max())

    nf = source_norm(fvals, grid, problem.ps, T)
    ng = boundary_norm(g_samples, problem.ps, T, problem.window)
    nu = solution_norm(u, grid, problem.ps, T)
    defined = (nf + ng) > 0
    ratio = float(nu / (nf + ng)) if defined else float("nan")
    report = MRReport(
        norm_f=float(nf), norm_g=float(ng), norm_u=float(nu),
        trace_residual=trace_residual, initial_sup=initial_sup,
        pde_residual=float(pde_residual), ratio=ratio, ratio_defined=defined,
        meta={"shape": [int(n1), int(nt)], "n_steps": M, "dt": dt,
              "height": problem.height, "window": problem.window,
              "graded": problem.ps.gamma >= problem.ps.p - 1,
              "solver_residual": info["residual"],
              "cond_est": info["cond_est"],
              "compatibility": problem.compatibility},
    )
    return u, report


# ---------------------------------------------------------------------------
# manufactured solutions


def mms_1d(levels=3, n0=16, T=0.5, c_dt=2.0):
    """sin(pi x)(1 - e^{-t}) on (0, 1): errors and orders, dt tied to dx^2.

    The source sin(pi x)(e^{-t} + pi^2 (1 - e^{-t})) makes the stated
    function the exact solution with zero boundary and initial values.
    """
    errs = []
    meshes = []
    for lev in range(levels):
        n1 = n0 * 2 ** lev
        grid = make_strip_grid(n1, 1.0)
        dx = 1.0 / n1
        M = max(4, int(round(T / (c_dt * dx * dx))))
        ts = np.linspace(0.0, T, M + 1)
        x = grid.nodes1
        f = np.array([np.sin(np.pi * x) * (np.e ** -t + np.pi ** 2
                                           * (1 - np.e ** -t))
                      for t in ts[1:]])
        u, info = solve_homogeneous(f, grid, T=T)
        exact = np.sin(np.pi * x) * (1 - np.exp(-T))
        errs.append(float(np.abs(u[-1] - exact).max()))
        meshes.append({"n1": n1, "steps": M,
                       "solver_residual": info["residual"]})
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return {"errors": errs, "orders": orders, "meshes": meshes}


def steady_state_1d(n1=64, T=5.0, M=100):
    """Constant source sin(pi x): the march settles on sin(pi x)/pi^2."""
    grid = make_strip_grid(n1, 1.0)
    x = grid.nodes1
    f = np.broadcast_to(np.sin(np.pi * x), (M, n1 + 1)).copy()
    u, _ = solve_homogeneous(f, grid, T=T)
    exact = np.sin(np.pi * x) / np.pi ** 2
    return float(np.abs(u[-1] - exact).max())


def _kernel_derivs(rho, x, dmax, K=280):
    """rho_0 and its derivatives up to dmax at points x, one GL rule."""
    t, w = roots_legendre(K)
    xi = 1.5 + 0.5 * t
    pw = rho.profile(xi, 0) * (0.5 * w)
    x = np.asarray(x, dtype=float)
    ph = np.exp(1j * np.outer(x.ravel(), xi))
    return [(ph @ (pw * (1j * xi) ** d)).reshape(x.shape) / (2.0 * np.pi)
            for d in range(dmax + 1)]


def _mms_strip_problem(ps=None, T=2.0, height=6.0, window=10.0):
    """u* = (1 - e^{-t}) rho_0(y1) phi(yt), phi band-limited below radius 1.

    The vertical shape is the extension kernel itself and phi sits inside
    the base scale block, so the computed boundary extension reproduces
    u* on the trace and lid rows exactly; the measured error against u*
    is pure interior scheme truncation.
    """
    if ps is None:
        # gamma < p-1 needs a Hoelder index above 1/4 for the admissibility
        # window to reach down to 0.5
        ps = ParamSet(p=2.0, q=2.0, gamma=0.5, kappa=0.5)
    rho = make_rho(0)
    om = np.pi / window
    modes = ((0.8, 0.0), (0.5, om), (0.25, 3.0 * om))

    def phi(yt):
        s = np.asarray(yt, dtype=float)
        return sum(c * np.cos(xi * s) for c, xi in modes)

    def d2phi(yt):
        s = np.asarray(yt, dtype=float)
        return sum(-c * xi ** 2 * np.cos(xi * s) for c, xi in modes)

    def u_exact(t, y1, yt):
        r0 = _kernel_derivs(rho, y1, 0)[0]
        return (1 - np.exp(-t)) * r0 * phi(yt)

    def f(t, y1, yt):
        r0, _, r2 = _kernel_derivs(rho, y1, 2)
        a = 1 - np.exp(-t)
        return np.exp(-t) * r0 * phi(yt) \
            - a * (r2 * phi(yt) + r0 * d2phi(yt))

    def g(t, yt):
        return (1 - np.exp(-t)) * phi(yt)

    prob = HeatProblem(f, g, ps, T=T, height=height, window=window,
                       name="strip-mms")
    return prob, u_exact


def mms_strip(levels=3, shape0=(32, 32), steps0=8, ps=None):
    """Manufactured strip solve: sup errors, orders, trace residuals."""
    prob, u_exact = _mms_strip_problem(ps)
    rho = make_rho(0)
    errs, traces, meshes = [], [], []
    for lev in range(levels):
        n1 = shape0[0] * 2 ** lev
        nt = shape0[1] * 2 ** lev
        M = steps0 * 4 ** lev
        u, rep = solve_inhomogeneous(prob, (n1, nt), M, rho=rho)
        grid = prob.grid(n1, nt)
        ts = np.linspace(0.0, prob.T, M + 1)
        exact = np.array([u_exact(t, grid.nodes1[:, None], grid.yt[None, :])
                          for t in ts])
        errs.append(float(np.abs(u - exact).max()))
        traces.append(rep.trace_residual)
        meshes.append({"shape": [n1, nt], "steps": M,
                       "initial_sup": rep.initial_sup})
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return {"errors": errs, "orders": orders, "trace_residuals": traces,
            "meshes": meshes, "report_finest": rep.to_dict()}


# ---------------------------------------------------------------------------
# stability studies


def _random_member(rng, T, height, window):
    """One (f, g) pair: random space profiles times a smooth time arch."""
    fs = random_synth(rng, (0.45 * height, window), (1.2, 1.0), n_modes=6,
                      envelope=0.25)
    gs = random_synth(rng, window, 1.0, n_modes=6, envelope=0.2, dim=1)
    cf = rng.normal()
    cg = rng.normal()

    def env(t):
        return np.sin(np.pi * t / T) ** 2

    def f(t, y1, yt):
        return cf * env(t) * np.real(fs(y1 - 0.25 * height, yt))

    def g(t, yt):
        return cg * env(t) * np.real(gs(yt))

    return f, g


def mr_stability_study(ps, n_members=10, levels=2, seed=0, shape0=(64, 64),
                       steps0=32, T=2.0, height=6.0, window=10.0,
                       domain=None):
    """Ratios C over a random family and refinement ladder.

    Returns per-level ratios, the bracket and spread per level, the
    worst level-to-level drift of any member, and an exact-scaling check
    (data scaled by 4 must reproduce C to roundoff).
    """
    rng = np.random.default_rng(seed)
    members = [_random_member(rng, T, height, window)
               for _ in range(int(n_members))]
    probs = [HeatProblem(f, g, ps, T=T, height=height, window=window,
                         domain=domain) for f, g in members]

    rho = make_rho(0)
    ratios = []
    for lev in range(int(levels)):
        shape = (shape0[0] * 2 ** lev, shape0[1] * 2 ** lev)
        M = steps0 * 2 ** lev
        grid = probs[0].grid(*shape)
        op = probs[0].operator(grid)

        def one(prob):
            _, rep = solve_inhomogeneous(prob, shape, M, rho=rho,
                                         grid=grid, op=op)
            return rep.ratio

        ratios.append(_map_members(one, probs))

    brackets = [(min(r), max(r)) for r in ratios]
    drift = 1.0
    for lev in range(len(ratios) - 1):
        for a, b in zip(ratios[lev], ratios[lev + 1]):
            drift = max(drift, a / b, b / a)

    f0, g0 = members[0]
    scaled = HeatProblem(lambda t, y1, yt: 4.0 * f0(t, y1, yt),
                         lambda t, yt: 4.0 * g0(t, yt),
                         ps, T=T, height=height, window=window, domain=domain)
    _, rep_s = solve_inhomogeneous(scaled, shape0, steps0, rho=rho)
    scale_dev = abs(rep_s.ratio / ratios[0][0] - 1.0)

    return {
        "ratios": ratios,
        "brackets": brackets,
        "spreads": [b[1] / b[0] for b in brackets],
        "drift": drift,
        "scale_deviation": scale_dev,
        "params": {"p": ps.p, "q": ps.q, "gamma": ps.gamma, "mu": ps.mu,
                   "k": ps.k},
    }
