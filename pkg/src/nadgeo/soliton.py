"""Ricci-soliton residuals and the decoupled generator for 2+2 ansatz
metrics with one vertical Killing direction.

The generator works on the chart (x1, x2, y3, y4): h-block diag(e1 e^psi,
e2 e^psi), v-block diag(h3, h4) independent of y4, N-coefficients
(w_a, n_a).  ``*`` denotes the y3 derivative.  A generated metric satisfies
Ric = -lambda_gen * g for the canonical connection, i.e. it is a gradient
soliton with constant potential and soliton constant -lambda_gen; reports
carry both constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.sparse
import scipy.sparse.linalg

from . import expr as E
from . import symmat as SM
from .algebroid import GeometryError, LieAlgebroid, NConnection, adapted_frames
from .connection import (
    canonical_dconnection,
    curvature,
    distortion,
    ricci,
    torsion,
)
from .geometry import DMetric


class SolitonRejected(GeometryError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class SolitonProblem:
    lam: float                     # soliton constant in Ric + Hess k = lam g
    signs: tuple = (1, 1, 1, 1)
    kappa: object = None           # potential expression (or constant)
    kappa_consts: tuple = None     # frame constants (k_3, k_4) when used

    @property
    def kind(self):
        if self.lam > 0:
            return "shrinking"
        if self.lam < 0:
            return "expanding"
        return "steady"


@dataclass
class GeneratingData:
    psi: object                    # Expr (h conformal exponent)
    Phi: object                    # Expr, generating function (positive)
    lam: float                     # generator constant (nonzero)
    signs: tuple = (1, 1, 1, 1)
    h4_0: object = 0               # integration function of x
    n1: tuple = (0, 0)             # first integration functions (per a)
    n2: tuple = (0, 0)             # second integration functions (per a)
    n_closed_form: tuple = None    # optional exact y3-antiderivative exprs
    box: list = field(default_factory=lambda: [[0.1, 0.9]] * 4)


# ---------------------------------------------------------------------------
# residual of the soliton equation for an arbitrary geometry
# ---------------------------------------------------------------------------

def soliton_residual(g: DMetric, N: NConnection, alg: LieAlgebroid, kappa, lam, points,
                     kappa_consts=None):
    """max |Ric + Hess(kappa) - lam g| per block for the canonical
    connection; also the constant-gradient residuals when frame constants
    are supplied."""
    coords = alg.coords
    m = coords.m
    kappa = coords.parse(kappa)
    frames = adapted_frames(alg, N)
    conn = canonical_dconnection(g, N, alg)
    ric = ricci(curvature(conn, alg, N))
    gfull = g.full()
    d = 2 * m

    dk = [frames.apply(i, kappa) for i in range(d)]
    hess = SM.zeros(d, d)
    for be in range(d):
        for ga in range(d):
            acc = frames.apply(be, dk[ga])
            for ph in range(d):
                acc = E.sub_(acc, E.mul_(conn.gamma[ph][ga][be], dk[ph]))
            hess[be][ga] = acc

    lam_e = E.const(lam)
    resid = {
        "hh": 0.0, "hv": 0.0, "vh": 0.0, "vv": 0.0,
    }

    def block_of(be, ga):
        if be < m and ga < m:
            return "hh"
        if be < m <= ga:
            return "hv"
        if ga < m <= be:
            return "vh"
        return "vv"

    exprs = {}
    for be in range(d):
        for ga in range(d):
            exprs[(be, ga)] = E.sub_(
                E.add_(ric.full[be][ga], hess[be][ga]), E.mul_(lam_e, gfull[be][ga])
            )
    for p in points:
        for (be, ga), ex in exprs.items():
            resid[block_of(be, ga)] = max(resid[block_of(be, ga)], abs(E.evaluate(ex, p)))

    if kappa_consts is not None:
        worst_h = 0.0
        worst_v = 0.0
        for p in points:
            for a in range(m):
                worst_h = max(worst_h, abs(E.evaluate(dk[a], p)))
            for A in range(m):
                worst_v = max(
                    worst_v, abs(E.evaluate(dk[m + A], p) - float(kappa_consts[A]))
                )
        resid["potential_h"] = worst_h
        resid["potential_v"] = worst_v
    return resid


# ---------------------------------------------------------------------------
# the horizontal equation on a 2-d grid
# ---------------------------------------------------------------------------

@dataclass
class HSolveResult:
    psi: np.ndarray
    axes: tuple
    residual: float
    iterations: int
    liouville: bool


def _anchored_operator(alg, eps, axes):
    """Sparse matrix of eps1 X1 X1 + eps2 X2 X2 on the full 2-d grid,
    Dirichlet rows as identity."""
    x1, x2 = axes
    n1, n2 = len(x1), len(x2)
    h1, h2 = x1[1] - x1[0], x2[1] - x2[0]
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    co = alg.coords
    m = co.m

    def sample(e):
        fn = E.compile_fns([e], co.names)
        dummy = np.zeros_like(X1)
        extra = [dummy] * (len(co.names) - 2)
        return np.broadcast_to(np.asarray(fn(X1, X2, *extra)[0], float), X1.shape)

    rho = [[sample(alg.rho[i][a]) for a in range(m)] for i in range(2)]
    drho = [
        [[sample(E.diff(alg.rho[j][a], co.x[i])) for a in range(m)] for j in range(2)]
        for i in range(2)
    ]

    # second-order coefficients A_ij = sum_a eps_a rho^i_a rho^j_a and the
    # first-order ones b_j = sum_a eps_a rho^i_a d_i rho^j_a
    A = [[sum(eps[a] * rho[i][a] * rho[j][a] for a in range(2)) for j in range(2)] for i in range(2)]
    b = [
        sum(eps[a] * rho[i][a] * drho[i][j][a] for a in range(2) for i in range(2))
        for j in range(2)
    ]

    def node(i, j):
        return i * n2 + j

    rows, cols, vals = [], [], []

    def add(i, j, i2, j2, v):
        rows.append(node(i, j))
        cols.append(node(i2, j2))
        vals.append(v)

    for i in range(n1):
        for j in range(n2):
            boundary = i in (0, n1 - 1) or j in (0, n2 - 1)
            if boundary:
                add(i, j, i, j, 1.0)
                continue
            a11, a22, a12 = A[0][0][i, j], A[1][1][i, j], A[0][1][i, j]
            b1, b2 = b[0][i, j], b[1][i, j]
            add(i, j, i, j, -2 * a11 / h1 ** 2 - 2 * a22 / h2 ** 2)
            add(i, j, i + 1, j, a11 / h1 ** 2 + b1 / (2 * h1))
            add(i, j, i - 1, j, a11 / h1 ** 2 - b1 / (2 * h1))
            add(i, j, i, j + 1, a22 / h2 ** 2 + b2 / (2 * h2))
            add(i, j, i, j - 1, a22 / h2 ** 2 - b2 / (2 * h2))
            c = 2 * a12 / (4 * h1 * h2)  # A12 and A21 together
            add(i, j, i + 1, j + 1, c)
            add(i, j, i - 1, j - 1, c)
            add(i, j, i + 1, j - 1, -c)
            add(i, j, i - 1, j + 1, -c)
    size = n1 * n2
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


def solve_h_equation(lam, eps1, eps2, alg: LieAlgebroid, grid2d, boundary,
                     liouville=False, tol=1e-8, max_iter=60) -> HSolveResult:
    """Solve eps1 X1(X1 psi) + eps2 X2(X2 psi) = rhs with Dirichlet data.

    rhs is 2*lam (linear mode) or 2*lam*e^psi (liouville=True; Newton on
    the same stencil).  The hyperbolic signature (eps1*eps2 < 0) is only
    accepted with a supplied psi for residual checking.
    """
    if eps1 * eps2 <= 0:
        raise GeometryError("hyperbolic signature: supply psi and use h_equation_residual")
    box, res = grid2d
    axes = tuple(np.linspace(lo, hi, r) for (lo, hi), r in zip(box, res))
    n1, n2 = len(axes[0]), len(axes[1])
    X1, X2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    co = alg.coords
    bexpr = co.parse(boundary)
    bfn = E.compile_fns([bexpr], co.names)
    dummy = np.zeros_like(X1)
    bvals = np.broadcast_to(
        np.asarray(bfn(X1, X2, *([dummy] * (len(co.names) - 2)))[0], float), X1.shape
    ).copy()

    A = _anchored_operator(alg, (eps1, eps2), axes)
    mask = np.zeros((n1, n2), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    psi = bvals.copy()
    flat_mask = mask.ravel()

    def residual_vec(pflat):
        rhs = 2 * lam * (np.exp(pflat) if liouville else np.ones_like(pflat))
        r = A @ pflat - rhs
        r[flat_mask] = 0.0
        return r

    if not liouville:
        rhs = 2 * lam * np.ones(n1 * n2)
        rhs[flat_mask] = bvals.ravel()[flat_mask]
        sol = scipy.sparse.linalg.spsolve(A.tocsc(), rhs)
        psi = sol.reshape(n1, n2)
        res = np.abs(residual_vec(sol)).max()
        return HSolveResult(psi, axes, float(res), 1, False)

    pflat = psi.ravel().copy()
    for it in range(1, max_iter + 1):
        r = residual_vec(pflat)
        res = np.abs(r).max()
        if res < tol:
            return HSolveResult(pflat.reshape(n1, n2), axes, float(res), it, True)
        J = A - scipy.sparse.diags(2 * lam * np.exp(pflat))
        J = J.tolil()
        idx = np.where(flat_mask)[0]
        for k in idx:
            J.rows[k] = [k]
            J.data[k] = [1.0]
        delta = scipy.sparse.linalg.spsolve(J.tocsc(), -r)
        pflat = pflat + delta
    raise GeometryError(f"h-equation Newton did not converge (residual {res:.3e})")


def h_equation_residual(psi, lam, eps1, eps2, alg, grid2d, liouville=False):
    """Discrete residual of a supplied psi expression (any signature)."""
    box, res = grid2d
    axes = tuple(np.linspace(lo, hi, r) for (lo, hi), r in zip(box, res))
    X1, X2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    co = alg.coords
    fn = E.compile_fns([co.parse(psi)], co.names)
    dummy = np.zeros_like(X1)
    vals = np.broadcast_to(
        np.asarray(fn(X1, X2, *([dummy] * (len(co.names) - 2)))[0], float), X1.shape
    ).copy()
    A = _anchored_operator(alg, (eps1, eps2), axes)
    r = (A @ vals.ravel()) - 2 * lam * (np.exp(vals.ravel()) if liouville else 1.0)
    r = r.reshape(X1.shape)[1:-1, 1:-1]
    return float(np.abs(r).max())


# ---------------------------------------------------------------------------
# the vertical-sector generator
# ---------------------------------------------------------------------------

def _dy3(coords, e):
    return E.diff(e, coords.y[0])


def generate_v_data(Phi, lam, eps3, eps4, h4_0, coords):
    """h4 = h4_0 + (eps3 eps4 / 4 lam) Phi^2;
    h3 = (1 / 2 lam) (Phi*/Phi)(h4*/h4)."""
    if lam == 0:
        raise GeometryError("the printed integration formulas divide by lambda; lam=0 rejected")
    Phi = coords.parse(Phi)
    h4_0 = coords.parse(h4_0)
    h4 = E.simplify(
        E.add_(h4_0, E.mul_(E.const(eps3 * eps4 / (4.0 * lam)), E.mul_(Phi, Phi)))
    )
    h3 = E.simplify(
        E.mul_(
            E.const(1.0 / (2.0 * lam)),
            E.mul_(E.div_(_dy3(coords, Phi), Phi), E.div_(_dy3(coords, h4), h4)),
        )
    )
    return h3, h4


def generate_w(Phi, alg: LieAlgebroid):
    """w_a = X_a Phi / Phi*."""
    coords = alg.coords
    Phi = coords.parse(Phi)
    dPhi = _dy3(coords, Phi)
    return [E.simplify(E.div_(alg.x_apply(a, Phi), dPhi)) for a in range(coords.m)]


@dataclass
class NFields:
    """n_b = n1_b + n2_b * I(x, y3) with I the y3-antiderivative of
    q = h3 / |h4|^{3/2}.  Derivatives are exact expressions; values use
    adaptive quadrature cached per y3-line unless a closed form is given."""

    n1: list
    n2: list
    q: E.Expr
    coords: object
    y3_origin: float
    closed_form: list = None
    _cache: dict = field(default_factory=dict)

    def star(self, b):
        return E.simplify(E.mul_(self.n2[b], self.q))

    def double_star(self, b):
        return E.simplify(E.mul_(self.n2[b], _dy3(self.coords, self.q)))

    def expr(self, b):
        """Symbolic n_b; needs n2_b = 0 or a supplied closed form."""
        if self.closed_form is not None:
            return self.closed_form[b]
        if E.is_zero(E.simplify(self.n2[b])):
            return self.n1[b]
        raise GeometryError("n has no closed form here; use value() or supply one")

    def value(self, b, point):
        base = E.evaluate(self.n1[b], point)
        n2v = E.evaluate(self.n2[b], point)
        if n2v == 0.0:
            return base
        key = tuple(sorted((k, v) for k, v in point.items() if k != self.coords.y[0]))
        y3 = point[self.coords.y[0]]
        cache = self._cache.setdefault(key, {})
        if y3 not in cache:
            def integrand(t):
                p = dict(point)
                p[self.coords.y[0]] = t
                return E.evaluate(self.q, p)

            val, _err = scipy.integrate.quad(
                integrand, self.y3_origin, y3, epsabs=1e-10, limit=200
            )
            cache[y3] = val
        return base + n2v * cache[y3]


def generate_n(h3, h4, n1, n2, coords, y3_origin, closed_form=None) -> NFields:
    q = E.simplify(
        E.div_(h3, E.pow_(E.unary_("sqrt", E.unary_("abs", h4)), E.const(3.0)))
    )
    n1 = [coords.parse(v) for v in n1]
    n2 = [coords.parse(v) for v in n2]
    cf = [coords.parse(v) for v in closed_form] if closed_form is not None else None
    return NFields(n1=n1, n2=n2, q=q, coords=coords, y3_origin=y3_origin, closed_form=cf)


# ---------------------------------------------------------------------------
# component equations of the 2+2 ansatz
# ---------------------------------------------------------------------------

def _ansatz_pieces(g: DMetric, N: NConnection, alg: LieAlgebroid):
    coords = alg.coords
    if coords.n != 2 or coords.m != 2:
        raise GeometryError("component equations need the 2+2 chart")
    for M, what in ((g.hblock, "h-block"), (g.vblock, "v-block")):
        if not (E.is_zero(E.simplify(M[0][1])) and E.is_zero(E.simplify(M[1][0]))):
            raise GeometryError(f"{what} must be diagonal for the ansatz")
    y4 = coords.y[1]
    for e in (
        g.hblock[0][0], g.hblock[1][1], g.vblock[0][0], g.vblock[1][1],
        N.coeffs[0][0], N.coeffs[0][1], N.coeffs[1][0], N.coeffs[1][1],
    ):
        if y4 in E.variables(e):
            raise GeometryError("Killing ansatz violated: y4 appears in the data")
    g1, g2 = g.hblock[0][0], g.hblock[1][1]
    h3, h4 = g.vblock[0][0], g.vblock[1][1]
    w = [N.coeffs[0][0], N.coeffs[0][1]]
    n = [N.coeffs[1][0], N.coeffs[1][1]]
    return g1, g2, h3, h4, w, n


def component_equations(g: DMetric, N: NConnection, alg: LieAlgebroid, lam,
                        n_fields: NFields = None):
    """The four displayed component expressions (h-equation and v-sector
    minus their sources); each should vanish on a solution."""
    coords = alg.coords
    g1, g2, h3, h4, w, n = _ansatz_pieces(g, N, alg)
    X = alg.x_apply
    dy3 = lambda e: _dy3(coords, e)
    half = E.Const(0.5)
    lam_e = E.const(lam)

    eq1 = E.sub_(
        E.mul_(
            E.div_(E.ONE, E.mul_(E.Const(2.0), E.mul_(g1, g2))),
            E.add_(
                E.sub_(
                    E.sub_(X(0, X(0, g2)), E.div_(E.mul_(X(0, g1), X(0, g2)), E.mul_(E.Const(2.0), g1))),
                    E.div_(E.mul_(X(0, g2), X(0, g2)), E.mul_(E.Const(2.0), g2)),
                ),
                E.sub_(
                    E.sub_(X(1, X(1, g1)), E.div_(E.mul_(X(1, g1), X(1, g2)), E.mul_(E.Const(2.0), g2))),
                    E.div_(E.mul_(X(1, g1), X(1, g1)), E.mul_(E.Const(2.0), g1)),
                ),
            ),
        ),
        lam_e,
    )

    h4s, h3s = dy3(h4), dy3(h3)
    bracket = E.sub_(
        E.sub_(dy3(h4s), E.div_(E.mul_(h4s, h4s), E.mul_(E.Const(2.0), h4))),
        E.div_(E.mul_(h3s, h4s), E.mul_(E.Const(2.0), h3)),
    )
    eq2 = E.sub_(E.div_(bracket, E.mul_(E.Const(2.0), E.mul_(h3, h4))), lam_e)

    eq3 = []
    for a in range(2):
        t1 = E.mul_(E.div_(w[a], E.mul_(E.Const(2.0), h4)), bracket)
        t2 = E.mul_(
            E.div_(h4s, E.mul_(E.Const(4.0), h4)),
            E.add_(E.div_(X(a, h3), h3), E.div_(X(a, h4), h4)),
        )
        t3 = E.div_(X(a, h4s), E.mul_(E.Const(2.0), h4))
        eq3.append(E.sub_(E.add_(t1, t2), t3))

    eq4 = []
    for a in range(2):
        if n_fields is not None:
            ns, nss = n_fields.star(a), n_fields.double_star(a)
        else:
            ns, nss = dy3(n[a]), dy3(dy3(n[a]))
        t1 = E.mul_(E.div_(h4, E.mul_(E.Const(2.0), h3)), nss)
        gamma_coef = E.sub_(
            E.mul_(E.Const(1.5), h4s), E.mul_(E.div_(h4, h3), h3s)
        )
        t2 = E.mul_(gamma_coef, E.div_(ns, E.mul_(E.Const(2.0), h3)))
        eq4.append(E.add_(t1, t2))

    return eq1, eq2, eq3, eq4


def component_residuals(g: DMetric, N: NConnection, alg: LieAlgebroid, lam, points,
                        n_fields: NFields = None):
    eq1, eq2, eq3, eq4 = component_equations(g, N, alg, lam, n_fields)
    out = {"eq1": 0.0, "eq2": 0.0, "eq3": 0.0, "eq4": 0.0}
    for p in points:
        out["eq1"] = max(out["eq1"], abs(E.evaluate(eq1, p)))
        out["eq2"] = max(out["eq2"], abs(E.evaluate(eq2, p)))
        for a in range(2):
            out["eq3"] = max(out["eq3"], abs(E.evaluate(eq3[a], p)))
            out["eq4"] = max(out["eq4"], abs(E.evaluate(eq4[a], p)))
    return out


def lc_condition_residuals(g: DMetric, N: NConnection, alg: LieAlgebroid, points):
    """The torsionless conditions: w_a* = (X_a - w_a d3) ln sqrt|h3|,
    (X_a - w_a d3) ln sqrt|h4| = 0, X_b w_a = X_a w_b, n_a* = 0,
    d_a n_b = d_b n_a."""
    coords = alg.coords
    _g1, _g2, h3, h4, w, n = _ansatz_pieces(g, N, alg)
    X = alg.x_apply
    dy3 = lambda e: _dy3(coords, e)
    half = E.Const(0.5)

    def dlog_sqrt(u, op):
        return E.mul_(half, E.div_(op(u), u))

    exprs = {"w_h3": [], "w_h4": [], "w_sym": [], "n_star": [], "n_sym": []}
    for a in range(2):
        lhs = dy3(w[a])
        rhs = E.sub_(
            dlog_sqrt(h3, lambda u, a=a: X(a, u)),
            E.mul_(w[a], dlog_sqrt(h3, dy3)),
        )
        exprs["w_h3"].append(E.sub_(lhs, rhs))
        exprs["w_h4"].append(
            E.sub_(
                dlog_sqrt(h4, lambda u, a=a: X(a, u)),
                E.mul_(w[a], dlog_sqrt(h4, dy3)),
            )
        )
        exprs["n_star"].append(dy3(n[a]))
    exprs["w_sym"].append(E.sub_(X(1, w[0]), X(0, w[1])))
    exprs["n_sym"].append(
        E.sub_(E.diff(n[1], coords.x[0]), E.diff(n[0], coords.x[1]))
    )
    out = {}
    for key, lst in exprs.items():
        worst = 0.0
        for p in points:
            for ex in lst:
                worst = max(worst, abs(E.evaluate(ex, p)))
        out[key] = worst
    return out


# ---------------------------------------------------------------------------
# assembly with the full residual battery
# ---------------------------------------------------------------------------

@dataclass
class SolitonSolution:
    metric: DMetric
    nconnection: NConnection
    provenance: str                # "lc-class" | "torsion-class"
    lam_generator: float
    lam_soliton: float
    report: dict


def assemble(gen: GeneratingData, cls, alg: LieAlgebroid, tol=1e-6, points=None,
             check_full_pipeline=True) -> SolitonSolution:
    """Build the metric from generating data and run the residual battery.

    cls = "lc" requires the constrained subclass (n2 = 0, n1_b = X_b n,
    deformation-compatible Phi); "torsion" accepts the general data."""
    coords = alg.coords
    if coords.n != 2 or coords.m != 2:
        raise GeometryError("the generator works on the 2+2 chart")
    e1, e2, e3, e4 = gen.signs
    lam = gen.lam
    psi = coords.parse(gen.psi)
    Phi = coords.parse(gen.Phi)
    h3, h4 = generate_v_data(Phi, lam, e3, e4, gen.h4_0, coords)
    w = generate_w(Phi, alg)
    nf = generate_n(h3, h4, gen.n1, gen.n2, coords, gen.box[2][0], gen.n_closed_form)

    if points is None:
        from .sampling import random_points

        points = random_points(coords, gen.box, 20, seed=11)

    report = {"class": cls, "lam_generator": lam, "lam_soliton": -lam,
              "eps34_absorbed": e3 * e4}

    # generating-function sanity: positivity and nonzero y3 slope
    dPhi = _dy3(coords, Phi)
    for p in points:
        if E.evaluate(Phi, p) <= 0:
            raise GeometryError(f"generating function not positive at {p}")
        if abs(E.evaluate(dPhi, p)) < 1e-12:
            raise GeometryError(f"Phi* vanishes at {p}")

    if cls == "lc":
        for b in range(2):
            if not E.is_zero(E.simplify(coords.parse(gen.n2[b]))):
                raise GeometryError("lc class needs n2 = 0")
        # (X_a Phi)* = X_a (Phi*) sampled
        worst = 0.0
        for p in points:
            for a in range(2):
                lhs = E.evaluate(_dy3(coords, alg.x_apply(a, Phi)), p)
                rhs = E.evaluate(alg.x_apply(a, dPhi), p)
                worst = max(worst, abs(lhs - rhs))
        report["deformation_compat"] = worst
        if worst > tol:
            raise SolitonRejected("generating function fails the lc compatibility", report)

    hblock = [[E.mul_(E.const(e1), E.unary_("exp", psi)), E.ZERO],
              [E.ZERO, E.mul_(E.const(e2), E.unary_("exp", psi))]]
    vblock = [[h3, E.ZERO], [E.ZERO, h4]]
    g = DMetric(coords, hblock, vblock, eps=[e1, e2, e3, e4])
    n_exprs = [nf.expr(b) for b in range(2)]
    N = NConnection(coords, [w, n_exprs])

    report["components"] = component_residuals(g, N, alg, lam, points, nf)
    report["lc_conditions"] = lc_condition_residuals(g, N, alg, points)

    if check_full_pipeline:
        conn = canonical_dconnection(g, N, alg)
        ric = ricci(curvature(conn, alg, N))
        # mixed-index v-sector values: -R^3_3 = -R^4_4 = lam on solutions
        worst33 = worst44 = 0.0
        gv_inv = g.v_inverse()
        for p in points:
            r33 = sum(
                E.evaluate(gv_inv[0][B], p) * E.evaluate(ric.full[2 + B][2], p)
                for B in range(2)
            )
            r44 = sum(
                E.evaluate(gv_inv[1][B], p) * E.evaluate(ric.full[2 + B][3], p)
                for B in range(2)
            )
            worst33 = max(worst33, abs(-r33 - lam))
            worst44 = max(worst44, abs(-r44 - lam))
        report["pipeline_R33"] = worst33
        report["pipeline_R44"] = worst44
        Z, _K = distortion(conn, g, alg, N)
        worst_z = 0.0
        d = 2 * coords.m
        for p in points[: max(4, len(points) // 4)]:
            for al in range(d):
                for be in range(d):
                    for ga in range(d):
                        if not E.is_zero(Z[al][be][ga]):
                            worst_z = max(worst_z, abs(E.evaluate(Z[al][be][ga], p)))
        report["distortion_norm"] = worst_z

    checks = dict(report["components"])
    if cls == "lc":
        checks.update(report["lc_conditions"])
        if check_full_pipeline:
            checks["distortion"] = report["distortion_norm"]
            checks["pipeline_R33"] = report.get("pipeline_R33", 0.0)
            checks["pipeline_R44"] = report.get("pipeline_R44", 0.0)
    failed = {k: v for k, v in checks.items() if v > tol}
    if failed:
        raise SolitonRejected(f"residuals above tolerance: {failed}", report)
    provenance = "lc-class" if cls == "lc" else "torsion-class"
    return SolitonSolution(g, N, provenance, lam, -lam, report)


def polarizations(target: DMetric, prime: DMetric):
    """Deformation factors eta = g / g0, entrywise on the diagonal."""
    out_h = [
        E.simplify(E.div_(target.hblock[a][a], prime.hblock[a][a]))
        for a in range(target.h_rank)
    ]
    out_v = [
        E.simplify(E.div_(target.vblock[A][A], prime.vblock[A][A]))
        for A in range(target.v_rank)
    ]
    return out_h + out_v
