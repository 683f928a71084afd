"""d-metrics and the almost symplectic structures a regular Lagrangian induces.

The Hessian metric carries the 1/2 factor, g[a][b] = (1/2) d2L/dy^a dy^b,
which is the normalization under which the canonical two-form equals the
exterior derivative of the Lagrange one-form (the closure check below).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as E
from . import symmat as SM
from .algebroid import (
    Coordinates,
    FramePair,
    GeometryError,
    LieAlgebroid,
    NConnection,
    adapted_frames,
    anholonomy,
)
from .expr import Expr


class DMetric:
    """Block-diagonal metric in adapted frames: h-block and v-block."""

    def __init__(self, coords: Coordinates, hblock, vblock, eps=None):
        self.coords = coords
        r = len(hblock)
        s = len(vblock)
        self.hblock = [[coords.parse(hblock[i][j]) for j in range(r)] for i in range(r)]
        self.vblock = [[coords.parse(vblock[i][j]) for j in range(s)] for i in range(s)]
        for M, name in ((self.hblock, "h"), (self.vblock, "v")):
            for i in range(len(M)):
                for j in range(i):
                    if not (E.simplify(M[i][j]) == E.simplify(M[j][i])):
                        # store the symmetrization; exact symmetry by storage
                        sym = E.mul_(E.Const(0.5), E.add_(M[i][j], M[j][i]))
                        M[i][j] = sym
                        M[j][i] = sym
        self.eps = list(eps) if eps is not None else [1] * (r + s)
        self._hinv = None
        self._vinv = None

    @property
    def h_rank(self):
        return len(self.hblock)

    @property
    def v_rank(self):
        return len(self.vblock)

    def h_inverse(self):
        if self._hinv is None:
            self._hinv = SM.sym_inverse(self.hblock)
        return self._hinv

    def v_inverse(self):
        if self._vinv is None:
            self._vinv = SM.sym_inverse(self.vblock)
        return self._vinv

    def full(self):
        return SM.block_diag(self.hblock, self.vblock)

    def full_inverse(self):
        return SM.block_diag(self.h_inverse(), self.v_inverse())

    def check_nondegenerate(self, points, threshold=1e-12):
        dh, dv = SM.det(self.hblock), SM.det(self.vblock)
        for p in points:
            for d in (dh, dv):
                if abs(E.evaluate(d, p)) <= threshold:
                    raise GeometryError(f"degenerate metric block at {p}")
        return True


class Lagrangian:
    """Generating function L(x, y) with its declared regular box."""

    def __init__(self, coords: Coordinates, L, box):
        self.coords = coords
        self.L = coords.parse(L)
        if len(box) != coords.n + coords.m:
            raise GeometryError("box must give one [lo, hi] per coordinate")
        self.box = [list(map(float, b)) for b in box]

    def sample_points(self, count=20, seed=0):
        from .sampling import random_points

        return random_points(self.coords, self.box, count, seed)

    def is_homogeneous(self, scales=(0.5, 2.0, 3.0), count=10, rtol=1e-9, seed=3):
        """Positive 1-homogeneity of sqrt(L) in y (the Finsler check)."""
        pts = self.sample_points(count, seed)
        for p in pts:
            base = E.evaluate(self.L, p)
            if base <= 0:
                return False
            for s in scales:
                q = dict(p)
                for yname in self.coords.y:
                    q[yname] = s * q[yname]
                scaled = E.evaluate(self.L, q)
                if abs(np.sqrt(scaled) - s * np.sqrt(base)) > rtol * max(1.0, s * np.sqrt(base)):
                    return False
        return True


def hessian_metric(L: Lagrangian, check=True, threshold=1e-12):
    """g[a][b] = (1/2) d2L / dy^a dy^b, symmetric by construction."""
    coords = L.coords
    m = coords.m
    g = SM.zeros(m, m)
    half = E.Const(0.5)
    for a in range(m):
        da = E.diff(L.L, coords.y[a])
        for b in range(a, m):
            entry = E.simplify(E.mul_(half, E.diff(da, coords.y[b])))
            g[a][b] = entry
            g[b][a] = entry
    if check:
        d = SM.det(g)
        for p in L.sample_points(12, seed=1):
            if abs(E.evaluate(d, p)) <= threshold:
                raise GeometryError(f"degenerate Hessian at {p}")
    return g


def canonical_n_connection(L: Lagrangian, alg: LieAlgebroid) -> NConnection:
    """N[f][a] = -1/2 (d phi^f / dy^a + y^b C^f_ba) from the semispray."""
    from .mechanics import semispray

    coords = L.coords
    m = coords.m
    phi = semispray(L, alg).phi
    half = E.Const(0.5)
    coeffs = SM.zeros(m, m)
    for f in range(m):
        for a in range(m):
            term = E.diff(phi[f], coords.y[a])
            for b in range(m):
                term = E.add_(term, E.mul_(E.Var(coords.y[b]), alg.c[f][b][a]))
            coeffs[f][a] = E.simplify(E.neg_(E.mul_(half, term)))
    return NConnection(coords, coeffs)


def sasaki_dmetric(source, N: NConnection = None, alg: LieAlgebroid = None) -> DMetric:
    """Canonical lift: both blocks equal the Hessian metric (Lagrangian
    source), or pass explicit (hblock, vblock) through unchanged."""
    if isinstance(source, Lagrangian):
        g = hessian_metric(source)
        return DMetric(source.coords, g, g)
    hblock, vblock = source
    coords = N.coords if N is not None else alg.coords
    return DMetric(coords, hblock, vblock)


def lagrange_data(L: Lagrangian, alg: LieAlgebroid):
    """Convenience bundle: (DMetric, canonical N, adapted frames)."""
    N = canonical_n_connection(L, alg)
    g = sasaki_dmetric(L, N, alg)
    return g, N, adapted_frames(alg, N)


def offdiagonal(g: DMetric, N: NConnection):
    """Coordinate-form matrix of the d-metric: block [[g_h + N g_v N, N g_v],
    [g_v N, g_v]] with the N-elongation."""
    m = g.coords.m
    r = g.h_rank
    if r != m or g.v_rank != m:
        raise GeometryError("off-diagonal form needs matching block ranks")
    out = SM.zeros(2 * m, 2 * m)
    for a in range(m):
        for b in range(m):
            acc = g.hblock[a][b]
            for A in range(m):
                for B in range(m):
                    acc = E.add_(acc, E.mul_(E.mul_(N.coeffs[A][a], N.coeffs[B][b]), g.vblock[A][B]))
            out[a][b] = acc
    for a in range(m):
        for C in range(m):
            acc = E.ZERO
            for A in range(m):
                acc = E.add_(acc, E.mul_(N.coeffs[A][a], g.vblock[A][C]))
            out[a][m + C] = acc
            out[m + C][a] = acc
    for D in range(m):
        for C in range(m):
            out[m + D][m + C] = g.vblock[D][C]
    return out


class AlmostComplex:
    """Frame-component matrix J[out][in]: J(delta_a) = -V_a, J(V_a) = delta_a."""

    def __init__(self, m):
        self.m = m
        d = 2 * m
        M = SM.zeros(d, d)
        for a in range(m):
            M[m + a][a] = E.neg_(E.ONE)
            M[a][m + a] = E.ONE
        self.matrix = M

    def squared_is_minus_identity(self):
        J2 = SM.matmul(self.matrix, self.matrix)
        d = 2 * self.m
        return all(
            E.is_zero(E.simplify(E.add_(J2[i][j], E.ONE if i == j else E.ZERO)))
            for i in range(d)
            for j in range(d)
        )

    def coordinate_components(self, frames: FramePair):
        """Conjugate J into formal coordinate components with the vielbeins."""
        F = frames.frame_components()
        Theta = frames.coframe_components()
        # J_coord[k][l] = F[al][k] J[al][be] Theta[be][l]
        return SM.matmul(SM.transpose(F), SM.matmul(self.matrix, Theta))


def almost_complex(N: NConnection, hblock_rank=None) -> AlmostComplex:
    m = N.coords.m
    if hblock_rank is not None and hblock_rank != m:
        raise GeometryError("almost complex structure needs equal h/v ranks")
    return AlmostComplex(m)


class SymplecticForm:
    """theta[al][be] = g(J e_al, e_be) over the 2m adapted frame indices."""

    def __init__(self, coords, matrix):
        self.coords = coords
        self.matrix = matrix
        self._inv = None

    def inverse(self):
        if self._inv is None:
            self._inv = SM.sym_inverse(self.matrix)
        return self._inv

    def antisymmetry_residual(self, points):
        d = len(self.matrix)
        worst = 0.0
        for p in points:
            for i in range(d):
                for j in range(d):
                    worst = max(
                        worst,
                        abs(E.evaluate(self.matrix[i][j], p) + E.evaluate(self.matrix[j][i], p)),
                    )
        return worst


def symplectic_form(g: DMetric, J: AlmostComplex, points=None, tol=1e-10) -> SymplecticForm:
    m = J.m
    if g.h_rank != m or g.v_rank != m:
        raise GeometryError("symplectic form needs equal h/v ranks")
    gfull = g.full()
    d = 2 * m
    theta = SM.zeros(d, d)
    for al in range(d):
        for be in range(d):
            acc = E.ZERO
            for ga in range(d):
                acc = E.add_(acc, E.mul_(J.matrix[ga][al], gfull[ga][be]))
            theta[al][be] = E.simplify(acc)
    form = SymplecticForm(g.coords, theta)
    if points is not None:
        res = form.antisymmetry_residual(points)
        if res > tol:
            raise GeometryError(
                f"incompatible metric/J pair: antisymmetry residual {res:.3e} > {tol:.1e}"
            )
    return form


# ---------------------------------------------------------------------------
# exterior calculus in adapted frames (brackets enter through W)
# ---------------------------------------------------------------------------

def d_one_form(weights, frames: FramePair, W):
    """d(omega)(e_i, e_j) for a one-form given by frame weights (length 2m)."""
    d = frames.dim

    def entry(i, j):
        out = E.sub_(frames.apply(i, weights[j]), frames.apply(j, weights[i]))
        for k in range(d):
            out = E.sub_(out, E.mul_(W[k][i][j], weights[k]))
        return out

    return entry


def d_two_form(matrix, frames: FramePair, W):
    """d(theta)(e_i, e_j, e_k) for a two-form given as frame components."""
    d = frames.dim

    def bracket_term(i, j, k):
        acc = E.ZERO
        for l in range(d):
            acc = E.add_(acc, E.mul_(W[l][i][j], matrix[l][k]))
        return acc

    def entry(i, j, k):
        out = frames.apply(i, matrix[j][k])
        out = E.sub_(out, frames.apply(j, matrix[i][k]))
        out = E.add_(out, frames.apply(k, matrix[i][j]))
        out = E.sub_(out, bracket_term(i, j, k))
        out = E.add_(out, bracket_term(i, k, j))
        out = E.sub_(out, bracket_term(j, k, i))
        return out

    return entry


def nijenhuis(J: AlmostComplex, alg: LieAlgebroid, N: NConnection):
    """Nij[k][i][j]: -[e_i,e_j] + [Je_i,Je_j] - J[Je_i,e_j] - J[e_i,Je_j],
    computed on frame pairs with W-brackets (J is frame-constant)."""
    W = anholonomy(alg, N).full()
    d = 2 * alg.coords.m
    Jm = J.matrix
    out = SM.zeros(d, d, d)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                acc = E.neg_(W[k][i][j])
                for p in range(d):
                    for q in range(d):
                        if not E.is_zero(Jm[p][i]) and not E.is_zero(Jm[q][j]):
                            acc = E.add_(acc, E.mul_(E.mul_(Jm[p][i], Jm[q][j]), W[k][p][q]))
                for q in range(d):
                    if E.is_zero(Jm[k][q]):
                        continue
                    inner = E.ZERO
                    for p in range(d):
                        if not E.is_zero(Jm[p][i]):
                            inner = E.add_(inner, E.mul_(Jm[p][i], W[q][p][j]))
                    acc = E.sub_(acc, E.mul_(Jm[k][q], inner))
                    inner = E.ZERO
                    for p in range(d):
                        if not E.is_zero(Jm[p][j]):
                            inner = E.add_(inner, E.mul_(Jm[p][j], W[q][i][p]))
                    acc = E.sub_(acc, E.mul_(Jm[k][q], inner))
                out[k][i][j] = acc
    return out


@dataclass
class KahlerReport:
    closure_residual: float          # max |d(theta)| on frame triples
    potential_residual: float        # max |theta - d(omega)| on frame pairs
    tolerance: float
    points: int

    @property
    def ok(self):
        return self.closure_residual <= self.tolerance and self.potential_residual <= self.tolerance


def kahler_check(L: Lagrangian, alg: LieAlgebroid, points=None, tol=1e-8) -> KahlerReport:
    """Does the Lagrangian's two-form close, and equal d of its one-form?"""
    g, N, frames = lagrange_data(L, alg)
    J = almost_complex(N)
    theta = symplectic_form(g, J)
    W = anholonomy(alg, N).full()
    m = alg.coords.m
    d = 2 * m
    half = E.Const(0.5)
    omega_weights = [
        E.mul_(half, E.diff(L.L, alg.coords.y[a])) for a in range(m)
    ] + [E.ZERO] * m

    domega = d_one_form(omega_weights, frames, W)
    dtheta = d_two_form(theta.matrix, frames, W)

    if points is None:
        points = L.sample_points(30, seed=7)
    pot_exprs = [
        E.sub_(theta.matrix[i][j], domega(i, j)) for i in range(d) for j in range(i + 1, d)
    ]
    clo_exprs = [
        dtheta(i, j, k)
        for i in range(d)
        for j in range(i + 1, d)
        for k in range(j + 1, d)
    ]
    worst_pot = 0.0
    worst_clo = 0.0
    for p in points:
        for ex in pot_exprs:
            worst_pot = max(worst_pot, abs(E.evaluate(ex, p)))
        for ex in clo_exprs:
            worst_clo = max(worst_clo, abs(E.evaluate(ex, p)))
    return KahlerReport(worst_clo, worst_pot, tol, len(points))
