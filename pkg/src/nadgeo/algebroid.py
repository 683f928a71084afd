"""Lie d-algebroids, nonlinear connections, and the adapted frame calculus.

Conventions used throughout the package (0-based in code):

* base coordinates ``x1 .. xn`` (index ``i``), fiber coordinates
  ``y(n+1) .. y(n+m)`` (index ``A``),
* section / horizontal indices ``a, b, ... = 0 .. m-1``; the anchor is the
  n-by-m matrix ``rho[i][a]`` and structure functions ``c[f][a][b]`` are
  antisymmetric in ``(a, b)``, all functions of x only,
* the horizontal frame acts on scalars through the anchor,
  ``X_a f = rho[i][a] d_i f``, the adapted frame is
  ``delta_a = X_a - N[C][a] V_C`` with vertical ``V_A = d/dy^A``,
* full frame indices run over ``0 .. 2m-1`` with the first m horizontal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr as E
from .expr import EvalDomainError, Expr


class GeometryError(Exception):
    pass


class Coordinates:
    """Names and index bookkeeping for the (x, y) chart."""

    def __init__(self, n, m, xnames=None, ynames=None):
        if n < 1 or m < 1:
            raise GeometryError("need n >= 1 and m >= 1")
        self.n = n
        self.m = m
        self.x = list(xnames) if xnames else [f"x{i + 1}" for i in range(n)]
        self.y = list(ynames) if ynames else [f"y{n + A + 1}" for A in range(m)]
        if len(self.x) != n or len(self.y) != m:
            raise GeometryError("coordinate name count mismatch")
        if len(set(self.x + self.y)) != n + m:
            raise GeometryError("duplicate coordinate names")
        self.names = self.x + self.y

    def parse(self, text):
        if isinstance(text, Expr):
            return text
        if isinstance(text, (int, float)):
            return E.const(text)
        return E.parse(text, self.names)

    def __repr__(self):
        return f"Coordinates(n={self.n}, m={self.m})"


def _as_expr_array(coords, data, shape, what):
    """Coerce a nested list of strings/numbers/Exprs with given shape."""
    if not shape:
        return coords.parse(data)
    if len(data) != shape[0]:
        raise GeometryError(f"{what}: expected leading dimension {shape[0]}")
    return [_as_expr_array(coords, row, shape[1:], what) for row in data]


def _x_only(coords, e, what):
    bad = E.variables(e) - set(coords.x)
    if bad:
        raise GeometryError(f"{what} may depend on x only; found {sorted(bad)}")


class LieAlgebroid:
    """Anchor and structure functions over the base, plus chart dimensions.

    ``structure`` is an m*m*m nested array ``C[f][a][b]``; entries with
    a < b are authoritative (falling back to the lower triangle when the
    upper one is structurally zero) and antisymmetry is imposed on storage.
    """

    def __init__(self, coords: Coordinates, anchor, structure):
        self.coords = coords
        n, m = coords.n, coords.m
        self.rho = _as_expr_array(coords, anchor, (n, m), "anchor")
        raw = _as_expr_array(coords, structure, (m, m, m), "structure")
        c = [[[E.ZERO for _ in range(m)] for _ in range(m)] for _ in range(m)]
        for f in range(m):
            for a in range(m):
                for b in range(a + 1, m):
                    upper = E.simplify(raw[f][a][b])
                    entry = upper if not E.is_zero(upper) else E.neg_(E.simplify(raw[f][b][a]))
                    c[f][a][b] = entry
                    c[f][b][a] = E.neg_(entry)
        self.c = c
        for i in range(n):
            for a in range(m):
                _x_only(coords, self.rho[i][a], f"anchor rho[{i}][{a}]")
        for f in range(m):
            for a in range(m):
                for b in range(m):
                    _x_only(coords, c[f][a][b], f"structure C[{f}][{a}][{b}]")

    @classmethod
    def trivial(cls, n, m=None):
        """Identity anchor (square part), zero bracket."""
        m = n if m is None else m
        coords = Coordinates(n, m)
        anchor = [[E.ONE if i == a else E.ZERO for a in range(m)] for i in range(n)]
        zero = [[[E.ZERO] * m for _ in range(m)] for _ in range(m)]
        return cls(coords, anchor, zero)

    def x_apply(self, a, f: Expr) -> Expr:
        """Anchored section derivation X_a f = rho^i_a d_i f."""
        out = E.ZERO
        for i, xi in enumerate(self.coords.x):
            out = E.add_(out, E.mul_(self.rho[i][a], E.diff(f, xi)))
        return out


class NConnection:
    """h-v splitting coefficients N[A][a]; optional base form Nbase[A][i]."""

    def __init__(self, coords: Coordinates, coeffs, base=None):
        self.coords = coords
        m, n = coords.m, coords.n
        self.coeffs = _as_expr_array(coords, coeffs, (m, m), "N-connection")
        self.base = _as_expr_array(coords, base, (m, n), "base N") if base is not None else None

    @classmethod
    def zero(cls, coords):
        return cls(coords, [[E.ZERO] * coords.m for _ in range(coords.m)])

    def base_compat_residual(self, alg: LieAlgebroid, points) -> float:
        """max |N[A][a] - Nbase[A][i] rho[i][a]| over the points."""
        if self.base is None:
            raise GeometryError("no base-form coefficients present")
        worst = 0.0
        m, n = self.coords.m, self.coords.n
        for p in points:
            for A in range(m):
                for a in range(m):
                    lhs = E.evaluate(self.coeffs[A][a], p)
                    rhs = sum(
                        E.evaluate(self.base[A][i], p) * E.evaluate(alg.rho[i][a], p)
                        for i in range(n)
                    )
                    worst = max(worst, abs(lhs - rhs))
        return worst


class FramePair:
    """Adapted frames (delta_a, V_A) and their dual co-frames.

    Frames act on scalar expressions as first-order operators; their formal
    components live in the (X_a, V_A) basis and are used for pairing checks
    and vielbein transforms.
    """

    def __init__(self, alg: LieAlgebroid, N: NConnection):
        if alg.coords is not N.coords and alg.coords.names != N.coords.names:
            raise GeometryError("algebroid and N-connection charts differ")
        self.alg = alg
        self.N = N
        self.coords = alg.coords

    @property
    def dim(self):
        return 2 * self.coords.m

    def h_apply(self, a, f: Expr) -> Expr:
        """delta_a f = rho^i_a d_i f - N^C_a d_C f."""
        out = self.alg.x_apply(a, f)
        for C, yC in enumerate(self.coords.y):
            out = E.sub_(out, E.mul_(self.N.coeffs[C][a], E.diff(f, yC)))
        return out

    def v_apply(self, A, f: Expr) -> Expr:
        return E.diff(f, self.coords.y[A])

    def apply(self, idx, f: Expr) -> Expr:
        m = self.coords.m
        return self.h_apply(idx, f) if idx < m else self.v_apply(idx - m, f)

    def frame_components(self):
        """Rows: frame vectors, columns: formal (X_a, V_A) basis."""
        m = self.coords.m
        rows = []
        for a in range(m):
            row = [E.ONE if k == a else E.ZERO for k in range(m)]
            row += [E.neg_(self.N.coeffs[C][a]) for C in range(m)]
            rows.append(row)
        for A in range(m):
            row = [E.ZERO] * m + [E.ONE if k == A else E.ZERO for k in range(m)]
            rows.append(row)
        return rows

    def coframe_components(self):
        """Rows: co-frames (X^a, delta^B) in the formal dual basis."""
        m = self.coords.m
        rows = []
        for a in range(m):
            rows.append([E.ONE if k == a else E.ZERO for k in range(m)] + [E.ZERO] * m)
        for B in range(m):
            row = [self.N.coeffs[B][c] for c in range(m)]
            row += [E.ONE if k == B else E.ZERO for k in range(m)]
            rows.append(row)
        return rows

    def pairing_matrix(self, point):
        """<e_alpha, e^beta> evaluated at a point; identity when consistent."""
        import numpy as np

        fr = self.frame_components()
        co = self.coframe_components()
        d = self.dim
        out = np.zeros((d, d))
        for i in range(d):
            for j in range(d):
                out[i, j] = sum(
                    E.evaluate(fr[i][k], point) * E.evaluate(co[j][k], point)
                    for k in range(d)
                )
        return out


def adapted_frames(alg: LieAlgebroid, N: NConnection) -> FramePair:
    return FramePair(alg, N)


def n_curvature(alg: LieAlgebroid, N: NConnection):
    """Omega^C_ab = delta_b N^C_a - delta_a N^C_b + C^f_ab N^C_f."""
    frames = FramePair(alg, N)
    m = alg.coords.m
    omega = [[[E.ZERO] * m for _ in range(m)] for _ in range(m)]
    for C in range(m):
        for a in range(m):
            for b in range(a + 1, m):
                term = E.sub_(
                    frames.h_apply(b, N.coeffs[C][a]),
                    frames.h_apply(a, N.coeffs[C][b]),
                )
                for f in range(m):
                    term = E.add_(term, E.mul_(alg.c[f][a][b], N.coeffs[C][f]))
                omega[C][a][b] = term
                omega[C][b][a] = E.neg_(term)
    return omega


@dataclass
class AnholonomyCoeffs:
    """Frame-bracket coefficients W in three named blocks plus full form."""

    c: list          # C^f_ab
    omega: list      # Omega^C_ab
    dn: list         # dn[C][a][B] = d_B N^C_a
    m: int

    def full(self):
        """W[gamma][alpha][beta] over the 2m frame indices."""
        m = self.m
        d = 2 * m
        W = [[[E.ZERO] * d for _ in range(d)] for _ in range(d)]
        for f in range(m):
            for a in range(m):
                for b in range(m):
                    W[f][a][b] = self.c[f][a][b]
        for C in range(m):
            for a in range(m):
                for b in range(m):
                    W[m + C][a][b] = self.omega[C][a][b]
                for B in range(m):
                    W[m + C][a][m + B] = self.dn[C][a][B]
                    W[m + C][m + B][a] = E.neg_(self.dn[C][a][B])
        return W


def anholonomy(alg: LieAlgebroid, N: NConnection) -> AnholonomyCoeffs:
    m = alg.coords.m
    dn = [
        [[E.diff(N.coeffs[C][a], alg.coords.y[B]) for B in range(m)] for a in range(m)]
        for C in range(m)
    ]
    return AnholonomyCoeffs(c=alg.c, omega=n_curvature(alg, N), dn=dn, m=m)


@dataclass
class StructureReport:
    anchor_residual: float
    jacobi_residual: float
    tolerance: float
    points: int
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return (
            not self.failures
            and self.anchor_residual <= self.tolerance
            and self.jacobi_residual <= self.tolerance
        )


def verify_structure(alg: LieAlgebroid, grid, tol=1e-9) -> StructureReport:
    """Check the anchor compatibility and Jacobi-type identities on a grid.

    anchor:  rho^i_a d_i rho^j_b - rho^i_b d_i rho^j_a - rho^j_f C^f_ab = 0
    jacobi:  sum over cyclic (a,b,e) of
             rho^i_a d_i C^f_be + C^d_be C^f_ad = 0
    """
    grid = list(grid)
    if not grid:
        raise GeometryError("empty sample grid")
    n, m = alg.coords.n, alg.coords.m

    anchor_exprs = []
    for a in range(m):
        for b in range(a + 1, m):
            for j in range(n):
                lhs = E.sub_(alg.x_apply(a, alg.rho[j][b]), alg.x_apply(b, alg.rho[j][a]))
                for f in range(m):
                    lhs = E.sub_(lhs, E.mul_(alg.rho[j][f], alg.c[f][a][b]))
                anchor_exprs.append(lhs)

    jacobi_exprs = []
    for f in range(m):
        for a in range(m):
            for b in range(a + 1, m):
                for e in range(b + 1, m):
                    total = E.ZERO
                    for p, q, r in ((a, b, e), (b, e, a), (e, a, b)):
                        total = E.add_(total, alg.x_apply(p, alg.c[f][q][r]))
                        for d in range(m):
                            total = E.add_(total, E.mul_(alg.c[d][q][r], alg.c[f][p][d]))
                    jacobi_exprs.append(total)

    worst_anchor = 0.0
    worst_jacobi = 0.0
    failures = []
    for p in grid:
        try:
            for ex in anchor_exprs:
                worst_anchor = max(worst_anchor, abs(E.evaluate(ex, p)))
            for ex in jacobi_exprs:
                worst_jacobi = max(worst_jacobi, abs(E.evaluate(ex, p)))
        except EvalDomainError as err:
            failures.append((p, str(err)))
    return StructureReport(worst_anchor, worst_jacobi, tol, len(grid), failures)
