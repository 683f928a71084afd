"""Distinguished connections and their tensors in adapted frames.

A connection is stored as the full coefficient array ``gamma[al][be][ga]``
over the 2m frame indices (first m horizontal), with ``ga`` the derivative
direction: ``D_{e_ga} e_be = gamma[al][be][ga] e_al``.  d-connections have
vanishing mixed-alphabet families; the Levi-Civita reconstruction does not,
which is why the full array is the working representation.

Sign conventions (fixed once, used everywhere):

* torsion      T^al_be_ga = G^al_be_ga - G^al_ga_be + W^al_be_ga
               (vanishes exactly on the Koszul Levi-Civita connection and
               returns the structure functions for the canonical one),
* curvature    R^al_be_ga_de = e_de G^al_be_ga - e_ga G^al_be_de
               + G^ph_be_ga G^al_ph_de - G^ph_be_de G^al_ph_ga
               + G^al_be_ph W^ph_ga_de,
* Ricci        Ric_be_ga = R^al_be_ga_al (full contraction; reduces to the
               four-block form with the minus sign on the h-v block for
               d-connections).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as E
from . import symmat as SM
from .algebroid import (
    FramePair,
    GeometryError,
    LieAlgebroid,
    NConnection,
    adapted_frames,
    anholonomy,
)
from .geometry import DMetric, Lagrangian, SymplecticForm, hessian_metric, lagrange_data


class DConnection:
    def __init__(self, coords, gamma, provenance="custom"):
        self.coords = coords
        self.gamma = gamma
        self.provenance = provenance

    @property
    def dim(self):
        return 2 * self.coords.m

    def is_adapted(self):
        """True when all mixed-alphabet coefficient families vanish."""
        m = self.coords.m
        for al in range(2 * m):
            for be in range(2 * m):
                if (al < m) == (be < m):
                    continue
                for ga in range(2 * m):
                    if not E.is_zero(E.simplify(self.gamma[al][be][ga])):
                        return False
        return True

    # the four named coefficient families of a d-connection
    def l_hh(self):
        m = self.coords.m
        return [[[self.gamma[a][b][f] for f in range(m)] for b in range(m)] for a in range(m)]

    def l_vv(self):
        m = self.coords.m
        return [
            [[self.gamma[m + A][m + B][f] for f in range(m)] for B in range(m)] for A in range(m)
        ]

    def b_hh(self):
        m = self.coords.m
        return [
            [[self.gamma[a][b][m + C] for C in range(m)] for b in range(m)] for a in range(m)
        ]

    def b_vv(self):
        m = self.coords.m
        return [
            [[self.gamma[m + A][m + B][m + C] for C in range(m)] for B in range(m)]
            for A in range(m)
        ]


def _dconnection_from_families(coords, l_hh, l_vv, b_hh, b_vv, provenance):
    m = coords.m
    gamma = SM.zeros(2 * m, 2 * m, 2 * m)
    for a in range(m):
        for b in range(m):
            for f in range(m):
                gamma[a][b][f] = l_hh[a][b][f]
                gamma[m + a][m + b][f] = l_vv[a][b][f]
                gamma[a][b][m + f] = b_hh[a][b][f]
                gamma[m + a][m + b][m + f] = b_vv[a][b][f]
    return DConnection(coords, gamma, provenance)


def canonical_dconnection(g: DMetric, N: NConnection, alg: LieAlgebroid) -> DConnection:
    """Metric-compatible d-connection with prescribed torsion.

    h-h block: Koszul formula in the delta-frame (symmetric in its lower
    indices, so the h-h torsion reduces to the structure functions);
    the other three families follow the standard adapted formulas.
    """
    coords = alg.coords
    m = coords.m
    frames = adapted_frames(alg, N)
    gh, gv = g.hblock, g.vblock
    ghi, gvi = g.h_inverse(), g.v_inverse()
    half = E.Const(0.5)

    dgh_h = [[[frames.h_apply(f, gh[b][e]) for e in range(m)] for b in range(m)] for f in range(m)]
    dgh_v = [[[frames.v_apply(C, gh[b][e]) for e in range(m)] for b in range(m)] for C in range(m)]
    dgv_h = [[[frames.h_apply(f, gv[B][C]) for C in range(m)] for B in range(m)] for f in range(m)]
    dgv_v = [[[frames.v_apply(D, gv[B][C]) for C in range(m)] for B in range(m)] for D in range(m)]
    dn_v = [
        [[frames.v_apply(B, N.coeffs[A][f]) for f in range(m)] for A in range(m)]
        for B in range(m)
    ]

    l_hh = SM.zeros(m, m, m)
    for a in range(m):
        for b in range(m):
            for f in range(b, m):
                acc = E.ZERO
                for e in range(m):
                    koszul = E.sub_(
                        E.add_(dgh_h[f][b][e], dgh_h[b][f][e]), dgh_h[e][b][f]
                    )
                    acc = E.add_(acc, E.mul_(ghi[a][e], koszul))
                entry = E.simplify(E.mul_(half, acc))
                l_hh[a][b][f] = entry
                l_hh[a][f][b] = entry

    l_vv = SM.zeros(m, m, m)
    for A in range(m):
        for B in range(m):
            for f in range(m):
                acc = dn_v[B][A][f]
                for C in range(m):
                    inner = dgv_h[f][B][C]
                    for D in range(m):
                        inner = E.sub_(inner, E.mul_(gv[D][C], dn_v[B][D][f]))
                        inner = E.sub_(inner, E.mul_(gv[D][B], dn_v[C][D][f]))
                    acc = E.add_(acc, E.mul_(half, E.mul_(gvi[A][C], inner)))
                l_vv[A][B][f] = E.simplify(acc)

    b_hh = SM.zeros(m, m, m)
    for a in range(m):
        for b in range(m):
            for C in range(m):
                acc = E.ZERO
                for e in range(m):
                    acc = E.add_(acc, E.mul_(ghi[a][e], dgh_v[C][b][e]))
                b_hh[a][b][C] = E.simplify(E.mul_(half, acc))

    b_vv = SM.zeros(m, m, m)
    for A in range(m):
        for B in range(m):
            for C in range(B, m):
                acc = E.ZERO
                for D in range(m):
                    koszul = E.sub_(
                        E.add_(dgv_v[C][B][D], dgv_v[B][C][D]), dgv_v[D][B][C]
                    )
                    acc = E.add_(acc, E.mul_(gvi[A][D], koszul))
                entry = E.simplify(E.mul_(half, acc))
                b_vv[A][B][C] = entry
                b_vv[A][C][B] = entry

    return _dconnection_from_families(coords, l_hh, l_vv, b_hh, b_vv, "canonical")


def auxiliary_dconnection(g: DMetric, N: NConnection, alg: LieAlgebroid) -> DConnection:
    """Exact-solution variant; coincides with the canonical coefficients
    (the symmetric h-h block is forced by the prescribed-torsion contract,
    see the package notes) but is tagged separately."""
    conn = canonical_dconnection(g, N, alg)
    return DConnection(conn.coords, conn.gamma, "custom")


def normal_dconnection(L: Lagrangian, alg: LieAlgebroid) -> DConnection:
    """The couple (h-Koszul, v-Koszul) of the canonical metric, copied onto
    the mixed families by the h/v index identification."""
    g, N, frames = lagrange_data(L, alg)
    base = canonical_dconnection(g, N, alg)
    m = alg.coords.m
    l_hh = base.l_hh()
    b_vv = base.b_vv()
    return _dconnection_from_families(alg.coords, l_hh, l_hh, b_vv, b_vv, "normal")


def symplectic_dconnection(base: DConnection, theta: SymplecticForm) -> DConnection:
    """Correct ``base`` so the almost symplectic form is parallel.

    gamma -> gamma - (1/2) theta^{al,ep} (D_ga theta)_{be,ep}; the two
    halves of the correction cancel in D(theta), which therefore vanishes
    identically for the result.
    """
    coords = base.coords
    d = base.dim
    th = theta.matrix
    thi = theta.inverse()
    half = E.Const(0.5)
    dtheta = _covariant_two_form_derivative(base, theta, coords)
    gamma = SM.zeros(d, d, d)
    for al in range(d):
        for be in range(d):
            for ga in range(d):
                corr = E.ZERO
                for ep in range(d):
                    if E.is_zero(thi[al][ep]):
                        continue
                    corr = E.add_(corr, E.mul_(thi[al][ep], dtheta[be][ep][ga]))
                gamma[al][be][ga] = E.simplify(
                    E.sub_(base.gamma[al][be][ga], E.mul_(half, corr))
                )
    return DConnection(coords, gamma, "symplectic-family")


def _covariant_two_form_derivative(conn: DConnection, theta: SymplecticForm, coords):
    """(D_ga theta)_{be,ep} for all indices, as a [be][ep][ga] array."""
    d = conn.dim
    frames = _frames_of(conn, theta)
    th = theta.matrix
    out = SM.zeros(d, d, d)
    for be in range(d):
        for ep in range(d):
            for ga in range(d):
                acc = frames.apply(ga, th[be][ep])
                for ph in range(d):
                    acc = E.sub_(acc, E.mul_(conn.gamma[ph][be][ga], th[ph][ep]))
                    acc = E.sub_(acc, E.mul_(conn.gamma[ph][ep][ga], th[be][ph]))
                out[be][ep][ga] = acc
    return out


_FRAME_CACHE = {}


def _frames_of(conn, carrier):
    """Connections do not carry frames; operations that need frame
    derivatives receive (alg, N) explicitly.  This hook only serves
    symplectic corrections, which are frame-local: we stash the frame pair
    on the theta carrier when building it through the public API."""
    frames = getattr(carrier, "frames", None)
    if frames is None:
        raise GeometryError(
            "symplectic form lacks attached frames; build it via "
            "compatible_symplectic_pair or set form.frames"
        )
    return frames


def compatible_symplectic_pair(g: DMetric, N: NConnection, alg: LieAlgebroid, J=None):
    """(theta, frames) with frames attached for symplectic corrections."""
    from .geometry import almost_complex, symplectic_form

    J = J or almost_complex(N)
    theta = symplectic_form(g, J)
    theta.frames = adapted_frames(alg, N)
    return theta


def symplectic_family(theta_conn: DConnection, theta: SymplecticForm, Y) -> DConnection:
    """All theta-compatible d-connections: add the projected deformation
    gamma -> gamma + (1/2)(Y^al_be_ga - theta_{be,ep} theta^{de,al} Y^ep_de_ga)."""
    coords = theta_conn.coords
    d = theta_conn.dim
    th, thi = theta.matrix, theta.inverse()
    half = E.Const(0.5)
    gamma = SM.zeros(d, d, d)
    for al in range(d):
        for be in range(d):
            for ga in range(d):
                acc = Y[al][be][ga]
                for ep in range(d):
                    if E.is_zero(th[be][ep]):
                        continue
                    for de in range(d):
                        if E.is_zero(thi[de][al]) or E.is_zero(Y[ep][de][ga]):
                            continue
                        acc = E.sub_(
                            acc, E.mul_(E.mul_(th[be][ep], thi[de][al]), Y[ep][de][ga])
                        )
                gamma[al][be][ga] = E.simplify(
                    E.add_(theta_conn.gamma[al][be][ga], E.mul_(half, acc))
                )
    return DConnection(coords, gamma, "symplectic-family")


# ---------------------------------------------------------------------------
# torsion / curvature / contractions
# ---------------------------------------------------------------------------

@dataclass
class TorsionTensor:
    full: list   # T[al][be][ga]
    m: int

    @property
    def t_hh(self):  # T^a_bf
        m = self.m
        return [[[self.full[a][b][f] for f in range(m)] for b in range(m)] for a in range(m)]

    @property
    def t_hv(self):  # T^a_bA
        m = self.m
        return [
            [[self.full[a][b][m + A] for A in range(m)] for b in range(m)] for a in range(m)
        ]

    @property
    def t_omega(self):  # T^A_ba (the curvature block)
        m = self.m
        return [
            [[self.full[m + A][b][a] for a in range(m)] for b in range(m)] for A in range(m)
        ]

    @property
    def t_mixed(self):  # coefficient d_B N^A_a - L^A_Ba (the (a, B) slot)
        m = self.m
        return [
            [[self.full[m + A][a][m + B] for a in range(m)] for B in range(m)]
            for A in range(m)
        ]

    @property
    def t_vv(self):  # T^A_BC
        m = self.m
        return [
            [[self.full[m + A][m + B][m + C] for C in range(m)] for B in range(m)]
            for A in range(m)
        ]


def torsion(conn: DConnection, alg: LieAlgebroid, N: NConnection) -> TorsionTensor:
    W = anholonomy(alg, N).full()
    d = conn.dim
    T = SM.zeros(d, d, d)
    for al in range(d):
        for be in range(d):
            for ga in range(be + 1, d):
                entry = E.simplify(
                    E.add_(
                        E.sub_(conn.gamma[al][be][ga], conn.gamma[al][ga][be]),
                        W[al][be][ga],
                    )
                )
                T[al][be][ga] = entry
                T[al][ga][be] = E.neg_(entry)
    return TorsionTensor(T, alg.coords.m)


@dataclass
class CurvatureTensor:
    full: list   # R[al][be][ga][de]
    m: int

    def block(self, al_h, be_h, ga_h, de_h):
        m = self.m

        def off(flag):
            return 0 if flag else m

        o1, o2, o3, o4 = off(al_h), off(be_h), off(ga_h), off(de_h)
        return [
            [
                [
                    [self.full[o1 + i][o2 + j][o3 + k][o4 + l] for l in range(m)]
                    for k in range(m)
                ]
                for j in range(m)
            ]
            for i in range(m)
        ]


def curvature(conn: DConnection, alg: LieAlgebroid, N: NConnection) -> CurvatureTensor:
    frames = adapted_frames(alg, N)
    W = anholonomy(alg, N).full()
    d = conn.dim
    G = conn.gamma
    dG = [
        [[[frames.apply(de, G[al][be][ga]) for de in range(d)] for ga in range(d)] for be in range(d)]
        for al in range(d)
    ]
    R = SM.zeros(d, d, d, d)
    for al in range(d):
        for be in range(d):
            for ga in range(d):
                for de in range(ga + 1, d):
                    acc = E.sub_(dG[al][be][ga][de], dG[al][be][de][ga])
                    for ph in range(d):
                        acc = E.add_(acc, E.mul_(G[ph][be][ga], G[al][ph][de]))
                        acc = E.sub_(acc, E.mul_(G[ph][be][de], G[al][ph][ga]))
                        if not E.is_zero(W[ph][ga][de]):
                            acc = E.add_(acc, E.mul_(G[al][be][ph], W[ph][ga][de]))
                    entry = E.simplify(acc)
                    R[al][be][ga][de] = entry
                    R[al][be][de][ga] = E.neg_(entry)
    return CurvatureTensor(R, alg.coords.m)


@dataclass
class RicciTensor:
    full: list   # Ric[be][ga] over 2m indices
    m: int

    @property
    def hh(self):
        m = self.m
        return [[self.full[a][b] for b in range(m)] for a in range(m)]

    @property
    def hv(self):  # R_aA
        m = self.m
        return [[self.full[a][m + A] for A in range(m)] for a in range(m)]

    @property
    def vh(self):  # R_Aa
        m = self.m
        return [[self.full[m + A][a] for a in range(m)] for A in range(m)]

    @property
    def vv(self):
        m = self.m
        return [[self.full[m + A][m + B] for B in range(m)] for A in range(m)]


def ricci(curv: CurvatureTensor) -> RicciTensor:
    d = 2 * curv.m
    out = SM.zeros(d, d)
    for be in range(d):
        for ga in range(d):
            acc = E.ZERO
            for al in range(d):
                acc = E.add_(acc, curv.full[al][be][ga][al])
            out[be][ga] = E.simplify(acc)
    return RicciTensor(out, curv.m)


def ricci_blocks_by_contraction(curv: CurvatureTensor):
    """The displayed four-block contractions (independent code path used as
    a consistency oracle for d-connections): R_ab = R^c_abc,
    R_aA = -R^c_acA, R_Aa = R^B_AaB, R_AB = R^C_ABC."""
    m = curv.m
    R = curv.full
    hh = [[E.ZERO] * m for _ in range(m)]
    hv = [[E.ZERO] * m for _ in range(m)]
    vh = [[E.ZERO] * m for _ in range(m)]
    vv = [[E.ZERO] * m for _ in range(m)]
    for a in range(m):
        for b in range(m):
            acc = E.ZERO
            for c in range(m):
                acc = E.add_(acc, R[c][a][b][c])
            hh[a][b] = acc
        for A in range(m):
            acc = E.ZERO
            for c in range(m):
                acc = E.sub_(acc, R[c][a][c][m + A])
            hv[a][A] = acc
    for A in range(m):
        for a in range(m):
            acc = E.ZERO
            for B in range(m):
                acc = E.add_(acc, R[m + B][m + A][a][m + B])
            vh[A][a] = acc
        for B in range(m):
            acc = E.ZERO
            for C in range(m):
                acc = E.add_(acc, R[m + C][m + A][m + B][m + C])
            vv[A][B] = acc
    return hh, hv, vh, vv


def scalar_curvature(ric: RicciTensor, g: DMetric) -> E.Expr:
    m = ric.m
    ghi, gvi = g.h_inverse(), g.v_inverse()
    acc = E.ZERO
    for a in range(m):
        for b in range(m):
            acc = E.add_(acc, E.mul_(ghi[a][b], ric.full[a][b]))
    for A in range(m):
        for B in range(m):
            acc = E.add_(acc, E.mul_(gvi[A][B], ric.full[m + A][m + B]))
    return E.simplify(acc)


def einstein_tensor(ric: RicciTensor, sR: E.Expr, g: DMetric):
    d = 2 * ric.m
    gfull = g.full()
    half = E.Const(0.5)
    out = SM.zeros(d, d)
    for i in range(d):
        for j in range(d):
            out[i][j] = E.simplify(
                E.sub_(ric.full[i][j], E.mul_(E.mul_(half, gfull[i][j]), sR))
            )
    return out


# ---------------------------------------------------------------------------
# Levi-Civita reconstruction and distortions
# ---------------------------------------------------------------------------

def levi_civita(g: DMetric, N: NConnection, alg: LieAlgebroid) -> DConnection:
    """Koszul formula in the adapted frame, with the anholonomy terms.

    The result is torsion-free and metric in the exact algebraic sense; it
    is not adapted (mixed-alphabet coefficients appear for W != 0).
    """
    frames = adapted_frames(alg, N)
    W = anholonomy(alg, N).full()
    d = 2 * alg.coords.m
    gfull = g.full()
    ginv = g.full_inverse()
    half = E.Const(0.5)

    dg = [
        [[frames.apply(nu, gfull[mu][la]) for nu in range(d)] for la in range(d)]
        for mu in range(d)
    ]
    low = SM.zeros(d, d, d)
    for la in range(d):
        for mu in range(d):
            for nu in range(d):
                acc = E.sub_(E.add_(dg[mu][la][nu], dg[nu][la][mu]), dg[nu][mu][la])
                for si in range(d):
                    if not E.is_zero(W[si][nu][mu]):
                        acc = E.add_(acc, E.mul_(W[si][nu][mu], gfull[si][la]))
                    if not E.is_zero(W[si][mu][la]):
                        acc = E.sub_(acc, E.mul_(W[si][mu][la], gfull[si][nu]))
                    if not E.is_zero(W[si][la][nu]):
                        acc = E.add_(acc, E.mul_(W[si][la][nu], gfull[si][mu]))
                low[la][mu][nu] = E.mul_(half, acc)
    gamma = SM.zeros(d, d, d)
    for al in range(d):
        for mu in range(d):
            for nu in range(d):
                acc = E.ZERO
                for la in range(d):
                    if not E.is_zero(ginv[al][la]):
                        acc = E.add_(acc, E.mul_(ginv[al][la], low[la][mu][nu]))
                gamma[al][mu][nu] = E.simplify(acc)
    return DConnection(alg.coords, gamma, "levi-civita-reconstructed")


def distortion(conn: DConnection, g: DMetric, alg: LieAlgebroid, N: NConnection):
    """Z with K = conn + Z the exact Levi-Civita connection.

    Requires the canonical connection as the base (provenance check).  The
    Z coefficients reproduce the displayed block formulas in the zero
    bracket case and additionally carry the h-h contorsion for C != 0.
    """
    if conn.provenance != "canonical":
        raise GeometryError(f"distortion needs the canonical connection, got {conn.provenance!r}")
    K = levi_civita(g, N, alg)
    d = conn.dim
    Z = SM.zeros(d, d, d)
    for al in range(d):
        for be in range(d):
            for ga in range(d):
                Z[al][be][ga] = E.simplify(E.sub_(K.gamma[al][be][ga], conn.gamma[al][be][ga]))
    return Z, K


def distorted_ricci(ric_hat: RicciTensor, Z, conn: DConnection, alg: LieAlgebroid, N: NConnection):
    """Ricci distortion Zic with Ric(conn) + Zic = Ric(conn + Z), expanded
    exactly (the quadratic/cross/W terms of the contraction formula)."""
    frames = adapted_frames(alg, N)
    W = anholonomy(alg, N).full()
    d = conn.dim
    G = conn.gamma
    Zic = SM.zeros(d, d)
    for be in range(d):
        for ga in range(d):
            acc = E.ZERO
            for al in range(d):
                acc = E.add_(acc, frames.apply(al, Z[al][be][ga]))
                acc = E.sub_(acc, frames.apply(ga, Z[al][be][al]))
                for ph in range(d):
                    acc = E.add_(acc, E.mul_(Z[ph][be][ga], Z[al][ph][al]))
                    acc = E.sub_(acc, E.mul_(Z[ph][be][al], Z[al][ph][ga]))
                    acc = E.add_(acc, E.mul_(G[ph][be][ga], Z[al][ph][al]))
                    acc = E.sub_(acc, E.mul_(G[ph][be][al], Z[al][ph][ga]))
                    acc = E.add_(acc, E.mul_(Z[ph][be][ga], G[al][ph][al]))
                    acc = E.sub_(acc, E.mul_(Z[ph][be][al], G[al][ph][ga]))
                    if not E.is_zero(W[ph][ga][al]):
                        acc = E.add_(acc, E.mul_(Z[al][be][ph], W[ph][ga][al]))
            Zic[be][ga] = E.simplify(acc)
    ric_K = [
        [E.add_(ric_hat.full[be][ga], Zic[be][ga]) for ga in range(d)] for be in range(d)
    ]
    return Zic, ric_K


def metric_compat_residual(conn: DConnection, g: DMetric, alg: LieAlgebroid, N: NConnection, points):
    """max |D_nu g_mu_la| over the grid, all index combinations."""
    frames = adapted_frames(alg, N)
    d = conn.dim
    gfull = g.full()
    worst = 0.0
    exprs = []
    for mu in range(d):
        for la in range(mu, d):
            for nu in range(d):
                acc = frames.apply(nu, gfull[mu][la])
                for ph in range(d):
                    acc = E.sub_(acc, E.mul_(conn.gamma[ph][mu][nu], gfull[ph][la]))
                    acc = E.sub_(acc, E.mul_(conn.gamma[ph][la][nu], gfull[mu][ph]))
                exprs.append(E.simplify(acc))
    for p in points:
        for ex in exprs:
            worst = max(worst, abs(E.evaluate(ex, p)))
    return worst


def curvature_reading_disagreement(conn: DConnection, alg: LieAlgebroid, N: NConnection, points):
    """Numeric gap between the uniform coefficient formula and the compact
    covariant-derivative reading of the two mixed curvature blocks (they
    differ by torsion terms; reported, never silently chosen)."""
    frames = adapted_frames(alg, N)
    m = alg.coords.m
    G = conn.gamma
    curv = curvature(conn, alg, N)
    dn = anholonomy(alg, N).dn
    worst = 0.0
    exprs = []
    for a in range(m):
        for e in range(m):
            for b in range(m):
                for A in range(m):
                    # compact reading: V_A L^a_eb - D_b B^a_eA + B^a_eD T^D_bA
                    acc = frames.v_apply(A, G[a][e][b])
                    cov = frames.h_apply(b, G[a][e][m + A])
                    for dd in range(m):
                        cov = E.add_(cov, E.mul_(G[a][dd][b], G[dd][e][m + A]))
                        cov = E.sub_(cov, E.mul_(G[dd][e][b], G[a][dd][m + A]))
                        cov = E.sub_(
                            cov, E.mul_(G[m + dd][m + A][b], G[a][e][m + dd])
                        )
                    acc = E.sub_(acc, cov)
                    for D in range(m):
                        t = E.sub_(G[m + D][m + A][b], dn[D][b][A])  # T^D_bA
                        acc = E.add_(acc, E.mul_(G[a][e][m + D], t))
                    exprs.append(E.sub_(curv.full[a][e][b][m + A], acc))
    for p in points:
        for ex in exprs:
            worst = max(worst, abs(E.evaluate(ex, p)))
    return worst
