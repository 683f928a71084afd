"""Discretized curvature flows of d-metrics, integral functionals, and the
thermodynamic triple.

States live on a uniform grid over a compact box; spatial derivatives come
from degree-2 local polynomial fits (central differences inside, one-sided
quadratic at the edges, exactly numpy.gradient with edge_order=2).  The
tensor formulas mirror the symbolic module entry for entry, evaluated with
vectorized einsums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .algebroid import GeometryError, LieAlgebroid, NConnection
from .geometry import DMetric


class FlowError(GeometryError):
    pass


@dataclass
class GridSpec:
    box: list                 # one [lo, hi] per coordinate
    resolution: list          # nodes (midpoint: cells) per coordinate
    rule: str = "midpoint"
    cap: int = 10 ** 6

    def __post_init__(self):
        if self.rule not in ("midpoint", "trapezoid"):
            raise FlowError(f"unknown quadrature rule {self.rule!r}")
        for (lo, hi), r in zip(self.box, self.resolution):
            if not lo < hi:
                raise FlowError(f"empty axis [{lo}, {hi}]")
            if r < 2:
                raise FlowError("need at least 2 nodes per axis")
        total = math.prod(self.resolution)
        if total > self.cap:
            raise FlowError(f"grid of {total} points exceeds cap {self.cap}")

    def axes(self):
        out = []
        for (lo, hi), r in zip(self.box, self.resolution):
            if self.rule == "midpoint":
                h = (hi - lo) / r
                out.append(lo + h * (np.arange(r) + 0.5))
            else:
                out.append(np.linspace(lo, hi, r))
        return out

    def spacing(self):
        return [ax[1] - ax[0] for ax in self.axes()]

    def weights(self):
        """Per-axis quadrature weights (product rule)."""
        out = []
        for (lo, hi), r in zip(self.box, self.resolution):
            if self.rule == "midpoint":
                out.append(np.full(r, (hi - lo) / r))
            else:
                h = (hi - lo) / (r - 1)
                w = np.full(r, h)
                w[0] = w[-1] = h / 2
                out.append(w)
        return out

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")


def _eval_grid(exprs, coords, mesh):
    fn = E.compile_fns([coords.parse(e) for e in exprs], coords.names)
    vals = fn(*mesh)
    shape = mesh[0].shape
    return [np.broadcast_to(np.asarray(v, dtype=float), shape).copy() for v in vals]


class FlowState:
    """Grid samples of (g_h, g_v, N, f) plus the algebroid data."""

    def __init__(self, alg: LieAlgebroid, grid: GridSpec, gh, gv, N, f, chi=0.0,
                 diagnostics=None):
        self.alg = alg
        self.grid = grid
        self.coords = alg.coords
        self.gh = gh
        self.gv = gv
        self.N = N         # N[..., A, a]
        self.f = f
        self.chi = chi
        self.diagnostics = diagnostics or {}
        self._geom = None

    @property
    def shape(self):
        return self.f.shape

    def copy_with(self, **kw):
        return FlowState(
            self.alg,
            self.grid,
            kw.get("gh", self.gh),
            kw.get("gv", self.gv),
            kw.get("N", self.N),
            kw.get("f", self.f),
            kw.get("chi", self.chi),
            kw.get("diagnostics", None),
        )

    def validate(self):
        for name, arr in (("gh", self.gh), ("gv", self.gv), ("N", self.N), ("f", self.f)):
            if not np.all(np.isfinite(arr)):
                idx = np.argwhere(~np.isfinite(arr))[0]
                raise FlowError(f"non-finite {name} at grid index {tuple(idx)}")
        for name, block in (("gh", self.gh), ("gv", self.gv)):
            if not np.allclose(block, np.swapaxes(block, -1, -2), atol=1e-12):
                raise FlowError(f"{name} block not symmetric")
            det = np.linalg.det(block)
            if np.any(np.abs(det) < 1e-12):
                idx = np.argwhere(np.abs(det) < 1e-12)[0]
                raise FlowError(f"degenerate {name} block at grid index {tuple(idx)}")
        return self

    # -- sampled algebroid data (cached) ------------------------------------
    def _algebra_samples(self):
        if self._geom is None:
            mesh = self.grid.mesh()
            co = self.coords
            n, m = co.n, co.m
            rho_flat = _eval_grid(
                [self.alg.rho[i][a] for i in range(n) for a in range(m)], co, mesh
            )
            c_flat = _eval_grid(
                [self.alg.c[fL][a][b] for fL in range(m) for a in range(m) for b in range(m)],
                co,
                mesh,
            )
            rho = np.stack(rho_flat, axis=-1).reshape(*self.shape, n, m)
            c = np.stack(c_flat, axis=-1).reshape(*self.shape, m, m, m)
            self._geom = (rho, c)
        return self._geom

    def interpolator(self, arr):
        from scipy.interpolate import RegularGridInterpolator

        return RegularGridInterpolator(self.grid.axes(), arr)


def sample_state(g: DMetric, N: NConnection, f, grid: GridSpec, alg: LieAlgebroid) -> FlowState:
    co = alg.coords
    n, m = co.n, co.m
    if len(grid.box) != n + m:
        raise FlowError("grid must cover all coordinates")
    mesh = grid.mesh()
    try:
        gh_flat = _eval_grid([g.hblock[a][b] for a in range(m) for b in range(m)], co, mesh)
        gv_flat = _eval_grid([g.vblock[A][B] for A in range(m) for B in range(m)], co, mesh)
        n_flat = _eval_grid([N.coeffs[A][a] for A in range(m) for a in range(m)], co, mesh)
        f_arr = _eval_grid([f if f is not None else E.ZERO], co, mesh)[0]
    except E.EvalDomainError as err:
        raise FlowError(f"sampling failed: {err}") from err
    shape = mesh[0].shape
    gh = np.stack(gh_flat, axis=-1).reshape(*shape, m, m)
    gv = np.stack(gv_flat, axis=-1).reshape(*shape, m, m)
    Narr = np.stack(n_flat, axis=-1).reshape(*shape, m, m)
    return FlowState(alg, grid, gh, gv, Narr, f_arr, 0.0).validate()


# ---------------------------------------------------------------------------
# numeric kernel: frame derivatives, connections, Ricci
# ---------------------------------------------------------------------------

def _pad_axis(F, axis):
    """Two ghost layers of cubic extrapolation so every original node gets a
    pure central difference (uniform accuracy; avoids edge kinks that the
    antidiffusive scaling-function equation would amplify)."""
    idx = [slice(None)] * F.ndim

    def take(i):
        idx2 = list(idx)
        idx2[axis] = i
        return F[tuple(idx2)]

    ghosts_lo = [
        4 * take(0) - 6 * take(1) + 4 * take(2) - take(3),
        10 * take(0) - 20 * take(1) + 15 * take(2) - 4 * take(3),
    ]
    ghosts_hi = [
        4 * take(-1) - 6 * take(-2) + 4 * take(-3) - take(-4),
        10 * take(-1) - 20 * take(-2) + 15 * take(-3) - 4 * take(-4),
    ]
    lo = np.stack([ghosts_lo[1], ghosts_lo[0]], axis=axis)
    hi = np.stack([ghosts_hi[0], ghosts_hi[1]], axis=axis)
    return np.concatenate([lo, F, hi], axis=axis)


def _partials(state, F):
    """d_k F along every coordinate axis; returns (*grid, ncoords, *rest)."""
    gs = state.shape
    ng = len(gs)
    rest = F.shape[ng:]
    Ff = F.reshape(*gs, -1)
    h = state.grid.spacing()
    parts = []
    for k in range(ng):
        if gs[k] >= 4:
            padded = _pad_axis(Ff, k)
            sl = [slice(None)] * padded.ndim
            sl[k] = slice(2, 2 + gs[k])
            parts.append(np.gradient(padded, h[k], axis=k)[tuple(sl)])
        else:
            parts.append(
                np.gradient(Ff, h[k], axis=k, edge_order=2 if gs[k] >= 3 else 1)
            )
    out = np.stack(parts, axis=ng)
    return out.reshape(*gs, ng, *rest)


def frame_apply(state, F):
    """(e_al F) for the 2m adapted frames; returns (*grid, 2m, *rest)."""
    co = state.coords
    n, m = co.n, co.m
    gs = state.shape
    ng = len(gs)
    rest = F.shape[ng:]
    d = _partials(state, F.reshape(*gs, -1))
    dx, dy = d[..., :n, :], d[..., n:, :]
    rho, _ = state._algebra_samples()
    X = np.einsum("...ir,...ia->...ar", dx, rho)
    delta = X - np.einsum("...cr,...ca->...ar", dy, state.N)
    out = np.concatenate([delta, dy], axis=-2)
    return out.reshape(*gs, 2 * m, *rest)


def anholonomy_numeric(state):
    """Full W[..., gamma, alpha, beta] over the 2m frame indices."""
    m = state.coords.m
    d = 2 * m
    rho, c = state._algebra_samples()
    dN = frame_apply(state, state.N)          # (*g, 2m, A, a)
    dN_h, dN_v = dN[..., :m, :, :], dN[..., m:, :, :]
    # Omega^C_ab = delta_b N^C_a - delta_a N^C_b + C^f_ab N^C_f
    omega = (
        np.einsum("...bca->...cab", dN_h)
        - np.einsum("...acb->...cab", dN_h)
        + np.einsum("...fab,...cf->...cab", c, state.N)
    )
    W = np.zeros((*state.shape, d, d, d))
    W[..., :m, :m, :m] = c
    W[..., m:, :m, :m] = omega
    dn = np.einsum("...bca->...cab", dN_v)    # dn[C, a, B]
    W[..., m:, :m, m:] = dn
    W[..., m:, m:, :m] = -np.swapaxes(dn, -1, -2)
    return W


def canonical_gamma(state):
    """Numeric canonical d-connection coefficients (*grid, 2m, 2m, 2m)."""
    m = state.coords.m
    d = 2 * m
    gh, gv, N = state.gh, state.gv, state.N
    ghi = np.linalg.inv(gh)
    gvi = np.linalg.inv(gv)
    dgh = frame_apply(state, gh)              # (*g, 2m, b, e)
    dgv = frame_apply(state, gv)
    dN = frame_apply(state, N)
    dgh_h, dgh_v = dgh[..., :m, :, :], dgh[..., m:, :, :]
    dgv_h, dgv_v = dgv[..., :m, :, :], dgv[..., m:, :, :]
    dn_v = dN[..., m:, :, :]                  # (*g, B, A, f)

    koszul_h = (
        np.einsum("...fbe->...bfe", dgh_h)
        + np.einsum("...bfe->...bfe", dgh_h)
        - np.einsum("...ebf->...bfe", dgh_h)
    )
    l_hh = 0.5 * np.einsum("...ae,...bfe->...abf", ghi, koszul_h)

    inner = (
        np.einsum("...fBC->...BCf", dgv_h)
        - np.einsum("...DC,...BDf->...BCf", gv, np.einsum("...BDf->...BDf", dn_v))
        - np.einsum("...DB,...CDf->...BCf", gv, np.einsum("...CDf->...CDf", dn_v))
    )
    l_vv = np.einsum("...BAf->...ABf", dn_v) + 0.5 * np.einsum(
        "...AC,...BCf->...ABf", gvi, inner
    )

    b_hh = 0.5 * np.einsum("...ae,...Cbe->...abC", ghi, dgh_v)

    koszul_v = (
        np.einsum("...CBD->...BCD", dgv_v)
        + np.einsum("...BCD->...BCD", dgv_v)
        - np.einsum("...DBC->...BCD", dgv_v)
    )
    b_vv = 0.5 * np.einsum("...AD,...BCD->...ABC", gvi, koszul_v)

    G = np.zeros((*state.shape, d, d, d))
    G[..., :m, :m, :m] = l_hh
    G[..., m:, m:, :m] = l_vv
    G[..., :m, :m, m:] = b_hh
    G[..., m:, m:, m:] = b_vv
    return G


def normal_gamma(state):
    """Cartan-type normal connection for equal-block states: the h/v Koszul
    couple copied onto the mixed families."""
    if not np.allclose(state.gh, state.gv, atol=1e-10):
        raise FlowError("normal connection requires equal h/v blocks")
    m = state.coords.m
    G = canonical_gamma(state)
    out = np.array(G)
    out[..., m:, m:, :m] = G[..., :m, :m, :m]
    out[..., :m, :m, m:] = G[..., m:, m:, m:]
    return out


def full_metric(state):
    m = state.coords.m
    d = 2 * m
    g = np.zeros((*state.shape, d, d))
    g[..., :m, :m] = state.gh
    g[..., m:, m:] = state.gv
    return g


def lc_gamma(state, W=None):
    """Levi-Civita coefficients in the adapted frame (full Koszul with W)."""
    if W is None:
        W = anholonomy_numeric(state)
    g = full_metric(state)
    ginv = np.linalg.inv(g)
    dg = frame_apply(state, g)                # (*g, nu, mu, la)
    low = 0.5 * (
        np.einsum("...nml->...lmn", dg)
        + np.einsum("...mnl->...lmn", dg)
        - np.einsum("...lnm->...lmn", dg)
        + np.einsum("...snm,...sl->...lmn", W, g)
        - np.einsum("...sml,...sn->...lmn", W, g)
        + np.einsum("...sln,...sm->...lmn", W, g)
    )
    return np.einsum("...al,...lmn->...amn", ginv, low)


def ricci_numeric(state, gamma, W=None):
    """Full-contraction Ricci of a coefficient field (*grid, d, d, d)."""
    if W is None:
        W = anholonomy_numeric(state)
    dG = frame_apply(state, gamma)            # (*g, dir, al, be, ga)
    t1 = np.einsum("...aabg->...bg", dG)
    t2 = np.einsum("...gaba->...bg", dG)
    t3 = np.einsum("...pbg,...apa->...bg", gamma, gamma)
    t4 = np.einsum("...pba,...apg->...bg", gamma, gamma)
    t5 = np.einsum("...abp,...pga->...bg", gamma, W)
    return t1 - t2 + t3 - t4 + t5


def scalar_curvature_numeric(state, ric):
    m = state.coords.m
    ghi = np.linalg.inv(state.gh)
    gvi = np.linalg.inv(state.gv)
    return np.einsum("...ab,...ab->...", ghi, ric[..., :m, :m]) + np.einsum(
        "...AB,...AB->...", gvi, ric[..., m:, m:]
    )


def covariant_hessian(state, gamma, f):
    """Hess[be, al] = e_al e_be f - Gamma^ph_be_al e_ph f."""
    ff1 = frame_apply(state, f)               # (*g, d)
    ff2 = frame_apply(state, ff1)             # (*g, dir, be)
    return np.einsum("...ab->...ba", ff2) - np.einsum("...pba,...p->...ba", gamma, ff1)


def gradient_norms(state, f):
    """(|hDf|^2, |vDf|^2) with indices raised by the block metrics."""
    m = state.coords.m
    ff1 = frame_apply(state, f)
    ghi = np.linalg.inv(state.gh)
    gvi = np.linalg.inv(state.gv)
    hn = np.einsum("...ab,...a,...b->...", ghi, ff1[..., :m], ff1[..., :m])
    vn = np.einsum("...AB,...A,...B->...", gvi, ff1[..., m:], ff1[..., m:])
    return hn, vn


def _geometry_for_mode(state, mode):
    W = anholonomy_numeric(state)
    if mode == "canonical":
        gamma = canonical_gamma(state)
    elif mode == "cartan":
        gamma = lc_gamma(state, W)
    elif mode == "symplectic":
        gamma = normal_gamma(state)
    else:
        raise FlowError(f"unknown connection mode {mode!r}")
    ric = ricci_numeric(state, gamma, W)
    return gamma, ric


def stability_bound(state, ric):
    m = state.coords.m
    eig_h = np.linalg.eigvalsh(state.gh).min()
    eig_v = np.linalg.eigvalsh(state.gv).min()
    rmax = np.abs(ric).max()
    if rmax == 0.0:
        return np.inf
    return 0.1 * min(eig_h, eig_v) / rmax


def flow_step(state: FlowState, dchi, mode="canonical") -> FlowState:
    """One explicit Euler step of the metric (or symplectic) flow.

    The mixed-block conditions are not enforced; their residual is reported
    in the diagnostics of the returned state.
    """
    if dchi <= 0:
        raise FlowError("dchi must be positive")
    m = state.coords.m
    gamma, ric = _geometry_for_mode(state, mode)
    bound = stability_bound(state, ric)
    if dchi > bound:
        raise FlowError(f"dchi={dchi} above stability bound {bound:.3e}")

    def attempt(step):
        if mode == "canonical":
            gh = state.gh - 2.0 * step * ric[..., :m, :m]
            gv = state.gv - 2.0 * step * ric[..., m:, m:]
        elif mode == "cartan":
            gh = state.gh - step * ric[..., :m, :m]
            gv = state.gv - step * ric[..., m:, m:]
        else:  # symplectic: theta components are the +/- g blocks, so the
            # update transports only the antisymmetrized Ricci
            anti_h = 0.5 * (ric[..., :m, :m] - np.swapaxes(ric[..., :m, :m], -1, -2))
            anti_v = 0.5 * (ric[..., m:, m:] - np.swapaxes(ric[..., m:, m:], -1, -2))
            gh = state.gh - step * anti_h
            gv = state.gv - step * anti_v
        sR = scalar_curvature_numeric(state, ric)
        hn, vn = gradient_norms(state, state.f)
        hess = covariant_hessian(state, gamma, state.f)
        ginv = np.linalg.inv(full_metric(state))
        lap = np.einsum("...ab,...ba->...", ginv, hess)
        f = state.f + step * (-lap + hn + vn - sR)
        # symmetrize away the O(step) asymmetry the unconstrained update makes
        gh = 0.5 * (gh + np.swapaxes(gh, -1, -2))
        gv = 0.5 * (gv + np.swapaxes(gv, -1, -2))
        return gh, gv, f

    halved = False
    gh, gv, f = attempt(dchi)
    step_used = dchi
    if min(np.linalg.det(gh).min(), np.linalg.det(gv).min()) <= 1e-12:
        halved = True
        step_used = dchi / 2
        gh, gv, f = attempt(step_used)
        if min(np.linalg.det(gh).min(), np.linalg.det(gv).min()) <= 1e-12:
            raise FlowError("nondegeneracy lost even after halving the step")
    mixed = max(np.abs(ric[..., :m, m:]).max(), np.abs(ric[..., m:, :m]).max())
    out = state.copy_with(gh=gh, gv=gv, f=f, chi=state.chi + step_used)
    out.diagnostics = {
        "mode": mode,
        "mixed_ricci_max": float(mixed),
        "min_block_det": float(min(np.linalg.det(gh).min(), np.linalg.det(gv).min())),
        "stability_bound": float(bound),
        "halved": halved,
    }
    return out.validate()


# ---------------------------------------------------------------------------
# integral functionals
# ---------------------------------------------------------------------------

@dataclass
class FunctionalReport:
    value: float
    normalization: float
    scalar_part: float
    gradient_part: float
    shift: float = 0.0
    extra: dict = field(default_factory=dict)


def _volume_weights(state):
    w = state.grid.weights()
    total = w[0]
    for axis_w in w[1:]:
        total = np.multiply.outer(total, axis_w)
    dv = np.sqrt(np.abs(np.linalg.det(state.gh) * np.linalg.det(state.gv)))
    return total * dv


def _quad(state, integrand, weights):
    return float(np.sum(integrand * weights))


def perelman_F(state: FlowState, conn_mode="canonical") -> FunctionalReport:
    """F = int (sR + |hDf|^2 + |vDf|^2) e^{-f} dv."""
    _, ric = _geometry_for_mode(state, conn_mode)
    sR = scalar_curvature_numeric(state, ric)
    hn, vn = gradient_norms(state, state.f)
    w = _volume_weights(state)
    mu = np.exp(-state.f)
    scalar_part = _quad(state, sR * mu, w)
    gradient_part = _quad(state, (hn + vn) * mu, w)
    return FunctionalReport(
        value=scalar_part + gradient_part,
        normalization=_quad(state, mu, w),
        scalar_part=scalar_part,
        gradient_part=gradient_part,
    )


def _normalized_f(state, tau):
    """Additive shift making int (4 pi tau)^{-m} e^{-f} dv = 1."""
    m = state.coords.m
    w = _volume_weights(state)
    mass = float(np.sum((4 * np.pi * tau) ** (-m) * np.exp(-state.f) * w))
    shift = np.log(mass)
    return state.f + shift, shift, w


def perelman_W(state: FlowState, tau, conn_mode="canonical", squared_gradients=False) -> FunctionalReport:
    """W = int [tau (sR + |hDf| + |vDf|)^2 + f - 2m] mu dv, mu = (4 pi tau)^{-m} e^{-f}.

    ``squared_gradients=True`` switches to tau (sR + |hDf|^2 + |vDf|^2) + f - 2m
    (no outer square), the variant whose negative is the entropy below.
    """
    if tau <= 0:
        raise FlowError("tau must be positive")
    m = state.coords.m
    f, shift, w = _normalized_f(state, tau)
    _, ric = _geometry_for_mode(state, conn_mode)
    sR = scalar_curvature_numeric(state, ric)
    hn, vn = gradient_norms(state, state.f)
    mu = (4 * np.pi * tau) ** (-m) * np.exp(-f)
    if squared_gradients:
        scalar_term = tau * (sR + hn + vn)
    else:
        scalar_term = tau * (sR + np.sqrt(np.maximum(hn, 0.0)) + np.sqrt(np.maximum(vn, 0.0))) ** 2
    scalar_part = _quad(state, scalar_term * mu, w)
    rest = _quad(state, (f - 2 * m) * mu, w)
    return FunctionalReport(
        value=scalar_part + rest,
        normalization=_quad(state, mu, w),
        scalar_part=scalar_part,
        gradient_part=rest,
        shift=shift,
    )


@dataclass
class ThermoValues:
    energy: float
    entropy: float
    fluctuation: float
    shift: float


def thermodynamics(state: FlowState, tau, conn_mode="canonical") -> ThermoValues:
    """Mean energy, entropy, fluctuation of the normalized state."""
    if tau <= 0:
        raise FlowError("tau must be positive")
    m = state.coords.m
    f, shift, w = _normalized_f(state, tau)
    gamma, ric = _geometry_for_mode(state, conn_mode)
    sR = scalar_curvature_numeric(state, ric)
    hn, vn = gradient_norms(state, state.f)
    grad2 = hn + vn
    mu = (4 * np.pi * tau) ** (-m) * np.exp(-f)

    energy = -tau ** 2 * _quad(state, (sR + grad2 - m / tau) * mu, w)
    entropy = -_quad(state, (tau * (sR + grad2) + f - 2 * m) * mu, w)

    hess = covariant_hessian(state, gamma, f)
    g = full_metric(state)
    T = ric + np.einsum("...ba->...ab", hess) - g / (2 * tau)
    ginv = np.linalg.inv(g)
    norm2 = np.einsum("...ac,...bd,...ab,...cd->...", ginv, ginv, T, T)
    fluct = 2 * tau ** 4 * _quad(state, norm2 * mu, w)
    return ThermoValues(energy, entropy, fluct, shift)


# ---------------------------------------------------------------------------
# frame (vielbein) flow
# ---------------------------------------------------------------------------

def init_vielbein(state: FlowState):
    """Block-triangular vielbein [[E_h, N^T E_v], [0, E_v]] with Cholesky
    factors of the blocks (raises on factorization failure)."""
    m = state.coords.m
    d = 2 * m
    try:
        Eh = np.linalg.cholesky(state.gh)
        Ev = np.linalg.cholesky(state.gv)
    except np.linalg.LinAlgError as err:
        raise FlowError(f"vielbein factorization failed: {err}") from err
    out = np.zeros((*state.shape, d, d))
    out[..., :m, :m] = Eh
    out[..., :m, m:] = np.einsum("...Ca,...CB->...aB", state.N, Ev)
    out[..., m:, m:] = Ev
    return out

def frame_flow_step(state: FlowState, dchi, mode="canonical", vielbein=None):
    """Euler update dE/d(chi) = -(g^{-1} Ric) E on the block-diagonal part.

    Returns (new_state, updated_vielbein); the reconstructed metric
    E eta E^T tracks the metric flow to O(dchi^2) on commuting states.
    """
    m = state.coords.m
    if vielbein is None:
        vielbein = init_vielbein(state)
    _, ric = _geometry_for_mode(state, mode)
    g = full_metric(state)
    ginv = np.linalg.inv(g)
    M = np.einsum("...ab,...bc->...ac", ginv, ric)
    # keep the update block-diagonal so the triangular structure is preserved;
    # the mixed Ricci norm is monitored, not projected into the frames
    Mblock = np.zeros_like(M)
    Mblock[..., :m, :m] = M[..., :m, :m]
    Mblock[..., m:, m:] = M[..., m:, m:]
    new_e = vielbein - dchi * np.einsum("...ab,...bc->...ac", Mblock, vielbein)

    recon = np.einsum("...ak,...bk->...ab", new_e, new_e)
    gv = recon[..., m:, m:]
    cross = recon[..., m:, :m]                        # = g_v N (per column a)
    Nnew = np.einsum("...DE,...Ea->...Da", np.linalg.inv(gv), cross)
    gh = recon[..., :m, :m] - np.einsum(
        "...Aa,...AB,...Bb->...ab", Nnew, gv, Nnew
    )
    out = state.copy_with(gh=gh, gv=gv, N=Nnew, chi=state.chi + dchi)
    out.diagnostics = {
        "mode": mode,
        "mixed_ricci_max": float(
            max(np.abs(ric[..., :m, m:]).max(), np.abs(ric[..., m:, :m]).max())
        ),
    }
    return out.validate(), new_e
