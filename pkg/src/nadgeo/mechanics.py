"""Lagrangian mechanics on the algebroid: semispray, paths, Cartan data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as E
from . import symmat as SM
from .algebroid import GeometryError, LieAlgebroid
from .geometry import Lagrangian


@dataclass(frozen=True)
class PathState:
    tau: float
    x: tuple
    y: tuple


class Semispray:
    def __init__(self, coords, phi):
        self.coords = coords
        self.phi = phi  # m expressions phi^e(x, y)

    def defining_residual(self, L: Lagrangian, alg: LieAlgebroid, points):
        """Residual of the linear system the spray solves:
        phi^b H_ba + y^b (rho^i_b d2L/dx^i dy^a + C^f_ab dL/dy^f) - X_a L."""
        coords = self.coords
        m = coords.m
        worst = 0.0
        dLy = [E.diff(L.L, coords.y[b]) for b in range(m)]
        H = [[E.diff(dLy[b], coords.y[a]) for a in range(m)] for b in range(m)]
        for p in points:
            for a in range(m):
                acc = 0.0
                for b in range(m):
                    acc += E.evaluate(self.phi[b], p) * E.evaluate(H[b][a], p)
                    yb = p[coords.y[b]]
                    acc += yb * E.evaluate(alg.x_apply(b, dLy[a]), p)
                    for f in range(m):
                        acc += yb * E.evaluate(alg.c[f][a][b], p) * E.evaluate(dLy[f], p)
                acc -= E.evaluate(alg.x_apply(a, L.L), p)
                worst = max(worst, abs(acc))
        return worst


def semispray(L: Lagrangian, alg: LieAlgebroid) -> Semispray:
    """phi^e = H^{eb} (X_b L - y^a X_a(dL/dy^b) - C^f_ba (dL/dy^f) y^a),
    with H the raw Hessian d2L/dy dy."""
    coords = L.coords
    m = coords.m
    dLy = [E.diff(L.L, coords.y[b]) for b in range(m)]
    H = [[E.diff(dLy[a], coords.y[b]) for b in range(m)] for a in range(m)]
    Hinv = SM.sym_inverse(H)
    rhs = []
    for b in range(m):
        term = alg.x_apply(b, L.L)
        for a in range(m):
            ya = E.Var(coords.y[a])
            term = E.sub_(term, E.mul_(ya, alg.x_apply(a, dLy[b])))
            for f in range(m):
                term = E.sub_(term, E.mul_(E.mul_(alg.c[f][b][a], dLy[f]), ya))
        rhs.append(term)
    phi = []
    for e in range(m):
        acc = E.ZERO
        for b in range(m):
            acc = E.add_(acc, E.mul_(Hinv[e][b], rhs[b]))
        phi.append(E.simplify(acc))
    return Semispray(coords, phi)


def energy(L: Lagrangian) -> E.Expr:
    """E_L = y^a dL/dy^a - L."""
    coords = L.coords
    acc = E.neg_(L.L)
    for a in range(coords.m):
        acc = E.add_(acc, E.mul_(E.Var(coords.y[a]), E.diff(L.L, coords.y[a])))
    return acc


def euler_lagrange_residual(L: Lagrangian, alg: LieAlgebroid, path):
    """Max residual of the two path equations, time derivatives by central
    differences on the uniformly sampled path."""
    path = list(path)
    if len(path) < 3:
        raise GeometryError("path too short: need at least 3 samples")
    coords = L.coords
    n, m = coords.n, coords.m
    dtau = path[1].tau - path[0].tau
    dLy = [E.diff(L.L, coords.y[a]) for a in range(m)]
    dLx = [E.diff(L.L, coords.x[i]) for i in range(n)]

    def point(s):
        p = dict(zip(coords.x, s.x))
        p.update(zip(coords.y, s.y))
        return p

    worst = 0.0
    for k in range(1, len(path) - 1):
        prev, cur, nxt = path[k - 1], path[k], path[k + 1]
        pp, pc, pn = point(prev), point(cur), point(nxt)
        for i in range(n):
            xdot = (nxt.x[i] - prev.x[i]) / (2 * dtau)
            rhs = sum(E.evaluate(alg.rho[i][a], pc) * cur.y[a] for a in range(m))
            worst = max(worst, abs(xdot - rhs))
        for a in range(m):
            pdot = (E.evaluate(dLy[a], pn) - E.evaluate(dLy[a], pp)) / (2 * dtau)
            acc = pdot
            for b in range(m):
                for f in range(m):
                    acc += cur.y[b] * E.evaluate(alg.c[f][a][b], pc) * E.evaluate(dLy[f], pc)
            for i in range(n):
                acc -= E.evaluate(alg.rho[i][a], pc) * E.evaluate(dLx[i], pc)
            worst = max(worst, abs(acc))
    return worst


def integrate_semispray(L: Lagrangian, alg: LieAlgebroid, init: PathState, steps, dtau):
    """Classical 4th-order one-step integration of
    xdot^i = rho^i_a(x) y^a,  ydot^a = phi^a(x, y)."""
    coords = L.coords
    n, m = coords.n, coords.m
    spray = semispray(L, alg)
    names = coords.names
    rho_fn = E.compile_fns([alg.rho[i][a] for i in range(n) for a in range(m)], names)
    phi_fn = E.compile_fns(spray.phi, names)
    lo = np.array([b[0] for b in L.box])
    hi = np.array([b[1] for b in L.box])

    def rate(state):
        vals = rho_fn(*state)
        x, y = state[:n], state[n:]
        xdot = [sum(vals[i * m + a] * y[a] for a in range(m)) for i in range(n)]
        ydot = phi_fn(*state)
        return np.array(xdot + list(ydot), dtype=float)

    state = np.array(list(init.x) + list(init.y), dtype=float)
    out = [PathState(init.tau, tuple(state[:n]), tuple(state[n:]))]
    tau = init.tau
    for _ in range(steps):
        k1 = rate(state)
        k2 = rate(state + 0.5 * dtau * k1)
        k3 = rate(state + 0.5 * dtau * k2)
        k4 = rate(state + dtau * k3)
        state = state + (dtau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        tau += dtau
        if not np.all(np.isfinite(state)):
            raise GeometryError(f"non-finite state at tau={tau}")
        if np.any(state < lo) or np.any(state > hi):
            raise GeometryError(f"trajectory left the regular box at tau={tau}")
        out.append(PathState(tau, tuple(state[:n]), tuple(state[n:])))
    return out


@dataclass
class CartanData:
    theta: list    # m weights: (dL/dy^a) X^a
    omega: list    # 2m x 2m frame components over the (X_a, V_A) basis
    energy: E.Expr


def cartan_data(L: Lagrangian, alg: LieAlgebroid) -> CartanData:
    """Lagrange one-form, two-form and energy in (X, V) components.

    omega = H_ab X^a ^ V^b + (1/2) K_ab X^a ^ X^b with
    K_ab = rho^i_b d2L/dx^i dy^a - rho^i_a d2L/dx^i dy^b + C^f_ab dL/dy^f.
    """
    coords = L.coords
    m = coords.m
    dLy = [E.diff(L.L, coords.y[a]) for a in range(m)]
    H = [[E.diff(dLy[a], coords.y[b]) for b in range(m)] for a in range(m)]
    omega = SM.zeros(2 * m, 2 * m)
    for a in range(m):
        for b in range(m):
            omega[a][m + b] = H[a][b]
            omega[m + b][a] = E.neg_(H[a][b])
    for a in range(m):
        for b in range(a + 1, m):
            k = E.sub_(alg.x_apply(b, dLy[a]), alg.x_apply(a, dLy[b]))
            for f in range(m):
                k = E.add_(k, E.mul_(alg.c[f][a][b], dLy[f]))
            omega[a][b] = k
            omega[b][a] = E.neg_(k)
    return CartanData(theta=dLy, omega=omega, energy=E.simplify(energy(L)))
