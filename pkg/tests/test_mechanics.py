import math

import numpy as np
import pytest

from nadgeo import expr as E
from nadgeo.algebroid import GeometryError, LieAlgebroid, NConnection
from nadgeo.geometry import Lagrangian, canonical_n_connection
from nadgeo.mechanics import (
    PathState,
    cartan_data,
    energy,
    euler_lagrange_residual,
    integrate_semispray,
    semispray,
)
from conftest import points_for
from oracles import christoffel_fd


@pytest.fixture(scope="module")
def sphere_lagrangian(trivial22):
    return Lagrangian(
        trivial22.coords,
        "0.5*(y3^2 + sin(x1)^2*y4^2)",
        [[0.3, 2.9], [-30.0, 30.0], [-2.0, 2.0], [-2.0, 2.0]],
    )


class TestSemispray:
    def test_flat_zero(self, trivial22, flat_lagrangian):
        spray = semispray(flat_lagrangian, trivial22)
        assert all(E.is_zero(E.simplify(p)) for p in spray.phi)

    def test_christoffel_spray(self, trivial22, sphere_lagrangian):
        spray = semispray(sphere_lagrangian, trivial22)

        def gfun(x):
            return [[1, 0], [0, np.sin(x[0]) ** 2]]

        box = [[0.4, 2.6], [0.1, 0.9], [0.2, 1.2], [0.2, 1.2]]
        for p in points_for(trivial22.coords, 10, 1, box):
            gam = christoffel_fd(gfun, [p["x1"], p["x2"]])
            y = np.array([p["y3"], p["y4"]])
            for i in range(2):
                want = -sum(gam[i][j][k] * y[j] * y[k] for j in range(2) for k in range(2))
                assert E.evaluate(spray.phi[i], p) == pytest.approx(want, abs=1e-6)

    def test_defining_system_residual(self, trivial22, so3_algebroid, sphere_lagrangian):
        spray = semispray(sphere_lagrangian, trivial22)
        box = [[0.4, 2.6], [0.1, 0.9], [0.2, 1.2], [0.2, 1.2]]
        pts = points_for(trivial22.coords, 10, 2, box)
        assert spray.defining_residual(sphere_lagrangian, trivial22, pts) < 1e-9
        co = so3_algebroid.coords
        L = Lagrangian(co, "0.5*(y4^2 + y5^2 + y6^2)", [[0.1, 0.9]] * 3 + [[0.5, 1.5]] * 3)
        spray3 = semispray(L, so3_algebroid)
        pts3 = points_for(co, 10, 3, L.box)
        assert spray3.defining_residual(L, so3_algebroid, pts3) < 1e-9

    def test_cross_module_n_identity(self, trivial22, sphere_lagrangian):
        # the geometry module's canonical N equals -(1/2)(d_a phi^f + y^b C^f_ba)
        spray = semispray(sphere_lagrangian, trivial22)
        N = canonical_n_connection(sphere_lagrangian, trivial22)
        co = trivial22.coords
        box = [[0.4, 2.6], [0.1, 0.9], [0.2, 1.2], [0.2, 1.2]]
        for p in points_for(co, 10, 4, box):
            for f in range(2):
                for a in range(2):
                    direct = -0.5 * E.evaluate(E.diff(spray.phi[f], co.y[a]), p)
                    assert E.evaluate(N.coeffs[f][a], p) == pytest.approx(direct, abs=1e-12)


class TestEulerLagrange:
    def test_straight_line_flat(self, trivial22, flat_lagrangian):
        dt = 1e-3
        path = [
            PathState(k * dt, (0.3 + 0.2 * k * dt, 0.5 + 0.1 * k * dt), (0.2, 0.1))
            for k in range(200)
        ]
        assert euler_lagrange_residual(flat_lagrangian, trivial22, path) < 1e-6

    def test_straight_line_fails_in_curved(self, trivial22, sphere_lagrangian):
        dt = 1e-3
        path = [
            PathState(k * dt, (1.0 + 0.5 * k * dt, 0.5 + 0.5 * k * dt), (0.5, 0.5))
            for k in range(100)
        ]
        assert euler_lagrange_residual(sphere_lagrangian, trivial22, path) > 1e-2

    def test_great_circle(self, trivial22, sphere_lagrangian):
        init = PathState(0.0, (math.pi / 2, 0.0), (0.0, 1.0))
        path = integrate_semispray(sphere_lagrangian, trivial22, init, 1000, 1e-3)
        assert euler_lagrange_residual(sphere_lagrangian, trivial22, path) < 1e-5

    def test_too_short(self, trivial22, flat_lagrangian):
        with pytest.raises(GeometryError):
            euler_lagrange_residual(flat_lagrangian, trivial22, [PathState(0, (0, 0), (0, 0))] * 2)


class TestIntegrate:
    def test_flat_straight_line(self, trivial22, flat_lagrangian):
        init = PathState(0.0, (0.15, 0.2), (0.6, 0.55))
        path = integrate_semispray(flat_lagrangian, trivial22, init, 100, 1e-2)
        end = path[-1]
        assert end.x[0] == pytest.approx(0.15 + 0.6 * 1.0, abs=1e-12)
        assert end.y == pytest.approx((0.6, 0.55))

    def test_great_circle_closes(self, trivial22, sphere_lagrangian):
        init = PathState(0.0, (math.pi / 2, 0.0), (0.0, 1.0))
        steps = 6284  # parameter length 2 pi787 at dtau 1e-3
        path = integrate_semispray(sphere_lagrangian, trivial22, init, 6283, 1e-3)
        # x2 advances by 2 pi along the equator; x1 and y stay put
        end = path[-1]
        assert abs(end.x[0] - math.pi / 2) < 1e-5
        assert abs(end.x[1] - 6.283) < 2e-3  # parameter end, not closure yet
        # interpolate the crossing of x2 = 2 pi
        for s in path:
            assert abs(s.y[0]) < 1e-5
        crossing = min(path, key=lambda s: abs(s.x[1] - 2 * math.pi))
        assert abs(crossing.x[0] - math.pi / 2) < 1e-5
        assert abs(crossing.y[1] - 1.0) < 1e-5

    def test_energy_drift(self, trivial22, sphere_lagrangian):
        init = PathState(0.0, (1.2, 0.0), (0.2, 0.7))
        path = integrate_semispray(sphere_lagrangian, trivial22, init, 10000, 1e-3)
        EL = energy(sphere_lagrangian)
        co = trivial22.coords
        vals = []
        for s in path[::100]:
            p = dict(zip(co.names, s.x + s.y))
            vals.append(E.evaluate(EL, p))
        assert max(vals) - min(vals) < 1e-6

    def test_spray_homogeneity_reparametrization(self, trivial22, sphere_lagrangian):
        # quadratic L: doubling y halves the parameter for the same path
        init1 = PathState(0.0, (1.2, 0.3), (0.1, 0.4))
        init2 = PathState(0.0, (1.2, 0.3), (0.2, 0.8))
        p1 = integrate_semispray(sphere_lagrangian, trivial22, init1, 400, 1e-3)
        p2 = integrate_semispray(sphere_lagrangian, trivial22, init2, 200, 1e-3)
        for k in range(0, 201, 50):
            assert p1[2 * k].x == pytest.approx(p2[k].x, abs=1e-8)
            assert np.asarray(p1[2 * k].y) * 2 == pytest.approx(p2[k].y, abs=1e-8)

    def test_leaves_box(self, trivial22):
        L = Lagrangian(trivial22.coords, "0.5*(y3^2+y4^2)", [[0, 1]] * 2 + [[-2, 2]] * 2)
        init = PathState(0.0, (0.9, 0.5), (1.0, 0.0))
        with pytest.raises(GeometryError, match="left the regular box"):
            integrate_semispray(L, trivial22, init, 200, 1e-2)


class TestCartanData:
    def test_flat(self, trivial22, flat_lagrangian):
        data = cartan_data(flat_lagrangian, trivial22)
        diff = E.sub_(data.energy, flat_lagrangian.L)
        for p in points_for(trivial22.coords, 10, 5, flat_lagrangian.box):
            assert E.evaluate(diff, p) == pytest.approx(0.0, abs=1e-15)
        mat = np.array([[E.evaluate(x, {"x1": 0, "x2": 0, "y3": 0.3, "y4": 0.4}) for x in row] for row in data.omega])
        expected = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
        assert np.array_equal(mat, expected)

    def test_constant_bracket_block(self, so3_algebroid):
        co = so3_algebroid.coords
        L = Lagrangian(co, "0.5*(y4^2 + y5^2 + y6^2)", [[0.1, 0.9]] * 3 + [[0.5, 1.5]] * 3)
        data = cartan_data(L, so3_algebroid)
        # zero anchor: the X^a ^ X^b coefficient reduces to C^f_ab dL/dy^f
        for p in points_for(co, 5, 6, L.box):
            y = [p[nm] for nm in co.y]
            for a in range(3):
                for b in range(3):
                    want = sum(
                        E.evaluate(so3_algebroid.c[f][a][b], p) * y[f] for f in range(3)
                    )
                    assert E.evaluate(data.omega[a][b], p) == pytest.approx(want, abs=1e-12)

    def test_hessian_block(self, trivial22, sphere_lagrangian):
        data = cartan_data(sphere_lagrangian, trivial22)
        box = [[0.4, 2.6], [0.1, 0.9], [0.2, 1.2], [0.2, 1.2]]
        for p in points_for(trivial22.coords, 5, 7, box):
            assert E.evaluate(data.omega[0][2], p) == pytest.approx(1.0)
            assert E.evaluate(data.omega[1][3], p) == pytest.approx(np.sin(p["x1"]) ** 2)

    def test_omega_is_minus_d_theta(self, trivial22, sphere_lagrangian):
        # omega_L = -d(theta_L) in the (X, V) frame with its own brackets
        co = trivial22.coords
        data = cartan_data(sphere_lagrangian, trivial22)
        box = [[0.4, 2.6], [0.1, 0.9], [0.2, 1.2], [0.2, 1.2]]

        def x_apply(idx, f):
            if idx < 2:
                return trivial22.x_apply(idx, f)
            return E.diff(f, co.y[idx - 2])

        theta_w = list(data.theta) + [E.ZERO, E.ZERO]
        for p in points_for(co, 5, 8, box):
            for i in range(4):
                for j in range(4):
                    # trivial algebroid: [X_a, X_b] = 0, so d(theta)(i,j)
                    # has no bracket term
                    dtheta = E.sub_(x_apply(i, theta_w[j]), x_apply(j, theta_w[i]))
                    assert E.evaluate(data.omega[i][j], p) == pytest.approx(
                        -E.evaluate(dtheta, p), abs=1e-12
                    )

    def test_energy_conserved_along_flow(self, trivial22, sphere_lagrangian):
        init = PathState(0.0, (1.0, 0.0), (0.1, 0.5))
        path = integrate_semispray(sphere_lagrangian, trivial22, init, 2000, 1e-3)
        EL = cartan_data(sphere_lagrangian, trivial22).energy
        co = trivial22.coords
        p0 = dict(zip(co.names, path[0].x + path[0].y))
        e0 = E.evaluate(EL, p0)
        drift = 0.0
        for s in path[::200]:
            p = dict(zip(co.names, s.x + s.y))
            drift = max(drift, abs(E.evaluate(EL, p) - e0))
        assert drift < 1e-6
