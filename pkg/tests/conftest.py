import numpy as np
import pytest

from nadgeo import expr as E
from nadgeo.algebroid import Coordinates, LieAlgebroid, NConnection
from nadgeo.geometry import DMetric, Lagrangian
from nadgeo.sampling import random_points, unit_box


@pytest.fixture(scope="session")
def trivial22():
    return LieAlgebroid.trivial(2)


@pytest.fixture(scope="session")
def zero_n(trivial22):
    return NConnection.zero(trivial22.coords)


@pytest.fixture(scope="session")
def flat_metric(trivial22):
    co = trivial22.coords
    return DMetric(co, [["1", "0"], ["0", "1"]], [["1", "0"], ["0", "1"]])


@pytest.fixture(scope="session")
def sphere_metric(trivial22):
    co = trivial22.coords
    return DMetric(co, [["1", "0"], ["0", "sin(x1)^2"]], [["1", "0"], ["0", "1"]])


@pytest.fixture(scope="session")
def sphere_box():
    return [[0.4, 2.6], [0.1, 0.9], [0.1, 0.9], [0.1, 0.9]]


@pytest.fixture(scope="session")
def so3_algebroid():
    """Bundle of Lie algebras: zero anchor, so(3) structure constants."""
    co = Coordinates(3, 3)
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[k][i][j] = 1.0
        eps[k][j][i] = -1.0
    anchor = [[E.ZERO] * 3 for _ in range(3)]
    struct = [[[E.const(eps[f][a][b]) for b in range(3)] for a in range(3)] for f in range(3)]
    return LieAlgebroid(co, anchor, struct)


def polynomial_geometry(seed):
    """A mildly curved metric + N pair on the trivial chart with a nonzero
    constant bracket carried by a zero anchor (valid structure identities)."""
    rng = np.random.default_rng(seed)
    co = Coordinates(2, 2)
    anchor = [["0", "0"], ["0", "0"]]
    c1, c2 = rng.uniform(0.2, 0.8, size=2)
    struct = [[["0"] * 2 for _ in range(2)] for _ in range(2)]
    struct[0][0][1] = f"{c1:.3f}"
    struct[1][0][1] = f"{-c2:.3f}"
    alg = LieAlgebroid(co, anchor, struct)

    def poly():
        a, b, c = rng.uniform(-0.2, 0.2, size=3)
        return f"{a:.4f}*x1 + {b:.4f}*y3 + {c:.4f}*x2*y4"

    N = NConnection(co, [[poly(), poly()], [poly(), poly()]])
    off_h, off_v = poly(), poly()
    g = DMetric(
        co,
        [[f"2 + {poly()}", off_h], [off_h, f"1.5 + {poly()}"]],
        [[f"1.8 + {poly()}", off_v], [off_v, f"2.2 + {poly()}"]],
    )
    return alg, g, N


@pytest.fixture(scope="session")
def poly_corpus():
    return [polynomial_geometry(seed) for seed in range(5)]


@pytest.fixture(scope="session")
def flat_lagrangian(trivial22):
    return Lagrangian(
        trivial22.coords, "0.5*(y3^2 + y4^2)", [[0.1, 0.9]] * 2 + [[0.5, 1.5]] * 2
    )


def points_for(coords, count=20, seed=0, box=None):
    return random_points(coords, box or unit_box(coords), count, seed)
