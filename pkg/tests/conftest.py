import numpy as np
import pytest

from aghfplan import data_path, load_model, rbd
from aghfplan.model import body_poses

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pend():
    """Bundled n-link pendulum loader."""
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = load_model(data_path(f"pendulum{n}.model"))
        return cache[n]
    return get


@pytest.fixture(scope="session")
def arm3():
    return load_model(data_path("arm3.model"))


# a branched tree with a prismatic joint and rotated joint frames
TREE_MODEL = """\
robot tree
gravity 0.3 -9.81 0.5
body base parent world joint revolute axis 0 0 1 xyz 0 0 0 rpy 0 0 0 mass 2 com 0.1 0.2 0 inertia 0.1 0.2 0.3 0.01 0 0.02
body slide parent base joint prismatic axis 1 0 0 xyz 0.5 0 0.1 rpy 0.2 0 0.3 mass 1 com 0 0.1 0.1 inertia 0.05 0.06 0.07 0 0.01 0
body armA parent slide joint revolute axis 0 1 0 xyz 0 0.3 0 rpy 0 0.4 0 mass 0.7 com 0.2 0 0 inertia 0.02 0.03 0.04 0 0 0.005
body armB parent base joint revolute axis 0.6 0 0.8 xyz 0 -0.4 0.2 rpy 0.1 0.2 0.3 mass 1.3 com 0 0 0.3 inertia 0.08 0.08 0.02 0 0 0
frame tipA body armA xyz 0.4 0 0
frame tipB body armB xyz 0 0 0.6
frame fixed body world xyz 0 0 0
"""


@pytest.fixture(scope="session")
def tree():
    from aghfplan import parse_model
    return parse_model(TREE_MODEL)


def skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def dense_motion(X):
    """Dense 6x6 Pluecker motion matrix of a (rotation, translation) transform."""
    E, r = X.rotation, X.translation
    M = np.zeros((6, 6))
    M[:3, :3] = E
    M[3:, 3:] = E
    M[3:, :3] = -E @ skew(r)
    return M


def dense_force(X):
    return np.linalg.inv(dense_motion(X)).T


def dense_crm(v):
    M = np.zeros((6, 6))
    M[:3, :3] = skew(v[:3])
    M[3:, 3:] = skew(v[:3])
    M[3:, :3] = skew(v[3:])
    return M


def dense_inertia(mass, com, Io):
    c = skew(com)
    M = np.zeros((6, 6))
    M[:3, :3] = Io
    M[:3, 3:] = mass * c
    M[3:, :3] = -mass * c
    M[3:, 3:] = mass * np.eye(3)
    return M


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / (1.0 + np.abs(b).max()))


def central_diff(fn, x, h=1e-6):
    cols = [(np.asarray(fn(x + h * e)) - np.asarray(fn(x - h * e))) / (2 * h)
            for e in np.eye(x.size)]
    return np.stack(cols, axis=-1)


def mechanical_energy(model, q, v):
    """Kinetic plus gravitational potential energy of one state."""
    Rs, ps = body_poses(model, q)
    pe = -sum(b.mass * model.gravity @ (ps[i] + Rs[i] @ b.com)
              for i, b in enumerate(model.bodies))
    return 0.5 * v @ rbd.crba(model, q) @ v + pe
