import numpy as np
import pytest

from aghfplan import DATA_DIR, ParseError, ScenarioError, data_path, load_model
from aghfplan.files import (load_scenario, parse_scenario, read_convergence, read_trajectory,
                            write_convergence, write_rollout, write_trajectory)
from aghfplan.flow import ConvergenceRecord
from aghfplan.verify import RolloutResult

BASE = """\
x0 = 0, 0
xf = 1, 0
T = 2
k = 100
s_max = 1
p = 6
"""


def test_minimal_scenario_defaults():
    sc = parse_scenario(BASE)
    assert np.array_equal(sc.x0, [0, 0]) and sc.T == 2.0
    assert sc.params.k == 100 and sc.params.p == 6 and sc.params.k_cons == 0
    assert sc.kp == sc.kv == 10.0 and sc.epsilon == 0.05 and sc.check_dt == 1e-2
    assert sc.margin == 0.0 and sc.obstacles == [] and sc.model_path is None


def test_full_scenario(tmp_path):
    text = BASE + """\
model_path = pendulum1.model   # relative to the scenario file
k_cons = 1e3
c_cons = 5
margin = 0.1
steady_tol = 1e-7
method = explicit-rk4
newton_max_iter = 5
obstacle_frames = tip

[obstacle]
center = 0, -1, 0
radius = 0.25
"""
    path = tmp_path / "s.scenario"
    path.write_text(text)
    sc = load_scenario(path)
    assert sc.model_path == tmp_path / "pendulum1.model"
    assert sc.flow.steady_tol == 1e-7 and sc.flow.method == "explicit-rk4"
    assert sc.flow.newton_max_iter == 5
    model = load_model(data_path("pendulum1.model"))
    obs = sc.obstacle_set(model)
    plan = sc.planning_obstacles(model)
    assert np.allclose(obs.radii, [0.25]) and np.allclose(plan.radii, [0.35])
    assert obs.frames == plan.frames == (model.frame_index("tip"),)
    assert np.array_equal(plan.centers, obs.centers)


@pytest.mark.parametrize("extra, exc", [
    ("bogus = 1\n", ParseError),
    ("no equals sign\n", ParseError),
    ("[box]\n", ParseError),
    ("[obstacle]\ncenter = 0, 0\nradius = 1\n", ParseError),
    ("[obstacle]\ncenter = 0, 0, 0\n", ParseError),
    ("[obstacle]\ncenter = 0, 0, 0\nradius = -1\n", ScenarioError),
    ("margin = -0.1\n", ScenarioError),
    ("epsilon = 0\n", ScenarioError),
    ("ds_init = -1\n", ScenarioError),
])
def test_invalid_scenarios(extra, exc):
    with pytest.raises(exc):
        parse_scenario(BASE + extra)


@pytest.mark.parametrize("edit, exc", [
    (("k = 100", "k = 0"), ScenarioError),
    (("T = 2", "T = -1"), ScenarioError),
    (("p = 6", "p = 1"), ScenarioError),
    (("xf = 1, 0", "xf = 1, 0, 0"), ScenarioError),
    (("x0 = 0, 0", "x0 = 0, nan"), ParseError),
    (("x0 = 0, 0", "x0 = zero"), ParseError),
    (("k = 100\n", ""), ScenarioError),
])
def test_invalid_fields(edit, exc):
    with pytest.raises(exc):
        parse_scenario(BASE.replace(*edit))


def test_duplicate_key_line_number():
    with pytest.raises(ParseError) as info:
        parse_scenario(BASE + "T = 3\n")
    assert info.value.line == 7


def test_validate_against_model():
    model = load_model(data_path("pendulum2.model"))
    with pytest.raises(ScenarioError, match="x0"):
        parse_scenario(BASE).validate_against(model)
    sc = parse_scenario(BASE + "obstacle_frames = elbow\n[obstacle]\ncenter = 0,0,0\nradius = 1\n")
    with pytest.raises(ScenarioError, match="elbow"):
        sc.obstacle_set(load_model(data_path("pendulum1.model")))


@pytest.mark.parametrize("name", sorted(p.name for p in DATA_DIR.glob("*.scenario")))
def test_bundled_scenarios_load(name):
    sc = load_scenario(data_path(name))
    model = load_model(sc.model_path)
    sc.validate_against(model)


def test_data_path_unknown():
    with pytest.raises(FileNotFoundError):
        data_path("nope.model")


def test_trajectory_round_trip(tmp_path, rng):
    t = np.sort(rng.uniform(0, 2, 7))
    states, controls = rng.normal(size=(7, 4)), rng.normal(size=(7, 2))
    path = tmp_path / "traj.csv"
    write_trajectory(path, t, states, controls)
    assert path.read_text().splitlines()[0] == "t,q1,q2,v1,v2,u1,u2"
    t2, s2, c2 = read_trajectory(path)
    assert np.array_equal(t, t2) and np.array_equal(states, s2) and np.array_equal(controls, c2)


def test_trajectory_read_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,q1,v1\n0,0,0\n")
    with pytest.raises(ParseError):
        read_trajectory(bad)
    bad.write_text("t,q1,v1,u1\n0,0,0,0\n1,x,0,0\n2,0,0,0\n")
    with pytest.raises(ParseError):
        read_trajectory(bad)
    bad.write_text("")
    with pytest.raises(ParseError):
        read_trajectory(bad)


def test_convergence_round_trip(tmp_path):
    recs = [ConvergenceRecord(0.0, 1.0 / 3.0, 2.5, 1e-3, True),
            ConvergenceRecord(0.1, 0.25, 2.0, 5e-4, False)]
    path = tmp_path / "log.csv"
    write_convergence(path, recs)
    assert read_convergence(path) == recs
    path.write_text("s,action\n")
    with pytest.raises(ParseError):
        read_convergence(path)


def test_rollout_csv(tmp_path):
    res = RolloutResult(np.linspace(0, 1, 3), np.zeros((3, 2)), np.ones((3, 1)), 1.0, 0.0)
    path = tmp_path / "roll.csv"
    write_rollout(path, res)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,q1,v1,ufb1" and len(lines) == 4
