import numpy as np
import pytest
from scipy.integrate import solve_ivp

from aghfplan import OutOfDomain, parse_model, rbd
from aghfplan.aghf import HomotopyGrid, ObstacleSet, control_energy, extract_controls
from aghfplan.cheb import ChebGrid
from aghfplan.solution import TrajectorySolution
from aghfplan.verify import RolloutResult, interpolate_solution, rollout, success_check
from conftest import mechanical_energy

LINK = """\
robot link
gravity 0 0 0
body link parent world joint revolute axis 0 0 1 xyz 0 0 0 rpy 0 0 0 mass 1 com 0.5 0 0 inertia 0.01 0.01 0.01 0 0 0
frame tip body link xyz 1 0 0
"""


def unforced_solution(model, x0, T, p):
    n = model.nv
    sol = solve_ivp(lambda t, x: np.concatenate((x[n:], rbd.aba(model, x[:n], x[n:],
                                                                np.zeros(n)))),
                    (0, T), x0, rtol=1e-12, atol=1e-12, dense_output=True)
    cheb = ChebGrid(p, T)
    states = sol.sol(cheb.times).T
    return TrajectorySolution(cheb.times, states, np.zeros((p + 1, n))), sol


def fake_result(final, T=1.0):
    times = np.linspace(0, T, 11)
    states = np.outer(np.linspace(0, 1, 11), final)
    return RolloutResult(times, states, np.zeros((11, 1)), 0.0, 0.0)


def test_open_loop_unforced_rollout(pend):
    m = pend(1)
    sol, _ = unforced_solution(m, [0.7, 0.0], 2.0, 24)
    res = rollout(m, sol, kp=0.0, kv=0.0)
    assert res.final_error_inf < 1e-4
    assert res.times[0] == 0.0 and res.times[-1] == pytest.approx(2.0)
    assert np.all(np.diff(res.times) > 0)
    assert res.control_energy == 0.0


def test_feedback_beats_open_loop(pend):
    m = pend(2)
    sol, _ = unforced_solution(m, [0.5, -0.3, 0.0, 0.0], 2.0, 24)
    target = sol.node_states[-1].copy()
    # rollouts start from the first node: perturb it and keep the rest as reference
    start = sol.node_states.copy()
    start[0, :2] += 0.05
    pert = TrajectorySolution(sol.node_times, start, sol.node_controls)
    closed = rollout(m, pert, kp=10.0, kv=10.0)
    opened = rollout(m, pert, kp=0.0, kv=0.0)
    assert np.abs(closed.states[-1] - target).max() < np.abs(opened.states[-1] - target).max()
    assert closed.control_energy > 0


def test_rollout_rejects_bad_dt(pend):
    sol, _ = unforced_solution(pend(1), [0.2, 0.0], 0.5, 8)
    with pytest.raises(ValueError):
        rollout(pend(1), sol, dt=1.0)
    with pytest.raises(ValueError):
        rollout(pend(1), sol, dt=0.0)


def test_rollout_energy_conservation(pend):
    # open-loop rollout with zero controls is the unforced system
    m = pend(2)
    sol, dense = unforced_solution(m, [1.0, 0.5, 0.0, 0.0], 5.0, 60)
    res = rollout(m, sol, kp=0.0, kv=0.0, dt=1e-3)
    e = np.array([mechanical_energy(m, x[:2], x[2:]) for x in res.states[::50]])
    assert np.abs(e - e[0]).max() < 1e-5 * abs(e[0])
    assert np.abs(res.states[-1] - dense.sol(res.times[-1])).max() < 1e-4


def test_control_energy_converges_in_dt(pend):
    m = pend(1)
    T, p = 1.5, 16
    cheb = ChebGrid(p, T)
    t = cheb.times
    states = np.column_stack((0.3 * t ** 2, 0.6 * t))
    grid = HomotopyGrid(states)
    u = extract_controls(grid, cheb, m)
    sol = TrajectorySolution(t, states, u)
    e1 = rollout(m, sol, 0.0, 0.0, dt=1e-2).control_energy
    e2 = rollout(m, sol, 0.0, 0.0, dt=1e-3).control_energy
    quad = control_energy(grid, cheb, m)
    assert abs(e2 - quad) < abs(e1 - quad) + 1e-9
    assert abs(e2 - quad) / quad < 1e-4


def test_success_thresholds():
    ok = success_check(fake_result(np.array([0.04])), np.zeros(1), 0.05)
    assert ok.success and ok.collision_free and ok.first_collision is None
    bad = success_check(fake_result(np.array([0.06])), np.zeros(1), 0.05)
    assert not bad.success and bad.final_error_inf == pytest.approx(0.06)
    assert "success: False" in bad.summary()


def test_collision_is_reported():
    m = parse_model(LINK)
    # q sweeps 0 -> 1 rad; a sphere sits on the tip path at q = 0.5
    times = np.linspace(0, 1, 101)
    states = np.column_stack((times, np.ones_like(times)))
    res = RolloutResult(times, states, np.zeros((101, 1)), 0.0, 0.0)
    center = np.array([np.cos(0.5), np.sin(0.5), 0.0])
    obs = ObstacleSet.from_spheres([(center, 0.05)], [0])
    rep = success_check(res, states[-1], 0.05, m, obs)
    assert not rep.success and not rep.collision_free
    t, frame, sphere = rep.first_collision
    assert 0.4 < t < 0.5 and frame == 0 and sphere == 0
    assert "first_collision" in rep.summary()
    far = ObstacleSet.from_spheres([(np.array([5.0, 0, 0]), 0.5)], [0])
    assert success_check(res, states[-1], 0.05, m, far).success


def test_interpolate_solution_nodes_and_polynomials(rng):
    cheb = ChebGrid(8, 3.0)
    t = cheb.times
    states = np.column_stack((t ** 3, 1 - t, t ** 8 / 1e3, np.ones_like(t)))
    controls = np.column_stack((t ** 2, -t))
    out = interpolate_solution(states, controls, cheb, t)
    assert np.array_equal(out, np.hstack((states, controls)))
    dense_t = np.linspace(0, 3.0, 1000)
    dense = interpolate_solution(states, controls, cheb, dense_t)
    assert dense.shape == (1000, 6)
    q = rng.uniform(0, 3.0, 50)
    got = interpolate_solution(states, controls, cheb, q)
    want = np.column_stack((q ** 3, 1 - q, q ** 8 / 1e3, np.ones_like(q), q ** 2, -q))
    assert np.abs(got - want).max() < 1e-12
    with pytest.raises(OutOfDomain):
        interpolate_solution(states, controls, cheb, [3.1])
