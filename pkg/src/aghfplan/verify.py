"""Closed-loop rollout of a planned trajectory and success classification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from . import rbd
from .aghf import ObstacleSet, constraint_value
from .cheb import ChebGrid, interpolate
from .exceptions import Diverged, OutOfDomain

DEFAULT_DT = 1e-3
DEFAULT_CHECK_DT = 1e-2
DEFAULT_EPSILON = 0.05


@dataclass(eq=False)
class RolloutResult:
    times: np.ndarray
    states: np.ndarray
    inputs_fb: np.ndarray
    control_energy: float
    final_error_inf: float


@dataclass(eq=False)
class SuccessReport:
    success: bool
    final_error_inf: float
    epsilon: float
    collision_free: bool
    first_collision: tuple | None = None  # (time, frame index, sphere index)

    def summary(self):
        lines = [f"success: {self.success}",
                 f"final_error_inf: {self.final_error_inf:.6e} (epsilon {self.epsilon:g})",
                 f"collision_free: {self.collision_free}"]
        if self.first_collision is not None:
            t, f, sph = self.first_collision
            lines.append(f"first_collision: t={t:.4f} frame={f} sphere={sph}")
        return "\n".join(lines)


def interpolate_solution(grid_values, controls, cheb: ChebGrid, times):
    """Dense states and controls at physical ``times``: ``(M, 2N + N)``."""
    times = np.asarray(times, dtype=float)
    tau = cheb.to_tau(times)
    if np.any(np.abs(tau) > 1.0 + 1e-12):
        raise OutOfDomain("requested times fall outside [0, T]")
    data = np.hstack((np.asarray(grid_values, dtype=float), np.asarray(controls, dtype=float)))
    return interpolate(data, tau, cheb.nodes)


def _time_grid(T, dt):
    if not (dt > 0 and np.isfinite(dt)):
        raise ValueError("dt must be positive")
    if dt > T:
        raise ValueError(f"dt={dt:g} exceeds the horizon T={T:g}")
    steps = int(np.ceil(T / dt - 1e-9))
    return np.linspace(0.0, T, steps + 1)


def rollout(model, solution, kp=10.0, kv=10.0, dt=DEFAULT_DT):
    """RK4 rollout of ``qdd = FD(q, v, u* + kp (q* - q) + kv (v* - v))`` from ``x0``.

    ``solution`` needs ``node_states``, ``node_controls`` and ``horizon``
    (a :class:`~aghfplan.solution.TrajectorySolution`).
    """
    n = model.nv
    cheb = ChebGrid(solution.node_states.shape[0] - 1, solution.horizon)
    times = _time_grid(cheb.T, dt)
    mids = 0.5 * (times[:-1] + times[1:])
    dense = interpolate_solution(solution.node_states, solution.node_controls, cheb, times)
    dense_mid = interpolate_solution(solution.node_states, solution.node_controls, cheb, mids)

    def accel(x, ref):
        q, v = x[:n], x[n:]
        u = ref[2 * n:] + kp * (ref[:n] - q) + kv * (ref[n:2 * n] - v)
        return np.concatenate((v, rbd.aba(model, q, v, u))), u

    M = times.size
    states = np.empty((M, 2 * n))
    inputs = np.empty((M, n))
    x = np.array(solution.node_states[0], dtype=float)
    states[0] = x
    for i in range(M - 1):
        h = times[i + 1] - times[i]
        k1, inputs[i] = accel(x, dense[i])
        k2, _ = accel(x + 0.5 * h * k1, dense_mid[i])
        k3, _ = accel(x + 0.5 * h * k2, dense_mid[i])
        k4, _ = accel(x + h * k3, dense[i + 1])
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise Diverged(f"rollout state became non-finite at t={times[i + 1]:g}")
        states[i + 1] = x
    _, inputs[-1] = accel(x, dense[-1])
    energy = float(trapezoid(np.sum(inputs ** 2, axis=1), times))
    err = float(np.abs(states[-1] - solution.node_states[-1]).max())
    return RolloutResult(times, states, inputs, energy, err)


def success_check(result: RolloutResult, xf, epsilon=DEFAULT_EPSILON, model=None,
                  obstacles: ObstacleSet | None = None, check_dt=DEFAULT_CHECK_DT):
    """Endpoint accuracy plus collision check sampled every ``check_dt``
    (including both ends). Touching a sphere surface is not a collision."""
    xf = np.asarray(xf, dtype=float)
    err = float(np.abs(result.states[-1] - xf).max())
    first = None
    if obstacles is not None and obstacles.active:
        T = result.times[-1]
        count = int(np.floor(T / check_dt + 1e-9))
        ts = np.arange(count + 1) * check_dt
        if T - ts[-1] > 1e-12:
            ts = np.append(ts, T)
        n = model.nv
        q = np.column_stack([np.interp(ts, result.times, result.states[:, j]) for j in range(n)])
        g = constraint_value(q, model, obstacles).reshape(ts.size, len(obstacles.frames), -1)
        hits = np.argwhere(g > 0.0)
        if hits.size:
            i, f, sph = hits[0]
            first = (float(ts[i]), int(obstacles.frames[f]), int(sph))
    free = first is None
    return SuccessReport(bool(err < epsilon and free), err, float(epsilon), free, first)
