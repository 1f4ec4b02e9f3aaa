"""End-to-end planning: initial curve, flow, control extraction."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .aghf import AghfContext, AghfParams, ObstacleSet, extract_controls
from .cheb import ChebGrid
from .flow import FlowConfig, evolve, initial_curve


@dataclass(eq=False)
class TrajectorySolution:
    node_times: np.ndarray
    node_states: np.ndarray
    node_controls: np.ndarray
    convergence: list = field(default_factory=list)
    stop_reason: str = ""
    wall_time: float = 0.0

    @property
    def horizon(self):
        return float(self.node_times[-1] - self.node_times[0])

    @property
    def p(self):
        return self.node_states.shape[0] - 1


def solve(model, x0, xf, T, params: AghfParams, obstacles: ObstacleSet | None = None,
          flow: FlowConfig | None = None, threads=1, curve="line", callback=None):
    """Plan a trajectory from ``x0`` to ``xf`` over ``[0, T]``."""
    cheb = ChebGrid(params.p, T)
    ctx = AghfContext(model, cheb, params, x0, xf, obstacles or ObstacleSet(), threads)
    start = time.perf_counter()
    grid0 = initial_curve(ctx.x0, ctx.xf, cheb, kind=curve)
    result = evolve(grid0, ctx, flow, callback=callback)
    controls = extract_controls(result.grid, cheb, model)
    wall = time.perf_counter() - start
    return TrajectorySolution(cheb.times, result.grid.values, controls, result.records,
                              result.stop_reason, wall)
