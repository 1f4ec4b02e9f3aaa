"""Integration of the node-stacked heat-flow ODE in the homotopy variable ``s``.

The interior nodes of the Chebyshev grid evolve under ``dpsi/ds = rhs(psi)``
while the boundary rows stay pinned to ``x0`` and ``xf``. The default
integrator is implicit Euler: every step solves ``delta = ds * rhs(psi + delta)``
by a chord-Newton iteration on ``I - ds J`` with the analytic Jacobian ``J``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .aghf import (AghfContext, HomotopyGrid, action_functional, control_energy,
                   system_jacobian, system_rhs)
from .cheb import ChebGrid
from .exceptions import BoundaryMismatch, Diverged, SingularMass, StepUnderflow

log = logging.getLogger(__name__)

METHODS = ("implicit-euler", "explicit-rk4")
BOUNDARY_TOL = 1e-9
GROW = 1.5
EASY_ITERS = 3
# accepted steps may raise the action by at most this relative amount
ACTION_SLACK = 1e-9
# a monotone rejection below ds_init * STALL_FRACTION ends the run: the
# node-wise flow direction has become an ascent direction of the discrete action
STALL_FRACTION = 1e-4


@dataclass(frozen=True)
class FlowConfig:
    """Integrator settings. ``None`` fields are resolved against ``s_max`` and
    the initial residual by :meth:`resolve`."""

    method: str = "implicit-euler"
    ds_init: float | None = None
    ds_min: float | None = None
    ds_max: float | None = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 12
    steady_tol: float | None = None
    log_every: int = 1
    monotone: bool = True
    stall_ds: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("ds_init", "ds_min", "ds_max", "steady_tol", "stall_ds"):
            val = getattr(self, name)
            if val is not None and not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if int(self.newton_max_iter) < 1 or int(self.log_every) < 1:
            raise ValueError("newton_max_iter and log_every must be >= 1")

    def resolve(self, s_max, rhs0_norm):
        ds_init = self.ds_init if self.ds_init is not None else s_max / 100.0
        ds_max = self.ds_max if self.ds_max is not None else max(s_max, ds_init)
        ds_min = self.ds_min if self.ds_min is not None else min(ds_init, s_max) * 1e-8
        steady = (self.steady_tol if self.steady_tol is not None
                  else 1e-6 * (1.0 + rhs0_norm))
        stall = self.stall_ds if self.stall_ds is not None else ds_init * STALL_FRACTION
        cfg = replace(self, ds_init=ds_init, ds_min=ds_min, ds_max=ds_max, steady_tol=steady,
                      stall_ds=max(stall, ds_min))
        if not (cfg.ds_min <= cfg.ds_init <= cfg.ds_max):
            raise ValueError("need ds_min <= ds_init <= ds_max")
        return cfg


@dataclass(frozen=True)
class ConvergenceRecord:
    s: float
    action: float
    control_energy: float
    rhs_inf_norm: float
    step_accepted: bool


@dataclass
class FlowResult:
    grid: HomotopyGrid
    records: list
    s_end: float
    stop_reason: str
    steps: int = 0
    rejected: int = 0

    def __iter__(self):
        # allows ``grid, records, s_end, reason = evolve(...)``
        return iter((self.grid, self.records, self.s_end, self.stop_reason))


def initial_curve(x0, xf, cheb: ChebGrid, kind="line", values=None):
    """Initial homotopy grid.

    ``kind="line"`` interpolates linearly between the boundary states.
    ``kind="user"`` resamples ``values``: either a callable of physical time
    returning a state, or an ``(M, 2N)`` array sampled uniformly over ``[0, T]``.
    """
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    if x0.shape != xf.shape or x0.ndim != 1:
        raise ValueError("x0 and xf must be vectors of equal length")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(xf))):
        raise ValueError("boundary states must be finite")
    if kind == "line":
        lam = (cheb.nodes + 1.0) / 2.0
        grid = x0 + lam[:, None] * (xf - x0)
    elif kind == "user":
        if values is None:
            raise ValueError("user curve needs values")
        t = cheb.times
        if callable(values):
            grid = np.array([np.asarray(values(ti), dtype=float) for ti in t])
        else:
            samples = np.asarray(values, dtype=float)
            if samples.ndim != 2 or samples.shape[1] != x0.size or samples.shape[0] < 2:
                raise ValueError(f"user samples must be (M, {x0.size}) with M >= 2")
            ts = np.linspace(0.0, cheb.T, samples.shape[0])
            grid = np.column_stack([np.interp(t, ts, samples[:, j])
                                    for j in range(samples.shape[1])])
        if (np.abs(grid[0] - x0).max() > BOUNDARY_TOL
                or np.abs(grid[-1] - xf).max() > BOUNDARY_TOL):
            raise BoundaryMismatch("user curve endpoints differ from x0/xf")
    else:
        raise ValueError(f"unknown initial curve kind {kind!r}")
    grid = np.array(grid, dtype=float)
    grid[0], grid[-1] = x0, xf
    return HomotopyGrid(grid)


def _record(ctx, y, s, rhs_norm, accepted):
    grid = HomotopyGrid(ctx.full_grid(y))
    prm = ctx.params
    act = action_functional(grid, ctx.cheb, ctx.model, prm.k, ctx.obstacles,
                            prm.k_cons, prm.c_cons)
    energy = control_energy(grid, ctx.cheb, ctx.model)
    return ConvergenceRecord(float(s), act, energy, float(rhs_norm), bool(accepted))


def _rhs_flat(y, ctx):
    return system_rhs(y, ctx).ravel()


def _implicit_step(y, f0, J, ds, ctx, cfg):
    """One implicit-Euler step by chord Newton. Returns ``(y_new, iters)`` or
    ``None`` when the iteration fails to converge."""
    m = y.size
    try:
        lu = lu_factor(np.eye(m) - ds * J, check_finite=True)
    except (ValueError, np.linalg.LinAlgError):
        return None
    delta = lu_solve(lu, ds * f0)
    scale = 1.0 + np.abs(y).max()
    prev = np.inf
    for it in range(1, cfg.newton_max_iter + 1):
        if not np.all(np.isfinite(delta)):
            return None
        try:
            f = _rhs_flat(y + delta, ctx)
        except SingularMass:
            return None
        resid = delta - ds * f
        corr = lu_solve(lu, -resid)
        delta = delta + corr
        size = np.abs(corr).max()
        if size <= cfg.newton_tol * scale:
            return y + delta, it
        if it > 2 and size > 0.9 * prev:
            return None          # contraction too slow; a smaller step will do better
        prev = size
    return None


def _rk4_step(y, f0, ds, ctx):
    k1 = f0
    k2 = _rhs_flat(y + 0.5 * ds * k1, ctx)
    k3 = _rhs_flat(y + 0.5 * ds * k2, ctx)
    k4 = _rhs_flat(y + ds * k3, ctx)
    return y + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(grid0: HomotopyGrid, ctx: AghfContext, config: FlowConfig | None = None,
           callback=None) -> FlowResult:
    """Integrate the flow from ``s = 0`` to ``s_max`` (or to a steady state)."""
    config = config or FlowConfig()
    values = np.asarray(grid0.values, dtype=float)
    if not (np.array_equal(values[0], ctx.x0) and np.array_equal(values[-1], ctx.xf)):
        raise BoundaryMismatch("grid boundary rows must equal x0 and xf")
    s_max = ctx.params.s_max
    y = values[1:-1].ravel().copy()
    f = _rhs_flat(y, ctx)
    rhs_norm = float(np.abs(f).max())
    cfg = config.resolve(s_max, rhs_norm)
    current = _record(ctx, y, 0.0, rhs_norm, True)
    records = [current]
    s, ds = 0.0, cfg.ds_init
    steps = rejected = 0
    reason = "s_max"
    J = None
    while True:
        if rhs_norm < cfg.steady_tol:
            reason = "steady"
            break
        if s >= s_max:
            break
        h = min(ds, s_max - s)
        if cfg.method == "explicit-rk4":
            y_new = _rk4_step(y, f, h, ctx)
            iters = 1
        else:
            if J is None:
                J = system_jacobian(y, ctx)
            out = _implicit_step(y, f, J, h, ctx, cfg)
            if out is None:
                rejected += 1
                records.append(replace(current, step_accepted=False))
                ds = h / 2.0
                if ds < cfg.ds_min:
                    raise StepUnderflow(f"flow step fell below ds_min={cfg.ds_min:g} at s={s:g}")
                continue
            y_new, iters = out
        if not np.all(np.isfinite(y_new)):
            raise Diverged(f"non-finite grid at s={s + h:g}")
        try:
            f_new = _rhs_flat(y_new, ctx)
        except SingularMass:
            if cfg.method == "explicit-rk4":
                raise
            rejected += 1
            ds = h / 2.0
            if ds < cfg.ds_min:
                raise StepUnderflow(f"flow step fell below ds_min={cfg.ds_min:g} at s={s:g}")
            continue
        if not np.all(np.isfinite(f_new)):
            raise Diverged(f"non-finite flow velocity at s={s + h:g}")
        s_new = s_max if h >= s_max - s else s + h
        rec = _record(ctx, y_new, s_new, float(np.abs(f_new).max()), True)
        if cfg.monotone and rec.action > current.action * (1.0 + ACTION_SLACK):
            # the step overshot along a non-convex direction; retry smaller
            rejected += 1
            records.append(replace(current, s=s, step_accepted=False))
            ds = h / 2.0
            if ds < cfg.stall_ds:
                reason = "stalled"
                break
            if ds < cfg.ds_min:
                raise StepUnderflow(f"flow step fell below ds_min={cfg.ds_min:g} at s={s:g}")
            continue
        y, f, s, current = y_new, f_new, s_new, rec
        rhs_norm = rec.rhs_inf_norm
        steps += 1
        J = None
        if cfg.method == "implicit-euler" and iters <= EASY_ITERS and h == ds:
            ds = min(ds * GROW, cfg.ds_max)
        done = s >= s_max or rhs_norm < cfg.steady_tol
        if steps % cfg.log_every == 0 or done:
            records.append(rec)
            if callback is not None:
                callback(rec)
        log.debug("s=%.6g ds=%.3g rhs=%.3e iters=%d", s, h, rhs_norm, iters)
    if not any(r is current for r in records):
        records.append(current)     # final state when log_every skipped it
    grid = HomotopyGrid(ctx.full_grid(y))
    if not math.isfinite(records[-1].action):
        raise Diverged("non-finite action")
    return FlowResult(grid, records, s, reason, steps, rejected)
