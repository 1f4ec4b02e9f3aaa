"""Affine geometric heat flow for fully actuated manipulators.

With ``B = I`` the flow metric is ``G = diag(k I, H^T H)`` and the Lagrangian
penalizes the dynamics residual

    L = k |qdot - v|^2 + |H vdot + C|^2 ,

where the state is ``X = (q, v)``. The flow right-hand side ``Omega`` is the
metric gradient ``G^{-1} (d/dt dL/dXdot - dL/dX)``, written in terms of the
drift forward dynamics ``FD0 = -H^{-1} C`` and its partials so that every
ingredient comes from the recursive dynamics algorithms. Its Jacobian with
respect to ``(X, Xdot, Xddot)`` is assembled analytically from the second
order dynamics derivatives.

All node-level functions are batched: a ``StatePoint`` may hold ``(2N,)`` or
``(B, 2N)`` arrays.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import rbd
from .cheb import ChebGrid
from .exceptions import SingularMass
from .model import RobotModel, frame_jacobian, frame_positions


# --------------------------------------------------------------------------- types

@dataclass(frozen=True)
class AghfParams:
    """Flow parameters: dynamics weight ``k``, horizon ``s_max``, degree ``p``,
    obstacle weight ``k_cons`` and activation sharpness ``c_cons``."""

    k: float
    s_max: float
    p: int
    k_cons: float = 0.0
    c_cons: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise ValueError(f"k must be positive, got {self.k!r}")
        if not (np.isfinite(self.s_max) and self.s_max > 0):
            raise ValueError(f"s_max must be positive, got {self.s_max!r}")
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"p must be an integer >= 2, got {self.p!r}")
        if not (self.k_cons >= 0 and np.isfinite(self.k_cons)):
            raise ValueError(f"k_cons must be >= 0, got {self.k_cons!r}")
        if not (self.c_cons >= 0 and np.isfinite(self.c_cons)):
            raise ValueError(f"c_cons must be >= 0, got {self.c_cons!r}")
        object.__setattr__(self, "p", int(self.p))


@dataclass(eq=False)
class HomotopyGrid:
    """State samples at the collocation nodes, one row per node."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 3 or self.values.shape[1] % 2:
            raise ValueError("grid values must be (p+1) x 2N with p >= 2")

    @property
    def p(self):
        return self.values.shape[0] - 1

    @property
    def x0(self):
        return self.values[0]

    @property
    def xf(self):
        return self.values[-1]

    @property
    def interior(self):
        return self.values[1:-1]

    def copy(self):
        return HomotopyGrid(self.values.copy())


@dataclass(frozen=True, eq=False)
class ObstacleSet:
    """Spheres to keep the listed frames out of."""

    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    frames: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if c.shape[0] != r.shape[0]:
            raise ValueError("one radius per sphere centre is required")
        if np.any(~(r > 0)):
            raise ValueError("sphere radii must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "frames", tuple(int(f) for f in self.frames))

    @classmethod
    def from_spheres(cls, spheres, frames):
        spheres = list(spheres)
        centers = [c for c, _ in spheres]
        radii = [r for _, r in spheres]
        return cls(np.reshape(centers, (-1, 3)), np.asarray(radii, dtype=float), frames)

    @property
    def spheres(self):
        return [(c, float(r)) for c, r in zip(self.centers, self.radii)]

    def __len__(self):
        return len(self.radii) * len(self.frames)

    @property
    def active(self):
        return len(self) > 0


@dataclass(eq=False)
class StatePoint:
    """State, and its first and second physical-time derivatives."""

    X: np.ndarray
    Xd: np.ndarray
    Xdd: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Xd = np.asarray(self.Xd, dtype=float)
        self.Xdd = np.asarray(self.Xdd, dtype=float)
        if not (self.X.shape == self.Xd.shape == self.Xdd.shape) or self.X.shape[-1] % 2:
            raise ValueError("X, Xd, Xdd must share a (..., 2N) shape")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Xd))
                and np.all(np.isfinite(self.Xdd))):
            raise ValueError("state point must be finite")

    @property
    def n(self):
        return self.X.shape[-1] // 2

    def batched(self):
        """``(q, v, qd, vd, qdd, vdd, single)`` with a leading batch axis."""
        single = self.X.ndim == 1
        X, Xd, Xdd = (np.atleast_2d(a) for a in (self.X, self.Xd, self.Xdd))
        n = self.n
        return (X[:, :n], X[:, n:], Xd[:, :n], Xd[:, n:], Xdd[:, :n], Xdd[:, n:], single)


# --------------------------------------------------------------------------- metric

def metric_apply_inverse(H, k, w):
    """``G^{-1} w`` with ``G = diag(k I, H^T H)``, using two solves against a
    Cholesky factor of ``H``."""
    H = np.asarray(H, dtype=float)
    w = np.asarray(w, dtype=float)
    n = H.shape[0]
    try:
        fac = cho_factor(H)
    except np.linalg.LinAlgError:
        raise SingularMass() from None
    bottom = cho_solve(fac, cho_solve(fac, w[n:]))
    return np.concatenate((w[:n] / k, bottom))


def lagrangian(point: StatePoint, workspace, k):
    """``k |qdot - v|^2 + |H vdot + C|^2`` using ``H, C`` from ``workspace``."""
    q, v, qd, vd, _, _, single = point.batched()
    H = np.asarray(workspace.H).reshape(q.shape[0], q.shape[1], q.shape[1])
    C = np.asarray(workspace.C).reshape(q.shape)
    res = np.einsum("bij,bj->bi", H, vd) + C
    val = k * np.sum((qd - v) ** 2, axis=1) + np.sum(res ** 2, axis=1)
    return float(val[0]) if single else val


def lagrangian_at(point: StatePoint, model, k):
    """Lagrangian evaluated with freshly computed dynamics."""
    q, v, *_ = point.batched()
    H = rbd.crba(model, q)
    C = rbd.rnea(model, q, v, np.zeros_like(q))
    return lagrangian(point, _HC(H, C), k)


@dataclass
class _HC:
    H: np.ndarray
    C: np.ndarray


# --------------------------------------------------------------------------- omega

def _bmv(A, x):
    return np.einsum("bij,bj->bi", A, x)


def _tensor_vec(T, x):
    """``T[:, :, :, m] x`` stacked over ``m``: ``out[b, i, m] = sum_j T[b, i, j, m] x[b, j]``."""
    return np.einsum("bijm,bj->bim", T, x)


def _omega_terms(ws, q, v, qd, vd, qdd, vdd, k, A=None):
    """Right-hand side plus the intermediate vectors the Jacobian reuses."""
    H, Hinv = ws.H, ws.Hinv
    w = vd - ws.FD0                           # residual acceleration
    Hw = _bmv(H, w)                            # = H vd + C
    r = 2.0 * Hw
    rho = _bmv(H, r)
    if A is None:
        A = _tensor_vec(ws.dH_dq, w)
    alpha1 = -np.einsum("bil,bi->bl", ws.dFD_dq, rho)
    alpha2 = -np.einsum("bil,bi->bl", ws.dFD_dv, rho)
    Gamma = np.einsum("bil,bi->bl", A, Hw)
    top = 2.0 * (qdd - vd) - (alpha1 + 2.0 * Gamma) / k
    Hd = ws.Hdot
    gamma = (_bmv(Hd, _bmv(H, vd)) + _bmv(H, _bmv(Hd, vd)) + _bmv(H, _bmv(H, vdd))
             + _bmv(Hd, ws.C) + _bmv(H, ws.Cdot))
    beta = 2.0 * gamma - alpha2 + 2.0 * k * (qd - v)
    bottom = _bmv(Hinv, _bmv(Hinv, beta))
    return dict(top=top, bottom=bottom, w=w, Hw=Hw, r=r, rho=rho, A=A)


def _omega_batch(model, q, v, qd, vd, qdd, vdd, k):
    ws = rbd.first_order_workspace(model, q, v, qd, vd)
    # d(H w)/dq with the residual acceleration held fixed
    A = rbd.mass_matrix_dq_action(model, q, vd - ws.FD0)
    t = _omega_terms(ws, q, v, qd, vd, qdd, vdd, k, A=A)
    return np.concatenate((t["top"], t["bottom"]), axis=1)


def omega(point: StatePoint, model: RobotModel, k):
    """Flow right-hand side at one point (or a batch of points)."""
    q, v, qd, vd, qdd, vdd, single = point.batched()
    out = _omega_batch(model, q, v, qd, vd, qdd, vdd, k)
    return out[0] if single else out


def _omega_jacobian_batch(model, q, v, qd, vd, qdd, vdd, k):
    B, n = q.shape
    ws = rbd.second_order_workspace(model, q, v, qd, vd)
    t = _omega_terms(ws, q, v, qd, vd, qdd, vdd, k)
    H, Hinv, Hd = ws.H, ws.Hinv, ws.Hdot
    dH, d2H, dHd = ws.dH_dq, ws.d2H_dq2, ws.dHdot_dq
    Fq, Fv = ws.dFD_dq, ws.dFD_dv
    Cq, Cv = ws.dC_dq, ws.dC_dv
    w, Hw, r, rho, A = t["w"], t["Hw"], t["r"], t["rho"], t["A"]
    eye = np.broadcast_to(np.eye(n), (B, n, n))
    HH = H @ H
    tr = lambda M: np.swapaxes(M, 1, 2)  # noqa: E731

    # rho = H r with r = 2 (H vd + C)
    Hm_vd = _tensor_vec(dH, vd)
    drho_dq = _tensor_vec(dH, r) + 2.0 * H @ (Hm_vd + Cq)
    drho_dv = 2.0 * H @ Cv
    drho_dvd = 2.0 * HH

    # alpha1 = -Fq^T rho, alpha2 = -Fv^T rho
    Fqv_t = np.swapaxes(ws.d2FD_dqdv, 2, 3)       # [i, v-index, q-index]
    da1_dq = -np.einsum("bilm,bi->blm", ws.d2FD_dq2, rho) - tr(Fq) @ drho_dq
    da1_dv = -np.einsum("bilm,bi->blm", ws.d2FD_dqdv, rho) - tr(Fq) @ drho_dv
    da1_dvd = -tr(Fq) @ drho_dvd
    da2_dq = -np.einsum("bilm,bi->blm", Fqv_t, rho) - tr(Fv) @ drho_dq
    da2_dv = -np.einsum("bilm,bi->blm", ws.d2FD_dv2, rho) - tr(Fv) @ drho_dv
    da2_dvd = -tr(Fv) @ drho_dvd

    # Gamma_l = w^T H_l H w, with dw/dq = -Fq, dw/dv = -Fv, dw/dvd = I
    P = _tensor_vec(dH, Hw)                        # P[:, l] = H_l H w
    AH = tr(A) @ H
    dG_dq = (np.einsum("bi,bijlm,bj->blm", w, d2H, Hw) + tr(A) @ A
             - tr(P) @ Fq - AH @ Fq)
    dG_dv = -tr(P) @ Fv - AH @ Fv
    dG_dvd = tr(P) + AH

    dT_dq = -(da1_dq + 2.0 * dG_dq) / k
    dT_dv = -(da1_dv + 2.0 * dG_dv) / k
    dT_dvd = -2.0 * eye - (da1_dvd + 2.0 * dG_dvd) / k

    # gamma = (Hd H + H Hd) vd + H H vdd + Hd C + H Cd
    C, Cd = ws.C, ws.Cdot
    Hvd, Hdvd, Hvdd = _bmv(H, vd), _bmv(Hd, vd), _bmv(H, vdd)
    dg_dq = (_tensor_vec(dHd, Hvd) + Hd @ Hm_vd + _tensor_vec(dH, Hdvd)
             + H @ _tensor_vec(dHd, vd) + _tensor_vec(dH, Hvdd) + H @ _tensor_vec(dH, vdd)
             + _tensor_vec(dHd, C) + Hd @ Cq + _tensor_vec(dH, Cd) + H @ ws.dCdot_dq)
    dg_dv = Hd @ Cv + H @ ws.dCdot_dv
    dg_dqd = _tensor_vec(dH, Hvd) + H @ Hm_vd + _tensor_vec(dH, C) + H @ Cq
    dg_dvd = Hd @ H + H @ Hd + H @ Cv

    db_dq = 2.0 * dg_dq - da2_dq
    db_dv = 2.0 * dg_dv - da2_dv - 2.0 * k * eye
    db_dqd = 2.0 * dg_dqd + 2.0 * k * eye
    db_dvd = 2.0 * dg_dvd - da2_dvd

    # bottom = (H H)^{-1} beta; its q-derivative also differentiates the metric
    Minv = Hinv @ Hinv
    bottom = t["bottom"]
    dM_bottom = _tensor_vec(dH, _bmv(H, bottom)) + H @ _tensor_vec(dH, bottom)
    dB_dq = Minv @ (db_dq - dM_bottom)
    dB_dv = Minv @ db_dv
    dB_dqd = Minv @ db_dqd
    dB_dvd = Minv @ db_dvd

    dX = np.zeros((B, 2 * n, 2 * n))
    dX[:, :n, :n], dX[:, :n, n:] = dT_dq, dT_dv
    dX[:, n:, :n], dX[:, n:, n:] = dB_dq, dB_dv
    dXd = np.zeros((B, 2 * n, 2 * n))
    dXd[:, :n, n:] = dT_dvd
    dXd[:, n:, :n], dXd[:, n:, n:] = dB_dqd, dB_dvd
    dXdd = np.broadcast_to(2.0 * np.eye(2 * n), (B, 2 * n, 2 * n)).copy()
    return dX, dXd, dXdd


def omega_jacobian(point: StatePoint, model: RobotModel, k):
    """``(dOmega/dX, dOmega/dXd, dOmega/dXdd)``; the last is exactly ``2 I``."""
    q, v, qd, vd, qdd, vdd, single = point.batched()
    dX, dXd, dXdd = _omega_jacobian_batch(model, q, v, qd, vd, qdd, vdd, k)
    if single:
        return dX[0], dXd[0], dXdd[0]
    return dX, dXd, dXdd


# --------------------------------------------------------------------------- obstacles

def activation(x, c_cons):
    """Smooth step ``S(x) = 1/2 + tanh(c_cons x) / 2``."""
    return 0.5 + 0.5 * np.tanh(c_cons * x)


def _activation_derivs(g, c):
    th = np.tanh(c * g)
    sech2 = 1.0 - th * th
    S = 0.5 + 0.5 * th
    S1 = 0.5 * c * sech2
    S2 = -c * c * th * sech2
    return S, S1, S2


def barrier(g, k_cons, c_cons):
    """Penalty ``k_cons g^2 S(g)``."""
    g = np.asarray(g, dtype=float)
    return k_cons * g * g * activation(g, c_cons)


def constraint_value(q, model: RobotModel, obstacles: ObstacleSet):
    """``radius - distance`` for every (frame, sphere) pair; positive inside.

    Shape ``(..., n_frames * n_spheres)`` ordered frame-major.
    """
    q = np.asarray(q, dtype=float)
    if not obstacles.active:
        return np.zeros(q.shape[:-1] + (0,))
    pos = frame_positions(model, q)[..., list(obstacles.frames), :]    # (..., F, 3)
    diff = pos[..., :, None, :] - obstacles.centers                     # (..., F, S, 3)
    dist = np.linalg.norm(diff, axis=-1)
    g = obstacles.radii - dist
    return g.reshape(q.shape[:-1] + (-1,))


def _constraint_gradients(q, model, obstacles):
    """``g`` (B, F*S) and ``dg/dq`` (B, F*S, N) for a batch of configurations."""
    B, n = q.shape
    pos = frame_positions(model, q)[:, list(obstacles.frames), :]
    diff = pos[:, :, None, :] - obstacles.centers
    dist = np.linalg.norm(diff, axis=-1)
    g = obstacles.radii - dist
    unit = diff / np.where(dist > 0, dist, 1.0)[..., None]
    Js = np.stack([frame_jacobian(model, q, f) for f in obstacles.frames], axis=1)  # (B,F,3,N)
    grad = -np.einsum("bfsx,bfxn->bfsn", unit, Js)
    return g.reshape(B, -1), grad.reshape(B, -1, n)


def _penalty_batch(q, model, obstacles, k_cons, c_cons, k, with_jacobian=False):
    B, n = q.shape
    rhs = np.zeros((B, 2 * n))
    jac = np.zeros((B, 2 * n, 2 * n)) if with_jacobian else None
    if not obstacles.active or k_cons == 0.0:
        return rhs, jac
    g, grad = _constraint_gradients(q, model, obstacles)
    S, S1, S2 = _activation_derivs(g, c_cons)
    phi = k_cons * (2.0 * g * S + g * g * S1)
    rhs[:, :n] = -np.einsum("bj,bjn->bn", phi, grad) / k
    if with_jacobian:
        dphi = k_cons * (2.0 * S + 4.0 * g * S1 + g * g * S2)
        jac[:, :n, :n] = -np.einsum("bj,bjm,bjn->bmn", dphi, grad, grad) / k
    return rhs, jac


def penalty_rhs(point: StatePoint, model, obstacles, k_cons, c_cons, H=None, k=1.0):
    """Obstacle term ``-G^{-1} sum_j db(g_j)/dX``.

    Only ``q`` enters the constraints, so the ``v`` block is zero and ``H``
    (the lower metric block) is not needed; it is accepted for symmetry with
    ``metric_apply_inverse``.
    """
    q, *_, single = point.batched()
    rhs, _ = _penalty_batch(q, model, obstacles, k_cons, c_cons, k)
    return rhs[0] if single else rhs


# --------------------------------------------------------------------------- grid level

@dataclass(eq=False)
class AghfContext:
    """Everything the node-stacked system needs besides the interior states."""

    model: RobotModel
    cheb: ChebGrid
    params: AghfParams
    x0: np.ndarray
    xf: np.ndarray
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    threads: int = 1

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.xf = np.asarray(self.xf, dtype=float)
        n2 = 2 * self.model.nv
        if self.x0.shape != (n2,) or self.xf.shape != (n2,):
            raise ValueError(f"boundary states must have length {n2}")
        if self.cheb.p != self.params.p:
            raise ValueError("Chebyshev grid degree differs from params.p")

    @property
    def n(self):
        return self.model.nv

    def full_grid(self, interior):
        interior = np.asarray(interior, dtype=float).reshape(self.cheb.p - 1, 2 * self.n)
        return np.vstack((self.x0, interior, self.xf))


def _derivatives(ctx, full):
    return ctx.cheb.D_phys @ full, ctx.cheb.D2_phys @ full


def _chunks(count, threads):
    parts = max(1, min(int(threads), count))
    bounds = np.linspace(0, count, parts + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _parallel_nodes(fn, count, threads):
    """Evaluate ``fn(slice)`` over node chunks and stack along axis 0."""
    chunks = _chunks(count, threads)
    if len(chunks) == 1:
        return [fn(chunks[0])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(fn, chunks))


def _node_error(fn):
    """Tag a SingularMass raised inside ``fn(sl)`` with the first node of the chunk."""
    def wrapped(sl):
        try:
            return fn(sl)
        except SingularMass:
            raise SingularMass(node=sl.start + 1) from None
    return wrapped


def system_rhs(interior, ctx: AghfContext):
    """Flow velocity of the interior nodes, shape ``(p-1, 2N)``."""
    full = ctx.full_grid(interior)
    Xd, Xdd = _derivatives(ctx, full)
    n, prm = ctx.n, ctx.params
    X, Xd, Xdd = full[1:-1], Xd[1:-1], Xdd[1:-1]

    def work(sl):
        q, v = X[sl, :n], X[sl, n:]
        out = _omega_batch(ctx.model, q, v, Xd[sl, :n], Xd[sl, n:], Xdd[sl, :n],
                           Xdd[sl, n:], prm.k)
        pen, _ = _penalty_batch(q, ctx.model, ctx.obstacles, prm.k_cons, prm.c_cons, prm.k)
        return out + pen

    return np.vstack(_parallel_nodes(_node_error(work), X.shape[0], ctx.threads))


def system_jacobian(interior, ctx: AghfContext):
    """Jacobian of :func:`system_rhs` with respect to the flattened interior
    (row-major: node, then state component)."""
    full = ctx.full_grid(interior)
    Xd, Xdd = _derivatives(ctx, full)
    n, prm = ctx.n, ctx.params
    X, Xd, Xdd = full[1:-1], Xd[1:-1], Xdd[1:-1]
    m = X.shape[0]

    def work(sl):
        q, v = X[sl, :n], X[sl, n:]
        dX, dXd, dXdd = _omega_jacobian_batch(ctx.model, q, v, Xd[sl, :n], Xd[sl, n:],
                                              Xdd[sl, :n], Xdd[sl, n:], prm.k)
        _, pj = _penalty_batch(q, ctx.model, ctx.obstacles, prm.k_cons, prm.c_cons, prm.k,
                               with_jacobian=True)
        return dX + pj, dXd, dXdd

    parts = _parallel_nodes(_node_error(work), m, ctx.threads)
    dX = np.concatenate([p[0] for p in parts])
    dXd = np.concatenate([p[1] for p in parts])
    dXdd = np.concatenate([p[2] for p in parts])
    D = ctx.cheb.D_phys[1:-1, 1:-1]
    D2 = ctx.cheb.D2_phys[1:-1, 1:-1]
    J = np.einsum("iab,ij->iajb", dXd, D) + np.einsum("iab,ij->iajb", dXdd, D2)
    idx = np.arange(m)
    J[idx, :, idx, :] += dX
    return J.reshape(m * 2 * n, m * 2 * n)


def extract_controls(grid: HomotopyGrid, cheb: ChebGrid, model: RobotModel):
    """Node controls ``u = H(q) vdot + C(q, v)``, shape ``(p+1, N)``."""
    full = grid.values
    n = model.nv
    Xd = cheb.D_phys @ full
    q, v = full[:, :n], full[:, n:]
    return rbd.rnea(model, q, v, Xd[:, n:])


def lagrangian_nodes(full, cheb, model, k, obstacles=None, k_cons=0.0, c_cons=0.0):
    """Constrained Lagrangian at every node of a full grid."""
    n = model.nv
    Xd = cheb.D_phys @ full
    q, v = full[:, :n], full[:, n:]
    res = rbd.rnea(model, q, v, Xd[:, n:])
    L = k * np.sum((Xd[:, :n] - v) ** 2, axis=1) + np.sum(res ** 2, axis=1)
    if obstacles is not None and obstacles.active and k_cons > 0:
        L = L + barrier(constraint_value(q, model, obstacles), k_cons, c_cons).sum(axis=1)
    return L


def action_functional(grid: HomotopyGrid, cheb: ChebGrid, model, k, obstacles=None,
                      k_cons=0.0, c_cons=0.0):
    """Clenshaw-Curtis estimate of the (constrained) action over ``[0, T]``."""
    L = lagrangian_nodes(grid.values, cheb, model, k, obstacles, k_cons, c_cons)
    return float(cheb.integrate(L))


def control_energy(grid: HomotopyGrid, cheb: ChebGrid, model):
    """Quadrature estimate of ``int |u|^2 dt`` for the extracted controls."""
    u = extract_controls(grid, cheb, model)
    return float(cheb.integrate(np.sum(u * u, axis=1)))
