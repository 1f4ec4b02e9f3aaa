"""Rigid-body dynamics and their analytic first and second derivatives.

All algorithms run on a batch of configurations at once: inputs may be
``(N,)`` vectors or ``(B, N)`` stacks, and outputs follow the same convention.

Derivatives of the inverse dynamics are obtained by propagating truncated
Taylor jets (value, gradient, Hessian) through the recursive Newton-Euler
passes. The joint-transform derivative ``d X_J / dq = -(S×) X_J`` is applied
in closed form, so every result is exact to round-off; there is no finite
differencing anywhere in this module.

Tensor layout: matrices keep their natural ``(row, col)`` indices and the
differentiation variable(s) come last, e.g. ``dH_dq[i, j, k] = dH_ij/dq_k``
and ``d2ID_dqdv[i, j, k] = d^2 tau_i / dq_j dv_k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SingularMass
from .model import WORLD, RobotModel
from .spatial import (
    axis_angle,
    cross_force,
    cross_motion,
    cross3,
    inertia_apply,
    transform_matrix_congruence,
    transpose_force,
    xform_motion,
    PlueckerTransform,
)

# --------------------------------------------------------------------------- jets


class _Jet:
    """Truncated Taylor expansion: value ``v`` (B, *S), gradient ``d`` (B, K, *S)
    and Hessian ``h`` (B, K, K, *S). Missing orders are ``None``."""

    __slots__ = ("v", "d", "h")

    def __init__(self, v, d=None, h=None):
        self.v, self.d, self.h = v, d, h

    def map(self, fn):
        return _Jet(fn(self.v),
                    None if self.d is None else fn(self.d),
                    None if self.h is None else fn(self.h))

    def __add__(self, other):
        return _Jet(self.v + other.v,
                    None if self.d is None else self.d + other.d,
                    None if self.h is None else self.h + other.h)

    def __getitem__(self, idx):
        # index the trailing (per-body scalar) axis
        return _Jet(self.v[..., idx],
                    None if self.d is None else self.d[..., idx],
                    None if self.h is None else self.h[..., idx])


def _bc(arr, extra):
    """Insert ``extra`` derivative axes after the batch axis of a per-batch array."""
    return arr.reshape(arr.shape[:1] + (1,) * extra + arr.shape[1:])


def _map_batched(jet, fn):
    """Apply ``fn(x, extra)`` to each order, where ``extra`` is the number of
    derivative axes sitting between the batch axis and the data."""
    return _Jet(fn(jet.v, 0),
                None if jet.d is None else fn(jet.d, 1),
                None if jet.h is None else fn(jet.h, 2))


def _bilinear(f, a, b):
    v = f(a.v, b.v)
    if a.d is None:
        return _Jet(v)
    d = f(a.d, b.v[:, None]) + f(a.v[:, None], b.d)
    if a.h is None:
        return _Jet(v, d)
    cross = f(a.d[:, :, None], b.d[:, None, :])
    h = (f(a.h, b.v[:, None, None]) + f(a.v[:, None, None], b.h)
         + cross + np.swapaxes(cross, 1, 2))
    return _Jet(v, d, h)


def _scale_const(s, vec):
    """Scalar jet ``s`` (B,) times constant 6-vector."""
    return _Jet(s.v[..., None] * vec,
                None if s.d is None else s.d[..., None] * vec,
                None if s.h is None else s.h[..., None] * vec)


def _with_angle(w, theta, op):
    """Add the chain-rule terms of a joint transform that depends on the
    scalar jet ``theta`` (whose own Hessian is zero). ``w`` is the transformed
    jet at fixed angle and ``op`` the constant generator acting on it."""
    if w.d is None:
        return w
    td = theta.d
    d = w.d + td[..., None] * op(w.v)[:, None]
    if w.h is None:
        return _Jet(w.v, d)
    P = td[:, :, None, None] * op(w.d)[:, None, :, :]
    h = (w.h + P + np.swapaxes(P, 1, 2)
         + td[:, :, None, None] * td[:, None, :, None] * op(op(w.v))[:, None, None, :])
    return _Jet(w.v, d, h)


def _seed(x, K, order, offset=None):
    """Jet for input ``x`` (B, N). With ``offset`` set, the N variables are
    seeded as K-variables ``offset..offset+N``; otherwise ``x`` is constant."""
    B, N = x.shape
    if order == 0:
        return _Jet(x)
    d = np.zeros((B, K, N))
    if offset is not None:
        d[:, offset:offset + N, :] = np.eye(N)
    h = np.zeros((B, K, K, N)) if order == 2 else None
    return _Jet(x, d, h)


# --------------------------------------------------------------------------- helpers

def _as_batch(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != n:
            raise ValueError(f"expected vector of length {n}, got {x.shape}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != n:
        raise ValueError(f"expected array of shape (B, {n}), got {x.shape}")
    return x, False


def _out(x, single):
    return x[0] if single else x


def _joint_rotation(axis, theta):
    """Coordinate rotation of a revolute joint (transpose of the body rotation)."""
    return np.swapaxes(axis_angle(axis, theta), -1, -2)


def _gravity_accel(model, use_gravity, B):
    a0 = np.zeros((B, 6))
    if use_gravity:
        a0[:, 3:] = -model.gravity
    return a0


# --------------------------------------------------------------------------- RNEA core

def _rnea_jet(model: RobotModel, q: _Jet, v: _Jet, a: _Jet, use_gravity: bool) -> _Jet:
    """Inverse dynamics over jets; returns the torque jet (B, N)."""
    const = model.constants()
    n = model.nv
    B = q.v.shape[0]
    order = 0 if q.d is None else (1 if q.h is None else 2)
    zero6 = _Jet(np.zeros((B, 6)),
                 None if order < 1 else np.zeros(q.d.shape[:2] + (6,)),
                 None if order < 2 else np.zeros(q.h.shape[:3] + (6,)))
    a_root = _Jet(_gravity_accel(model, use_gravity, B), zero6.d, zero6.h)

    vel, acc, frc, thetas, Ejs = [], [], [], [], []
    for i, body in enumerate(model.bodies):
        Xt = const["tree"][i]
        S = const["S"][i]
        axis = body.joint.axis
        th = q[i]
        thetas.append(th)
        if body.parent == WORLD:
            v_par, a_par = zero6, a_root
        else:
            v_par, a_par = vel[body.parent], acc[body.parent]

        if body.joint.kind == "revolute":
            E = _joint_rotation(axis, th.v)
            Ejs.append(E)

            def xj(x, extra, E=E):
                Eb = _bc(E, extra)
                w3 = np.einsum("...ij,...j->...i", Eb, x[..., :3])
                l3 = np.einsum("...ij,...j->...i", Eb, x[..., 3:])
                return np.concatenate((w3, l3), axis=-1)
        else:
            Ejs.append(th.v)

            def xj(x, extra, tv=th.v, axis=axis):
                r = _bc(tv, extra)[..., None] * axis
                return np.concatenate((x[..., :3], x[..., 3:] - cross3(r, x[..., :3])), axis=-1)

        gen = lambda x, S=S: -cross_motion(S, x)  # noqa: E731

        vt = _map_batched(v_par.map(lambda x, Xt=Xt: xform_motion(Xt, x)), xj)
        vt = _with_angle(vt, th, gen)
        vJ = _scale_const(v[i], S)
        vi = vt + vJ

        at = _map_batched(a_par.map(lambda x, Xt=Xt: xform_motion(Xt, x)), xj)
        at = _with_angle(at, th, gen)
        ai = at + _scale_const(a[i], S) + _bilinear(cross_motion, vi, vJ)

        inertia = const["I"][i]
        Iv = vi.map(lambda x, I=inertia: inertia_apply(I, x))
        fi = ai.map(lambda x, I=inertia: inertia_apply(I, x)) + _bilinear(cross_force, vi, Iv)
        vel.append(vi)
        acc.append(ai)
        frc.append(fi)

    tau_v = np.empty((B, n))
    tau_d = None if order < 1 else np.empty(q.d.shape[:2] + (n,))
    tau_h = None if order < 2 else np.empty(q.h.shape[:3] + (n,))
    for i in range(n - 1, -1, -1):
        body = model.bodies[i]
        S = const["S"][i]
        fi = frc[i]
        tau_v[:, i] = fi.v @ S
        if order >= 1:
            tau_d[..., i] = fi.d @ S
        if order >= 2:
            tau_h[..., i] = fi.h @ S
        if body.parent == WORLD:
            continue
        th = thetas[i]
        gen_f = lambda x, S=S: cross_force(S, x)  # noqa: E731
        g = _with_angle(fi, th, gen_f)
        if body.joint.kind == "revolute":
            E = Ejs[i]

            def xjt(x, extra, E=E):
                Eb = _bc(E, extra)
                n3 = np.einsum("...ji,...j->...i", Eb, x[..., :3])
                l3 = np.einsum("...ji,...j->...i", Eb, x[..., 3:])
                return np.concatenate((n3, l3), axis=-1)
        else:
            def xjt(x, extra, tv=Ejs[i], axis=body.joint.axis):
                r = _bc(tv, extra)[..., None] * axis
                return np.concatenate((x[..., :3] + cross3(r, x[..., 3:]), x[..., 3:]), axis=-1)
        Xt = const["tree"][i]
        back = _map_batched(g, xjt).map(lambda x, Xt=Xt: transpose_force(Xt, x))
        frc[body.parent] = frc[body.parent] + back
    return _Jet(tau_v, tau_d, tau_h)


# --------------------------------------------------------------------------- value algorithms

def rnea(model, q, v, a, use_gravity=True):
    """Inverse dynamics ``tau = H(q) a + C(q, v)`` (gravity folded into C)."""
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    a, _ = _as_batch(a, n)
    tau = _rnea_jet(model, _Jet(q), _Jet(v), _Jet(a), use_gravity).v
    return _out(tau, single)


def _joint_transforms(model, q):
    """Batched parent->child transforms ``X_i(q_i)`` in factored form."""
    const = model.constants()
    out = []
    for i, body in enumerate(model.bodies):
        Xt = const["tree"][i]
        if body.joint.kind == "revolute":
            XJ = PlueckerTransform(_joint_rotation(body.joint.axis, q[:, i]),
                                   np.zeros((q.shape[0], 3)))
        else:
            XJ = PlueckerTransform(np.broadcast_to(np.eye(3), (q.shape[0], 3, 3)),
                                   q[:, i, None] * body.joint.axis)
        out.append(XJ.compose(Xt))
    return out


def crba(model, q):
    """Joint-space mass matrix by the composite-rigid-body algorithm."""
    n = model.nv
    q, single = _as_batch(q, n)
    B = q.shape[0]
    const = model.constants()
    Xs = _joint_transforms(model, q)
    Ic = [np.broadcast_to(M, (B, 6, 6)).copy() for M in const["Imat"]]
    H = np.zeros((B, n, n))
    for i in range(n - 1, -1, -1):
        parent = model.bodies[i].parent
        if parent != WORLD:
            Ic[parent] += transform_matrix_congruence(Xs[i], Ic[i])
        F = Ic[i] @ const["S"][i]
        H[:, i, i] = F @ const["S"][i]
        j = i
        while model.bodies[j].parent != WORLD:
            F = transpose_force(Xs[j], F)
            j = model.bodies[j].parent
            H[:, i, j] = H[:, j, i] = F @ const["S"][j]
    return _out(H, single)


def aba(model, q, v, tau, use_gravity=True):
    """Forward dynamics by the articulated-body algorithm."""
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    tau, _ = _as_batch(tau, n)
    B = q.shape[0]
    const = model.constants()
    Xs = _joint_transforms(model, q)
    vel, cvec, IA, pA = [], [], [], []
    for i, body in enumerate(model.bodies):
        S = const["S"][i]
        vJ = v[:, i, None] * S
        if body.parent == WORLD:
            vi = vJ
        else:
            vi = xform_motion(Xs[i], vel[body.parent]) + vJ
        vel.append(vi)
        cvec.append(cross_motion(vi, vJ))
        IA.append(np.broadcast_to(const["Imat"][i], (B, 6, 6)).copy())
        pA.append(cross_force(vi, inertia_apply(const["I"][i], vi)))
    U, dinv, u = [None] * n, [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        S = const["S"][i]
        U[i] = IA[i] @ S
        d = U[i] @ S
        dinv[i] = 1.0 / d
        u[i] = tau[:, i] - pA[i] @ S
        parent = model.bodies[i].parent
        if parent != WORLD:
            Ia = IA[i] - np.einsum("bi,bj->bij", U[i], U[i]) * dinv[i][:, None, None]
            pa = (pA[i] + np.einsum("bij,bj->bi", Ia, cvec[i])
                  + U[i] * (u[i] * dinv[i])[:, None])
            IA[parent] += transform_matrix_congruence(Xs[i], Ia)
            pA[parent] += transpose_force(Xs[i], pa)
    qdd = np.empty((B, n))
    acc = [None] * n
    a_root = _gravity_accel(model, use_gravity, B)
    for i, body in enumerate(model.bodies):
        a_par = a_root if body.parent == WORLD else acc[body.parent]
        ap = xform_motion(Xs[i], a_par) + cvec[i]
        qdd[:, i] = (u[i] - np.einsum("bi,bi->b", U[i], ap)) * dinv[i]
        acc[i] = ap + qdd[:, i, None] * const["S"][i]
    return _out(qdd, single)


def _inverse_spd(H):
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise SingularMass() from None
    Linv = np.linalg.inv(L)
    return np.swapaxes(Linv, -1, -2) @ Linv


# --------------------------------------------------------------------------- derivatives

def rnea_d(model, q, v, a, use_gravity=True):
    """``(dtau/dq, dtau/dv)`` of the inverse dynamics."""
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    a, _ = _as_batch(a, n)
    K = 2 * n
    tau = _rnea_jet(model, _seed(q, K, 1, 0), _seed(v, K, 1, n), _seed(a, K, 1),
                    use_gravity)
    D = np.swapaxes(tau.d, 1, 2)
    return _out(D[:, :, :n], single), _out(D[:, :, n:], single)


def rnea_2d(model, q, v, a, use_gravity=True):
    """Second partials of the inverse dynamics: ``(d2/dq2, d2/dv2, d2/dqdv)``."""
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    a, _ = _as_batch(a, n)
    K = 2 * n
    tau = _rnea_jet(model, _seed(q, K, 2, 0), _seed(v, K, 2, n), _seed(a, K, 2),
                    use_gravity)
    Hs = np.moveaxis(tau.h, 3, 1)  # (B, N, K, K)
    return (_out(Hs[:, :, :n, :n], single), _out(Hs[:, :, n:, n:], single),
            _out(Hs[:, :, :n, n:], single))


def mass_matrix_dq_action(model, q, w):
    """``d(H(q) w)/dq`` for fixed ``w``: inverse dynamics with gravity off,
    zero velocity and acceleration ``w``, differentiated in ``q``."""
    n = model.nv
    q, single = _as_batch(q, n)
    w, _ = _as_batch(w, n)
    tau = _rnea_jet(model, _seed(q, n, 1, 0), _seed(np.zeros_like(q), n, 1),
                    _seed(w, n, 1), use_gravity=False)
    return _out(np.swapaxes(tau.d, 1, 2), single)


def _mass_columns_jet(model, q, qdir, order):
    """Jets of the mass-matrix columns ``H e_j``. ``qdir`` is the (B, N, K)
    tangent seed of ``q``; returns value (B,N,N) plus derivative stacks."""
    n = model.nv
    B = q.shape[0]
    K = qdir.shape[2]
    qq = np.repeat(q, n, axis=0)
    d = np.repeat(np.swapaxes(qdir, 1, 2), n, axis=0)
    h = np.zeros((B * n, K, K, n)) if order == 2 else None
    qj = _Jet(qq, d, h)
    zero = _seed(np.zeros((B * n, n)), K, order)
    acc = _seed(np.tile(np.eye(n), (B, 1)), K, order)
    tau = _rnea_jet(model, qj, zero, acc, use_gravity=False)
    # tau.v[b*n + j, i] = H[b, i, j]
    Hv = np.swapaxes(tau.v.reshape(B, n, n), 1, 2)
    Hd = np.moveaxis(tau.d.reshape(B, n, K, n), (1, 2, 3), (2, 3, 1))  # (B, i, j, k)
    Hh = None
    if order == 2:
        Hh = np.moveaxis(tau.h.reshape(B, n, K, K, n), (1, 2, 3, 4), (2, 3, 4, 1))
    return Hv, Hd, Hh


def crba_d(model, q, v):
    """Mass matrix and its time derivative ``Hdot = sum_k dH/dq_k v_k``."""
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    H, Hd, _ = _mass_columns_jet(model, q, v[:, :, None], order=1)
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    Hdot = Hd[..., 0]
    Hdot = 0.5 * (Hdot + np.swapaxes(Hdot, 1, 2))
    return _out(H, single), _out(Hdot, single)


def crba_2d(model, q, v):
    """``(H, Hdot, dH_dq, d2H_dq2)``."""
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    eye = np.broadcast_to(np.eye(n), (q.shape[0], n, n))
    H, dH, d2H = _mass_columns_jet(model, q, eye, order=2)
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    dH = 0.5 * (dH + np.swapaxes(dH, 1, 2))
    d2H = 0.5 * (d2H + np.swapaxes(d2H, 1, 2))
    Hdot = np.einsum("bijk,bk->bij", dH, v)
    return (_out(H, single), _out(Hdot, single), _out(dH, single), _out(d2H, single))


def aba_d(model, q, v, tau0=None, use_gravity=True, H=None):
    """Forward-dynamics partials ``(dFD_dq, dFD_dv, Hinv, FD)`` at torque ``tau0``
    (zero by default, i.e. the drift ``-H^{-1} C``).

    Uses ``dFD/dx = -H^{-1} dID/dx`` evaluated at the forward-dynamics
    acceleration.
    """
    n = model.nv
    q, single = _as_batch(q, n)
    v, _ = _as_batch(v, n)
    tau0 = np.zeros_like(q) if tau0 is None else _as_batch(tau0, n)[0]
    fd = aba(model, q, v, tau0, use_gravity)
    if H is None:
        H = crba(model, q)
    else:
        H = _as_batch_matrix(H, n)
    Hinv = _inverse_spd(H)
    dq, dv = rnea_d(model, q, v, fd, use_gravity)
    dq, dv = np.atleast_3d(dq).reshape(-1, n, n), np.atleast_3d(dv).reshape(-1, n, n)
    return (_out(-Hinv @ dq, single), _out(-Hinv @ dv, single), _out(Hinv, single),
            _out(fd, single))


def _as_batch_matrix(M, n):
    M = np.asarray(M, dtype=float)
    return M[None] if M.ndim == 2 else M


def aba_2d(model, ws):
    """Second partials of the drift forward dynamics.

    Differentiates ``ID(q, v, FD(q, v)) = 0`` twice; ``ws`` must carry
    ``Hinv``, ``dH_dq``, ``dFD_dq``, ``dFD_dv`` and the inverse-dynamics
    second partials evaluated at ``a = FD0``.
    """
    Hinv, dH = ws.Hinv, ws.dH_dq
    Fq, Fv = ws.dFD_dq, ws.dFD_dv
    # dH_l @ Fq[:, m]  -> T[i, l, m]
    T_qq = np.einsum("...ijl,...jm->...ilm", dH, Fq)
    T_qv = np.einsum("...ijl,...jm->...ilm", dH, Fv)
    rhs_qq = ws.d2ID_dq2 + T_qq + np.swapaxes(T_qq, -1, -2)
    rhs_qv = ws.d2ID_dqdv + T_qv
    rhs_vv = ws.d2ID_dv2
    solve = lambda R: -np.einsum("...ij,...jlm->...ilm", Hinv, R)  # noqa: E731
    return solve(rhs_qq), solve(rhs_vv), solve(rhs_qv)


def get_hdot_d(v, d2H_dq2):
    """``dHdot/dq[i, j, k] = sum_l d2H[i, j, k, l] v_l`` (order of mixed partials is free)."""
    return np.einsum("...ijkl,...l->...ijk", d2H_dq2, v)


def get_cdot_d(vq, vv, d2C_dq2, d2C_dv2, d2C_dqdv):
    """Partials of ``Cdot = dC/dq vq + dC/dv vv`` with respect to ``q`` and ``v``.

    The ``(v, q)`` block is the index-swapped ``(q, v)`` block.
    """
    d2C_dvdq = np.swapaxes(d2C_dqdv, -1, -2)
    dq = (np.einsum("...ijk,...j->...ik", d2C_dq2, vq)
          + np.einsum("...ijk,...j->...ik", d2C_dvdq, vv))
    dv = (np.einsum("...ijk,...j->...ik", d2C_dqdv, vq)
          + np.einsum("...ijk,...j->...ik", d2C_dv2, vv))
    return dq, dv


# --------------------------------------------------------------------------- workspace

@dataclass
class DynamicsWorkspace:
    """Everything the AGHF right-hand side and its Jacobian consume at a
    batch of points. Second-order fields are ``None`` for first-order builds."""

    H: np.ndarray
    Hinv: np.ndarray
    Hdot: np.ndarray
    C: np.ndarray
    Cdot: np.ndarray
    FD0: np.ndarray
    dC_dq: np.ndarray
    dC_dv: np.ndarray
    dFD_dq: np.ndarray
    dFD_dv: np.ndarray
    dH_dq: np.ndarray | None = None
    d2H_dq2: np.ndarray | None = None
    dHdot_dq: np.ndarray | None = None
    dCdot_dq: np.ndarray | None = None
    dCdot_dv: np.ndarray | None = None
    d2C_dq2: np.ndarray | None = None
    d2C_dv2: np.ndarray | None = None
    d2C_dqdv: np.ndarray | None = None
    d2ID_dq2: np.ndarray | None = None
    d2ID_dv2: np.ndarray | None = None
    d2ID_dqdv: np.ndarray | None = None
    d2FD_dq2: np.ndarray | None = None
    d2FD_dv2: np.ndarray | None = None
    d2FD_dqdv: np.ndarray | None = None


def first_order_workspace(model, q, v, qdot, vdot):
    """Batched quantities for the right-hand side (inputs are (B, N))."""
    H, Hdot = crba_d(model, q, qdot)
    H, Hdot = _as_batch_matrix(H, model.nv), _as_batch_matrix(Hdot, model.nv)
    zero = np.zeros_like(q)
    C = rnea(model, q, v, zero).reshape(q.shape)
    dC_dq, dC_dv = rnea_d(model, q, v, zero)
    Cdot = np.einsum("bij,bj->bi", dC_dq, qdot) + np.einsum("bij,bj->bi", dC_dv, vdot)
    Hinv = _inverse_spd(H)
    FD0 = -np.einsum("bij,bj->bi", Hinv, C)
    dq_fd, dv_fd = rnea_d(model, q, v, FD0)
    return DynamicsWorkspace(H=H, Hinv=Hinv, Hdot=Hdot, C=C, Cdot=Cdot, FD0=FD0,
                             dC_dq=dC_dq, dC_dv=dC_dv,
                             dFD_dq=-Hinv @ dq_fd, dFD_dv=-Hinv @ dv_fd)


def second_order_workspace(model, q, v, qdot, vdot):
    """Batched quantities for the Jacobian (inputs are (B, N))."""
    n = model.nv
    H, Hdot, dH, d2H = crba_2d(model, q, qdot)
    H, Hdot = _as_batch_matrix(H, n), _as_batch_matrix(Hdot, n)
    dH, d2H = dH.reshape((-1,) + (n,) * 3), d2H.reshape((-1,) + (n,) * 4)
    Hinv = _inverse_spd(H)
    # one second-order pass at a = 0 yields C and all its partials
    K = 2 * n
    zero = np.zeros_like(q)
    tau = _rnea_jet(model, _seed(q, K, 2, 0), _seed(v, K, 2, n), _seed(zero, K, 2), True)
    C = tau.v
    D = np.swapaxes(tau.d, 1, 2)
    dC_dq, dC_dv = D[:, :, :n], D[:, :, n:]
    Hs = np.moveaxis(tau.h, 3, 1)
    d2C_qq, d2C_vv, d2C_qv = Hs[:, :, :n, :n], Hs[:, :, n:, n:], Hs[:, :, :n, n:]
    FD0 = -np.einsum("bij,bj->bi", Hinv, C)
    # ID partials at a = FD0 differ from C's only through H(q) a
    dID_dq = dC_dq + np.einsum("bijk,bj->bik", dH, FD0)
    d2ID_qq = d2C_qq + np.einsum("bijkl,bj->bikl", d2H, FD0)
    Cdot = np.einsum("bij,bj->bi", dC_dq, qdot) + np.einsum("bij,bj->bi", dC_dv, vdot)
    ws = DynamicsWorkspace(
        H=H, Hinv=Hinv, Hdot=Hdot, C=C, Cdot=Cdot, FD0=FD0,
        dC_dq=dC_dq, dC_dv=dC_dv, dFD_dq=-Hinv @ dID_dq, dFD_dv=-Hinv @ dC_dv,
        dH_dq=dH, d2H_dq2=d2H, dHdot_dq=get_hdot_d(qdot, d2H),
        d2C_dq2=d2C_qq, d2C_dv2=d2C_vv, d2C_dqdv=d2C_qv,
        d2ID_dq2=d2ID_qq, d2ID_dv2=d2C_vv, d2ID_dqdv=d2C_qv)
    ws.dCdot_dq, ws.dCdot_dv = get_cdot_d(qdot, vdot, d2C_qq, d2C_vv, d2C_qv)
    ws.d2FD_dq2, ws.d2FD_dv2, ws.d2FD_dqdv = aba_2d(model, ws)
    return ws
