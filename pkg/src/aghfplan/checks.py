"""Finite-difference validation of every analytic derivative.

Each check compares an analytic quantity with a central difference of its
parent quantity at seeded random points and reports the worst scaled error
``|A - F|_inf / (1 + |F|_inf)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import aghf, rbd

H1 = 1e-6       # first-order central-difference step
H2 = 1e-5       # step for differentiating analytic first derivatives
H_INNER = 1e-2  # the Lagrangian is quadratic in Xdot, so this step is exact
H_OUTER = 1e-4

DEFAULT_TOL = 1e-6
# tolerance of each check family as a multiple of the first-derivative tolerance
FAMILY_SCALE = {"first": 1.0, "second": 100.0, "omega": 10.0, "jacobian": 100.0, "exact": 0.0}
CHECK_K = 100.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    family: str
    error: float
    tol: float

    @property
    def ok(self):
        return self.error <= self.tol


def scaled_error(a, f):
    a, f = np.asarray(a, dtype=float), np.asarray(f, dtype=float)
    return float(np.abs(a - f).max() / (1.0 + np.abs(f).max()))


def central(fn, x, h, axis=-1):
    """Stack of central differences of ``fn`` along each coordinate of ``x``
    (the differentiation index is placed at ``axis`` of the output)."""
    cols = []
    for e in np.eye(x.size):
        cols.append((np.asarray(fn(x + h * e)) - np.asarray(fn(x - h * e))) / (2 * h))
    return np.stack(cols, axis=axis)


def random_state(rng, n):
    q = rng.uniform(-np.pi, np.pi, n)
    v = rng.normal(size=n)
    return q, v


def _el_oracle(model, X, Xd, Xdd, k):
    """``G^{-1} (d/dt dL/dXd - dL/dX)`` from differences of the Lagrangian."""
    def L(X_, Xd_):
        return aghf.lagrangian_at(aghf.StatePoint(X_, Xd_, np.zeros_like(X_)), model, k)

    dL_dX = central(lambda x: L(x, Xd), X, H1)

    def dL_dXd(X_, Xd_):
        return central(lambda y: L(X_, y), Xd_, H_INNER)

    ddt = (dL_dXd(X + H_OUTER * Xd, Xd + H_OUTER * Xdd)
           - dL_dXd(X - H_OUTER * Xd, Xd - H_OUTER * Xdd)) / (2 * H_OUTER)
    n = model.nv
    H = rbd.crba(model, X[:n])
    return aghf.metric_apply_inverse(H, k, ddt - dL_dX)


def run_checks(model, seed=0, points=3, tol=DEFAULT_TOL, k=CHECK_K):
    """Run the whole suite; returns a list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    n = model.nv
    worst = {}

    def note(name, family, err):
        worst[name] = (family, max(err, worst.get(name, (family, 0.0))[1]))

    for _ in range(points):
        q, v = random_state(rng, n)
        a = rng.normal(size=n)
        w = rng.normal(size=n)
        zero = np.zeros(n)

        # inverse dynamics
        dq, dv = rbd.rnea_d(model, q, v, a)
        note("rnea_d/dq", "first", scaled_error(dq, central(lambda x: rbd.rnea(model, x, v, a), q, H1)))
        note("rnea_d/dv", "first", scaled_error(dv, central(lambda x: rbd.rnea(model, q, x, a), v, H1)))
        qq, vv, qv = rbd.rnea_2d(model, q, v, a)
        note("rnea_2d/dq2", "second",
             scaled_error(qq, central(lambda x: rbd.rnea_d(model, x, v, a)[0], q, H2)))
        note("rnea_2d/dv2", "second",
             scaled_error(vv, central(lambda x: rbd.rnea_d(model, q, x, a)[1], v, H2)))
        note("rnea_2d/dqdv", "second",
             scaled_error(qv, central(lambda x: rbd.rnea_d(model, q, x, a)[0], v, H2)))

        # mass matrix
        H, Hdot = rbd.crba_d(model, q, v)
        fd_dir = (rbd.crba(model, q + H1 * v) - rbd.crba(model, q - H1 * v)) / (2 * H1)
        note("crba_d/Hdot", "first", scaled_error(Hdot, fd_dir))
        _, _, dH, d2H = rbd.crba_2d(model, q, v)
        note("crba_2d/dH_dq", "first", scaled_error(dH, central(lambda x: rbd.crba(model, x), q, H1)))
        note("crba_2d/d2H_dq2", "second",
             scaled_error(d2H, central(lambda x: rbd.crba_2d(model, x, v)[2], q, H2)))
        note("mass_matrix_dq_action", "first",
             scaled_error(rbd.mass_matrix_dq_action(model, q, w),
                          central(lambda x: rbd.crba(model, x) @ w, q, H1)))
        note("get_hdot_d", "second",
             scaled_error(rbd.get_hdot_d(v, d2H),
                          central(lambda x: rbd.crba_d(model, x, v)[1], q, H2)))

        # forward dynamics
        Fq, Fv, Hinv, FD0 = rbd.aba_d(model, q, v)
        note("aba_d/dq", "first",
             scaled_error(Fq, central(lambda x: rbd.aba(model, x, v, zero), q, H1)))
        note("aba_d/dv", "first",
             scaled_error(Fv, central(lambda x: rbd.aba(model, q, x, zero), v, H1)))
        ws = rbd.second_order_workspace(model, q[None], v[None], w[None], a[None])
        note("aba_2d/dq2", "second",
             scaled_error(ws.d2FD_dq2[0], central(lambda x: rbd.aba_d(model, x, v)[0], q, H2)))
        note("aba_2d/dv2", "second",
             scaled_error(ws.d2FD_dv2[0], central(lambda x: rbd.aba_d(model, q, x)[1], v, H2)))
        note("aba_2d/dqdv", "second",
             scaled_error(ws.d2FD_dqdv[0], central(lambda x: rbd.aba_d(model, q, x)[0], v, H2)))

        # Cdot = dC/dq vq + dC/dv vv
        vq, vvd = w, a

        def cdot(q_, v_):
            cq, cv = rbd.rnea_d(model, q_, v_, zero)
            return cq @ vq + cv @ vvd

        dCd_q, dCd_v = rbd.get_cdot_d(vq, vvd, ws.d2C_dq2[0], ws.d2C_dv2[0], ws.d2C_dqdv[0])
        note("get_cdot_d/dq", "second", scaled_error(dCd_q, central(lambda x: cdot(x, v), q, H2)))
        note("get_cdot_d/dv", "second", scaled_error(dCd_v, central(lambda x: cdot(q, x), v, H2)))

        # flow right-hand side and its Jacobian
        X = np.concatenate((q, v))
        Xd = rng.normal(size=2 * n)
        Xdd = rng.normal(size=2 * n)
        pt = aghf.StatePoint(X, Xd, Xdd)
        om = aghf.omega(pt, model, k)
        note("omega", "omega", scaled_error(om, _el_oracle(model, X, Xd, Xdd, k)))
        dX, dXd, dXdd = aghf.omega_jacobian(pt, model, k)
        om_of = lambda X_, Xd_, Xdd_: aghf.omega(aghf.StatePoint(X_, Xd_, Xdd_), model, k)  # noqa: E731
        note("omega_jacobian/dX", "jacobian",
             scaled_error(dX, central(lambda x: om_of(x, Xd, Xdd), X, H2)))
        note("omega_jacobian/dXd", "jacobian",
             scaled_error(dXd, central(lambda x: om_of(X, x, Xdd), Xd, H2)))
        exact = 0.0 if np.array_equal(dXdd, 2.0 * np.eye(2 * n)) else np.inf
        note("omega_jacobian/dXdd=2I", "exact", exact)

    return [CheckResult(name, fam, err, tol * FAMILY_SCALE[fam])
            for name, (fam, err) in worst.items()]


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'max_err':>10}  {'tol':>8}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.error:10.3e}  {r.tol:8.1e}  "
                     f"{'ok' if r.ok else 'FAIL'}")
    return "\n".join(lines)
