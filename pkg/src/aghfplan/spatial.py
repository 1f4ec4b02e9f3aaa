"""Spatial (6-D) vector algebra in Featherstone body coordinates.

Motion vectors are stored as ``(..., 6)`` arrays ``[angular, linear]`` and
force vectors as ``(..., 6)`` arrays ``[couple, linear]``. Every function
broadcasts over leading dimensions so the dynamics recursions can process a
batch of configurations in one pass.

Plücker transforms are kept factored as a rotation ``E`` and a translation
``r``: the motion transform from frame A to frame B is

    X = [[E, 0], [-E r×, E]]

where ``r`` is the position of B's origin expressed in A coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-12


def cross3(a, b):
    """Broadcasting 3-vector cross product (cheaper than ``np.cross`` on small arrays)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0), axis=-1)


def skew(v):
    """Matrix ``[v×]`` such that ``skew(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotx(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def roty(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotz(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(roll, pitch, yaw):
    """Rotation for fixed-axis roll-pitch-yaw (about X, then Y, then Z)."""
    return rotz(yaw) @ roty(pitch) @ rotx(roll)


def axis_angle(axis, theta):
    """Rodrigues rotation matrix; ``theta`` may be an array of angles."""
    axis = np.asarray(axis, dtype=float)
    theta = np.asarray(theta, dtype=float)
    K = skew(axis)
    s = np.sin(theta)[..., None, None]
    c = np.cos(theta)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def _split(x):
    return x[..., :3], x[..., 3:]


def _join(top, bottom):
    return np.concatenate((top, bottom), axis=-1)


@dataclass(frozen=True, eq=False)
class PlueckerTransform:
    """Coordinate transform between two frames, stored as (rotation, translation).

    ``rotation`` maps A-coordinates to B-coordinates, ``translation`` is the
    origin of B expressed in A. Both may carry leading batch dimensions.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.rotation, dtype=float)
        r = np.asarray(self.translation, dtype=float)
        if E.shape[-2:] != (3, 3) or r.shape[-1] != 3:
            raise ValueError("rotation must be (...,3,3) and translation (...,3)")
        object.__setattr__(self, "rotation", E)
        object.__setattr__(self, "translation", r)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_pose(cls, R, p):
        """Transform into a child frame whose orientation in the parent is ``R``
        and whose origin sits at ``p`` (both in parent coordinates)."""
        R = np.asarray(R, dtype=float)
        return cls(np.swapaxes(R, -1, -2), np.asarray(p, dtype=float))

    def is_valid(self, tol=ORTHO_TOL):
        E = self.rotation
        eye = np.eye(3)
        ortho = np.abs(np.swapaxes(E, -1, -2) @ E - eye).max() <= tol
        return bool(ortho and np.all(np.abs(np.linalg.det(E) - 1.0) <= tol)
                    and np.all(np.isfinite(self.translation)))

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        E1, r1 = self.rotation, self.translation
        E2, r2 = other.rotation, other.translation
        E = E1 @ E2
        r = r2 + np.einsum("...ji,...j->...i", E2, r1)
        return PlueckerTransform(E, r)

    def inverse(self):
        E, r = self.rotation, self.translation
        return PlueckerTransform(np.swapaxes(E, -1, -2), -np.einsum("...ij,...j->...i", E, r))


def _rot(E, x):
    return np.einsum("...ij,...j->...i", E, x)


def _rot_t(E, x):
    return np.einsum("...ji,...j->...i", E, x)


def xform_motion(X: PlueckerTransform, m):
    """Apply a Plücker motion transform to motion vector(s) ``m``."""
    w, v = _split(np.asarray(m, dtype=float))
    E, r = X.rotation, X.translation
    return _join(_rot(E, w), _rot(E, v - cross3(r, w)))


def xform_force(X: PlueckerTransform, f):
    """Apply the force transform ``X* = X^{-T}`` to force vector(s) ``f``."""
    n, lin = _split(np.asarray(f, dtype=float))
    E, r = X.rotation, X.translation
    return _join(_rot(E, n - cross3(r, lin)), _rot(E, lin))


def inv_xform_motion(X: PlueckerTransform, m):
    """Apply ``X^{-1}`` to motion vector(s)."""
    w, v = _split(np.asarray(m, dtype=float))
    E, r = X.rotation, X.translation
    w0 = _rot_t(E, w)
    return _join(w0, _rot_t(E, v) + cross3(r, w0))


def transpose_force(X: PlueckerTransform, f):
    """Apply ``X^T`` to force vector(s): carries a force from B back to A."""
    n, lin = _split(np.asarray(f, dtype=float))
    E, r = X.rotation, X.translation
    lin0 = _rot_t(E, lin)
    return _join(_rot_t(E, n) + cross3(r, lin0), lin0)


def cross_motion(v, m):
    """Spatial motion cross product ``v × m``."""
    w, u = _split(v)
    wm, um = _split(m)
    return _join(cross3(w, wm), cross3(w, um) + cross3(u, wm))


def cross_force(v, f):
    """Spatial force cross product ``v ×* f``."""
    w, u = _split(v)
    n, lin = _split(f)
    return _join(cross3(w, n) + cross3(u, lin), cross3(w, lin))


def spatial_cross(v, arg, mode="motion"):
    """``v × arg`` in motion mode, ``v ×* arg`` in force mode."""
    v = np.asarray(v, dtype=float)
    arg = np.asarray(arg, dtype=float)
    if mode == "motion":
        return cross_motion(v, arg)
    if mode == "force":
        return cross_force(v, arg)
    raise ValueError(f"mode must be 'motion' or 'force', got {mode!r}")


@dataclass(frozen=True, eq=False)
class SpatialInertia:
    """Rigid-body inertia in body coordinates.

    ``rot_inertia`` is the rotational inertia about the body-frame origin
    (not the centre of mass).
    """

    mass: float
    com: np.ndarray
    rot_inertia: np.ndarray

    def __post_init__(self):
        com = np.asarray(self.com, dtype=float).reshape(3)
        Io = np.asarray(self.rot_inertia, dtype=float).reshape(3, 3)
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if np.abs(Io - Io.T).max() > ORTHO_TOL * max(1.0, np.abs(Io).max()):
            raise ValueError("rot_inertia must be symmetric")
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "com", com)
        object.__setattr__(self, "rot_inertia", Io)

    @classmethod
    def from_com_inertia(cls, mass, com, inertia_com):
        """Build from the rotational inertia about the centre of mass."""
        com = np.asarray(com, dtype=float)
        cx = skew(com)
        Io = np.asarray(inertia_com, dtype=float) + mass * cx @ cx.T
        return cls(mass, com, 0.5 * (Io + Io.T))

    @property
    def inertia_com(self):
        cx = skew(self.com)
        return self.rot_inertia - self.mass * cx @ cx.T

    def matrix(self):
        """Dense 6×6 form, used by the articulated- and composite-body passes."""
        h = skew(self.mass * self.com)
        out = np.empty((6, 6))
        out[:3, :3] = self.rot_inertia
        out[:3, 3:] = h
        out[3:, :3] = h.T
        out[3:, 3:] = self.mass * np.eye(3)
        return out


def inertia_apply(inertia: SpatialInertia, m):
    """Momentum (force) ``I m`` for motion vector(s) ``m``."""
    w, v = _split(np.asarray(m, dtype=float))
    h = inertia.mass * inertia.com
    n = w @ inertia.rot_inertia.T + cross3(h, v)
    lin = inertia.mass * v - cross3(h, w)
    return _join(n, lin)


def transform_matrix_congruence(X: PlueckerTransform, M):
    """Return ``X^T M X`` for (batched) 6×6 ``M`` without densifying ``X``.

    Used to carry composite and articulated inertias from a child to its
    parent frame.
    """
    M = np.asarray(M, dtype=float)
    # columns of M X: M applied to X e_k, i.e. to each column of dense X
    eye = np.broadcast_to(np.eye(6), M.shape[:-2] + (6, 6))
    Xcols = xform_motion(_expand(X), np.swapaxes(eye, -1, -2))   # rows are X e_k
    MX = np.einsum("...ij,...kj->...ik", M, Xcols)                # (M X)
    # X^T applied to each column of MX
    out = transpose_force(_expand(X), np.swapaxes(MX, -1, -2))
    return np.swapaxes(out, -1, -2)


def _expand(X):
    return PlueckerTransform(X.rotation[..., None, :, :], X.translation[..., None, :])
