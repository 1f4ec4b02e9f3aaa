"""Kinematic-tree robot description: parsing, serialization, kinematics.

The model file is line oriented::

    robot <name>
    gravity <gx> <gy> <gz>
    body <name> parent <name|world> joint <revolute|prismatic> axis <x> <y> <z>
         xyz <px> <py> <pz> rpy <r> <p> <y> mass <m> com <cx> <cy> <cz>
         inertia <ixx> <iyy> <izz> <ixy> <ixz> <iyz>
    frame <name> body <name|world> xyz <x> <y> <z>

(each ``body`` entry on a single line). ``inertia`` is taken about the
centre of mass, as in URDF. ``#`` starts a comment.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ModelError, ParseError
from .spatial import PlueckerTransform, SpatialInertia, axis_angle, rpy_matrix

AXIS_TOL = 1e-10
WORLD = -1


@dataclass(frozen=True, eq=False)
class Joint:
    kind: str
    axis: np.ndarray
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray

    @property
    def parent_to_joint(self) -> PlueckerTransform:
        return PlueckerTransform.from_pose(rpy_matrix(*self.origin_rpy), self.origin_xyz)

    @property
    def origin_rotation(self):
        return rpy_matrix(*self.origin_rpy)

    @property
    def motion_subspace(self):
        S = np.zeros(6)
        if self.kind == "revolute":
            S[:3] = self.axis
        else:
            S[3:] = self.axis
        return S


@dataclass(frozen=True, eq=False)
class Body:
    name: str
    parent: int
    joint: Joint
    mass: float
    com: np.ndarray
    inertia_com: np.ndarray  # (ixx, iyy, izz, ixy, ixz, iyz)

    @property
    def inertia(self) -> SpatialInertia:
        ixx, iyy, izz, ixy, ixz, iyz = self.inertia_com
        Ic = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
        return SpatialInertia.from_com_inertia(self.mass, self.com, Ic)


@dataclass(frozen=True, eq=False)
class Frame:
    name: str
    body: int
    offset: np.ndarray


@dataclass(frozen=True, eq=False)
class FramePose:
    position: np.ndarray
    rotation: np.ndarray


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    bodies: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    frames: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        _validate(self)
        # cached per-body constants used by the dynamics passes
        object.__setattr__(self, "_cache", {})

    @property
    def nv(self):
        return len(self.bodies)

    dof = nv

    @property
    def parents(self):
        return [b.parent for b in self.bodies]

    def body_index(self, name):
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)

    def frame_index(self, name):
        for i, f in enumerate(self.frames):
            if f.name == name:
                return i
        raise KeyError(name)

    def with_gravity(self, gravity):
        return replace(self, gravity=np.asarray(gravity, dtype=float))

    def ancestors(self, i):
        """Indices of the bodies on the path from the world to body ``i`` (inclusive)."""
        path = []
        while i != WORLD:
            path.append(i)
            i = self.bodies[i].parent
        return path[::-1]

    def constants(self):
        """Per-body arrays the recursions need; computed once per model."""
        c = self._cache
        if not c:
            c["tree"] = [b.joint.parent_to_joint for b in self.bodies]
            c["S"] = [b.joint.motion_subspace for b in self.bodies]
            c["I"] = [b.inertia for b in self.bodies]
            c["Imat"] = [inertia.matrix() for inertia in c["I"]]
        return c


def _validate(model):
    names = set()
    for i, b in enumerate(model.bodies):
        if b.name in names or b.name == "world":
            raise ModelError(f"duplicate or reserved body name {b.name!r}")
        names.add(b.name)
        if not (b.parent == WORLD or 0 <= b.parent < i):
            raise ModelError(f"body {b.name!r}: parent must be declared before the child")
        if b.joint.kind not in ("revolute", "prismatic"):
            raise ModelError(f"body {b.name!r}: unknown joint kind {b.joint.kind!r}")
        if abs(np.linalg.norm(b.joint.axis) - 1.0) > AXIS_TOL:
            raise ModelError(f"body {b.name!r}: joint axis must be a unit vector")
        if not b.mass > 0:
            raise ModelError(f"body {b.name!r}: mass must be positive")
        Ic = b.inertia.inertia_com
        if np.linalg.eigvalsh(Ic).min() < -1e-12 * max(1.0, np.abs(Ic).max()):
            raise ModelError(f"body {b.name!r}: inertia is not positive semidefinite")
    if not model.bodies:
        raise ModelError("model has no bodies")
    for f in model.frames:
        if not (f.body == WORLD or 0 <= f.body < len(model.bodies)):
            raise ModelError(f"frame {f.name!r}: invalid body index")


_BODY_KEYS = [("parent", 1), ("joint", 1), ("axis", 3), ("xyz", 3), ("rpy", 3),
              ("mass", 1), ("com", 3), ("inertia", 6)]


def _floats(tokens, lineno, key):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(lineno, f"non-numeric value for {key!r}") from None


def _keyed(tokens, layout, lineno):
    out = {}
    pos = 0
    for key, count in layout:
        if pos >= len(tokens) or tokens[pos] != key:
            raise ParseError(lineno, f"expected {key!r}")
        vals = tokens[pos + 1:pos + 1 + count]
        if len(vals) != count:
            raise ParseError(lineno, f"{key!r} needs {count} value(s)")
        out[key] = vals
        pos += 1 + count
    if pos != len(tokens):
        raise ParseError(lineno, f"unexpected trailing tokens {tokens[pos:]}")
    return out


def parse_model(text: str) -> RobotModel:
    """Parse a model file into a :class:`RobotModel`."""
    name = None
    gravity = None
    bodies = []
    frames_raw = []
    index = {"world": WORLD}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        if head == "robot":
            if len(tok) != 2:
                raise ParseError(lineno, "robot line is 'robot <name>'")
            name = tok[1]
        elif head == "gravity":
            if len(tok) != 4:
                raise ParseError(lineno, "gravity needs 3 values")
            gravity = _floats(tok[1:], lineno, "gravity")
        elif head == "body":
            if name is None:
                raise ParseError(lineno, "body declared before robot line")
            if len(tok) < 2:
                raise ParseError(lineno, "body needs a name")
            fields = _keyed(tok[2:], _BODY_KEYS, lineno)
            bname = tok[1]
            parent_name = fields["parent"][0]
            if parent_name not in index:
                raise ModelError(f"line {lineno}: body {bname!r} references undeclared parent "
                                 f"{parent_name!r}")
            if bname in index:
                raise ModelError(f"line {lineno}: duplicate body {bname!r}")
            kind = fields["joint"][0]
            if kind not in ("revolute", "prismatic"):
                raise ParseError(lineno, f"unknown joint type {kind!r}")
            nums = {k: np.array(_floats(fields[k], lineno, k))
                    for k in ("axis", "xyz", "rpy", "mass", "com", "inertia")}
            joint = Joint(kind, nums["axis"], nums["xyz"], nums["rpy"])
            bodies.append(Body(bname, index[parent_name], joint, float(nums["mass"][0]),
                               nums["com"], nums["inertia"]))
            index[bname] = len(bodies) - 1
        elif head == "frame":
            if len(tok) != 8 or tok[2] != "body" or tok[4] != "xyz":
                raise ParseError(lineno, "frame line is 'frame <name> body <name> xyz x y z'")
            frames_raw.append((tok[1], tok[3], _floats(tok[5:8], lineno, "xyz"), lineno))
        else:
            raise ParseError(lineno, f"unknown directive {head!r}")
    if name is None:
        raise ParseError(1, "missing 'robot <name>' line")
    if gravity is None:
        gravity = [0.0, 0.0, -9.81]
    frames = []
    for fname, bname, off, lineno in frames_raw:
        if bname not in index:
            raise ModelError(f"line {lineno}: frame {fname!r} references unknown body {bname!r}")
        frames.append(Frame(fname, index[bname], np.array(off)))
    return RobotModel(name, bodies, np.array(gravity), frames)


def load_model(path) -> RobotModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def serialize_model(model: RobotModel) -> str:
    """Inverse of :func:`parse_model` (17 significant digits, round-trips exactly)."""
    lines = [f"robot {model.name}", f"gravity {_fmt(model.gravity)}"]
    for b in model.bodies:
        parent = "world" if b.parent == WORLD else model.bodies[b.parent].name
        j = b.joint
        lines.append(
            f"body {b.name} parent {parent} joint {j.kind} axis {_fmt(j.axis)} "
            f"xyz {_fmt(j.origin_xyz)} rpy {_fmt(j.origin_rpy)} mass {_fmt([b.mass])} "
            f"com {_fmt(b.com)} inertia {_fmt(b.inertia_com)}")
    for f in model.frames:
        body = "world" if f.body == WORLD else model.bodies[f.body].name
        lines.append(f"frame {f.name} body {body} xyz {_fmt(f.offset)}")
    return "\n".join(lines) + "\n"


def models_equal(a: RobotModel, b: RobotModel) -> bool:
    if (a.name, a.nv, len(a.frames)) != (b.name, b.nv, len(b.frames)):
        return False
    if not np.array_equal(a.gravity, b.gravity):
        return False
    for x, y in zip(a.bodies, b.bodies):
        if (x.name, x.parent, x.joint.kind, x.mass) != (y.name, y.parent, y.joint.kind, y.mass):
            return False
        for u, v in [(x.joint.axis, y.joint.axis), (x.joint.origin_xyz, y.joint.origin_xyz),
                     (x.joint.origin_rpy, y.joint.origin_rpy), (x.com, y.com),
                     (x.inertia_com, y.inertia_com)]:
            if not np.array_equal(u, v):
                return False
    return all(f.name == g.name and f.body == g.body and np.array_equal(f.offset, g.offset)
               for f, g in zip(a.frames, b.frames))


# --------------------------------------------------------------------------- kinematics

def body_poses(model: RobotModel, q):
    """World rotation and origin of every body; ``q`` is ``(N,)`` or ``(M, N)``.

    Returns lists ``R[i]`` of shape ``(..., 3, 3)`` and ``p[i]`` of shape ``(..., 3)``.
    """
    q = np.asarray(q, dtype=float)
    batch = q.shape[:-1]
    Rs, ps = [], []
    for i, b in enumerate(model.bodies):
        if b.parent == WORLD:
            Rp = np.broadcast_to(np.eye(3), batch + (3, 3))
            pp = np.zeros(batch + (3,))
        else:
            Rp, pp = Rs[b.parent], ps[b.parent]
        j = b.joint
        Rj = Rp @ j.origin_rotation
        pj = pp + np.einsum("...ij,j->...i", Rp, j.origin_xyz)
        if j.kind == "revolute":
            R = Rj @ axis_angle(j.axis, q[..., i])
            p = pj
        else:
            R = Rj
            p = pj + np.einsum("...ij,j->...i", Rj, j.axis) * q[..., i, None]
        Rs.append(R)
        ps.append(p)
    return Rs, ps


def forward_kinematics(model: RobotModel, q):
    """World pose of every declared frame (list of :class:`FramePose`)."""
    q = np.asarray(q, dtype=float)
    Rs, ps = body_poses(model, q)
    out = []
    for f in model.frames:
        if f.body == WORLD:
            R = np.broadcast_to(np.eye(3), q.shape[:-1] + (3, 3)).copy()
            p = np.broadcast_to(f.offset, q.shape[:-1] + (3,)).copy()
        else:
            R = Rs[f.body]
            p = ps[f.body] + np.einsum("...ij,j->...i", R, f.offset)
        out.append(FramePose(p, R))
    return out


def frame_positions(model: RobotModel, q):
    """Stacked frame positions, shape ``(..., n_frames, 3)``."""
    poses = forward_kinematics(model, q)
    return np.stack([fp.position for fp in poses], axis=-2)


def frame_jacobian(model: RobotModel, q, frame: int):
    """Positional Jacobian ``d p_frame / dq`` of shape ``(..., 3, N)``."""
    q = np.asarray(q, dtype=float)
    f = model.frames[frame]
    J = np.zeros(q.shape[:-1] + (3, model.nv))
    if f.body == WORLD:
        return J
    Rs, ps = body_poses(model, q)
    p = ps[f.body] + np.einsum("...ij,j->...i", Rs[f.body], f.offset)
    for j in model.ancestors(f.body):
        b = model.bodies[j]
        # joint axis does not move under its own coordinate
        axis_w = np.einsum("...ij,j->...i", Rs[j], b.joint.axis)
        if b.joint.kind == "revolute":
            J[..., :, j] = np.cross(axis_w, p - ps[j])
        else:
            J[..., :, j] = axis_w
    return J
