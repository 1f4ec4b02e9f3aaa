"""Scenario files and CSV outputs.

Scenario format (UTF-8, ``#`` comments)::

    model_path = pendulum2.model
    x0 = 0, 0, 0, 0
    xf = 3.141592653589793, 0, 0, 0
    T = 3
    k = 1e5
    s_max = 10
    p = 12
    kp = 10
    kv = 10
    steady_tol = 1e-6          # optional flow override

    [obstacle]
    center = 1.41, 1.41, 0
    radius = 0.3

``obstacle_frames`` (top level) names the frames tested against every
sphere; it defaults to all frames of the model. ``margin`` (default 0) pads
every radius during planning only: the penalty acts at the collocation nodes,
so the curve between two nodes resting on a sphere can dip inside it.
Verification always uses the unpadded radii. Relative ``model_path``
values resolve against the scenario file's directory.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .aghf import AghfParams, ObstacleSet
from .exceptions import ParseError, ScenarioError
from .flow import ConvergenceRecord, FlowConfig
from .model import RobotModel

_FLOAT_KEYS = ("T", "k", "s_max", "k_cons", "c_cons", "kp", "kv", "epsilon", "check_dt",
               "rollout_dt", "margin")
_FLOW_KEYS = {f.name for f in fields(FlowConfig)}
_REQUIRED = ("x0", "xf", "T", "k", "s_max", "p")


@dataclass(eq=False)
class ScenarioFile:
    x0: np.ndarray
    xf: np.ndarray
    T: float
    params: AghfParams
    model_path: Path | None = None
    obstacles: list = field(default_factory=list)   # [(center, radius)]
    obstacle_frames: tuple | None = None            # frame names
    kp: float = 10.0
    kv: float = 10.0
    epsilon: float = 0.05
    check_dt: float = 1e-2
    rollout_dt: float = 1e-3
    flow: FlowConfig = field(default_factory=FlowConfig)
    initial_curve: str = "line"
    margin: float = 0.0

    def planning_obstacles(self, model: RobotModel) -> ObstacleSet:
        """Obstacles as seen by the planner, radii padded by ``margin``."""
        obs = self.obstacle_set(model)
        if not obs.active or self.margin == 0:
            return obs
        return ObstacleSet(obs.centers, obs.radii + self.margin, obs.frames)

    def obstacle_set(self, model: RobotModel) -> ObstacleSet:
        if not self.obstacles:
            return ObstacleSet()
        names = self.obstacle_frames
        if names is None:
            frames = list(range(len(model.frames)))
        else:
            try:
                frames = [model.frame_index(nm) for nm in names]
            except KeyError as exc:
                raise ScenarioError(f"obstacle_frames: unknown frame {exc.args[0]!r}") from None
        if not frames:
            raise ScenarioError("obstacles given but the model declares no frames")
        return ObstacleSet.from_spheres(self.obstacles, frames)

    def validate_against(self, model: RobotModel):
        n2 = 2 * model.nv
        for name in ("x0", "xf"):
            vec = getattr(self, name)
            if vec.shape != (n2,):
                raise ScenarioError(f"{name}: expected {n2} values for a {model.nv}-DOF model, "
                                    f"got {vec.size}")
        self.obstacle_set(model)


def _vector(text, lineno, key):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise ParseError(lineno, f"{key}: expected comma-separated numbers") from None
    if not all(np.isfinite(vals)):
        raise ParseError(lineno, f"{key}: values must be finite")
    return np.array(vals)


def _scalar(text, lineno, key):
    vec = _vector(text, lineno, key)
    if vec.size != 1:
        raise ParseError(lineno, f"{key}: expected a single number")
    return float(vec[0])


def parse_scenario(text: str, base_dir=None) -> ScenarioFile:
    top = {}
    blocks = []
    current = top
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[obstacle]":
                raise ParseError(lineno, f"unknown section {line!r}")
            current = {"_line": lineno}
            blocks.append(current)
            continue
        if "=" not in line:
            raise ParseError(lineno, "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ParseError(lineno, "empty key or value")
        if key in current:
            raise ParseError(lineno, f"duplicate key {key!r}")
        current[key] = (value, lineno)

    for key in _REQUIRED:
        if key not in top:
            raise ScenarioError(f"{key}: required field missing")
    known = set(_REQUIRED) | set(_FLOAT_KEYS) | _FLOW_KEYS | {
        "model_path", "obstacle_frames", "initial_curve"}
    for key, (_, lineno) in top.items():
        if key not in known:
            raise ParseError(lineno, f"unknown key {key!r}")

    def num(key, default=None):
        if key not in top:
            return default
        return _scalar(top[key][0], top[key][1], key)

    x0 = _vector(*top["x0"], "x0")
    xf = _vector(*top["xf"], "xf")
    if x0.size != xf.size or x0.size % 2:
        raise ScenarioError(f"x0/xf: lengths {x0.size} and {xf.size} must match and be even")
    T = num("T")
    if not T > 0:
        raise ScenarioError(f"T: must be positive, got {T}")
    p_val = num("p")
    try:
        params = AghfParams(k=num("k"), s_max=num("s_max"), p=p_val,
                            k_cons=num("k_cons", 0.0), c_cons=num("c_cons", 0.0))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    flow_kwargs = {}
    for key in _FLOW_KEYS:
        if key in top:
            value, lineno = top[key]
            if key == "method":
                flow_kwargs[key] = value
            elif key in ("newton_max_iter", "log_every"):
                flow_kwargs[key] = int(_scalar(value, lineno, key))
            else:
                flow_kwargs[key] = _scalar(value, lineno, key)
    try:
        flow = FlowConfig(**flow_kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    spheres = []
    for blk in blocks:
        lineno = blk.pop("_line")
        if set(blk) != {"center", "radius"}:
            raise ParseError(lineno, "obstacle block needs exactly 'center' and 'radius'")
        center = _vector(*blk["center"], "center")
        radius = _scalar(*blk["radius"], "radius")
        if center.size != 3:
            raise ParseError(blk["center"][1], "center: expected 3 values")
        if not radius > 0:
            raise ScenarioError(f"radius: must be positive, got {radius}")
        spheres.append((center, radius))

    model_path = None
    if "model_path" in top:
        model_path = Path(top["model_path"][0])
        if base_dir is not None and not model_path.is_absolute():
            model_path = Path(base_dir) / model_path
    frames = None
    if "obstacle_frames" in top:
        frames = tuple(s.strip() for s in top["obstacle_frames"][0].split(",") if s.strip())

    sc = ScenarioFile(x0=x0, xf=xf, T=T, params=params, model_path=model_path,
                      obstacles=spheres, obstacle_frames=frames, flow=flow,
                      kp=num("kp", 10.0), kv=num("kv", 10.0), epsilon=num("epsilon", 0.05),
                      check_dt=num("check_dt", 1e-2), rollout_dt=num("rollout_dt", 1e-3),
                      initial_curve=top.get("initial_curve", ("line", 0))[0],
                      margin=num("margin", 0.0))
    if not sc.margin >= 0:
        raise ScenarioError(f"margin: must be non-negative, got {sc.margin}")
    for name in ("epsilon", "check_dt", "rollout_dt"):
        if not getattr(sc, name) > 0:
            raise ScenarioError(f"{name}: must be positive")
    return sc


def load_scenario(path) -> ScenarioFile:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)


# --------------------------------------------------------------------------- CSV

def fmt(x):
    """17 significant digits: enough for an exact float64 round trip."""
    return f"{float(x):.17g}"


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def trajectory_header(n):
    return (["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"v{i}" for i in range(1, n + 1)]
            + [f"u{i}" for i in range(1, n + 1)])


def write_trajectory(path, times, states, controls):
    n = controls.shape[1]
    _write_rows(path, trajectory_header(n), np.column_stack((times, states, controls)))


def read_trajectory(path):
    """Returns ``(times, states, controls)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(1, "empty trajectory file")
    header = rows[0]
    if (len(header) - 1) % 3 or header != trajectory_header((len(header) - 1) // 3):
        raise ParseError(1, "trajectory header must be t,q1..qN,v1..vN,u1..uN")
    n = (len(header) - 1) // 3
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ParseError(0, f"non-numeric trajectory entry ({exc})") from None
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 1 + 3 * n:
        raise ParseError(0, "trajectory needs at least 3 complete rows")
    return data[:, 0], data[:, 1:1 + 2 * n], data[:, 1 + 2 * n:]


CONVERGENCE_HEADER = ["s", "action", "control_energy", "rhs_inf_norm", "accepted"]


def write_convergence(path, records):
    rows = [(r.s, r.action, r.control_energy, r.rhs_inf_norm, int(r.step_accepted))
            for r in records]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CONVERGENCE_HEADER)
        for s, a, e, r, acc in rows:
            writer.writerow([fmt(s), fmt(a), fmt(e), fmt(r), acc])


def read_convergence(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CONVERGENCE_HEADER:
        raise ParseError(1, "convergence header mismatch")
    return [ConvergenceRecord(float(s), float(a), float(e), float(r), bool(int(acc)))
            for s, a, e, r, acc in rows[1:]]


def write_rollout(path, result):
    n = result.inputs_fb.shape[1]
    header = (["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"v{i}" for i in range(1, n + 1)]
              + [f"ufb{i}" for i in range(1, n + 1)])
    _write_rows(path, header, np.column_stack((result.times, result.states, result.inputs_fb)))
