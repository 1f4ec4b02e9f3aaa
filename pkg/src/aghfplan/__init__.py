"""Trajectory planning by affine geometric heat flow on rigid-body manipulators."""
from pathlib import Path

from .exceptions import (AghfError, BoundaryMismatch, Diverged, InvalidDegree, ModelError,
                         OutOfDomain, ParseError, ScenarioError, SingularMass, StepUnderflow)
from .model import RobotModel, load_model, parse_model, serialize_model

__version__ = "0.1.0"

DATA_DIR = Path(__file__).resolve().parent / "data"


def data_path(name):
    """Path of a bundled model or scenario file."""
    path = DATA_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no bundled file named {name!r}")
    return path
