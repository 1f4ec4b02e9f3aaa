"""Chebyshev-Gauss-Lobatto collocation: nodes, differentiation, interpolation
and Clenshaw-Curtis quadrature on [-1, 1], plus the map to physical time
``t = T (tau + 1) / 2``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidDegree, OutOfDomain

DOMAIN_TOL = 1e-12
# queries this close to a node are treated as hitting it (absorbs the
# round-off of mapping node times back from physical time)
SNAP_TOL = 4e-15


def _check_degree(p):
    if int(p) != p or p < 1:
        raise InvalidDegree(f"degree must be an integer >= 1, got {p!r}")
    return int(p)


def cheb_nodes(p):
    """Ascending Lobatto nodes ``-cos(pi i / p)``, ``i = 0..p``."""
    p = _check_degree(p)
    x = -np.cos(np.pi * np.arange(p + 1) / p)
    # exact symmetry and endpoints
    x = 0.5 * (x - x[::-1])
    return x


def _bary_weights(p):
    w = np.ones(p + 1)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def diff_matrix(p):
    """Differentiation matrix on the ascending Lobatto nodes.

    Off-diagonal entries use the closed form ``(c_i / c_j) (-1)^{i+j} / (x_i - x_j)``;
    the diagonal is minus the off-diagonal row sum so constants differentiate
    to zero to round-off.
    """
    p = _check_degree(p)
    x = cheb_nodes(p)
    c = np.ones(p + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(p + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(p + 1))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def quadrature_weights(p):
    """Clenshaw-Curtis weights for the Lobatto nodes."""
    p = _check_degree(p)
    theta = np.pi * np.arange(p + 1) / p
    w = np.zeros(p + 1)
    v = np.ones(p - 1)
    interior = slice(1, p)
    if p % 2 == 0:
        w[0] = w[p] = 1.0 / (p * p - 1)
        for k in range(1, p // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k * k - 1)
        v -= np.cos(p * theta[interior]) / (p * p - 1)
    else:
        w[0] = w[p] = 1.0 / (p * p)
        for k in range(1, (p - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k * k - 1)
    w[interior] = 2.0 * v / p
    # nodes are ordered by -cos, the weights are symmetric so ordering is moot
    return w


def interpolate(values, t_query, nodes=None):
    """Barycentric evaluation of the interpolant through ``(nodes, values)``.

    ``values`` may be ``(p+1,)`` or ``(p+1, m)``; ``t_query`` a scalar or array.
    Queries coinciding with a node return the node value exactly.
    """
    values = np.asarray(values, dtype=float)
    p = values.shape[0] - 1
    x = cheb_nodes(p) if nodes is None else np.asarray(nodes, dtype=float)
    t = np.asarray(t_query, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(np.abs(t) > 1.0 + DOMAIN_TOL) or not np.all(np.isfinite(t)):
        raise OutOfDomain("interpolation query outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    w = _bary_weights(p)
    diff = t[:, None] - x[None, :]
    exact = np.abs(diff) <= SNAP_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = w / diff
    hit = exact.any(axis=1)
    kern[hit] = 0.0
    rows = np.nonzero(hit)[0]
    kern[rows, np.argmax(exact[rows], axis=1)] = 1.0
    denom = kern.sum(axis=1)
    out = np.tensordot(kern, values, axes=(1, 0))
    out = out / denom.reshape((-1,) + (1,) * (values.ndim - 1))
    return out[0] if scalar else out


@dataclass(frozen=True, eq=False)
class ChebGrid:
    """Collocation grid of degree ``p`` over a physical horizon ``T``."""

    p: int
    T: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_degree(self.p))
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        object.__setattr__(self, "T", float(self.T))
        D = diff_matrix(self.p)
        object.__setattr__(self, "nodes", cheb_nodes(self.p))
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "D2", D @ D)
        object.__setattr__(self, "weights", quadrature_weights(self.p))

    @property
    def time_scale(self):
        return 2.0 / self.T

    @property
    def times(self):
        return self.T * (self.nodes + 1.0) / 2.0

    @property
    def D_phys(self):
        return self.time_scale * self.D

    @property
    def D2_phys(self):
        return self.time_scale ** 2 * self.D2

    def to_tau(self, t):
        return 2.0 * np.asarray(t, dtype=float) / self.T - 1.0

    def interpolate(self, values, t_phys):
        """Interpolate node data at physical times ``t_phys``."""
        return interpolate(values, self.to_tau(t_phys), self.nodes)

    def integrate(self, f_nodes):
        """``int_0^T f dt`` from node samples."""
        return 0.5 * self.T * np.tensordot(self.weights, np.asarray(f_nodes, dtype=float), axes=1)
