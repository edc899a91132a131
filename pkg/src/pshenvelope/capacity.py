"""Relative extremal functions and relative Monge-Ampère capacity on grids.

The relative extremal function of E in Omega is the largest nonpositive psh
function that is <= -1 on E, i.e. the envelope of the obstacle -chi_E with no
mass constraint.  Its Monge-Ampere mass is the capacity Cap(E, Omega).
"""

import math

import numpy as np

from .domain import DomainSpec
from .envelope import envelope_obstacle
from .errors import EmptySet
from .grid import GridFunction, GridSet, build_grid
from .ma import ma_integral


def _set_on_grid(E, spec=None, h=None):
    """Resolve ``E`` to a GridSet; an expression needs ``spec`` and ``h``."""
    if isinstance(E, GridSet):
        if spec is not None and h is not None:
            grid = build_grid(spec, h, E.grid.stencil)
            if not grid.same_as(E.grid):
                return E.transfer(grid)
        return E
    if spec is None or h is None:
        raise ValueError("a set given by a predicate needs a domain spec and a spacing")
    return GridSet.from_predicate(build_grid(spec, h), E)


def extremal_obstacle(E):
    """-1 on E, 0 at every other interior and band node."""
    grid = E.grid
    vals = np.where(E.mask, -1.0, 0.0)
    return GridFunction(grid, vals)


def relative_extremal(E, spec=None, h=None, tol=None, mode="seq", backend=None):
    """Discrete relative extremal function h_E.

    Parameters
    ----------
    E : GridSet or expression
        The compact set; an expression (true where > 0) is sampled on the grid
        of ``spec`` at spacing ``h``.
    spec : DomainSpec, optional
    h : float, optional

    Returns
    -------
    EnvelopeResult
        ``P`` takes values in [-1, 0] and equals -1 on E.

    Raises
    ------
    EmptySet
        E has no interior node.
    """
    if spec is not None and not isinstance(spec, DomainSpec):
        raise TypeError("spec must be a DomainSpec")
    E = _set_on_grid(E, spec, h)
    if len(E) == 0:
        raise EmptySet("the set contains no interior node")
    return envelope_obstacle(extremal_obstacle(E), None, tol=tol, mode=mode, backend=backend)


def capacity(E, spec=None, h=None, tol=None, mode="seq", backend=None, return_extremal=False):
    """Cap(E, Omega) as the discrete Monge-Ampere mass of h_E over the interior."""
    res = relative_extremal(E, spec, h, tol=tol, mode=mode, backend=backend)
    cap = ma_integral(res.P)
    return (cap, res) if return_extremal else cap


def ball_capacity(r, n, R=1.0):
    """Closed form Cap(closed ball of radius r, ball of radius R) = (2 pi / log(R / r))^n."""
    return (2.0 * math.pi / math.log(R / r)) ** n


def closed_ball_set(grid, radius, center=None):
    """Interior nodes with |z - center| <= radius (boundary nodes included up to roundoff)."""
    c = np.zeros(2 * grid.n) if center is None else np.asarray(center, dtype=float)

    def inside(pts):
        return np.sum((pts - c) ** 2, axis=1) <= radius * radius * (1 + 1e-12)

    return GridSet.from_predicate(grid, inside)
