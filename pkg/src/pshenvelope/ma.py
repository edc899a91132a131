"""Discrete complex Monge-Ampere density and plurisubharmonicity test.

Normalisation: for smooth u, (dd^c u)^n = c_n det(u_{j kbar}) dlambda with
c_n = 4^n n!, so for n = 1 the density is the ordinary Laplacian.  The
discrete density combines second differences along complex lines:

* n = 1: the five-point Laplacian;
* n = 2: c_2 * min over frames (xi1, xi2) of
  max(L_xi1 / 4, 0) * max(L_xi2 / 4, 0),
  where L_xi is the complex-line Laplacian along xi.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import MissingNeighbor
from .grid import GridFunction
from .stencil import real_offset


@dataclass(frozen=True)
class MAConvention:
    n: int

    @property
    def c(self):
        return 4 ** self.n * math.factorial(self.n)


def normalization(n):
    return MAConvention(n).c


def _node_flat(grid, node):
    if isinstance(node, (int, np.integer)):
        return int(node)
    return grid.flat_index(node)


def line_laplacian(u, node, xi):
    """Second difference of u along the complex line through ``node`` spanned by xi.

    ``[u(z+h xi) + u(z-h xi) + u(z+ih xi) + u(z-ih xi) - 4u(z)] / (h^2 |xi|^2)``
    """
    grid = u.grid
    if np.isscalar(xi):
        xi = (xi,)
    xi = tuple(complex(c) for c in xi)
    if len(xi) != grid.n:
        raise ValueError(f"direction must have {grid.n} components")
    k = _node_flat(grid, node)
    loc = np.array(np.unravel_index(k, grid.shape))
    vals = []
    for off in (real_offset(xi), real_offset(tuple(1j * c for c in xi))):
        for sgn in (1, -1):
            nb = loc + sgn * np.asarray(off)
            if np.any(nb < 0) or np.any(nb >= np.asarray(grid.shape)):
                raise MissingNeighbor(f"neighbour of node {tuple(grid.coords([k])[0])} leaves the grid")
            v = u.values[tuple(nb)]
            if not np.isfinite(v):
                raise MissingNeighbor(f"neighbour of node {tuple(grid.coords([k])[0])} is undefined")
            vals.append(v)
    norm2 = sum(abs(c) ** 2 for c in xi)
    center = u.flat[k]
    return float((vals[0] + vals[1] + vals[2] + vals[3] - 4.0 * center) / (grid.h ** 2 * norm2))


def directional_laplacians(u, nodes=None):
    """Array (ndir, N) of complex-line Laplacians at interior nodes for every stencil direction."""
    grid = u.grid
    nodes = grid.interior_flat if nodes is None else np.asarray(nodes)
    w = u.flat
    out = np.empty((len(grid.stencil.directions), nodes.size))
    wgt = grid.direction_weights
    for d, (o1, o2) in enumerate(grid.direction_offsets):
        s = w[nodes + o1] + w[nodes - o1] + w[nodes + o2] + w[nodes - o2]
        out[d] = (s - 4.0 * w[nodes]) / wgt[d]
    if not np.all(np.isfinite(out)):
        raise MissingNeighbor("grid function is undefined at a stencil neighbour")
    return out


def density_from_laplacians(lap, stencil):
    n = stencil.n
    if n == 1:
        return lap[0].copy()
    best = np.full(lap.shape[1], np.inf)
    for p, q in stencil.frames:
        best = np.minimum(best, np.maximum(lap[p] / 4.0, 0.0) * np.maximum(lap[q] / 4.0, 0.0))
    return normalization(n) * best


def ma_density(u):
    """Discrete density of (dd^c u)^n at interior nodes (NaN elsewhere)."""
    grid = u.grid
    lap = directional_laplacians(u)
    out = np.full(grid.size, np.nan)
    out[grid.interior_flat] = density_from_laplacians(lap, grid.stencil)
    return GridFunction(grid, out)


@dataclass
class PshReport:
    psh: bool
    worst_value: float
    worst_node: tuple
    worst_direction: tuple

    def __bool__(self):
        return self.psh


def is_discretely_psh(u, tol=0.0):
    """Check every complex-line Laplacian at every interior node is >= -tol."""
    grid = u.grid
    lap = directional_laplacians(u)
    flat_idx = int(np.argmin(lap))
    d, k = np.unravel_index(flat_idx, lap.shape)
    worst = float(lap[d, k])
    node = tuple(float(x) for x in grid.coords([grid.interior_flat[k]])[0])
    return PshReport(worst >= -tol, worst, node, grid.stencil.directions[d])


def ma_integral(u, region=None):
    """Sum of the discrete density times h^(2n) over ``region`` (default: interior)."""
    grid = u.grid
    dens = ma_density(u).flat
    if region is None:
        idx = grid.interior_flat
    else:
        grid.check_same(region.grid)
        idx = np.flatnonzero(region.mask.reshape(-1))
    # row-major order, numpy pairwise summation
    return float(np.sum(dens[idx]) * grid.h ** (2 * grid.n))
