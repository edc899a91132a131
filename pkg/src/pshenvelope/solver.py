"""Discrete Dirichlet problems (dd^c u)^n = F(z, u) dlambda with F nondecreasing in u.

Two right-hand sides are supported: a density f independent of u, and the
penalised density ``max(exp(j (u - u0)) g, f)``.  Solutions are computed by
nonlinear Gauss-Seidel: each interior node is replaced by the unique value
that makes its local Monge-Ampere expression equal to F there.
"""

from dataclasses import asdict, dataclass, field
import logging
import time

import numpy as np

from . import kernels
from .errors import BracketFailure, MaxIterExceeded, NonMonotoneRHS, ValidationError
from .grid import GridFunction, sample
from .ma import density_from_laplacians, directional_laplacians, normalization

log = logging.getLogger(__name__)

DEFAULT_TOL = {1: 1e-8, 2: 1e-7}
DEFAULT_MAX_ITER = 400_000
MODES = {"seq": 0, "redblack": 1}


class DensityField:
    """Nonnegative density f of a measure f dlambda, sampled on a grid.

    Parameters
    ----------
    grid : Grid
    values : array_like
        Full-shape array; only interior nodes are read.
    p : float
        Integrability exponent reported with the discrete L^p norm.
    source : str
        Expression text or ``"grid"``; echoed in reports.
    """

    def __init__(self, grid, values, p=2.0, source="grid"):
        vals = np.array(values, dtype=float).reshape(grid.shape)
        inner = vals[grid.interior]
        if not np.all(np.isfinite(inner)):
            raise ValidationError("density must be finite on the interior")
        if np.any(inner < 0):
            raise ValidationError("density must be >= 0")
        if not p > 1:
            raise ValidationError(f"L^p exponent must exceed 1, got {p}")
        vals = np.where(grid.active, np.nan_to_num(vals, nan=0.0), 0.0)
        vals.flags.writeable = False
        self.grid = grid
        self.values = vals
        self.p = float(p)
        self.source = source

    def __repr__(self):
        return f"DensityField({self.source!r}, p={self.p:g})"

    @classmethod
    def from_expr(cls, expr, grid, p=2.0):
        return cls(grid, sample(expr, grid).values, p=p, source=str(expr))

    @classmethod
    def constant(cls, c, grid, p=2.0):
        return cls(grid, np.full(grid.shape, float(c)), p=p, source=repr(float(c)))

    @classmethod
    def zero(cls, grid, p=2.0):
        return cls.constant(0.0, grid, p)

    @property
    def flat(self):
        return self.values.reshape(-1)

    @property
    def is_zero(self):
        return not np.any(self.values[self.grid.interior])

    def lp_norm(self, p=None):
        """(sum f^p h^(2n))^(1/p) over interior nodes."""
        p = self.p if p is None else p
        g = self.grid
        return float(np.sum(self.values[g.interior] ** p) * g.h ** (2 * g.n)) ** (1.0 / p)

    def __sub__(self, other):
        return DensityField(self.grid, np.abs(self.values - other.values), p=self.p, source="|difference|")

    def maximum(self, other):
        return DensityField(self.grid, np.maximum(self.values, other.values), p=self.p, source="max")


@dataclass
class RHSSpec:
    """Right-hand side F(z, s): ``f`` or ``max(exp(j (s - u0)) g, f)``."""

    f: DensityField
    g: DensityField = None
    u0: GridFunction = None
    j: float = 0.0

    def __post_init__(self):
        if self.j < 0:
            raise NonMonotoneRHS(f"penalisation exponent must be >= 0, got {self.j}")
        if self.g is not None and self.u0 is None:
            raise ValidationError("the penalised right-hand side needs a reference function u0")

    @property
    def penalized(self):
        return self.g is not None

    @classmethod
    def constant(cls, f):
        return cls(f)

    @classmethod
    def penalty(cls, g, f, u0, j):
        return cls(f, g, u0, float(j))

    def evaluate(self, s, nodes):
        """F at flat ``nodes`` for candidate values s."""
        fv = self.f.flat[nodes]
        if not self.penalized:
            return fv
        gv = self.g.flat[nodes]
        arg = np.minimum(self.j * (s - self.u0.flat[nodes]), 700.0)
        return np.where(gv > 0, np.maximum(gv * np.exp(arg), fv), fv)


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = float("inf")
    update: float = float("inf")
    wall_time: float = 0.0
    monotone_sweeps_ok: bool = True
    converged: bool = False
    mode: str = "seq"
    backend: str = ""
    tol: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


class _KernelCall:
    """Flat arrays and scalars shared by every kernel invocation of one solve."""

    def __init__(self, grid, rhs, obstacle=None, tol_local=1e-9, backend=None):
        self.grid = grid
        self.impl = kernels.get_backend(backend)
        self.backend = backend or kernels.BACKEND
        zeros = np.zeros(grid.size)
        self.nodes, self.color_ptr = grid.colored_interior()
        self.dir_off = np.ascontiguousarray(grid.direction_offsets)
        self.wgt = np.ascontiguousarray(grid.direction_weights)
        self.frames = np.ascontiguousarray(grid.stencil.frame_array)
        self.n = grid.n
        self.cn = float(normalization(grid.n))
        self.kind = 1 if rhs.penalized else 0
        self.f = np.ascontiguousarray(rhs.f.flat, dtype=float)
        self.g = np.ascontiguousarray(rhs.g.flat, dtype=float) if rhs.penalized else zeros
        self.u0 = (
            np.ascontiguousarray(np.nan_to_num(rhs.u0.flat), dtype=float) if rhs.penalized else zeros
        )
        self.j = float(rhs.j)
        self.use_obst = obstacle is not None
        self.obst = (
            np.ascontiguousarray(np.nan_to_num(obstacle.flat), dtype=float) if self.use_obst else zeros
        )
        self.tol_local = float(tol_local)
        self.buf = np.empty(self.nodes.size)

    def sweep(self, w, mode):
        return self.impl.sweep(
            w, self.nodes, self.color_ptr, self.dir_off, self.wgt, self.frames, self.n, self.cn,
            self.kind, self.f, self.g, self.u0, self.j, self.obst, self.use_obst, self.tol_local,
            mode, self.buf,
        )

    def apply(self, w, nodes=None):
        nodes = self.grid.interior_flat if nodes is None else np.ascontiguousarray(nodes, dtype=np.int64)
        out = np.empty(nodes.size)
        self.impl.apply_local(
            w, nodes, out, self.dir_off, self.wgt, self.frames, self.n, self.cn, self.kind,
            self.f, self.g, self.u0, self.j, self.obst, self.use_obst, self.tol_local,
        )
        return nodes, out


def _working_array(u):
    return np.ascontiguousarray(np.nan_to_num(u.flat, nan=0.0), dtype=float).copy()


def fixed_point_residual(call, w):
    """max |w - T(w)| over interior nodes, T the nodewise inversion (Jacobi form)."""
    nodes, out = call.apply(w)
    if np.any(np.isnan(out)):
        raise BracketFailure("local solve failed while evaluating the residual")
    return float(np.max(np.abs(out - w[nodes]))) if nodes.size else 0.0


def iterate(call, w, tol, max_iter, mode="seq", label="solve"):
    """Run sweeps on the working array ``w`` until update and residual are <= tol."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {sorted(MODES)}, got {mode!r}")
    mcode = MODES[mode]
    report = SolveReport(mode=mode, backend=call.backend, tol=tol)
    t0 = time.perf_counter()
    monotone = True
    it = 0
    while it < max_iter:
        upd, inc, fails = call.sweep(w, mcode)
        it += 1
        if fails:
            raise BracketFailure(f"{fails} local solves failed to bracket a root in sweep {it}")
        if inc > 0.0:
            monotone = False
        report.update = upd
        if upd <= tol:
            res = fixed_point_residual(call, w)
            report.residual = res
            if res <= tol:
                report.converged = True
                break
    report.iterations = it
    report.monotone_sweeps_ok = monotone
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        report.residual = fixed_point_residual(call, w)
    log.debug("%s: %d sweeps, update %.3g, residual %.3g", label, it, report.update, report.residual)
    return report


def _finish(grid, w, report, raise_on_fail, what):
    result = GridFunction(grid, w.reshape(grid.shape))
    if not report.converged:
        msg = (
            f"{what} did not converge in {report.iterations} sweeps "
            f"(update {report.update:.3g}, residual {report.residual:.3g})"
        )
        if raise_on_fail:
            raise MaxIterExceeded(msg, result=result, report=report)
        log.warning(msg)
    return result


def solve_dirichlet(rhs, boundary, init=None, tol=None, max_iter=DEFAULT_MAX_ITER, mode="seq",
                    backend=None, raise_on_fail=True):
    """Solve the discrete Dirichlet problem with band values taken from ``boundary``.

    Parameters
    ----------
    rhs : RHSSpec
    boundary : GridFunction
        Dirichlet data; only band values are used unless ``init`` is omitted,
        in which case the interior values seed the iteration.
    init : GridFunction, optional
    tol : float, optional
        Stopping tolerance on the sup-update and on the fixed-point residual
        (defaults 1e-8 for n = 1 and 1e-7 for n = 2).
    mode : {"seq", "redblack"}

    Returns
    -------
    (GridFunction, SolveReport)
    """
    grid = boundary.grid
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    w = _working_array(boundary if init is None else init)
    band = grid.band.reshape(-1)
    w[band] = np.nan_to_num(boundary.flat[band])
    call = _KernelCall(grid, rhs, tol_local=tol / 10.0, backend=backend)
    report = iterate(call, w, tol, max_iter, mode, label="dirichlet")
    return _finish(grid, w, report, raise_on_fail, "Dirichlet solve"), report


def local_solve(u, node, rhs, obstacle=None, backend=None):
    """Value at ``node`` that balances its local Monge-Ampere expression against F.

    The neighbours are read from u; u(node) itself is ignored.
    """
    grid = u.grid
    k = node if isinstance(node, (int, np.integer)) else grid.flat_index(node)
    call = _KernelCall(grid, rhs, obstacle=obstacle, backend=backend)
    w = _working_array(u)
    _, out = call.apply(w, np.array([k], dtype=np.int64))
    if np.isnan(out[0]):
        raise BracketFailure("no root bracketed; neighbour data is inconsistent")
    return float(out[0])


@dataclass
class Residual:
    """Fixed-point residual (potential units) and density residual |MA(u) - F(u)|."""

    sup: float
    l1: float
    density_sup: float
    density_l1: float
    nodewise: GridFunction = None


def residual(u, rhs, backend=None):
    """Residual norms of u for the Dirichlet problem with right-hand side rhs.

    ``sup``/``l1`` measure |u - T(u)| with T the nodewise inversion, the
    quantity the solvers stop on.  ``density_sup``/``density_l1`` measure
    |MA_h(u) - F(u)| directly.  Sums run over interior nodes in row-major
    order; the L1 norms carry the h^(2n) volume weight.
    """
    grid = u.grid
    nodes = grid.interior_flat
    w = _working_array(u)
    call = _KernelCall(grid, rhs, backend=backend)
    _, out = call.apply(w)
    fp = np.abs(out - w[nodes])
    dens = density_from_laplacians(directional_laplacians(u), grid.stencil)
    dr = np.abs(dens - rhs.evaluate(w[nodes], nodes))
    vol = grid.h ** (2 * grid.n)
    field_vals = np.full(grid.size, np.nan)
    field_vals[nodes] = dr
    return Residual(
        sup=float(fp.max()),
        l1=float(np.sum(fp) * vol),
        density_sup=float(dr.max()),
        density_l1=float(np.sum(dr) * vol),
        nodewise=GridFunction(grid, field_vals),
    )
