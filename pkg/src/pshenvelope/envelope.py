"""Conditional psh envelopes P(u, f, Omega).

P(u, f, Omega) is the largest psh function v <= u with (dd^c v)^n >= f dlambda.
Two discretisations are provided:

* :func:`envelope_obstacle` iterates ``w <- min(u, T_f(w))`` where T_f is the
  nodewise Monge-Ampere inversion for density f.  Started from u, the iterates
  decrease to the largest discrete fixed point.
* :func:`envelope_berman` solves the penalised problems
  ``(dd^c u_j)^n = max(exp(j (u_j - u)) g, f)`` for growing j and returns the
  last u_j.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np

from .errors import EmptyRegion, OffsetLeavesDomain
from .grid import BAND, EXTERIOR, INTERIOR, Grid, GridFunction, GridSet, _dilate, _shift_view
from .ma import is_discretely_psh, ma_density
from .solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    DensityField,
    RHSSpec,
    SolveReport,
    _finish,
    _KernelCall,
    _working_array,
    iterate,
)

log = logging.getLogger(__name__)


class SubsolutionCheckFailed(UserWarning):
    """The obstacle is not a discrete subsolution for the penalisation density."""


def tolerances(grid, tol):
    """(contact_tol, ma_tol, psh_tol) for a solve at stopping tolerance ``tol``.

    Second differences amplify potential-level noise by 1/h^2, hence the
    scaling of the density tolerances.
    """
    ma_tol = max(1e-6, 10.0 * tol / grid.h ** 2)
    return 10.0 * tol, ma_tol, ma_tol


@dataclass
class EnvelopeResult:
    """Envelope values with the bookkeeping needed to audit them.

    Attributes
    ----------
    P : GridFunction
    method : str
        ``"obstacle"`` or ``"berman"``.
    report : SolveReport
        For the penalised route, the report of the last solve; iteration
        counts and wall time are totals over the schedule.
    contact : GridSet
        Interior nodes where |P - u| <= contact_tol.
    active : GridSet
        Interior nodes where the density constraint binds,
        |ma_density(P) - f| <= ma_tol.
    trace : list of dict
        Per-j records for the penalised route (empty otherwise).
    """

    P: GridFunction
    method: str
    report: SolveReport
    contact: GridSet
    active: GridSet
    tol: float
    contact_tol: float
    ma_tol: float
    psh_tol: float
    trace: list = field(default_factory=list)

    def check_constraints(self, u, f):
        """Verify P <= u + 2 tol, discrete plurisubharmonicity and MA(P) >= f - ma_tol.

        Returns a dict of the three worst violations and an ``ok`` flag.
        """
        grid = self.P.grid
        inner = grid.interior
        above = float(np.max(self.P.values[inner] - u.values[inner]))
        psh = is_discretely_psh(self.P, self.psh_tol)
        dens = ma_density(self.P).values[inner]
        deficit = float(np.max(f.values[inner] - dens))
        ok = above <= 2 * self.tol and psh.psh and deficit <= self.ma_tol
        return {
            "ok": bool(ok),
            "max_above_obstacle": above,
            "min_line_laplacian": psh.worst_value,
            "max_density_deficit": deficit,
        }


def _as_density(f, grid):
    if isinstance(f, DensityField):
        grid.check_same(f.grid)
        return f
    if f is None:
        return DensityField.zero(grid)
    if isinstance(f, (int, float)):
        return DensityField.constant(f, grid)
    return DensityField.from_expr(f, grid)


def _result(P, u, f, method, report, tol, trace=None):
    grid = P.grid
    contact_tol, ma_tol, psh_tol = tolerances(grid, tol)
    inner = grid.interior
    contact = inner & (np.abs(P.values - u.values) <= contact_tol)
    dens = ma_density(P).values
    with np.errstate(invalid="ignore"):
        active = inner & (np.abs(dens - f.values) <= ma_tol)
    return EnvelopeResult(
        P=P,
        method=method,
        report=report,
        contact=GridSet(grid, contact),
        active=GridSet(grid, active),
        tol=tol,
        contact_tol=contact_tol,
        ma_tol=ma_tol,
        psh_tol=psh_tol,
        trace=trace or [],
    )


def envelope_obstacle(u, f=None, tol=None, max_iter=DEFAULT_MAX_ITER, mode="seq", backend=None,
                      check_maximality=False, raise_on_fail=True):
    """Envelope by obstacle iteration.

    Parameters
    ----------
    u : GridFunction
        Obstacle, finite on interior and band.  Band values of the result are
        fixed to u.
    f : DensityField, number or expression, optional
        Density lower bound (default 0).
    tol : float, optional
    check_maximality : bool
        Also run from the constant init sup(u) and record the sup distance
        between the two fixed points in ``report.extra``.

    Returns
    -------
    EnvelopeResult
    """
    grid = u.grid
    f = _as_density(f, grid)
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    if not np.all(np.isfinite(u.values[grid.active])):
        raise ValueError("obstacle must be finite on interior and band nodes")
    call = _KernelCall(grid, RHSSpec(f), obstacle=u, tol_local=tol / 10.0, backend=backend)
    w = _working_array(u)
    report = iterate(call, w, tol, max_iter, mode, label="obstacle")
    P = _finish(grid, w, report, raise_on_fail, "obstacle iteration")
    if check_maximality:
        w2 = _working_array(u)
        w2[grid.interior_flat] = float(np.max(u.values[grid.active]))
        rep2 = iterate(call, w2, tol, max_iter, mode, label="obstacle-restart")
        gap = float(np.max(np.abs(w2[grid.interior_flat] - w[grid.interior_flat])))
        report.extra["maximality_gap"] = gap
        report.extra["maximality_ok"] = bool(rep2.converged and gap <= 2 * tol)
    return _result(P, u, f, "obstacle", report, tol)


def subsolution_defect(u, g, tol=None):
    """max over interior of ma_density(u) - g; <= ma_tol means u passes the check."""
    dens = ma_density(u).values[u.grid.interior]
    return float(np.max(dens - g.values[u.grid.interior]))


def default_schedule(k_max=10):
    return [float(2 ** k) for k in range(k_max + 1)]


def envelope_berman(u, f=None, g=None, j_schedule=None, tol=None, max_iter=DEFAULT_MAX_ITER,
                    mode="seq", backend=None, reference=None, subsolution="check",
                    keep_iterates=False, raise_on_fail=True):
    """Envelope by penalisation.

    For each j in the schedule solves ``(dd^c u_j)^n = max(exp(j (u_j - u)) g, f)``
    with u_j = u on the band, warm-starting from the previous u_j.

    Parameters
    ----------
    u : GridFunction
    f, g : DensityField, number or expression, optional
        Defaults 0.
    j_schedule : sequence of float, optional
        Nondecreasing penalisation exponents, default 1, 2, 4, ..., 1024.
    reference : GridFunction, optional
        Envelope from another method; the trace records the sup gap to it.
    subsolution : {"check", "declared"}
        ``"check"`` tests ma_density(u) <= g + ma_tol at interior nodes and
        warns with :class:`SubsolutionCheckFailed` otherwise.  ``"declared"``
        skips the test (e.g. u is a max of subsolutions with kinks).
    keep_iterates : bool
        Store every u_j in the trace (key ``"u_j"``).

    Returns
    -------
    EnvelopeResult
        ``trace`` has one record per j with iteration count, sup(u_j - u),
        the worst decrease from the previous u_j and the gap to ``reference``.
    """
    grid = u.grid
    f = _as_density(f, grid)
    g = _as_density(g, grid)
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    schedule = default_schedule() if j_schedule is None else [float(j) for j in j_schedule]
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("j schedule must be nondecreasing")
    _, ma_tol, _ = tolerances(grid, tol)
    sub_ok = None
    sub_defect = None
    if subsolution == "check":
        sub_defect = subsolution_defect(u, g)
        sub_ok = sub_defect <= ma_tol
        if not sub_ok:
            warnings.warn(
                f"obstacle exceeds the penalisation density by {sub_defect:.3g}; "
                "u_j <= u is not guaranteed",
                SubsolutionCheckFailed,
                stacklevel=2,
            )
    elif subsolution != "declared":
        raise ValueError("subsolution must be 'check' or 'declared'")

    inner = grid.interior_flat
    w = _working_array(u)
    prev = None
    trace = []
    total_iter = 0
    total_time = 0.0
    monotone = True
    report = None
    for j in schedule:
        rhs = RHSSpec.penalty(g, f, u, j)
        call = _KernelCall(grid, rhs, tol_local=tol / 10.0, backend=backend)
        report = iterate(call, w, tol, max_iter, mode, label=f"berman j={j:g}")
        total_iter += report.iterations
        total_time += report.wall_time
        monotone &= report.monotone_sweeps_ok
        rec = {
            "j": j,
            "iterations": report.iterations,
            "converged": report.converged,
            "residual": report.residual,
            "max_above_obstacle": float(np.max(w[inner] - u.flat[inner])),
            "max_decrease": None if prev is None else float(np.max(prev - w[inner])),
        }
        if reference is not None:
            rec["gap_to_reference"] = float(np.max(np.abs(w[inner] - reference.flat[inner])))
        if keep_iterates:
            rec["u_j"] = GridFunction(grid, w.reshape(grid.shape))
        trace.append(rec)
        prev = w[inner].copy()
        if not report.converged:
            break
    report.iterations = total_iter
    report.wall_time = total_time
    report.monotone_sweeps_ok = monotone
    report.extra.update({"schedule": schedule, "subsolution_ok": sub_ok, "subsolution_defect": sub_defect})
    P = _finish(grid, w, report, raise_on_fail, f"penalised solve (j = {schedule[-1]:g})")
    return _result(P, u, f, "berman", report, tol, trace)


def berman_monotonicity(trace, tol):
    """Worst violations of u_j <= u_{j+1} and u_j <= u over a trace, with pass flags."""
    dec = [r["max_decrease"] for r in trace if r["max_decrease"] is not None]
    above = [r["max_above_obstacle"] for r in trace]
    worst_dec = max(dec) if dec else 0.0
    worst_above = max(above)
    return {
        "max_decrease": worst_dec,
        "max_above_obstacle": worst_above,
        "increasing_ok": worst_dec <= 2 * tol,
        "below_obstacle_ok": worst_above <= 2 * tol,
    }


def _inner_grid(grid, keep):
    interior = keep.copy()
    offsets = grid.stencil.offsets
    for o in offsets:
        o = np.asarray(o)
        # node x stays only if x + o and x - o are kept
        interior &= _shift_view(keep, -o) & _shift_view(keep, o)
    if not interior.any():
        raise OffsetLeavesDomain("no node keeps its whole stencil inside the inner region")
    band = _dilate(interior, offsets) & ~interior
    labels = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    labels[band] = BAND
    labels[interior] = INTERIOR
    return Grid(grid.n, grid.h, grid.lo, labels, grid.stencil)


def ball_offsets(n, radius_nodes):
    """Integer offsets xi in Z^(2n) with |xi| < radius_nodes."""
    r = int(np.ceil(radius_nodes))
    axes = [np.arange(-r, r + 1)] * (2 * n)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
    norms = np.sqrt(np.sum(pts.astype(float) ** 2, axis=1))
    keep = norms < radius_nodes
    return pts[keep], norms[keep]


def inf_convolution(u, m, r):
    """Lattice inf-convolution ``u_m(z) = min_{|xi| < r} u(z + xi) + m |xi|``.

    The result lives on an inner grid: its nodes are the interior nodes of u's
    grid whose whole offset ball lies on interior or band nodes, relabeled
    with a fresh band.

    Raises
    ------
    OffsetLeavesDomain
        No node keeps its offset ball inside the domain.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    if m < 0:
        raise ValueError("slope must be nonnegative")
    grid = u.grid
    offs, norms = ball_offsets(grid.n, r / grid.h)
    active = grid.active
    keep = grid.interior
    vals = u.values
    shape = np.asarray(grid.shape)
    idx = np.stack(np.unravel_index(np.flatnonzero(keep), grid.shape), axis=-1)
    flat_keep = np.flatnonzero(keep)
    ok = np.ones(len(flat_keep), dtype=bool)
    cur = vals.reshape(-1)[flat_keep].copy()
    for o, d in zip(offs, norms):
        nb = idx + o
        inside = np.all((nb >= 0) & (nb < shape), axis=1)
        nb_flat = np.ravel_multi_index(tuple(np.clip(nb, 0, shape - 1).T), grid.shape)
        good = inside & active.reshape(-1)[nb_flat]
        ok &= good
        cand = np.where(good, vals.reshape(-1)[nb_flat], np.inf) + m * d * grid.h
        cur = np.minimum(cur, cand)
    if not ok.any():
        raise OffsetLeavesDomain(f"offsets of radius {r} leave the domain at every node")
    inner = np.zeros(grid.size, dtype=bool)
    inner[flat_keep[ok]] = True
    inner = inner.reshape(grid.shape)
    out = np.full(grid.size, np.nan)
    out[flat_keep] = cur
    return GridFunction(_inner_grid(grid, inner), out)


@dataclass
class IdempotenceReport:
    sup_diff: float
    tol: float
    direct: GridFunction
    two_step: GridFunction
    inner: GridFunction

    @property
    def ok(self):
        return self.sup_diff <= 5 * self.tol


def envelope_idempotence_check(u, f=None, tol=None, mode="seq", backend=None):
    """Compare P(u, f) with P(P(u, 0), f), both by obstacle iteration on u's grid."""
    grid = u.grid
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    direct = envelope_obstacle(u, f, tol=tol, mode=mode, backend=backend).P
    inner = envelope_obstacle(u, None, tol=tol, mode=mode, backend=backend).P
    two = envelope_obstacle(inner, f, tol=tol, mode=mode, backend=backend).P
    try:
        diff = float(np.max(np.abs(direct.values[grid.interior] - two.values[grid.interior])))
    except ValueError:  # pragma: no cover - interior is never empty on a built grid
        raise EmptyRegion("grid has no interior") from None
    return IdempotenceReport(diff, tol, direct, two, inner)
