"""Numerical studies of the envelope's quantitative properties.

Each study returns an :class:`ExperimentReport` holding the echoed inputs,
the measured numbers, a per-row table (written as CSV for plotting) and a
pass flag against the declared tolerance.
"""

import csv
import io
from dataclasses import asdict, dataclass, field
import json
import math
import time

import numpy as np

from .capacity import capacity
from .domain import shrink_domain
from .envelope import berman_monotonicity, envelope_berman, envelope_obstacle, tolerances
from .errors import DegenerateFit, EmptyInner, EmptyInterior, NonNested
from .grid import GridSet, atomic_write, build_grid, restrict, sample, sup_diff
from .ma import ma_density
from .solver import DEFAULT_TOL, DensityField


def write_rows(path, rows):
    """Write dict rows as CSV; columns are the union of keys in first-seen order."""
    if not rows:
        return
    cols = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, restval="")
    w.writeheader()
    for row in rows:
        w.writerow({k: _plain(v) for k, v in row.items()})
    atomic_write(path, buf.getvalue())


@dataclass
class ExperimentReport:
    name: str
    inputs: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    passed: bool = False
    tolerance: dict = field(default_factory=dict)
    runtime: float = 0.0
    table: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True)

    def write_csv(self, path):
        write_rows(path, self.table)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        keys = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items() if np.isscalar(v))
        return f"{status} {self.name}: {keys}"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.4g}"
    return str(v)


def _density(f, grid):
    if isinstance(f, DensityField):
        return f
    if f is None:
        return DensityField.zero(grid)
    if isinstance(f, (int, float)):
        return DensityField.constant(f, grid)
    return DensityField.from_expr(f, grid)


def _on_grid(u, grid):
    """Sample an expression/number/callable on grid, or restrict a GridFunction to it."""
    if hasattr(u, "grid"):
        return u if u.grid.same_as(grid) else restrict(u, grid)
    return sample(u, grid)


def _echo(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, DensityField):
        return obj.source
    if hasattr(obj, "grid"):
        return "grid function"
    return obj


def loglog_slope(x, y):
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[0])


# stability ---------------------------------------------------------------------

def stability_study(u, f0, perturbations, p=2.0, spread=4.0, tol=None, labels=None, mode="seq"):
    """Sup distance of envelopes against the L^p distance of their densities.

    For each perturbed density g: D = sup|P(u, f0) - P(u, g)| and
    N = ||f0 - g||_p.  Passes when D / N^(1/n) varies by at most ``spread``
    and the log-log slope of D against N is at least 1/n - 0.15.

    Raises
    ------
    DegenerateFit
        Fewer than three perturbations differ from f0.
    """
    t0 = time.perf_counter()
    grid = u.grid
    n = grid.n
    f0 = _density(f0, grid)
    gs = [_density(g, grid) for g in perturbations]
    labels = labels or [g.source for g in gs]
    P0 = envelope_obstacle(u, f0, tol=tol, mode=mode).P
    rows = []
    for lab, g in zip(labels, gs):
        N = (f0 - g).lp_norm(p)
        if N == 0:
            rows.append({"perturbation": lab, "lp_distance": 0.0, "sup_gap": 0.0, "ratio": float("nan")})
            continue
        D = sup_diff(P0, envelope_obstacle(u, g, tol=tol, mode=mode).P)
        rows.append({"perturbation": lab, "lp_distance": N, "sup_gap": D, "ratio": D / N ** (1.0 / n)})
    fit = [r for r in rows if r["lp_distance"] > 0]
    if len(fit) < 3:
        raise DegenerateFit(f"need at least 3 nontrivial perturbations, got {len(fit)}")
    ratios = [r["ratio"] for r in fit]
    slope = loglog_slope([r["lp_distance"] for r in fit], [max(r["sup_gap"], 1e-300) for r in fit])
    rs = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
    ok = rs <= spread and slope >= 1.0 / n - 0.15
    return ExperimentReport(
        name="stability",
        inputs={"p": p, "spread": spread, "f0": f0.source, "perturbations": labels, "h": grid.h, "n": n},
        measured={"ratio_spread": rs, "slope": slope, "max_ratio": max(ratios), "min_ratio": min(ratios)},
        passed=bool(ok),
        tolerance={"spread": spread, "min_slope": 1.0 / n - 0.15},
        runtime=time.perf_counter() - t0,
        table=rows,
    )


# capacity inequality -------------------------------------------------------------

def capacity_inequality_check(u, v, W, eps, f=None, cap_tol=1e-6, slack=0.1, tol=None, mode="seq"):
    """Compare the capacity of an envelope-difference set with that of the data-difference set.

    With M = sup over the closure of W of |u - v|, computes

    * L = Cap({|P(u, f, W) - P(v, f, W)| >= M eps}, Omega)
    * R = 2 (n!)^2 / eps^n * Cap({|u - v| >= eps} on the closure of W, Omega)

    and passes when L <= (1 + slack) R + cap_tol.  u and v are grid functions
    on Omega's grid; W is a domain spec on the same lattice.

    Raises
    ------
    EmptyInner
        W has no interior node.
    """
    t0 = time.perf_counter()
    grid = u.grid
    grid.check_same(v.grid)
    n = grid.n
    try:
        wgrid = build_grid(W, grid.h, grid.stencil)
    except EmptyInterior:
        raise EmptyInner("the inner domain has no interior node") from None
    uw, vw = restrict(u, wgrid), restrict(v, wgrid)
    closure = wgrid.active
    diff_w = np.abs(uw.values - vw.values)
    M = float(np.max(diff_w[closure]))
    fw = _density(f, wgrid)
    Pu = envelope_obstacle(uw, fw, tol=tol, mode=mode).P
    Pv = envelope_obstacle(vw, fw, tol=tol, mode=mode).P
    env_diff = np.abs(Pu.values - Pv.values)
    left_mask = wgrid.interior & (env_diff >= M * eps) if M > 0 else np.zeros(wgrid.shape, bool)
    right_mask = closure & (diff_w >= eps)
    L_set = _lift(left_mask, wgrid, grid)
    R_set = _lift(right_mask, wgrid, grid)
    L = capacity(L_set, tol=tol, mode=mode) if len(L_set) else 0.0
    capR = capacity(R_set, tol=tol, mode=mode) if len(R_set) else 0.0
    const = 2.0 * math.factorial(n) ** 2 / eps ** n
    R = const * capR
    ok = L <= (1.0 + slack) * R + cap_tol
    return ExperimentReport(
        name="capacity_inequality",
        inputs={"eps": eps, "W": W.to_dict(), "h": grid.h, "n": n, "cap_tol": cap_tol, "slack": slack},
        measured={
            "M": M,
            "L": L,
            "R": R,
            "cap_data_set": capR,
            "left_nodes": len(L_set),
            "right_nodes": len(R_set),
            "ratio": L / R if R > 0 else (0.0 if L == 0 else float("inf")),
        },
        passed=bool(ok),
        tolerance={"slack": slack, "cap_tol": cap_tol},
        runtime=time.perf_counter() - t0,
        table=[{"eps": eps, "M": M, "L": L, "R": R}],
    )


def _lift(mask, src_grid, dst_grid):
    """Nodes of a mask on an inner grid, as a GridSet of the outer grid's interior."""
    out = np.zeros(dst_grid.shape, dtype=bool)
    ov = src_grid.overlap(dst_grid)
    if ov is not None:
        sa, sb = ov
        out[sb] = mask[sa]
    return GridSet(dst_grid, out & dst_grid.interior)


# shrink lemma -----------------------------------------------------------------------

def shrink_comparison(u, f, spec, deltas, h, stencil=None, tol=None, stability=2.0, mode="seq"):
    """Envelopes on the shrunk domains Omega_delta against the envelope on Omega.

    Measures C(delta) = sup over Omega_delta of (P_delta - P) / delta.  Passes
    when P_delta <= P + C delta + 2 tol with C the largest measured C(delta),
    and consecutive C(delta) differ by at most a factor ``stability`` (values
    below the solver noise 10 tol / delta count as zero).
    """
    t0 = time.perf_counter()
    grid = build_grid(spec, h, stencil)
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    P = envelope_obstacle(_on_grid(u, grid), _density(f, grid), tol=tol, mode=mode).P
    rows = []
    for d in deltas:
        inner_spec = shrink_domain(spec, d)
        g2 = build_grid(inner_spec, h, grid.stencil)
        Pd = envelope_obstacle(_on_grid(u, g2), _density(f, g2), tol=tol, mode=mode).P
        Pr = restrict(P, g2)
        excess = float(np.max(Pd.values[g2.interior] - Pr.values[g2.interior]))
        rows.append({"delta": d, "sup_excess": excess, "C": excess / d, "inner_nodes": g2.num_interior})
    Cs = [r["C"] for r in rows]
    C = max(Cs)
    bound_ok = all(r["sup_excess"] <= C * r["delta"] + 2 * tol for r in rows)
    stable = True
    for a, b in zip(rows, rows[1:]):
        floor = 10 * tol / min(a["delta"], b["delta"])
        ca, cb = max(a["C"], 0.0), max(b["C"], 0.0)
        if max(ca, cb) <= floor:
            continue
        if min(ca, cb) <= 0 or max(ca, cb) / min(ca, cb) > stability:
            stable = False
    return ExperimentReport(
        name="shrink",
        inputs={"deltas": list(deltas), "h": h, "spec": spec.to_dict(), "tol": tol},
        measured={"C": C, "C_min": min(Cs), "bound_ok": bound_ok, "stable": stable},
        passed=bool(bound_ok and stable),
        tolerance={"stability_factor": stability},
        runtime=time.perf_counter() - t0,
        table=rows,
    )


# continuity ------------------------------------------------------------------

def lipschitz_constant(P):
    """max |P(a) - P(b)| / |a - b| over interior nodes a and their axis neighbours b.

    Neighbours may be band nodes; exterior nodes are skipped.
    """
    grid = P.grid
    vals = P.values
    inner = grid.interior
    best = 0.0
    for axis in range(2 * grid.n):
        a = [slice(None)] * vals.ndim
        b = [slice(None)] * vals.ndim
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        va, vb = vals[tuple(a)], vals[tuple(b)]
        pair = (inner[tuple(a)] & grid.active[tuple(b)]) | (inner[tuple(b)] & grid.active[tuple(a)])
        if pair.any():
            best = max(best, float(np.max(np.abs(va - vb)[pair])) / grid.h)
    return best


def continuity_modulus(results, growth=0.2, reference=None, ref_tol=None):
    """Discrete Lipschitz constants of envelopes computed at a sequence of spacings.

    Parameters
    ----------
    results : list of GridFunction
        The same envelope problem at decreasing h.
    growth : float
        Allowed relative growth per refinement.
    reference : float, optional
        Analytic Lipschitz constant; with ``ref_tol`` every constant must lie
        within that relative distance of it.
    """
    t0 = time.perf_counter()
    rows = []
    for P in results:
        rows.append({"h": P.grid.h, "lipschitz": lipschitz_constant(P)})
    Ls = [r["lipschitz"] for r in rows]
    bounded = all(b <= (1 + growth) * a + 1e-12 for a, b in zip(Ls, Ls[1:]))
    ok = bounded
    measured = {"max": max(Ls), "min": min(Ls), "bounded": bounded}
    if reference is not None and ref_tol is not None:
        close = all(abs(L - reference) <= ref_tol * reference for L in Ls)
        measured["near_reference"] = close
        ok = ok and close
    return ExperimentReport(
        name="continuity",
        inputs={"h": [r["h"] for r in rows], "growth": growth, "reference": reference, "ref_tol": ref_tol},
        measured=measured,
        passed=bool(ok),
        tolerance={"growth": growth},
        runtime=time.perf_counter() - t0,
        table=rows,
    )


# exhaustion -----------------------------------------------------------------

def exhaustion_study(u, f, spec, inner_specs, h, stencil=None, tol=None, gap_tol=None, mode="seq"):
    """Envelopes on an increasing sequence of inner domains.

    Checks P(Omega_{j+1}) <= P(Omega_j) + 2 tol on Omega_j, that the sup gaps
    to P(Omega) on Omega_j are nonincreasing, and that the last gap is at most
    ``gap_tol`` (default 3h).

    Raises
    ------
    NonNested
        An inner interior is not contained in the next one.
    """
    t0 = time.perf_counter()
    grid = build_grid(spec, h, stencil)
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    gap_tol = 3 * h if gap_tol is None else gap_tol
    grids = [build_grid(s, h, grid.stencil) for s in inner_specs]
    for k, (a, b) in enumerate(zip(grids, grids[1:])):
        sa = GridSet.all_interior(a)
        if len(sa.transfer(b)) != len(sa):
            raise NonNested(f"inner domain {k} is not contained in inner domain {k + 1}")
    if grids and len(GridSet.all_interior(grids[-1]).transfer(grid)) != grids[-1].num_interior:
        raise NonNested("the last inner domain is not contained in the outer domain")
    P = envelope_obstacle(_on_grid(u, grid), _density(f, grid), tol=tol, mode=mode).P
    envs = [envelope_obstacle(_on_grid(u, g), _density(f, g), tol=tol, mode=mode).P for g in grids]
    rows = []
    ordered = True
    for k, (g, Pj) in enumerate(zip(grids, envs)):
        gap = sup_diff(Pj, restrict(P, g))
        rec = {"index": k, "interior_nodes": g.num_interior, "gap": gap, "max_increase": float("nan")}
        if k + 1 < len(grids):
            nxt = restrict(envs[k + 1], g)
            inc = float(np.max(nxt.values[g.interior] - Pj.values[g.interior]))
            rec["max_increase"] = inc
            ordered &= inc <= 2 * tol
        rows.append(rec)
    gaps = [r["gap"] for r in rows]
    decreasing = all(b <= a + 2 * tol for a, b in zip(gaps, gaps[1:]))
    ok = ordered and decreasing and gaps[-1] <= gap_tol
    return ExperimentReport(
        name="exhaustion",
        inputs={"h": h, "spec": spec.to_dict(), "inner": [s.to_dict() for s in inner_specs], "tol": tol},
        measured={"final_gap": gaps[-1], "ordered": ordered, "gaps_decreasing": decreasing},
        passed=bool(ok),
        tolerance={"gap_tol": gap_tol},
        runtime=time.perf_counter() - t0,
        table=rows,
    )


# monotone obstacle limits ---------------------------------------------------------

def monotone_limits_study(u, f, js, shape=1.0, tol=None, mode="seq"):
    """Envelopes of the obstacles u + shape/j and u - shape/j (0 <= shape <= 1).

    The first family must be nodewise nonincreasing in j, the second
    nondecreasing, and each envelope within 2 tol + 1/j of P(u, f).  Isolated
    nodes violating the order are counted and reported.
    """
    t0 = time.perf_counter()
    grid = u.grid
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    f = _density(f, grid)
    psi = _on_grid(shape, grid)
    if np.any(psi.values[grid.active] < 0) or np.any(psi.values[grid.active] > 1):
        raise ValueError("perturbation shape must take values in [0, 1]")
    P = envelope_obstacle(u, f, tol=tol, mode=mode).P
    inner = grid.interior
    rows = []
    ok = True
    for sign, label in ((1.0, "decreasing"), (-1.0, "increasing")):
        prev = None
        for j in js:
            Pj = envelope_obstacle(u + psi * (sign / j), f, tol=tol, mode=mode).P
            gap = sup_diff(Pj, P)
            bad = 0
            if prev is not None:
                step = (Pj.values[inner] - prev.values[inner]) * sign
                bad = int(np.count_nonzero(step > 2 * tol))
            within = gap <= 2 * tol + 1.0 / j
            ok &= within and bad == 0
            rows.append({"family": label, "j": j, "gap": gap, "bound": 2 * tol + 1.0 / j, "misordered_nodes": bad})
            prev = Pj
    return ExperimentReport(
        name="monotone_limits",
        inputs={"js": list(js), "tol": tol, "h": grid.h},
        measured={"max_gap_ratio": max(r["gap"] / r["bound"] for r in rows),
                  "misordered_nodes": sum(r["misordered_nodes"] for r in rows)},
        passed=bool(ok),
        tolerance={"order": "2 tol", "gap": "2 tol + 1/j"},
        runtime=time.perf_counter() - t0,
        table=rows,
    )


# Monge-Ampere upper bound ---------------------------------------------------------

def ma_bound_check(u, g, f, j_schedule=None, tol=None, rel=0.05, min_distance=2, mode="seq",
                   subsolution="check"):
    """Check ma_density(P) <= max(f, g) (1 + rel) + ma_tol away from the band.

    P is computed by obstacle iteration and by penalisation; both must satisfy
    the bound at interior nodes at least ``min_distance`` stencil steps from
    the band.  The cross-method sup gap is reported.
    """
    t0 = time.perf_counter()
    grid = u.grid
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    f = _density(f, grid)
    g = _density(g, grid)
    _, ma_tol, _ = tolerances(grid, tol)
    far = grid.distance_to_band() >= min_distance
    bound = np.maximum(f.values, g.values) * (1 + rel) + ma_tol
    P_obs = envelope_obstacle(u, f, tol=tol, mode=mode)
    P_ber = envelope_berman(u, f, g, j_schedule=j_schedule, tol=tol, mode=mode, reference=P_obs.P,
                            subsolution=subsolution)
    out = {}
    rows = []
    for name, res in (("obstacle", P_obs), ("berman", P_ber)):
        excess = ma_density(res.P).values - bound
        excess = np.where(far, excess, -np.inf)
        k = int(np.argmax(excess))
        worst = float(excess.reshape(-1)[k])
        node = tuple(float(x) for x in grid.coords([k])[0])
        out[f"{name}_worst_excess"] = worst
        rows.append({"method": name, "worst_excess": worst, "worst_node": node})
    gap = sup_diff(P_obs.P, P_ber.P)
    out["cross_method_gap"] = gap
    out["subsolution_defect"] = P_ber.report.extra.get("subsolution_defect")
    ok = out["obstacle_worst_excess"] <= 0 and out["berman_worst_excess"] <= 0
    return ExperimentReport(
        name="ma_bound",
        inputs={"f": f.source, "g": g.source, "h": grid.h, "n": grid.n, "tol": tol,
                "j_schedule": P_ber.report.extra["schedule"]},
        measured=out,
        passed=bool(ok),
        tolerance={"rel": rel, "ma_tol": ma_tol, "min_distance": min_distance},
        runtime=time.perf_counter() - t0,
        table=rows,
    )


def berman_study(u, f, g, j_schedule=None, tol=None, gap_tol=0.02, mode="seq", subsolution="check"):
    """Penalised envelope against the obstacle envelope, with trace monotonicity."""
    t0 = time.perf_counter()
    grid = u.grid
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    ref = envelope_obstacle(u, f, tol=tol, mode=mode)
    res = envelope_berman(u, f, g, j_schedule=j_schedule, tol=tol, mode=mode, reference=ref.P,
                          subsolution=subsolution)
    mono = berman_monotonicity(res.trace, tol)
    gap = res.trace[-1]["gap_to_reference"]
    ok = gap <= gap_tol and mono["increasing_ok"] and mono["below_obstacle_ok"]
    rows = [{k: v for k, v in r.items() if k != "u_j"} for r in res.trace]
    return ExperimentReport(
        name="berman",
        inputs={"h": grid.h, "n": grid.n, "tol": tol, "j_schedule": res.report.extra["schedule"]},
        measured={"gap": gap, **mono, "subsolution_ok": res.report.extra["subsolution_ok"]},
        passed=bool(ok),
        tolerance={"gap": gap_tol, "order": 2 * tol},
        runtime=time.perf_counter() - t0,
        table=rows,
    )
