"""Command line entry point ``pshenv``.

Subcommands::

    pshenv envelope    --config run.yaml [--out DIR] [--mode seq|redblack] [--strict]
    pshenv berman      --config run.yaml ...
    pshenv capacity    --config run.yaml ...
    pshenv verify      NAME|all [--config overrides.yaml] ...
    pshenv convergence 1/16,1/32,1/64 --config run.yaml ...

Exit status: 0 on success (all selected checks pass), 1 when a check fails,
2 for configuration or usage errors, 3 when a computation fails.  Failures
write ``failure.json`` to the output directory when it is writable and always
print the same record to stderr.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .capacity import capacity
from .config import OBSTACLE_DENSITY, config_from_dict, parse_config, parse_number
from .envelope import berman_monotonicity, envelope_berman, envelope_obstacle
from .errors import ConfigError, PshError
from .experiments import _plain, lipschitz_constant, write_rows
from .grid import (
    GridFunction,
    GridSet,
    atomic_write,
    build_grid,
    read_function,
    restrict,
    sample,
    sup_diff,
    write_function,
    write_grid,
)
from .ma import ma_density
from .solver import DensityField
from .verify import SUITE, run_check

log = logging.getLogger("pshenvelope")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


# data loading ---------------------------------------------------------------

def load_function(src, grid):
    if isinstance(src, dict):
        u = read_function(src["file"], grid.stencil)
        return u if u.grid.same_as(grid) else restrict(u, grid)
    return sample(src, grid)


def load_density(src, grid, p=2.0, obstacle=None):
    if src is None:
        return DensityField.zero(grid, p)
    if src == OBSTACLE_DENSITY:
        return DensityField(grid, np.nan_to_num(ma_density(obstacle).values), p=p, source=OBSTACLE_DENSITY)
    if isinstance(src, dict):
        return DensityField(grid, load_function(src, grid).values, p=p, source=src["file"])
    if isinstance(src, float):
        return DensityField.constant(src, grid, p)
    return DensityField.from_expr(src, grid, p)


def coarse_node_diff(fine, coarse):
    """Sup difference at the coarse interior nodes that are also fine active nodes.

    Returns None when the spacings are not integer multiples of each other.
    """
    ratio = coarse.grid.h / fine.grid.h
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        return None
    flat = coarse.grid.interior_flat
    idx = coarse.grid.index_coords(flat) * k - fine.grid.lo
    shape = np.asarray(fine.grid.shape)
    ok = np.all((idx >= 0) & (idx < shape), axis=1)
    fv = fine.values[tuple(idx[ok].T)]
    cv = coarse.values.reshape(-1)[flat[ok]]
    keep = np.isfinite(fv)
    if not keep.any():
        return None
    return float(np.max(np.abs(fv[keep] - cv[keep])))


# output -----------------------------------------------------------------------

def prepare_out(path):
    """Create the output directory and check it is writable before any work starts."""
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.unlink(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc.strerror or exc}") from None
    return path


def write_json(path, obj):
    atomic_write(path, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def failure_record(command, exc, code):
    return {
        "status": "error" if code != EXIT_FAILED else "failed",
        "command": command,
        "exit_code": code,
        "error_type": type(exc).__name__,
        "message": exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc),
    }


# commands -----------------------------------------------------------------------

def _envelope_outputs(cfg, grid, u, f, res, out, extra=None):
    write_grid(os.path.join(out, "grid.pshg"), grid)
    write_function(os.path.join(out, "result.pshg"), res.P)
    contact = GridFunction(grid, np.where(res.contact.mask, 1.0, 0.0))
    write_function(os.path.join(out, "contact.pshg"), contact)
    report = {
        "config": cfg.to_dict(),
        "method": res.method,
        "backend": kernels.BACKEND,
        "solve": res.report.to_dict(),
        "tolerances": {"tol": res.tol, "contact_tol": res.contact_tol, "ma_tol": res.ma_tol, "psh_tol": res.psh_tol},
        "grid": {"n": grid.n, "h": grid.h, "interior": grid.num_interior, "band": grid.num_band},
        "contact_nodes": len(res.contact),
        "active_nodes": len(res.active),
        "constraints": res.check_constraints(u, f),
        "lipschitz": lipschitz_constant(res.P),
    }
    if cfg.exact is not None:
        report["sup_error_vs_exact"] = sup_diff(res.P, sample(cfg.exact, grid))
    if extra:
        report.update(extra)
    write_json(os.path.join(out, "report.json"), report)
    return report


def compute_envelope(cfg, h=None, method=None, mode=None):
    h = cfg.h if h is None else h
    grid = build_grid(cfg.domain, h, cfg.stencil)
    u = load_function(cfg.obstacle, grid)
    f = load_density(cfg.f, grid, cfg.p)
    method = method or cfg.method
    mode = mode or cfg.mode
    if method == "berman":
        g = load_density(cfg.g, grid, cfg.p, obstacle=u)
        ref = envelope_obstacle(u, f, tol=cfg.tol, max_iter=cfg.max_iter, mode=mode).P
        res = envelope_berman(u, f, g, j_schedule=cfg.j_schedule, tol=cfg.tol, max_iter=cfg.max_iter,
                              mode=mode, reference=ref, subsolution=cfg.subsolution)
    else:
        res = envelope_obstacle(u, f, tol=cfg.tol, max_iter=cfg.max_iter, mode=mode,
                                check_maximality=cfg.check_maximality)
    return grid, u, f, res


def cmd_envelope(cfg, args, method=None):
    out = args.out
    grid, u, f, res = compute_envelope(cfg, method=method, mode=args.mode)
    extra = {}
    if res.method == "berman":
        trace = [{k: v for k, v in r.items() if k != "u_j"} for r in res.trace]
        extra["trace"] = trace
        extra["trace_order"] = berman_monotonicity(res.trace, res.tol)
        write_rows(os.path.join(out, "trace.csv"), trace)
    report = _envelope_outputs(cfg, grid, u, f, res, out, extra)
    line = f"{res.method}: {res.report.iterations} sweeps, residual {res.report.residual:.3g}"
    if "sup_error_vs_exact" in report:
        line += f", sup-error vs exact {report['sup_error_vs_exact']:.4g}"
    print(line)
    return EXIT_OK


def cmd_capacity(cfg, args):
    if cfg.capacity_set is None:
        raise ConfigError("capacity needs 'capacity_set' (an expression, true where > 0)")
    grid = build_grid(cfg.domain, cfg.h, cfg.stencil)
    if isinstance(cfg.capacity_set, dict):
        E = GridSet(grid, (load_function(cfg.capacity_set, grid).values > 0) & grid.interior)
    else:
        E = GridSet.from_predicate(grid, cfg.capacity_set)
    cap, res = capacity(E, tol=cfg.tol, mode=args.mode or cfg.mode, return_extremal=True)
    write_grid(os.path.join(args.out, "grid.pshg"), grid)
    write_function(os.path.join(args.out, "extremal.pshg"), res.P)
    report = {"config": cfg.to_dict(), "capacity": cap, "set_nodes": len(E), "solve": res.report.to_dict()}
    write_json(os.path.join(args.out, "report.json"), report)
    print(f"capacity {cap:.6g} ({len(E)} nodes in the set)")
    return EXIT_OK


def cmd_verify(cfg, args):
    names = list(SUITE) if args.experiment == "all" else [args.experiment]
    results = []
    for name in names:
        params = dict((cfg.experiments or {}).get(name, {})) if cfg else {}
        rep = run_check(name, mode=args.mode, **params)
        rep.write_csv(os.path.join(args.out, f"{name}.csv"))
        atomic_write(os.path.join(args.out, f"{name}.json"), rep.to_json() + "\n")
        print(f"{rep.summary()} [{rep.runtime:.1f}s]", flush=True)
        results.append(rep)
    failed = [r.name for r in results if not r.passed]
    summary = {"passed": [r.name for r in results if r.passed], "failed": failed,
               "config": cfg.to_dict() if cfg else None}
    write_json(os.path.join(args.out, "summary.json"), summary)
    if failed:
        raise CheckFailed(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_convergence(cfg, args):
    hs = [parse_number(x, "refinement") for x in args.refinement.replace(",", " ").split()]
    if not hs:
        hs = cfg.refinement
    if len(hs) < 2:
        raise ConfigError("convergence needs at least two spacings")
    rows = []
    prev = None
    for h in sorted(hs, reverse=True):
        t0 = time.perf_counter()
        grid, u, f, res = compute_envelope(cfg, h=h, mode=args.mode)
        row = {"h": h, "sweeps": res.report.iterations, "lipschitz": lipschitz_constant(res.P),
               "seconds": time.perf_counter() - t0}
        if cfg.exact is not None:
            row["sup_error"] = sup_diff(res.P, sample(cfg.exact, grid))
        if prev is not None:
            d = coarse_node_diff(res.P, prev)
            if d is not None:
                row["diff_to_previous"] = d
        rows.append(row)
        prev = res.P
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()), flush=True)
    write_rows(os.path.join(args.out, "convergence.csv"), rows)
    write_json(os.path.join(args.out, "convergence.json"), {"config": cfg.to_dict(), "rows": rows})
    return EXIT_OK


# driver -------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    common.add_argument("--mode", choices=("seq", "redblack"), help="sweep mode (overrides the config)")
    common.add_argument("--strict", action="store_true", help="reject unknown config keys")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pshenv", description="Conditional psh envelopes on grids.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("envelope", parents=[common], help="envelope by the configured method")
    sub.add_parser("berman", parents=[common], help="envelope by penalisation")
    sub.add_parser("capacity", parents=[common], help="relative capacity of a set")
    v = sub.add_parser("verify", parents=[common], help="run one verification check or all")
    v.add_argument("experiment", help=f"'all' or one of: {', '.join(SUITE)}")
    c = sub.add_parser("convergence", parents=[common], help="envelope at several spacings")
    c.add_argument("refinement", help="spacings, e.g. 1/16,1/32,1/64")
    return p


def _load(args):
    if args.config:
        return parse_config(args.config, strict=args.strict)
    if args.command in ("verify",):
        return None
    return config_from_dict({}, strict=True)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code = EXIT_OK
    out_ready = False
    try:
        cfg = _load(args)
        args.out = args.out or (cfg.out if cfg is not None else "out")
        if args.command == "verify" and args.experiment != "all" and args.experiment not in SUITE:
            run_check(args.experiment)  # raises KeyError with a suggestion
        prepare_out(args.out)
        out_ready = True
        if args.command == "envelope":
            code = cmd_envelope(cfg, args)
        elif args.command == "berman":
            code = cmd_envelope(cfg, args, method="berman")
        elif args.command == "capacity":
            code = cmd_capacity(cfg, args)
        elif args.command == "verify":
            code = cmd_verify(cfg, args)
        else:
            code = cmd_convergence(cfg, args)
        return code
    except CheckFailed as exc:
        code, err = EXIT_FAILED, exc
    except (ConfigError, KeyError) as exc:
        code, err = EXIT_CONFIG, exc
    except (PshError, OSError, ValueError) as exc:
        code, err = EXIT_RUNTIME, exc
    record = failure_record(args.command, err, code)
    print(json.dumps(record), file=sys.stderr)
    if out_ready:
        try:
            write_json(os.path.join(args.out, "failure.json"), record)
        except OSError:
            pass
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["main", "build_parser"]
