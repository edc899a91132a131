"""Compare the compiled and numpy sweep kernels on the benchmark envelopes.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Prints sweeps per second for each backend and mode, the speed-up and the
largest difference between the two backends' results.
"""

import argparse
import time

import numpy as np

from pshenvelope import kernels
from pshenvelope.domain import ball
from pshenvelope.grid import build_grid, sample
from pshenvelope.solver import MODES, DensityField, RHSSpec, _KernelCall, _working_array

CASES = {
    "disc h=1/64": (1, 1 / 64, 4.0),
    "ball C^2 h=1/8": (2, 1 / 8, 32.0),
}
QUICK = {
    "disc h=1/32": (1, 1 / 32, 4.0),
    "ball C^2 h=1/4": (2, 1 / 4, 32.0),
}


def time_sweeps(grid, f, backend, mode, sweeps):
    u = sample(0, grid)
    call = _KernelCall(grid, RHSSpec(DensityField.constant(f, grid)), obstacle=u, backend=backend)
    w = _working_array(u)
    t0 = time.perf_counter()
    for _ in range(sweeps):
        call.sweep(w, MODES[mode])
    return time.perf_counter() - t0, w


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--quick", action="store_true", help="smaller grids")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy kernels are available")
    print(f"{'case':<18} {'mode':<9} " + " ".join(f"{b + ' sw/s':>15}" for b in backends)
          + f" {'speed-up':>9} {'max diff':>9}")
    for name, (n, h, f) in (QUICK if args.quick else CASES).items():
        grid = build_grid(ball(radius=1.0, n=n), h)
        for mode in ("seq", "redblack"):
            rates, results = {}, {}
            for b in backends:
                best = min(time_sweeps(grid, f, b, mode, args.sweeps)[0] for _ in range(args.repeat))
                rates[b] = args.sweeps / best
                results[b] = time_sweeps(grid, f, b, mode, args.sweeps)[1]
            speed = rates["compiled"] / rates["python"] if len(rates) == 2 else float("nan")
            diff = float(np.max(np.abs(results["compiled"] - results["python"]))) if len(rates) == 2 else 0.0
            print(f"{name:<18} {mode:<9} " + " ".join(f"{rates[b]:>15.1f}" for b in backends)
                  + f" {speed:>9.1f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
