#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback on identical inputs.

Covers both hot paths: per-node quadrature propagation (with and without
accumulated maps) and the phase-lattice coefficient contraction.  Also
reports the maximum numerical deviation between the two implementations,
which must sit at rounding level.

Run from a checkout with the package installed:

    python3 benchmarks/kernel_benchmark.py [--nodes 4097] [--steps 20]
        [--lattice-steps 2000] [--repeats 5]
"""

import argparse
import math
import time

import numpy as np

from dqdyn import _kernels_py, engine
from dqdyn.environment import build_grid, default_model
from dqdyn.protocol import Protocol
from dqdyn.qmath import density

try:
    from dqdyn import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def deviation(a, b) -> float:
    worst = 0.0
    for x, y in zip(a, b):
        if x is None or y is None:
            continue
        worst = max(worst, float(np.max(np.abs(np.asarray(x) - np.asarray(y)))))
    return worst


def workloads(args):
    model = default_model()
    rhos = np.stack([density("H"), density("V")])

    proto = Protocol.uniform(0.5, 120.0, args.steps)
    grid = build_grid(model, n_nodes=args.nodes, span_sigmas=8.0)
    quad = (proto.control_matrices(), proto.thetas(), grid.xs, grid.weights, rhos)
    yield (
        f"quadrature {args.nodes} nodes x {args.steps} steps",
        "propagate_quadrature",
        quad + (False,),
    )
    yield (
        f"quadrature {args.nodes} nodes x {args.steps} steps + maps",
        "propagate_quadrature",
        quad + (True,),
    )

    lat_proto = Protocol.uniform(0.5, 120.0, args.lattice_steps)
    base, lifts = engine.commensurate_lifts(
        lat_proto.delta_ls, cap=max(10000, args.lattice_steps + 1)
    )
    fvals = np.atleast_1d(
        model.coherence(2.0 * math.pi * base * np.arange(int(lifts.sum()) + 1))
    )
    mask = np.ones(args.lattice_steps + 1, dtype=np.uint8)
    yield (
        f"lattice {args.lattice_steps} steps",
        "propagate_lattice",
        (lat_proto.control_matrices(), lifts, fvals, rhos, mask, False),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--nodes", type=int, default=4097)
    parser.add_argument("--steps", type=int, default=20)
    parser.add_argument("--lattice-steps", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _kernels is None:
        print("compiled extension not importable; timing the fallback only")

    width = 48
    print(f"{'workload':<{width}} {'numpy':>10} {'cython':>10} {'ratio':>7}  max|diff|")
    for name, fn_name, payload in workloads(args):
        py_fn = getattr(_kernels_py, fn_name)
        t_py = best_of(lambda: py_fn(*payload), args.repeats)
        if _kernels is None:
            print(f"{name:<{width}} {t_py * 1e3:>8.2f}ms {'-':>10} {'-':>7}")
            continue
        cy_fn = getattr(_kernels, fn_name)
        t_cy = best_of(lambda: cy_fn(*payload), args.repeats)
        diff = deviation(py_fn(*payload), cy_fn(*payload))
        print(
            f"{name:<{width}} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
            f"{t_py / t_cy:>6.1f}x  {diff:.1e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
