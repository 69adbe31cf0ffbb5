"""Compare the compiled and pure-Python RK4 kernels on the case-study loops.

    python3 benchmarks/bench_kernel.py [--t-end 0.2] [--repeat 3]

Each case is run on both backends; the traces must agree bit for bit.
"""

import argparse
import time

import numpy as np

from paraconv import (
    CASE_INNER_SPEC,
    ConverterParams,
    LoadProfile,
    SharingSpec,
    SimConfig,
    allocate,
    design_inner,
    kernels,
    reference_Kv,
    simulate_closed_loop,
    simulate_switched,
)


def cases(t_end):
    c1 = ConverterParams("boost", 2.4e-3, 4e-4, 12.0, 24.0)
    c2 = ConverterParams("boost", 2.4e-3, 4e-4, 10.0, 24.0)
    load = LoadProfile.resistive(24.0, 0.2)
    Kv = reference_Kv()
    two = allocate(SharingSpec((0.7, 0.3), (0.5, 0.5)), [c1, c2], CASE_INNER_SPEC)
    yield "single, averaged", lambda be: simulate_closed_loop(
        c1, Kv, load, SimConfig(dt=1e-5, t_end=t_end), inner_spec=CASE_INNER_SPEC, backend=be)
    yield "two, averaged", lambda be: simulate_closed_loop(
        two, Kv, load, SimConfig(dt=1e-5, t_end=t_end), backend=be)
    cfg = SimConfig(dt=1e-6, t_end=t_end / 4, mode="switched", pwm_freq=20e3, decimate=10)
    K_c = design_inner(CASE_INNER_SPEC, c1.L)
    yield "single, switched", lambda be: simulate_switched(c1, Kv, K_c, load, cfg, backend=be)


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t-end", type=float, default=0.2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.run_compiled is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")
    print(f"{'case':<20}{'samples':>10}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}  match")
    for name, fn in cases(args.t_end):
        t_py, tr_py = best_of(lambda: fn("python"), 1)
        t_cy, tr_cy = best_of(lambda: fn("cython"), args.repeat)
        same = np.array_equal(tr_py.states, tr_cy.states)
        print(f"{name:<20}{tr_cy.time.size:>10}{t_py:>12.3f}{t_cy:>12.4f}{t_py / t_cy:>10.1f}  {same}")


if __name__ == "__main__":
    main()
