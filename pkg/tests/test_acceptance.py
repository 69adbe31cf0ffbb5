"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
repeated in the terminal summary.
"""

import math
import subprocess
import sys
import time

import numpy as np

from paraconv.converters import ConverterParams
from paraconv.design import (
    OMEGA_120HZ,
    CASE_CONVERTER,
    CASE_INNER_SPEC,
    InnerLoopSpec,
    closed_loop_maps,
    closed_loop_stability,
    design_inner,
    mismatched_outer_plant,
    nominal_outer_plant,
    reference_Kv,
    reference_weights,
    stacked_cost,
    target_inner_cl,
    verify_inner,
)
from paraconv.multi import SharingSpec, allocate, verify_equivalence
from paraconv.sim import LoadProfile, SimConfig, simulate_closed_loop, steady_state_metrics
from paraconv.tf import TransferFunction, coeff_deviation, hinf_norm, tf_add

C12 = ConverterParams("boost", 2.4e-3, 4e-4, 12.0, 24.0)
C10 = ConverterParams("boost", 2.4e-3, 4e-4, 10.0, 24.0)
LOAD = LoadProfile.resistive(24.0, 0.2)


def two_converter_run(alpha, beta, dt=1e-5):
    sys_ = allocate(SharingSpec(alpha, beta), [C12, C10], CASE_INNER_SPEC)
    t0 = time.perf_counter()
    tr = simulate_closed_loop(sys_, reference_Kv(), LOAD, SimConfig(dt=dt, t_end=1.0))
    return steady_state_metrics(tr), time.perf_counter() - t0


def rel_err(got, want):
    return float(np.max(np.abs(np.asarray(got) - np.asarray(want)) / np.abs(want)))


def test_criterion_1_inner_loop_identity(record):
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst = verify_inner(design_inner(CASE_INNER_SPEC, 2.4e-3), 2.4e-3, CASE_INNER_SPEC).residual
    for _ in range(1000):
        spec = InnerLoopSpec(float(rng.uniform(0.05, 10.0)), float(rng.uniform(0.05, 10.0)),
                             float(2 * math.pi * 10 ** rng.uniform(1, 3.7)))
        L = float(10 ** rng.uniform(-5, -1))
        worst = max(worst, verify_inner(design_inner(spec, L), L, spec).residual)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 5.0
    record(1, ok, f"max coefficient error {worst:.2e} (< 1e-9), 1001 specs in {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_2_notch_law(record):
    wt, w0 = CASE_INNER_SPEC.omega_tilde, OMEGA_120HZ
    errs, depth = [], []
    for z in (0.5, 1.0, 2.0, 3.2, 4.5):
        spec = CASE_INNER_SPEC.with_zeta1(z)
        got = abs(target_inner_cl(spec)(1j * w0))
        want = z / spec.zeta2 * wt / math.sqrt(wt * wt + w0 * w0)
        errs.append(abs(got - want))
        depth.append(got)
    monotone = all(a < b for a, b in zip(depth, depth[1:]))
    ok = max(errs) < 1e-9 and monotone
    record(2, ok, f"|G(j w0)| error {max(errs):.2e} (< 1e-9), monotone in zeta1: {monotone}")
    assert ok


def test_criterion_3_frequency_domain_equivalence(record):
    devs, neg = [], []
    for beta in ((0.5, 0.5), (0.7, 0.3)):
        sys_ = allocate(SharingSpec((0.7, 0.3), beta), [C12, C10], CASE_INNER_SPEC)
        devs.append(verify_equivalence(sys_, reference_Kv()).max_deviation)
        g = list(sys_.gamma)
        g[0] *= 1.01
        neg.append(verify_equivalence(sys_.with_gamma(g), reference_Kv()).max_deviation)
    ok = max(devs) < 1e-9 and min(neg) > 1e-4
    record(3, ok, f"regulated-map deviation {max(devs):.2e} (< 1e-9); "
                  f"1% gamma perturbation {min(neg):.2e} (> 1e-4)")
    assert ok


def test_criterion_4_power_sharing(record):
    details, ok = [], True
    for alpha in ((0.7, 0.3), (0.5, 0.5)):
        m, secs = two_converter_run(alpha, (0.5, 0.5))
        err = rel_err(m.shares_dc, alpha)
        ok &= err < 0.01 and secs < 30.0
        details.append(f"alpha={alpha}: shares {np.round(m.shares_dc, 4).tolist()} "
                       f"(err {err:.2%}, {secs:.2f} s)")
    record(4, ok, "; ".join(details) + " [tol 1%, 30 s]")
    assert ok


def test_criterion_5_ripple_sharing(record):
    details, ok = [], True
    for beta in ((0.7, 0.3), (0.5, 0.5)):
        m, _ = two_converter_run((0.5, 0.5), beta)
        err = rel_err(m.shares_ripple, beta)
        ok &= err < 0.05
        details.append(f"beta={beta}: 120 Hz shares {np.round(m.shares_ripple, 4).tolist()} (err {err:.2%})")
    record(5, ok, "; ".join(details) + " [tol 5%]")
    assert ok


def test_criterion_6_robust_regulation(record):
    tr = simulate_closed_loop(CASE_CONVERTER, reference_Kv(), LOAD, SimConfig(dt=1e-5, t_end=1.0),
                              inner_spec=CASE_INNER_SPEC, L_actual=[2e-3], C_actual=5e-4)
    m = steady_state_metrics(tr)
    st = closed_loop_stability(reference_Kv(), mismatched_outer_plant(CASE_CONVERTER, CASE_INNER_SPEC,
                                                                  2e-3, 5e-4))
    err = abs(m.V_dc - 24.0)
    # K_v has no integrator, so the loop settles very slowly towards a fixed
    # point with a load-dependent offset; reported for information only
    eq = simulate_closed_loop(CASE_CONVERTER, reference_Kv(), LoadProfile.resistive(24.0),
                              SimConfig(dt=1e-5, t_end=1e-4), inner_spec=CASE_INNER_SPEC,
                              L_actual=[2e-3], C_actual=5e-4, init="equilibrium").V[0]
    ok = err < 0.24 and st.stable and st.margin > 0
    record(6, ok, f"|V_dc - 24| = {err:.4f} V (< 0.24 V) over {m.window[0]:.2f}-{m.window[1]:.2f} s; "
                  f"stable {st.stable}, margin {st.margin:.2e}; info: fixed point {eq:.3f} V")
    assert ok


def test_criterion_7_hinf_oracle(record):
    lag = hinf_norm(TransferFunction([1.0], [1.0, 1.0]))
    z = 0.1
    res = hinf_norm(TransferFunction([1.0], [1.0, 2 * z, 1.0]))
    want = 1 / (2 * z * math.sqrt(1 - z * z))
    e1, e2 = abs(lag - 1.0), abs(res - want) / want
    ok = e1 < 1e-3 and e2 < 1e-3
    record(7, ok, f"first-order lag {lag:.6f} (err {e1:.1e}); resonance {res:.6f} vs {want:.6f} "
                  f"(err {e2:.1e}) [tol 1e-3]")
    assert ok


_COST_SNIPPET = (
    "from paraconv.design import *;"
    "print(repr(stacked_cost(reference_Kv(), nominal_outer_plant(CASE_CONVERTER, CASE_INNER_SPEC),"
    " reference_weights())))"
)


def test_criterion_8_sensitivity_identity_and_determinism(record):
    plant = nominal_outer_plant(CASE_CONVERTER, CASE_INNER_SPEC)
    maps = closed_loop_maps(reference_Kv(), plant)
    total = tf_add(maps.S, maps.T)
    ident = coeff_deviation(total.num, total.den)
    here = [stacked_cost(reference_Kv(), plant, reference_weights()) for _ in range(2)]
    procs = [subprocess.run([sys.executable, "-c", _COST_SNIPPET], capture_output=True, text=True,
                            check=True).stdout.strip() for _ in range(2)]
    same = here[0] == here[1] and procs[0] == procs[1] == repr(here[0])
    ok = ident < 1e-9 and same
    record(8, ok, f"S+T-1 coefficient residual {ident:.2e}; stacked cost {here[0]!r} "
                  f"bit-identical across runs and processes: {same}")
    assert ok


def test_criterion_9_dt_convergence(record):
    worst, where = 0.0, ""
    for alpha, beta in (((0.7, 0.3), (0.5, 0.5)), ((0.5, 0.5), (0.7, 0.3))):
        a, _ = two_converter_run(alpha, beta, dt=1e-5)
        b, _ = two_converter_run(alpha, beta, dt=5e-6)
        fa, fb = a.fields(), b.fields()
        for k in fa:
            r = abs(fa[k] - fb[k]) / abs(fa[k])
            if r > worst:
                worst, where = r, k
    ok = worst < 1e-4
    record(9, ok, f"largest relative change on halving dt: {worst:.2e} ({where}) (< 1e-4)")
    assert ok
