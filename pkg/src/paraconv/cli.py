"""Command-line front end: ``paraconv <command> --scenario file.json --out dir``.

Exit codes: 0 success, 1 tolerance or numerical failure, 2 input error.
Outputs are JSON (sorted keys, full-precision floats) and CSV, so identical
reruns produce identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .design import (
    OuterPlant,
    closed_loop_maps,
    design_inner,
    stacked_cost,
    synthesize_outer_fixed_structure,
    target_inner_cl,
    verify_inner,
)
from .converters import ConverterParams
from .errors import (
    ImproperSystemError,
    InfeasibleAllocationError,
    InvalidInputError,
    InvalidOperatingPointError,
    ParaconvError,
)
from .multi import IDENTITY_TOL, allocate, predicted_shares, verify_equivalence
from .scenario import TEMPLATES, Scenario, load_scenario
from .sim import SimConfig, simulate_closed_loop, simulate_switched, steady_state_metrics
from .tf import FrequencyGrid, TransferFunction, bode, tf_add

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT = 0, 1, 2
INPUT_ERRORS = (InvalidInputError, InfeasibleAllocationError, InvalidOperatingPointError,
                ImproperSystemError)
_PREFIXES = [(1e9, "G"), (1e6, "M"), (1e3, "k"), (1.0, ""), (1e-3, "m"), (1e-6, "u"),
             (1e-9, "n"), (1e-12, "p")]


def eng(x: float, unit: str = "") -> str:
    """Engineering notation, e.g. ``eng(2.4e-3, 'H') == '2.4 mH'``."""
    if x == 0 or not math.isfinite(x):
        return f"{x:g} {unit}".rstrip()
    for scale, p in _PREFIXES:
        if abs(x) >= scale:
            return f"{x / scale:.4g} {p}{unit}".rstrip()
    return f"{x:.4g} {unit}".rstrip()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _grid(args) -> FrequencyGrid:
    return FrequencyGrid.logspace(args.grid_min, args.grid_max, args.grid_points)


def _out_dir(args, sc: Scenario | None = None) -> Path:
    out = Path(args.out or (sc.outputs if sc and sc.outputs else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _system(sc: Scenario):
    sys_ = allocate(sc.sharing, sc.converters, sc.inner_base, C=sc.C_link)
    if sc.gamma_scale is not None:
        sys_ = sys_.with_gamma([g * s for g, s in zip(sys_.gamma, sc.gamma_scale)])
    return sys_


def _nominal_plant(sys_) -> OuterPlant:
    n = sys_.nominal
    G_v = TransferFunction([1.0], [n.C, 0.0])
    return OuterPlant(target_inner_cl(n.spec), n.D_prime, G_v)


def _outer_controller(sc: Scenario, sys_, args):
    if sc.outer.K_v is not None:
        return sc.outer.K_v, None
    res = synthesize_outer_fixed_structure(
        _nominal_plant(sys_), sc.outer.weights, TEMPLATES[sc.outer.template], sc.outer.init,
        grid=_grid(args), seed=args.seed, max_evals=sc.outer.max_evals)
    return res.K_v, res


def cmd_design_inner(args) -> int:
    sc = load_scenario(args.scenario)
    sys_ = _system(sc)
    out = _out_dir(args, sc)
    worst = 0.0
    for k, p in enumerate(sys_.converters):
        spec = sys_.inner_spec(k)
        K = design_inner(spec, p.L)
        chk = verify_inner(K, p.L, spec)
        worst = max(worst, chk.residual)
        rec = {"K_c": K.to_dict(), "L": p.L, "zeta1": spec.zeta1, "zeta2": spec.zeta2,
               "omega_tilde": spec.omega_tilde, "omega0": spec.omega0,
               "residual": chk.residual, "stable": chk.stable}
        _write_json(out / f"K_c_{k + 1}.json", rec)
        print(f"K_c_{k + 1}: L = {eng(p.L, 'H')}, zeta1 = {spec.zeta1:.6g}, "
              f"residual = {chk.residual:.3g}, stable = {chk.stable}")
    ok = worst <= IDENTITY_TOL
    print("inner-loop identity", "PASS" if ok else "FAIL", f"(max residual {worst:.3g})")
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_allocate(args) -> int:
    sc = load_scenario(args.scenario)
    sys_ = allocate(sc.sharing, sc.converters, sc.inner_base, C=sc.C_link)
    out = _out_dir(args, sc)
    _write_json(out / "allocation.json", sys_.to_dict())
    n = sys_.nominal
    print(f"D'_n = {n.D_prime:.6g}, L_n = {eng(n.L, 'H')}")
    for k in range(sys_.m):
        print(f"  converter {k + 1}: gamma = {sys_.gamma[k]:.6g}, zeta1 = {sys_.zeta1[k]:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = load_scenario(args.scenario)
    sys_ = _system(sc)
    K_v, _ = _outer_controller(sc, sys_, args)
    rep = verify_equivalence(sys_, K_v, grid=_grid(args))
    dc, rip = predicted_shares(sys_)
    share_dc_err = float(np.max(np.abs(dc - np.array(sys_.alpha))))
    share_rip_err = float(np.max(np.abs(rip - np.array(sys_.beta))))
    ok = (rep.max_deviation < IDENTITY_TOL and share_dc_err < IDENTITY_TOL
          and share_rip_err < IDENTITY_TOL and rep.stable_multi)
    out = _out_dir(args, sc)
    report = rep.to_dict()
    report.update({"shares_dc": dc.tolist(), "shares_ripple": rip.tolist(),
                   "share_dc_error": share_dc_err, "share_ripple_error": share_rip_err,
                   "tolerance": IDENTITY_TOL, "pass": ok, "gamma": list(sys_.gamma)})
    _write_json(out / "verify.json", report)
    rep.to_csv(out / "verify_pointwise.csv")
    print(f"max regulated-map deviation {rep.max_deviation:.3g} "
          f"(control maps {rep.control_deviation:.3g})")
    print(f"dc shares {np.round(dc, 6).tolist()}, ripple shares {np.round(rip, 6).tolist()}")
    print("equivalence", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    if sc.load is None:
        raise InvalidInputError("simulate needs a 'load' section")
    cfg = sc.sim or SimConfig()
    sys_ = allocate(sc.sharing, sc.converters, sc.inner_base, C=sc.C_link)
    K_v, _ = _outer_controller(sc, sys_, args)
    if cfg.noise is not None and args.seed is not None:
        cfg = SimConfig(cfg.dt, cfg.t_end, cfg.mode, cfg.pwm_freq,
                        type(cfg.noise)(cfg.noise.std, args.seed), cfg.decimate)
    if cfg.mode == "switched":
        if sys_.m != 1:
            raise InvalidInputError("switched mode supports a single converter only")
        p = sc.converters[0]
        K_c = design_inner(sys_.inner_spec(0), p.L)
        actual = ConverterParams(p.topology, sc.plant_L[0] if sc.plant_L else p.L,
                                 sc.plant_C if sc.plant_C is not None else sys_.nominal.C,
                                 p.V_g, p.V_des)
        trace = simulate_switched(actual, K_v, K_c, sc.load, cfg, init=sc.init)
    else:
        trace = simulate_closed_loop(sys_, K_v, sc.load, cfg, L_actual=sc.plant_L,
                                     C_actual=sc.plant_C, init=sc.init)
    met = steady_state_metrics(trace, f0=sc.f0, t_discard=sc.t_discard)
    out = _out_dir(args, sc)
    trace.to_csv(out / "trace.csv")
    _write_json(out / "metrics.json", met.to_dict())
    print(f"V_dc = {eng(met.V_dc, 'V')} (error {eng(met.regulation_error, 'V')}), "
          f"120 Hz ripple {eng(met.V_ripple_120, 'V')}")
    print(f"dc shares {np.round(met.shares_dc, 4).tolist()}, "
          f"ripple shares {np.round(met.shares_ripple, 4).tolist()}")
    return EXIT_OK


def _read_tf(path) -> TransferFunction:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from exc
    # accept both a bare {num, den} and the K_c_k.json records
    if isinstance(d, dict) and "K_c" in d:
        d = d["K_c"]
    return TransferFunction.from_dict(d)


def cmd_bode(args) -> int:
    if args.tf is None:
        raise InvalidInputError("bode needs --tf <file with num/den>")
    g = _read_tf(args.tf)
    tab = bode(g, _grid(args))
    out = _out_dir(args)
    tab.to_csv(out / "bode.csv")
    i = int(np.nanargmax(tab.mag_db)) if np.any(np.isfinite(tab.mag_db)) else 0
    print(f"{len(tab.omega)} points, peak {tab.mag_db[i]:.4g} dB at {eng(tab.omega[i], 'rad/s')}")
    return EXIT_OK


def cmd_eval_cost(args) -> int:
    sc = load_scenario(args.scenario)
    sys_ = _system(sc)
    K_v, _ = _outer_controller(sc, sys_, args)
    plant = _nominal_plant(sys_)
    grid = _grid(args)
    cost = stacked_cost(K_v, plant, sc.weights, grid)
    maps = closed_loop_maps(K_v, plant)
    w = grid.points
    st_resid = float(np.max(np.abs(tf_add(maps.S, maps.T).freqresp(w) - 1.0)))
    out = _out_dir(args, sc)
    _write_json(out / "cost.json", {"cost": cost, "stable": maps.stable, "margin": maps.margin,
                                    "S_plus_T_residual": st_resid, "K_v": K_v.to_dict()})
    print(f"stacked cost {cost!r}, stable = {maps.stable}, |S+T-1| <= {st_resid:.3g}")
    return EXIT_OK if math.isfinite(cost) else EXIT_TOLERANCE


def cmd_synthesize(args) -> int:
    sc = load_scenario(args.scenario)
    if sc.outer.kind != "synthesize":
        raise InvalidInputError("synthesize needs an 'outer.synthesize' section")
    sys_ = _system(sc)
    K_v, res = _outer_controller(sc, sys_, args)
    out = _out_dir(args, sc)
    _write_json(out / "K_v.json", {"K_v": K_v.to_dict(), "cost": res.cost,
                                   "params": res.params.tolist(), "evaluations": res.evaluations,
                                   "template": sc.outer.template, "seed": args.seed})
    print(f"{sc.outer.template} controller: cost {res.cost:.6g} after {res.evaluations} evaluations")
    return EXIT_OK


COMMANDS = {
    "design-inner": cmd_design_inner,
    "allocate": cmd_allocate,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "bode": cmd_bode,
    "eval-cost": cmd_eval_cost,
    "synthesize": cmd_synthesize,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paraconv",
                                 description="Design and simulate paralleled DC-DC converters.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--grid-min", type=float, default=1e-2, help="rad/s")
        p.add_argument("--grid-max", type=float, default=1e6, help="rad/s")
        p.add_argument("--grid-points", type=int, default=2000)
        p.add_argument("--seed", type=int, default=0)
        if name == "bode":
            p.add_argument("--tf", help="JSON file with num/den coefficients")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.command != "bode" and args.scenario is None:
        print(f"error: {args.command} needs --scenario", file=sys.stderr)
        return EXIT_INPUT
    if args.seed < 0:
        print("error: --seed must be a non-negative integer", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ParaconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
