"""Time-domain closed-loop simulation and steady-state measurement.

Controllers are realised in controllable canonical form and integrated
together with the converter states by a fixed-step RK4 kernel (compiled
when available, see :mod:`paraconv.kernels`).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import root

from . import kernels
from .converters import ConverterParams, nominal_duty
from .design import InnerLoopSpec
from .errors import DivergenceError, InsufficientWindowError, InvalidInputError
from .kernels import _rk4_py
from .multi import MultiConverterSystem, single_converter_system
from .tf import TransferFunction, tf_to_ss

MODES = {"averaged_nonlinear": 0, "averaged_linear": 1, "switched": 2}
TOPO_CODES = {"boost": 0, "buck": 1, "buckboost": 2}
LOAD_MODES = {"resistive": 0, "constant_current": 1}


@dataclass(frozen=True)
class LoadSegment:
    t_start: float
    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in LOAD_MODES:
            raise InvalidInputError(f"load mode must be one of {tuple(LOAD_MODES)}, got {self.mode!r}")
        if self.mode == "resistive" and not self.value > 0:
            raise InvalidInputError(f"load resistance must be > 0, got {self.value}")


@dataclass(frozen=True)
class Ripple:
    amplitude: float = 0.0
    frequency: float = 120.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise InvalidInputError(f"ripple frequency must be > 0, got {self.frequency}")


@dataclass(frozen=True)
class LoadProfile:
    segments: tuple
    ripple: Ripple = Ripple()

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise InvalidInputError("load profile needs at least one segment")
        if any(b.t_start < a.t_start for a, b in zip(segs, segs[1:])):
            raise InvalidInputError("load segments must be time-ordered")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def resistive(cls, R: float, ripple_amplitude: float = 0.0, ripple_frequency: float = 120.0):
        return cls((LoadSegment(0.0, "resistive", R),), Ripple(ripple_amplitude, ripple_frequency))

    def to_dict(self) -> dict:
        return {"segments": [asdict(s) for s in self.segments], "ripple": asdict(self.ripple)}

    @classmethod
    def from_dict(cls, d: dict) -> "LoadProfile":
        try:
            segs = tuple(LoadSegment(float(s["t_start"]), s["mode"], float(s["value"]))
                         for s in d["segments"])
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed load segment: {exc}") from exc
        rip = Ripple(**d.get("ripple", {}))
        return cls(segs, rip)


@dataclass(frozen=True)
class NoiseSpec:
    std: float
    seed: int = 0


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-5
    t_end: float = 1.0
    mode: str = "averaged_nonlinear"
    pwm_freq: float | None = None
    noise: NoiseSpec | None = None
    decimate: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {tuple(MODES)}, got {self.mode!r}")
        if not self.dt > 0 or not self.t_end > self.dt:
            raise InvalidInputError("need dt > 0 and t_end > dt")
        if int(self.decimate) < 1:
            raise InvalidInputError("decimate must be >= 1")
        if self.mode == "switched":
            if not self.pwm_freq or self.pwm_freq <= 0:
                raise InvalidInputError("switched mode needs pwm_freq > 0")
            if self.dt > 1.0 / (50.0 * self.pwm_freq) * (1 + 1e-9):
                raise InvalidInputError("switched mode requires dt <= 1/(50 pwm_freq)")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if d.get("noise"):
            d["noise"] = NoiseSpec(**d["noise"])
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class SimTrace:
    time: np.ndarray
    V: np.ndarray
    i_L: np.ndarray
    i_out: np.ndarray
    i_C: np.ndarray
    i_load: np.ndarray
    duty: np.ndarray
    i_ref: np.ndarray
    saturated: np.ndarray
    states: np.ndarray = field(repr=False)
    V_des: float = 0.0
    V_g: tuple = ()
    mode: str = "averaged_nonlinear"

    @property
    def m(self) -> int:
        return self.i_L.shape[1]

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0]) if self.time.size > 1 else 0.0

    def to_csv(self, path) -> None:
        m = self.m
        header = (["t", "V"] + [f"i_L_{k + 1}" for k in range(m)] + ["i_C", "i_load"]
                  + [f"d_{k + 1}" for k in range(m)] + ["i_ref"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.time.size):
                row = [self.time[i], self.V[i], *self.i_L[i], self.i_C[i], self.i_load[i],
                       *self.duty[i], self.i_ref[i]]
                w.writerow([repr(float(v)) for v in row])


def _canonical(g: TransferFunction, n: int | None = None):
    A, B, C, D = tf_to_ss(g)
    if n is not None and A.shape[0] < n:
        pad = n - A.shape[0]
        A = np.pad(A, ((0, pad), (0, pad)))
        B = np.pad(B, (0, pad))
        C = np.pad(C, (0, pad))
    return A, B, C, D


@dataclass
class _Plan:
    mode: int
    topo: np.ndarray
    L: np.ndarray
    Vg: np.ndarray
    gain: np.ndarray
    gamma: np.ndarray
    C: float
    V_des: float
    Av: np.ndarray
    Bv: np.ndarray
    Cv: np.ndarray
    Dv: float
    Ac: np.ndarray
    Bc: np.ndarray
    Cc: np.ndarray
    Dc: np.ndarray
    seg_t: np.ndarray
    seg_mode: np.ndarray
    seg_val: np.ndarray
    rip_amp: float
    rip_w: float
    rip_phase: float
    share: np.ndarray

    @property
    def m(self) -> int:
        return self.topo.size

    @property
    def nx(self) -> int:
        return self.m + 1 + self.Bv.size + self.m * self.Bc.shape[1]

    def kernel_args(self):
        return (self.mode, self.topo, self.L, self.Vg, self.gain, self.gamma, self.C, self.V_des,
                self.Av, self.Bv, self.Cv, self.Dv, self.Ac, self.Bc, self.Cc, self.Dc,
                self.seg_t, self.seg_mode, self.seg_val, self.rip_amp, self.rip_w, self.rip_phase)

    def ctx(self, ripple: bool = True):
        args = list(self.kernel_args())
        if not ripple:
            args[19] = 0.0
        return _rk4_py._Ctx(*args)


def _build_plan(mode: str, converters: Sequence[ConverterParams], gamma, share, K_v, K_c,
                load: LoadProfile, L_plant, C_plant) -> _Plan:
    m = len(converters)
    if len(K_c) != m:
        raise InvalidInputError(f"need {m} inner controllers, got {len(K_c)}")
    for g in [K_v, *K_c]:
        if not g.is_proper():
            raise InvalidInputError("controllers must be proper")
    Av, Bv, Cv, Dv = _canonical(K_v)
    nc = max(1, max(k.den.degree for k in K_c))
    Ac = np.zeros((m, nc, nc))
    Bc = np.zeros((m, nc))
    Cc = np.zeros((m, nc))
    Dc = np.zeros(m)
    for k, K in enumerate(K_c):
        A, B, C, D = _canonical(K, nc)
        Ac[k], Bc[k], Cc[k], Dc[k] = A, B, C, D
    return _Plan(
        mode=MODES[mode],
        topo=np.array([TOPO_CODES[p.topology] for p in converters], dtype=np.int_),
        L=np.asarray(L_plant, dtype=float),
        Vg=np.array([p.V_g for p in converters], dtype=float),
        gain=np.array([nominal_duty(p).gain for p in converters], dtype=float),
        gamma=np.asarray(gamma, dtype=float),
        C=float(C_plant),
        V_des=float(converters[0].V_des),
        Av=np.ascontiguousarray(Av), Bv=np.ascontiguousarray(Bv), Cv=np.ascontiguousarray(Cv),
        Dv=float(Dv), Ac=Ac, Bc=Bc, Cc=Cc, Dc=Dc,
        seg_t=np.array([s.t_start for s in load.segments], dtype=float),
        seg_mode=np.array([LOAD_MODES[s.mode] for s in load.segments], dtype=np.int_),
        seg_val=np.array([s.value for s in load.segments], dtype=float),
        rip_amp=float(load.ripple.amplitude),
        rip_w=2.0 * math.pi * float(load.ripple.frequency),
        rip_phase=float(load.ripple.phase),
        share=np.asarray(share, dtype=float),
    )


def nominal_initial_state(plan: _Plan) -> np.ndarray:
    """V = V_des, inductor currents carrying their DC share, controllers at rest."""
    x = np.zeros(plan.nx)
    ctx = plan.ctx(ripple=False)
    i0 = _rk4_py._load(ctx, 0.0, plan.V_des)
    x[: plan.m] = plan.share * i0 / plan.gain
    x[plan.m] = plan.V_des
    return x


def equilibrium_state(plan: _Plan, guess: np.ndarray | None = None) -> np.ndarray:
    """Closed-loop fixed point for the t=0 load with the ripple removed."""
    ctx = plan.ctx(ripple=False)
    mode = plan.mode
    if mode == 2:
        # the switched plant has no fixed point; use its averaged twin
        ctx.mode = 0
    q = [0.0] * plan.m

    def f(x):
        _, dx = _rk4_py.derivative(ctx, 0.0, list(x), 0.0, q)
        return np.array(dx)

    x0 = nominal_initial_state(plan) if guess is None else np.asarray(guess, dtype=float)
    # the dynamics are affine in the controller states; a finite-difference
    # Newton solve converges from the nominal guess
    sol = root(f, x0, method="hybr", options={"xtol": 1e-14, "maxfev": 20000})
    resid = np.max(np.abs(f(sol.x)) / np.maximum(1.0, np.abs(sol.x)))
    if not sol.success and resid > 1e-9:
        raise DivergenceError(f"equilibrium solve failed: {sol.message}", 0.0)
    return sol.x


def _run(plan: _Plan, cfg: SimConfig, init, backend, V_g) -> SimTrace:
    if isinstance(init, str):
        if init == "nominal":
            x0 = nominal_initial_state(plan)
        elif init == "equilibrium":
            x0 = equilibrium_state(plan)
        else:
            raise InvalidInputError(f"init must be 'nominal', 'equilibrium' or a state vector, got {init!r}")
    else:
        x0 = np.asarray(init, dtype=float)
        if x0.size != plan.nx:
            raise InvalidInputError(f"initial state needs {plan.nx} entries, got {x0.size}")
    n_steps = cfg.n_steps
    decim = int(cfg.decimate)
    spp = 1
    if cfg.mode == "switched":
        spp = int(round(1.0 / (cfg.pwm_freq * cfg.dt)))
        if abs(spp * cfg.dt * cfg.pwm_freq - 1.0) > 1e-9:
            raise InvalidInputError("PWM period must be an integer number of steps")
    if cfg.noise is not None and cfg.noise.std > 0:
        noise = np.random.default_rng(cfg.noise.seed).normal(0.0, cfg.noise.std, n_steps + 1)
    else:
        noise = np.zeros(0)
    m, nx = plan.m, plan.nx
    n_rec = n_steps // decim + 1
    rec_t = np.zeros(n_rec)
    rec_x = np.zeros((n_rec, nx))
    rec_iref = np.zeros(n_rec)
    rec_iload = np.zeros(n_rec)
    rec_duty = np.zeros((n_rec, m))
    rec_iout = np.zeros((n_rec, m))
    rec_sat = np.zeros((n_rec, m), dtype=np.int8)
    runner = kernels.get_runner(backend)
    status, last = runner(*plan.kernel_args(), noise, x0, float(cfg.dt), n_steps, decim, spp,
                          rec_t, rec_x, rec_iref, rec_iload, rec_duty, rec_iout, rec_sat)
    if status != 0:
        what = "non-finite state" if status == 1 else "degenerate duty inversion"
        t_ok = float(rec_t[last]) if last >= 0 else 0.0
        raise DivergenceError(f"simulation diverged ({what}); last valid t = {t_ok:.6g} s", t_ok)
    i_out = rec_iout
    return SimTrace(
        time=rec_t, V=rec_x[:, m].copy(), i_L=rec_x[:, :m].copy(), i_out=i_out,
        i_C=i_out.sum(axis=1) - rec_iload, i_load=rec_iload, duty=rec_duty, i_ref=rec_iref,
        saturated=rec_sat.astype(bool), states=rec_x, V_des=plan.V_des, V_g=tuple(V_g),
        mode=cfg.mode,
    )


def simulate_closed_loop(system, K_v: TransferFunction, load: LoadProfile, cfg: SimConfig, *,
                         K_c: Sequence[TransferFunction] | None = None,
                         inner_spec: InnerLoopSpec | None = None,
                         L_actual: Sequence[float] | None = None, C_actual: float | None = None,
                         init="nominal", backend: str | None = None) -> SimTrace:
    """Simulate the decentralised inner/outer loop on the averaged converter models.

    ``system`` is a :class:`MultiConverterSystem` or, together with
    ``inner_spec``, a single :class:`ConverterParams`. Inner controllers
    default to the designs for each converter's (design) inductance;
    ``L_actual``/``C_actual`` replace the simulated plant values.

    In ``averaged_linear`` mode resistive loads draw V_des/R regardless of V,
    so the load acts as an exogenous disturbance.
    """
    if isinstance(system, ConverterParams):
        if inner_spec is None:
            raise InvalidInputError("single-converter simulation needs inner_spec")
        system = single_converter_system(system, inner_spec)
    if not isinstance(system, MultiConverterSystem):
        raise InvalidInputError("system must be a MultiConverterSystem or ConverterParams")
    if cfg.mode == "switched":
        if system.m != 1:
            raise InvalidInputError("switched mode supports a single converter only")
    K_c = list(K_c) if K_c is not None else system.inner_controllers()
    L_plant = list(L_actual) if L_actual is not None else [p.L for p in system.converters]
    C_plant = C_actual if C_actual is not None else system.nominal.C
    dp = system.d_primes
    share = np.array(system.alpha) if system.alpha else (np.array(system.gamma) * dp) / np.dot(system.gamma, dp)
    plan = _build_plan(cfg.mode, system.converters, system.gamma, share, K_v, K_c, load,
                       L_plant, C_plant)
    return _run(plan, cfg, init, backend, [p.V_g for p in system.converters])


def simulate_switched(p: ConverterParams, K_v: TransferFunction, K_c: TransferFunction,
                      load: LoadProfile, cfg: SimConfig, *, init="nominal",
                      backend: str | None = None) -> SimTrace:
    """Ideal-switch PWM simulation of one converter (trailing-edge modulation).

    The duty is sampled from the controller at the start of each PWM period;
    the switch conducts for the first ``d*T`` of the period. Switching
    instants are integrated exactly by splitting the RK4 step at the edge.
    ``p`` holds the simulated plant values (L, C, V_g, V_des).
    """
    if cfg.mode != "switched":
        raise InvalidInputError("simulate_switched needs cfg.mode == 'switched'")
    plan = _build_plan("switched", [p], [1.0], [1.0], K_v, [K_c], load, [p.L], p.C)
    return _run(plan, cfg, init, backend, [p.V_g])


def averaged_twin(cfg: SimConfig) -> SimConfig:
    """The averaged-nonlinear config matching a switched one (for cross-checks)."""
    return SimConfig(dt=1e-5, t_end=cfg.t_end, mode="averaged_nonlinear", noise=cfg.noise)


@dataclass
class SteadyStateMetrics:
    V_dc: float
    regulation_error: float
    V_ripple_120: float
    i_dc: list
    i_ripple_120: list
    i_L_dc: list
    i_L_ripple_120: list
    i_C_ripple_120: float
    shares_dc: list
    shares_ripple: list
    window: tuple
    periods: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def fields(self) -> dict:
        """Flat name -> value map of every numeric field."""
        out = {}
        for k, v in self.to_dict().items():
            if k in ("window", "periods"):
                continue
            if isinstance(v, list):
                for i, x in enumerate(v):
                    out[f"{k}[{i}]"] = float(x)
            else:
                out[k] = float(v)
        return out


def single_bin_amplitude(x: np.ndarray, t: np.ndarray, freq: float) -> float:
    """Amplitude of the ``freq`` component by projection onto one DFT bin.

    Exact for a sinusoid when ``t`` spans an integer number of periods.
    """
    ph = np.exp(-2j * math.pi * freq * t)
    return float(2.0 * abs(np.dot(x, ph)) / x.size)


def _window(trace: SimTrace, f0: float, window: float | None, t_discard: float):
    h = trace.dt
    t = trace.time
    if h <= 0:
        raise InsufficientWindowError("trace too short")
    avail = t[-1] + h - max(t_discard, t[0])
    W = avail if window is None else min(window, avail)
    P = int(math.floor(W * f0 + 1e-9))
    if P < 1:
        raise InsufficientWindowError(
            f"window {W:.4g} s is shorter than one {f0:g} Hz period")
    # prefer a period count that spans a whole number of samples
    chosen = P
    for cand in range(P, max(P // 2, 1) - 1, -1):
        n = cand / (f0 * h)
        if abs(n - round(n)) < 1e-6 * n:
            chosen = cand
            break
    N = int(round(chosen / (f0 * h)))
    if N > t.size:
        raise InsufficientWindowError("window longer than the trace")
    sl = slice(t.size - N, t.size)
    if t[sl.start] < t_discard - 1e-12:
        raise InsufficientWindowError("window starts before the transient-discard time")
    return sl, chosen


def _shares(v: np.ndarray) -> list:
    s = v.sum()
    return (v / s).tolist() if s != 0 else [math.nan] * v.size


def steady_state_metrics(trace: SimTrace, f0: float = 120.0, window: float | None = None,
                         t_discard: float = 0.5) -> SteadyStateMetrics:
    """DC values and ``f0`` amplitudes over the last integer-period window.

    The window ends at the last sample, starts no earlier than
    ``t_discard`` and is rounded down to a whole number of ``f0`` periods.
    Current shares use the per-converter currents into the DC link.
    """
    sl, P = _window(trace, f0, window, t_discard)
    t = trace.time[sl]
    amp = lambda x: single_bin_amplitude(x, t, f0)
    m = trace.m
    i_dc = np.array([trace.i_out[sl, k].mean() for k in range(m)])
    i_rip = np.array([amp(trace.i_out[sl, k]) for k in range(m)])
    V_dc = float(trace.V[sl].mean())
    return SteadyStateMetrics(
        V_dc=V_dc,
        regulation_error=trace.V_des - V_dc,
        V_ripple_120=amp(trace.V[sl]),
        i_dc=i_dc.tolist(),
        i_ripple_120=i_rip.tolist(),
        i_L_dc=[float(trace.i_L[sl, k].mean()) for k in range(m)],
        i_L_ripple_120=[amp(trace.i_L[sl, k]) for k in range(m)],
        i_C_ripple_120=amp(trace.i_C[sl]),
        shares_dc=_shares(i_dc),
        shares_ripple=_shares(i_rip),
        window=(float(t[0]), float(t[-1])),
        periods=P,
    )


def charge_balance(trace: SimTrace, f0: float = 120.0, t_discard: float = 0.5) -> float:
    """Mean capacitor current over the integer-period steady-state window."""
    sl, _ = _window(trace, f0, None, t_discard)
    return float(trace.i_C[sl].mean())
