"""Inner notch controller, outer-loop maps and the stacked weighted cost."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .converters import ConverterParams, plant_tfs
from .errors import InvalidInputError, SingularLoopError, SynthesisFailedError
from .tf import (
    DEFAULT_GRID,
    FrequencyGrid,
    Polynomial,
    TransferFunction,
    coeff_deviation,
    is_stable,
    peak_over_grid,
    poly_roots,
    tf_feedback,
    tf_minreal,
)

OMEGA_120HZ = 2.0 * math.pi * 120.0
UNSTABLE_PENALTY = 1e9


@dataclass(frozen=True)
class InnerLoopSpec:
    zeta1: float
    zeta2: float
    omega_tilde: float
    omega0: float = OMEGA_120HZ

    def __post_init__(self):
        for name in ("zeta1", "zeta2", "omega_tilde", "omega0"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be finite and > 0, got {v!r}")

    def with_zeta1(self, zeta1: float) -> "InnerLoopSpec":
        return InnerLoopSpec(zeta1, self.zeta2, self.omega_tilde, self.omega0)

    def notch_numerator(self) -> Polynomial:
        return Polynomial([1.0, 2.0 * self.zeta1 * self.omega0, self.omega0**2])

    def notch_denominator(self) -> Polynomial:
        return Polynomial([1.0, 2.0 * self.zeta2 * self.omega0, self.omega0**2])


CASE_INNER_SPEC = InnerLoopSpec(3.2, 4.5, 2.0 * math.pi * 300.0)


@dataclass(frozen=True)
class WeightSpec:
    Ws: TransferFunction
    Wu: TransferFunction
    Wt: TransferFunction

    def __post_init__(self):
        for name in ("Ws", "Wu", "Wt"):
            w = getattr(self, name)
            if not w.is_proper() or not is_stable(w).stable:
                raise InvalidInputError(f"weight {name} must be proper and stable")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).to_dict() for k in ("Ws", "Wu", "Wt")}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSpec":
        return cls(*(TransferFunction.from_dict(d[k]) for k in ("Ws", "Wu", "Wt")))


def reference_weights() -> WeightSpec:
    """Case-study weights; the W_s pole "0.06 pi 50" is read as 0.06*pi*50 rad/s."""
    return WeightSpec(
        Ws=TransferFunction([0.5, 2 * math.pi * 50], [1.0, 0.06 * math.pi * 50]),
        Wu=TransferFunction([0.9], [1.0]),
        Wt=TransferFunction([1.0, 2 * math.pi * 40], [0.05, 2 * math.pi * 80]),
    )


@dataclass(frozen=True)
class OuterPlant:
    G_tilde_c: TransferFunction
    D_prime: float
    G_v: TransferFunction

    def forward(self) -> TransferFunction:
        """``G_v * D' * G_tilde_c``: the loop seen by the outer controller."""
        return self.G_v * self.D_prime * self.G_tilde_c


def target_inner_cl(spec: InnerLoopSpec) -> TransferFunction:
    """Third-order inner closed loop: low-pass times 120 Hz notch, unit DC gain."""
    lp = Polynomial([1.0, spec.omega_tilde])
    return TransferFunction(spec.omega_tilde * spec.notch_numerator(), lp * spec.notch_denominator())


def design_inner(spec: InnerLoopSpec, L: float) -> TransferFunction:
    """Second-order current controller whose loop with 1/(sL) is ``target_inner_cl``."""
    if not L > 0:
        raise InvalidInputError(f"L must be > 0, got {L}")
    w0, wt = spec.omega0, spec.omega_tilde
    den = [1.0, 2.0 * spec.zeta2 * w0, 2.0 * (spec.zeta2 - spec.zeta1) * w0 * wt + w0**2]
    return TransferFunction(L * wt * spec.notch_numerator(), den)


class InnerCheck(NamedTuple):
    residual: float
    stable: bool


def inner_closed_loop(K_c: TransferFunction, L: float) -> TransferFunction:
    return tf_minreal(tf_feedback(K_c * TransferFunction([1.0], [L, 0.0]), 1.0))


def verify_inner(K_c: TransferFunction, L: float, spec: InnerLoopSpec) -> InnerCheck:
    """Max relative coefficient deviation of the realised inner loop from the target."""
    cl = inner_closed_loop(K_c, L)
    target = target_inner_cl(spec)
    if spec.zeta1 == spec.zeta2:
        target = tf_minreal(target)
    if cl.den.degree != target.den.degree or cl.num.degree != target.num.degree:
        residual = math.inf
    else:
        residual = max(coeff_deviation(cl.num, target.num), coeff_deviation(cl.den, target.den))
    return InnerCheck(residual, is_stable(cl).stable)


@dataclass(frozen=True)
class ClosedLoopMaps:
    S: TransferFunction
    T: TransferFunction
    KvS: TransferFunction
    GvS: TransferFunction
    GcKvS: TransferFunction
    iL_from_d: TransferFunction
    stable: bool
    margin: float


def _char_poly(K_v: TransferFunction, plant: OuterPlant):
    fwd = plant.forward()
    return fwd, fwd.den * K_v.den + fwd.num * K_v.num


def closed_loop_maps(K_v: TransferFunction, plant: OuterPlant) -> ClosedLoopMaps:
    """Sensitivity maps of the outer loop, each pole/zero-cancelled."""
    fwd, char = _char_poly(K_v, plant)
    if char.is_zero():
        raise SingularLoopError("1 + G_v D' G_c K_v is identically zero")
    ol_den = fwd.den * K_v.den
    S = tf_minreal(TransferFunction(ol_den, char))
    T = tf_minreal(TransferFunction(fwd.num * K_v.num, char))
    KvS = tf_minreal(TransferFunction(K_v.num * fwd.den, char))
    GvS = tf_minreal(plant.G_v * S)
    GcKvS = tf_minreal(plant.G_tilde_c * KvS)
    iL = tf_minreal(T * (1.0 / plant.D_prime))
    st = is_stable(TransferFunction([1.0], char))
    return ClosedLoopMaps(S, T, KvS, GvS, GcKvS, iL, st.stable, st.margin)


def closed_loop_stability(K_v: TransferFunction, plant: OuterPlant):
    _, char = _char_poly(K_v, plant)
    return is_stable(TransferFunction([1.0], char))


def _maps_stable(K_v: TransferFunction, plant: OuterPlant) -> bool:
    fwd, char = _char_poly(K_v, plant)
    if char.is_zero():
        return False
    if is_stable(TransferFunction([1.0], char)).stable:
        return True
    maps = (fwd.den * K_v.den, fwd.num * K_v.num, K_v.num * fwd.den)
    return all(is_stable(tf_minreal(TransferFunction(n, char))).stable for n in maps)


def stacked_cost(K_v: TransferFunction, plant: OuterPlant, w: WeightSpec,
                 grid: FrequencyGrid | None = None) -> float:
    """Peak over frequency of sqrt(|W_s S|^2 + |W_u K_v S|^2 + |W_t T|^2).

    Returns ``inf`` when the weighted maps are unstable. Stability is
    judged on the pole/zero-cancelled S, T and K_v S, so ``K_v = 0`` (where
    the plant integrator never enters a loop) gives S = 1 and a finite cost.
    """
    if not _maps_stable(K_v, plant):
        return math.inf
    fwd = plant.forward()

    def mag(omega):
        s = 1j * np.asarray(omega)
        kv = K_v.num(s) / K_v.den(s)
        loop = fwd.num(s) / fwd.den(s) * kv
        S = 1.0 / (1.0 + loop)
        T = loop * S
        ws = w.Ws.num(s) / w.Ws.den(s)
        wu = w.Wu.num(s) / w.Wu.den(s)
        wt = w.Wt.num(s) / w.Wt.den(s)
        return np.sqrt(np.abs(ws * S) ** 2 + np.abs(wu * kv * S) ** 2 + np.abs(wt * T) ** 2)

    return peak_over_grid(mag, grid or DEFAULT_GRID)


def reference_Kv() -> TransferFunction:
    """The reduced fifth-order outer controller from the case study."""
    return TransferFunction.from_factors(
        0.256,
        num_factors=([1.0, 113.9], [1.0, 0.001], [1.0, 0.001], [1.0, 4.05e4, 5.65e8]),
        den_factors=([1.0, 9.56], [1.0, 0.002, 4.8e-6], [1.0, 9606.0, 8.8e7]),
    )


def nominal_outer_plant(p: ConverterParams, spec: InnerLoopSpec) -> OuterPlant:
    _, G_v, gain = plant_tfs(p)
    return OuterPlant(target_inner_cl(spec), gain, G_v)


def mismatched_outer_plant(design: ConverterParams, spec: InnerLoopSpec, L_actual: float,
                           C_actual: float) -> OuterPlant:
    """Outer-loop plant when K_c designed for ``design.L`` runs on different L and C."""
    K_c = design_inner(spec, design.L)
    actual = ConverterParams(design.topology, L_actual, C_actual, design.V_g, design.V_des)
    _, G_v, gain = plant_tfs(actual)
    return OuterPlant(inner_closed_loop(K_c, L_actual), gain, G_v)


CASE_CONVERTER = ConverterParams("boost", 2.4e-3, 400e-6, 12.0, 24.0)


# --- fixed-structure outer synthesis ---------------------------------------

Template = Callable[[np.ndarray], TransferFunction]


def gain_template(params: np.ndarray) -> TransferFunction:
    return TransferFunction([params[0]], [1.0])


def pi_template(params: np.ndarray) -> TransferFunction:
    """k_p + k_i / s."""
    return TransferFunction([params[0], params[1]], [1.0, 0.0])


def lead_lag_template(params: np.ndarray) -> TransferFunction:
    """k (s + z) / (s + p), poles/zeros parameterised in absolute value."""
    k, z, p = params
    return TransferFunction([k, k * abs(z)], [1.0, abs(p)])


@dataclass(frozen=True)
class SynthesisResult:
    K_v: TransferFunction
    cost: float
    params: np.ndarray
    evaluations: int


def synthesize_outer_fixed_structure(plant: OuterPlant, w: WeightSpec, structure: Template,
                                     init: Sequence[float], grid: FrequencyGrid | None = None,
                                     seed: int = 0, max_evals: int = 2000) -> SynthesisResult:
    """Nelder-Mead search over a parameterised controller template.

    Destabilising parameters cost ``1e9 + violation`` where violation is how
    far the rightmost closed-loop pole sits past the stability threshold.
    One restart is made from a seeded 10 % perturbation of the best point.
    """
    x0 = np.asarray(init, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("initial parameters must be finite")
    grid = grid or DEFAULT_GRID
    count = [0]

    def objective(x):
        count[0] += 1
        try:
            K = structure(np.asarray(x))
        except (ValueError, ZeroDivisionError):
            return 2 * UNSTABLE_PENALTY
        if not K.is_proper():
            return 2 * UNSTABLE_PENALTY
        _, char = _char_poly(K, plant)
        if char.is_zero() or char.degree == 0:
            return 2 * UNSTABLE_PENALTY
        r = poly_roots(char)
        eps = 1e-9 * float(np.max(np.abs(r)))
        worst = float(np.max(r.real))
        if worst >= -eps:
            return UNSTABLE_PENALTY + (worst + eps)
        return stacked_cost(K, plant, w, grid)

    opts = {"maxfev": max_evals, "xatol": 1e-10, "fatol": 1e-12}
    res = minimize(objective, x0, method="Nelder-Mead", options=opts)
    best_x, best_f = np.array(res.x), float(res.fun)
    rng = np.random.default_rng(seed)
    x1 = best_x * (1.0 + 0.1 * rng.standard_normal(best_x.size))
    res2 = minimize(objective, x1, method="Nelder-Mead", options=opts)
    if float(res2.fun) < best_f:
        best_x, best_f = np.array(res2.x), float(res2.fun)
    if best_f >= UNSTABLE_PENALTY:
        raise SynthesisFailedError("no stabilizing controller found", best_x,
                                   best_f - UNSTABLE_PENALTY)
    return SynthesisResult(structure(best_x), best_f, best_x, count[0])
