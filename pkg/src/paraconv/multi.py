"""Parallel-converter allocation and equivalence checks.

Every converter shares one outer controller K_v. Converter k scales the
common current reference by gamma_k and shapes its inner loop with its own
notch damping zeta1_k over a common denominator. The allocation below makes
the weighted sum of the inner loops equal the nominal single-converter loop,
which is what lets a single-converter design carry over unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .converters import ConverterParams, nominal_duty
from .design import InnerLoopSpec, design_inner, target_inner_cl
from .errors import InfeasibleAllocationError, InvalidInputError, InvariantViolationError
from .tf import (
    DEFAULT_GRID,
    FrequencyGrid,
    TransferFunction,
    coeff_deviation,
    is_stable,
    tf_add,
    tf_feedback,
)

IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class SharingSpec:
    alpha: tuple
    beta: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.alpha)
        b = tuple(float(v) for v in self.beta)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if len(a) == 0 or len(a) != len(b):
            raise InvalidInputError("alpha and beta must be non-empty and of equal length")
        for name, v in (("alpha", a), ("beta", b)):
            if any(not math.isfinite(x) or x < 0 for x in v):
                raise InvalidInputError(f"{name} entries must be finite and >= 0")
            if abs(sum(v) - 1.0) > 1e-9:
                raise InvalidInputError(f"{name} must sum to 1, got {sum(v)!r}")
        for k, (ak, bk) in enumerate(zip(a, b)):
            if ak == 0.0:
                raise InfeasibleAllocationError(
                    f"alpha[{k}] = 0 cannot carry ripple share beta[{k}] = {bk}"
                    if bk > 0 else f"alpha[{k}] = 0: converter carries no current")
            if bk == 0.0:
                raise InvalidInputError(f"beta[{k}] must be > 0 (zeta1 would vanish)")

    @property
    def m(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class NominalDesign:
    D_prime: float
    zeta1: float
    zeta2: float
    omega_tilde: float
    omega0: float
    L: float
    C: float

    @property
    def spec(self) -> InnerLoopSpec:
        return InnerLoopSpec(self.zeta1, self.zeta2, self.omega_tilde, self.omega0)


@dataclass(frozen=True)
class MultiConverterSystem:
    converters: tuple
    gamma: tuple
    zeta1: tuple
    nominal: NominalDesign
    alpha: tuple = field(default=())
    beta: tuple = field(default=())

    @property
    def m(self) -> int:
        return len(self.converters)

    @property
    def d_primes(self) -> np.ndarray:
        return np.array([nominal_duty(p).gain for p in self.converters])

    @property
    def V_des(self) -> float:
        return self.converters[0].V_des

    def inner_spec(self, k: int) -> InnerLoopSpec:
        n = self.nominal
        return InnerLoopSpec(self.zeta1[k], n.zeta2, n.omega_tilde, n.omega0)

    def inner_targets(self) -> list:
        return [target_inner_cl(self.inner_spec(k)) for k in range(self.m)]

    def inner_controllers(self) -> list:
        return [design_inner(self.inner_spec(k), p.L) for k, p in enumerate(self.converters)]

    def with_gamma(self, gamma: Sequence[float]) -> "MultiConverterSystem":
        """Copy with replaced gains; invariants are *not* re-checked."""
        return MultiConverterSystem(self.converters, tuple(float(g) for g in gamma),
                                    self.zeta1, self.nominal, self.alpha, self.beta)

    def permuted(self, order: Sequence[int]) -> "MultiConverterSystem":
        pick = lambda seq: tuple(seq[i] for i in order) if seq else seq
        return MultiConverterSystem(pick(self.converters), pick(self.gamma), pick(self.zeta1),
                                    self.nominal, pick(self.alpha), pick(self.beta))

    def check_invariants(self) -> None:
        """Raise InvariantViolationError unless all allocation identities hold."""
        g = np.array(self.gamma)
        if np.any(g <= 0) or abs(g.sum() - 1.0) > IDENTITY_TOL:
            raise InvariantViolationError(f"gamma must be positive and sum to 1, got {self.gamma}")
        if self.alpha:
            z = float(np.dot(self.alpha, self.zeta1))
            if abs(z - self.nominal.zeta1) > IDENTITY_TOL * self.nominal.zeta1:
                raise InvariantViolationError(
                    f"sum alpha_k zeta1_k = {z!r} differs from zeta1_n = {self.nominal.zeta1!r}")
        den = self.inner_targets()[0].den
        for k, t in enumerate(self.inner_targets()):
            if coeff_deviation(t.den, den) > IDENTITY_TOL:
                raise InvariantViolationError(f"inner loop {k} does not share the common denominator")
        aggregate_inner(self)

    def to_dict(self) -> dict:
        n = self.nominal
        return {
            "D_prime_n": n.D_prime, "zeta1_n": n.zeta1, "zeta2_n": n.zeta2,
            "omega_tilde": n.omega_tilde, "omega0": n.omega0, "L_n": n.L, "C": n.C,
            "gamma": list(self.gamma), "zeta1": list(self.zeta1),
            "alpha": list(self.alpha), "beta": list(self.beta),
            "D_prime": self.d_primes.tolist(),
        }


def allocate(sharing: SharingSpec, converters: Sequence[ConverterParams],
             inner_base: InnerLoopSpec, C: float | None = None) -> MultiConverterSystem:
    """Pick gamma_k, zeta1_k and the nominal D'_n for the requested shares.

    ``inner_base.zeta1`` is the nominal notch damping zeta1_n. D'_n is the
    harmonic mean (alpha-weighted) of the converters' D'_k: the only value
    for which both sum(gamma_k) = 1 and gamma_k = alpha_k D'_n / D'_k hold.
    ``C`` is the DC-link capacitance; it defaults to the first converter's C.
    """
    converters = tuple(converters)
    if len(converters) != sharing.m:
        raise InvalidInputError(f"{len(converters)} converters but {sharing.m} sharing entries")
    if len({p.V_des for p in converters}) != 1:
        raise InvalidInputError("all converters must regulate the same V_des")
    dp = np.array([nominal_duty(p).gain for p in converters])
    alpha = np.array(sharing.alpha)
    beta = np.array(sharing.beta)
    dp_n = 1.0 / float(np.sum(alpha / dp))
    gamma = alpha * dp_n / dp
    zeta1 = beta * inner_base.zeta1 / alpha
    L_n = 1.0 / float(np.sum(gamma / np.array([p.L for p in converters])))
    nominal = NominalDesign(dp_n, inner_base.zeta1, inner_base.zeta2, inner_base.omega_tilde,
                            inner_base.omega0, L_n, converters[0].C if C is None else float(C))
    sys = MultiConverterSystem(converters, tuple(gamma.tolist()), tuple(zeta1.tolist()), nominal,
                               tuple(alpha.tolist()), tuple(beta.tolist()))
    sys.check_invariants()
    return sys


def single_converter_system(p: ConverterParams, spec: InnerLoopSpec) -> MultiConverterSystem:
    return allocate(SharingSpec((1.0,), (1.0,)), [p], spec)


def aggregate_inner(sys: MultiConverterSystem) -> TransferFunction:
    """Sum of gamma_k D'_k G_ck over the common denominator.

    Raises InvariantViolationError unless it equals D'_n times the nominal
    inner loop to 1e-9 relative on every coefficient.
    """
    targets = sys.inner_targets()
    den = targets[0].den
    for k, t in enumerate(targets):
        if coeff_deviation(t.den, den) > IDENTITY_TOL:
            raise InvariantViolationError(f"inner loop {k} has a different denominator")
    num = None
    for g, dp, t in zip(sys.gamma, sys.d_primes, targets):
        term = t.num * (g * dp)
        num = term if num is None else num + term
    total = TransferFunction(num, den)
    want = target_inner_cl(sys.nominal.spec) * sys.nominal.D_prime
    dev = max(coeff_deviation(total.num, want.num), coeff_deviation(total.den, want.den))
    if total.num.degree != want.num.degree or dev > IDENTITY_TOL:
        raise InvariantViolationError(
            f"sum gamma_k D'_k G_ck deviates from D'_n G_cn by {dev:.3g}")
    return total


def _realised_inner(sys: MultiConverterSystem, K_c: Sequence[TransferFunction] | None):
    """Per converter (i_L / ref, u_tilde / ref) built from the actual controllers."""
    K_c = list(K_c) if K_c is not None else sys.inner_controllers()
    out = []
    for p, K in zip(sys.converters, K_c):
        Gc = TransferFunction([1.0], [p.L, 0.0])
        out.append((tf_feedback(K * Gc, 1.0), tf_feedback(K, Gc)))
    return out


def predicted_shares(sys: MultiConverterSystem, K_c: Sequence[TransferFunction] | None = None):
    """DC and 120 Hz current shares implied by the realised inner loops.

    Share k is |gamma_k D'_k H_k(jw)| normalised over converters, with H_k
    the closed inner loop of K_c[k] around 1/(s L_k).
    """
    loops = _realised_inner(sys, K_c)
    dp = sys.d_primes
    dc = np.array([abs(g * d * H.dc_gain()) for g, d, (H, _) in zip(sys.gamma, dp, loops)])
    w0 = sys.nominal.omega0
    rip = np.array([abs(g * d * H(1j * w0)) for g, d, (H, _) in zip(sys.gamma, dp, loops)])
    return dc / dc.sum(), rip / rip.sum()


@dataclass
class EquivalenceReport:
    max_deviation: float
    map_deviation: dict
    control_deviation: float
    stable_single: bool
    stable_multi: bool
    margin_single: float
    margin_multi: float
    omega: np.ndarray = field(repr=False)
    pointwise: dict = field(repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["map", "omega", "deviation"])
            for name, dev in self.pointwise.items():
                for om, d in zip(self.omega, dev):
                    w.writerow([name, repr(float(om)), repr(float(d))])

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "map_deviation": self.map_deviation,
            "control_deviation": self.control_deviation,
            "stable_single": self.stable_single,
            "stable_multi": self.stable_multi,
            "margin_single": self.margin_single,
            "margin_multi": self.margin_multi,
        }


def _regulated_maps(P: TransferFunction, U: TransferFunction, K_v: TransferFunction,
                    G_v: TransferFunction) -> dict:
    """Closed-loop maps for a loop with current path P and control path U.

    ``P`` maps the error signal (V_des - V - n) through K_v's input to the
    DC-link current, ``U`` to the weighted control sum.
    """
    loop = G_v * P * K_v
    S = tf_feedback(1.0, loop)
    T = tf_feedback(loop, 1.0)
    GvS = G_v * S
    UK = U * K_v
    return {
        "e/Vdes": S, "e/d": GvS, "e/n": T,
        "V/Vdes": T, "V/d": -GvS, "V/n": -T,
        "u/Vdes": UK * S, "u/d": UK * GvS, "u/n": -(UK * S),
    }


def verify_equivalence(sys: MultiConverterSystem, K_v: TransferFunction, C: float | None = None,
                       grid: FrequencyGrid | None = None,
                       K_c: Sequence[TransferFunction] | None = None) -> EquivalenceReport:
    """Compare the regulated maps of the multi-converter loop with its nominal twin.

    Both systems are assembled as rational functions. The multi side uses
    the realised inner loops of every K_c[k] around 1/(s L_k); the single
    side uses a design_inner controller built for L_n around 1/(s L_n).
    Deviations are absolute frequency-response differences over the grid.
    """
    grid = grid or DEFAULT_GRID
    C = sys.nominal.C if C is None else C
    G_v = TransferFunction([1.0], [C, 0.0])
    n = sys.nominal

    K_n = design_inner(n.spec, n.L)
    Gc_n = TransferFunction([1.0], [n.L, 0.0])
    H_n = tf_feedback(K_n * Gc_n, 1.0)
    U_n = tf_feedback(K_n, Gc_n)
    single = _regulated_maps(H_n * n.D_prime, U_n * (n.D_prime / n.L), K_v, G_v)

    P_m = None
    U_m = None
    for p, g, dp, (H, U) in zip(sys.converters, sys.gamma, sys.d_primes, _realised_inner(sys, K_c)):
        P_m = H * (g * dp) if P_m is None else tf_add(P_m, H * (g * dp))
        uk = U * (g * dp / p.L)
        U_m = uk if U_m is None else tf_add(U_m, uk)
    multi = _regulated_maps(P_m, U_m, K_v, G_v)

    w = grid.points
    pointwise = {k: np.abs(multi[k].freqresp(w) - single[k].freqresp(w)) for k in single}
    map_dev = {k: float(np.max(v)) for k, v in pointwise.items()}
    ctrl = max(map_dev[k] for k in ("u/Vdes", "u/d", "u/n"))
    reg = max(v for k, v in map_dev.items() if not k.startswith("u/"))

    st_s = is_stable(single["e/Vdes"])
    st_m = is_stable(multi["e/Vdes"])
    return EquivalenceReport(reg, map_dev, ctrl, st_s.stable, st_m.stable, st_s.margin, st_m.margin,
                             w.copy(), pointwise)
