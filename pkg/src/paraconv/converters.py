"""Averaged boost, buck and buck-boost converter models.

Sign convention: ``i_load`` is positive out of the DC link.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import math

from .errors import DegenerateStateError, InvalidInputError, InvalidOperatingPointError
from .tf import TransferFunction

TOPOLOGIES = ("boost", "buck", "buckboost")
DEGENERATE_VOLTS = 1e-6


@dataclass(frozen=True)
class ConverterParams:
    topology: str
    L: float
    C: float
    V_g: float
    V_des: float

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise InvalidInputError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        for name in ("L", "C", "V_g", "V_des"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be a finite positive number, got {v!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConverterParams":
        try:
            return cls(d["topology"], float(d["L"]), float(d["C"]), float(d["V_g"]), float(d["V_des"]))
        except KeyError as exc:
            raise InvalidInputError(f"converter record missing field {exc}") from exc


@dataclass(frozen=True)
class AveragedState:
    i_L: float
    V: float


class DutyPoint(NamedTuple):
    D: float
    D_prime: float
    gain: float


def nominal_duty(p: ConverterParams) -> DutyPoint:
    """Nominal duty, complementary duty and the i_L -> capacitor gain.

    The buck-boost gain is ``-D'`` with ``D = V_des / (V_des - V_g)``,
    used as-is in the linearised capacitor equation.
    """
    if p.topology == "boost":
        if not p.V_des > p.V_g:
            raise InvalidOperatingPointError("boost requires V_des > V_g")
        dp = p.V_g / p.V_des
        return DutyPoint(1.0 - dp, dp, dp)
    if p.topology == "buck":
        if not p.V_des < p.V_g:
            raise InvalidOperatingPointError("buck requires V_des < V_g")
        d = p.V_des / p.V_g
        return DutyPoint(d, 1.0 - d, 1.0)
    if p.V_des == p.V_g:
        raise InvalidOperatingPointError("buck-boost requires V_des != V_g")
    d = p.V_des / (p.V_des - p.V_g)
    return DutyPoint(d, 1.0 - d, -(1.0 - d))


def plant_tfs(p: ConverterParams):
    """``(G_c, G_v, gain)`` with G_c = 1/(sL), G_v = 1/(sC)."""
    gain = nominal_duty(p).gain
    return TransferFunction([1.0], [p.L, 0.0]), TransferFunction([1.0], [p.C, 0.0]), gain


def averaged_dynamics(x: AveragedState, d: float, i_load: float, p: ConverterParams):
    """Switch-cycle averaged derivatives ``(di_L/dt, dV/dt)``."""
    if not 0.0 <= d <= 1.0:
        raise InvalidInputError(f"duty must lie in [0, 1], got {d}")
    if p.topology == "boost":
        di = (-(1.0 - d) * x.V + p.V_g) / p.L
        dv = ((1.0 - d) * x.i_L - i_load) / p.C
    elif p.topology == "buck":
        di = (-x.V + d * p.V_g) / p.L
        dv = (x.i_L - i_load) / p.C
    else:
        gain = nominal_duty(p).gain
        di = (x.V + d * (p.V_g - x.V)) / p.L
        dv = (gain * x.i_L - i_load) / p.C
    return di, dv


def control_from_duty(d: float, x: AveragedState, p: ConverterParams) -> float:
    """The topology's control variable u-tilde produced by duty ``d``."""
    if p.topology == "boost":
        return p.V_g - (1.0 - d) * x.V
    if p.topology == "buck":
        return -x.V + d * p.V_g
    return x.V + d * (p.V_g - x.V)


def duty_from_control(u_tilde: float, x: AveragedState, p: ConverterParams):
    """Invert u-tilde to a duty cycle; returns ``(d, saturated)`` with d in [0, 1]."""
    if p.topology == "boost":
        den, top = x.V, x.V - p.V_g + u_tilde
    elif p.topology == "buck":
        den, top = p.V_g, u_tilde + x.V
    else:
        den, top = p.V_g - x.V, u_tilde - x.V
    if abs(den) < DEGENERATE_VOLTS:
        raise DegenerateStateError(f"duty inversion divides by {den!r} V")
    d = top / den
    if d < 0.0:
        return 0.0, True
    if d > 1.0:
        return 1.0, True
    return d, False
