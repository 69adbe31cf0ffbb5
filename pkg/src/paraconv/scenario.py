"""JSON scenario files binding converters, controllers, load and simulation settings.

All quantities are SI. A scenario looks like::

    {
      "converters": [{"topology": "boost", "L": 2.4e-3, "C": 4e-4, "V_g": 12, "V_des": 24}],
      "inner_base": {"zeta1": 3.2, "zeta2": 4.5, "omega_tilde": 1884.96},
      "sharing": {"alpha": [1.0], "beta": [1.0]},
      "outer": {"preset": "reference-kv"},
      "plant": {"L": [2e-3], "C": 5e-4},
      "load": {"segments": [{"t_start": 0, "mode": "resistive", "value": 24}],
               "ripple": {"amplitude": 0.2, "frequency": 120}},
      "sim": {"dt": 1e-5, "t_end": 1.0, "mode": "averaged_nonlinear"},
      "metrics": {"f0": 120, "t_discard": 0.5},
      "outputs": "out"
    }

``outer`` is one of ``{"preset": "reference-kv"}``, ``{"tf": {"num": [...], "den": [...]}}``
or ``{"synthesize": {"template": "pi", "init": [...], "weights": "default" | {...}}}``.
Optional sections: ``plant`` (simulated L per converter and C, defaults to
the design values), ``verify`` (``gamma_scale`` per converter, for
negative-control runs) and ``C`` (DC-link capacitance for allocation).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .converters import ConverterParams
from .design import (
    OMEGA_120HZ,
    InnerLoopSpec,
    WeightSpec,
    gain_template,
    lead_lag_template,
    reference_Kv,
    reference_weights,
    pi_template,
)
from .errors import InvalidInputError
from .multi import SharingSpec
from .sim import LoadProfile, SimConfig
from .tf import TransferFunction

TEMPLATES = {"gain": gain_template, "pi": pi_template, "lead_lag": lead_lag_template}


@dataclass(frozen=True)
class OuterSpec:
    kind: str
    K_v: TransferFunction | None = None
    template: str | None = None
    init: tuple = ()
    weights: WeightSpec | None = None
    max_evals: int = 2000


@dataclass(frozen=True)
class Scenario:
    converters: tuple
    inner_base: InnerLoopSpec
    sharing: SharingSpec
    outer: OuterSpec
    load: LoadProfile | None = None
    sim: SimConfig | None = None
    plant_L: tuple | None = None
    plant_C: float | None = None
    C_link: float | None = None
    gamma_scale: tuple | None = None
    f0: float = 120.0
    t_discard: float = 0.5
    init: str = "nominal"
    weights: WeightSpec = field(default_factory=reference_weights)
    outputs: str | None = None

    @property
    def m(self) -> int:
        return len(self.converters)


def _section(d: dict, key: str, required: bool = True):
    if key not in d:
        if required:
            raise InvalidInputError(f"scenario is missing the '{key}' section")
        return None
    return d[key]


def _weights(w) -> WeightSpec:
    if w is None or w == "default":
        return reference_weights()
    if isinstance(w, dict):
        return WeightSpec.from_dict(w)
    raise InvalidInputError("weights must be 'default' or an object with Ws, Wu, Wt")


def _outer(d: dict, default_weights: WeightSpec) -> OuterSpec:
    if not isinstance(d, dict):
        raise InvalidInputError("'outer' must be an object")
    if d.get("preset") is not None:
        if d["preset"] != "reference-kv":
            raise InvalidInputError(f"unknown outer preset {d['preset']!r}")
        return OuterSpec("preset", reference_Kv())
    if "tf" in d:
        return OuterSpec("tf", TransferFunction.from_dict(d["tf"]))
    if "synthesize" in d:
        s = d["synthesize"]
        name = s.get("template", "pi")
        if name not in TEMPLATES:
            raise InvalidInputError(f"outer.synthesize.template must be one of {tuple(TEMPLATES)}")
        if "init" not in s:
            raise InvalidInputError("outer.synthesize needs 'init' parameters")
        w = _weights(s["weights"]) if "weights" in s else default_weights
        return OuterSpec("synthesize", None, name, tuple(float(v) for v in s["init"]), w,
                         int(s.get("max_evals", 2000)))
    raise InvalidInputError("'outer' needs one of 'preset', 'tf' or 'synthesize'")


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise InvalidInputError("scenario must be a JSON object")
    convs = _section(d, "converters")
    if not isinstance(convs, list) or not convs:
        raise InvalidInputError("'converters' must be a non-empty list")
    converters = tuple(ConverterParams.from_dict(c) for c in convs)
    ib = _section(d, "inner_base")
    try:
        inner = InnerLoopSpec(float(ib["zeta1"]), float(ib["zeta2"]), float(ib["omega_tilde"]),
                              float(ib.get("omega0", OMEGA_120HZ)))
    except KeyError as exc:
        raise InvalidInputError(f"inner_base is missing {exc}") from exc
    sh = _section(d, "sharing", required=False)
    if sh is None:
        if len(converters) != 1:
            raise InvalidInputError("'sharing' is required for more than one converter")
        sh = {"alpha": [1.0], "beta": [1.0]}
    sharing = SharingSpec(tuple(sh["alpha"]), tuple(sh["beta"]))
    weights = _weights(d.get("weights"))
    outer = _outer(d.get("outer", {"preset": "reference-kv"}), weights)
    load = LoadProfile.from_dict(d["load"]) if "load" in d else None
    sim = SimConfig.from_dict(d["sim"]) if "sim" in d else None
    plant = d.get("plant") or {}
    plant_L = tuple(float(v) for v in plant["L"]) if "L" in plant else None
    if plant_L is not None and len(plant_L) != len(converters):
        raise InvalidInputError("plant.L needs one inductance per converter")
    ver = d.get("verify") or {}
    gs = tuple(float(v) for v in ver["gamma_scale"]) if "gamma_scale" in ver else None
    if gs is not None and len(gs) != len(converters):
        raise InvalidInputError("verify.gamma_scale needs one factor per converter")
    met = d.get("metrics") or {}
    init = d.get("init", "nominal")
    if init not in ("nominal", "equilibrium"):
        raise InvalidInputError("init must be 'nominal' or 'equilibrium'")
    f0 = float(met.get("f0", 120.0))
    if not (math.isfinite(f0) and f0 > 0):
        raise InvalidInputError("metrics.f0 must be > 0")
    return Scenario(
        converters=converters, inner_base=inner, sharing=sharing, outer=outer, load=load, sim=sim,
        plant_L=plant_L, plant_C=float(plant["C"]) if "C" in plant else None,
        C_link=float(d["C"]) if "C" in d else None, gamma_scale=gs, f0=f0,
        t_discard=float(met.get("t_discard", 0.5)), init=init, weights=weights,
        outputs=d.get("outputs"),
    )


def load_scenario(path) -> Scenario:
    """Parse a scenario file; any structural problem raises InvalidInputError."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"scenario {path} is not valid JSON: {exc}") from exc
    try:
        return scenario_from_dict(data)
    except InvalidInputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed scenario {path}: {exc!r}") from exc
