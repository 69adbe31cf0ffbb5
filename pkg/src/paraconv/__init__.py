"""Decentralised inner/outer control of paralleled DC-DC converters.

Transfer-function algebra (:mod:`paraconv.tf`), averaged converter models
(:mod:`paraconv.converters`), notch inner-loop and outer-loop evaluation
(:mod:`paraconv.design`), current/ripple allocation across converters
(:mod:`paraconv.multi`) and closed-loop simulation (:mod:`paraconv.sim`).
"""

from .converters import (
    AveragedState,
    ConverterParams,
    DutyPoint,
    averaged_dynamics,
    control_from_duty,
    duty_from_control,
    nominal_duty,
    plant_tfs,
)
from .design import (
    CASE_CONVERTER,
    CASE_INNER_SPEC,
    ClosedLoopMaps,
    InnerLoopSpec,
    OuterPlant,
    SynthesisResult,
    WeightSpec,
    closed_loop_maps,
    closed_loop_stability,
    design_inner,
    inner_closed_loop,
    mismatched_outer_plant,
    nominal_outer_plant,
    reference_Kv,
    reference_weights,
    stacked_cost,
    synthesize_outer_fixed_structure,
    target_inner_cl,
    verify_inner,
)
from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .multi import (
    EquivalenceReport,
    MultiConverterSystem,
    NominalDesign,
    SharingSpec,
    aggregate_inner,
    allocate,
    predicted_shares,
    single_converter_system,
    verify_equivalence,
)
from .sim import (
    LoadProfile,
    LoadSegment,
    NoiseSpec,
    Ripple,
    SimConfig,
    SimTrace,
    SteadyStateMetrics,
    charge_balance,
    equilibrium_state,
    simulate_closed_loop,
    simulate_switched,
    single_bin_amplitude,
    steady_state_metrics,
)
from .tf import (
    DEFAULT_GRID,
    BodeTable,
    FrequencyGrid,
    Polynomial,
    StabilityResult,
    TransferFunction,
    bode,
    hinf_norm,
    is_stable,
    poly_roots,
    tf_add,
    tf_eval,
    tf_feedback,
    tf_minreal,
    tf_mul,
    tf_to_ss,
)

__version__ = "0.1.0"
