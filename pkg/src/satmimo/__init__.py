"""Multi-satellite massive-MIMO downlink precoding.

Statistical-CSI precoding across cooperating LEO satellites: scenario
generation (Walker-Delta geometry, Rician product channels), a weighted-MSE
block-coordinate solver with per-satellite power constraints, closed-form
precoder recovery from compact solution tuples, permutation-equivariant
inference networks, and Monte-Carlo evaluation.
"""
from .channel import (
    ArrayConfig,
    LinkStat,
    ScenarioInstance,
    exp_corr_sigma,
    permute_scenario,
    rician_r_ut,
    rx_steering,
    sample_channel,
    subscenario,
    synthesize_stats,
    tx_steering,
    ula_steering,
)
from .equinet import (
    ARCH_CENTRALIZED,
    ARCH_DECENTRALIZED,
    CenDims,
    DecDims,
    EquiWeights,
    assemble_decentralized,
    build_inputs,
    default_cen_dims,
    default_dec_dims,
    infer_centralized,
    infer_decentralized,
    load_weights,
    random_weights,
    save_weights,
    validate_weights,
)
from .errors import (
    BracketFailure,
    DegenerateLink,
    SatmimoError,
    ScenarioFormatError,
    SelectionInfeasible,
    ShapeMismatch,
    SingularSystem,
    WeightFormatError,
)
from .evaluation import (
    SCHEMES,
    EvalReport,
    export_results,
    overhead_counts,
    run_sweep,
    scheme_solution,
)
from .geometry import (
    ConstellationConfig,
    DropConfig,
    GeometrySample,
    drop_scenario,
    elevation_angle,
    link_angles,
    link_budget,
    walker_delta_positions,
)
from .recovery import PredictedTuple, recover_precoders, tuple_from_state
from .scenario_io import (
    canonical_rad,
    canonical_watt,
    export_scenario,
    import_scenario,
)
from .wmmse import (
    PrecodingSolution,
    WmmseOptions,
    WmmseState,
    baseline_solution,
    ergodic_rate,
    sep_wmmse,
    weighted_sum_rate,
    wmmse_solve,
)

__version__ = "0.1.0"

__all__ = [
    "ARCH_CENTRALIZED",
    "ARCH_DECENTRALIZED",
    "ArrayConfig",
    "BracketFailure",
    "CenDims",
    "ConstellationConfig",
    "DecDims",
    "DegenerateLink",
    "DropConfig",
    "EquiWeights",
    "EvalReport",
    "GeometrySample",
    "LinkStat",
    "PrecodingSolution",
    "PredictedTuple",
    "SCHEMES",
    "SatmimoError",
    "ScenarioFormatError",
    "ScenarioInstance",
    "SelectionInfeasible",
    "ShapeMismatch",
    "SingularSystem",
    "WeightFormatError",
    "WmmseOptions",
    "WmmseState",
    "assemble_decentralized",
    "baseline_solution",
    "build_inputs",
    "canonical_rad",
    "canonical_watt",
    "default_cen_dims",
    "default_dec_dims",
    "drop_scenario",
    "elevation_angle",
    "ergodic_rate",
    "exp_corr_sigma",
    "export_results",
    "export_scenario",
    "import_scenario",
    "infer_centralized",
    "infer_decentralized",
    "link_angles",
    "link_budget",
    "load_weights",
    "overhead_counts",
    "permute_scenario",
    "random_weights",
    "recover_precoders",
    "rician_r_ut",
    "run_sweep",
    "rx_steering",
    "sample_channel",
    "save_weights",
    "scheme_solution",
    "sep_wmmse",
    "subscenario",
    "synthesize_stats",
    "tuple_from_state",
    "tx_steering",
    "ula_steering",
    "validate_weights",
    "walker_delta_positions",
    "weighted_sum_rate",
    "wmmse_solve",
]
