"""sattrain: trains tuple-predicting precoder networks against generated
multi-satellite scenario files and exports weight containers for the
inference-side loader."""

from .container import read_container, write_container
from .errors import (
    ConfigError,
    DataFormatError,
    TrainerError,
    TrainingDiverged,
    WeightFormatError,
)
from .features import (
    FeatureStats,
    SceneBatch,
    assemble_batch,
    compute_stats,
    fold_tensors,
    unfold_tensors,
)
from .geomgen import ShellConfig, sample_drop, synthesize_scenario
from .lossmodel import (
    batch_loss,
    draw_fading,
    forward_tuple,
    recover_precoders,
    reference_fading,
    sampled_rates,
    weighted_sum_rate,
)
from .netcore import (
    ARCH_CEN,
    ARCH_DEC,
    CenDims,
    CenNet,
    DecDims,
    DecNet,
    default_cen_dims,
    default_dec_dims,
    init_tensors,
    tensor_shapes,
)
from .scenfile import (
    GridConfig,
    Scenario,
    dumps_scenario,
    parse_scenario,
    read_scenario,
    write_scenario,
)
from .train import (
    TrainConfig,
    TrainResult,
    build_dataset,
    build_model,
    export_weights,
    generate_sample,
    load_split,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ARCH_CEN",
    "ARCH_DEC",
    "CenDims",
    "CenNet",
    "ConfigError",
    "DataFormatError",
    "DecDims",
    "DecNet",
    "FeatureStats",
    "GridConfig",
    "SceneBatch",
    "Scenario",
    "ShellConfig",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "TrainingDiverged",
    "WeightFormatError",
    "assemble_batch",
    "batch_loss",
    "build_dataset",
    "build_model",
    "compute_stats",
    "default_cen_dims",
    "default_dec_dims",
    "draw_fading",
    "dumps_scenario",
    "export_weights",
    "fold_tensors",
    "forward_tuple",
    "generate_sample",
    "init_tensors",
    "load_split",
    "parse_scenario",
    "read_container",
    "read_scenario",
    "recover_precoders",
    "reference_fading",
    "sample_drop",
    "sampled_rates",
    "synthesize_scenario",
    "tensor_shapes",
    "train",
    "unfold_tensors",
    "weighted_sum_rate",
    "write_container",
    "write_scenario",
]
