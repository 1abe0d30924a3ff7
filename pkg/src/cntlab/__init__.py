"""Classifiers conditioned on noise-corrupted copies of their own targets."""

from .autodiff import (
    Parameter,
    Tensor,
    as_tensor,
    binary_cross_entropy_with_logits,
    concat,
    conv2d,
    dropout,
    matmul,
    softmax_cross_entropy,
    stable_softmax,
)
from .conditioning import (
    ConditionalNorm,
    ConditioningEmbedder,
    FourierTimeEmbedding,
    PlainNorm,
)
from .config import ExperimentConfig, build_config, parse_kv_file
from .errors import (
    CntLabError,
    ConfigError,
    DomainError,
    GenerationError,
    ShapeError,
    TrainingDivergedError,
    UsageError,
    ValidationError,
)
from .estimator import NoisyTargetClassifier
from .models import (
    Model,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
)
from .noise import (
    NoiseSchedule,
    NoisyTarget,
    corrupt,
    marginal_params,
    sample_time,
)
from .rngs import substream
from .tasks import (
    BlobTask,
    ShapeImage,
    decode_argmax,
    encode_targets,
    export_shapes,
    gen_blobs,
    gen_shape,
    gen_shapes,
    mixup,
    verify_shape,
)
from .training import (
    LRSchedule,
    MomentumSGD,
    NoiseBucketMetrics,
    evaluate,
    run_experiment,
    train_model,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "Parameter",
    "Tensor",
    "as_tensor",
    "binary_cross_entropy_with_logits",
    "concat",
    "conv2d",
    "dropout",
    "matmul",
    "softmax_cross_entropy",
    "stable_softmax",
    "ConditionalNorm",
    "ConditioningEmbedder",
    "FourierTimeEmbedding",
    "PlainNorm",
    "ExperimentConfig",
    "build_config",
    "parse_kv_file",
    "CntLabError",
    "ConfigError",
    "DomainError",
    "GenerationError",
    "ShapeError",
    "TrainingDivergedError",
    "UsageError",
    "ValidationError",
    "NoisyTargetClassifier",
    "Model",
    "ModelConfig",
    "load_checkpoint",
    "save_checkpoint",
    "NoiseSchedule",
    "NoisyTarget",
    "corrupt",
    "marginal_params",
    "sample_time",
    "substream",
    "BlobTask",
    "ShapeImage",
    "decode_argmax",
    "encode_targets",
    "export_shapes",
    "gen_blobs",
    "gen_shape",
    "gen_shapes",
    "mixup",
    "verify_shape",
    "LRSchedule",
    "MomentumSGD",
    "NoiseBucketMetrics",
    "evaluate",
    "run_experiment",
    "train_model",
    "train_step",
    "__version__",
]
