"""Desk-scale lab for an error-resilient split-computing codec.

A tiny device-side encoder quantizes split-point features to 3-bit
symbols, ships them over a simulated binary symmetric channel, and a
BER-aware edge decoder reconstructs features for the frozen task head.
Everything runs on a numpy-backed reverse-mode autodiff engine; no deep
learning framework is involved.
"""

from ._version import __version__
from .tensor import Tensor, ShapeError, backward, no_grad
from .channel import BscChannel
from .bits import (BitStream, pack_fixed, unpack_fixed, huffman_build,
                   huffman_encode, huffman_decode_resync, symbol_match_rate)
from .quantizer import QuantizerState, soft_quantize, hard_quantize, straight_through
from .models import Codec, EncoderModel, DecoderModel, AttentionGate, offload
from .attribution import (AttributionMap, attribute, attribute_integrated,
                          xai_loss, SliceSpec, make_slice_spec, slice_latent,
                          recover_latent)
from .tasks import TaskModel, DivergenceError, train_task_model, task_accuracy
from .training import (TrainConfig, LossWeights, run_two_stage, stage1_denoise,
                       stage2_semantic, evaluate, derive_seed)
from .estimator import SemanticCodecEstimator
from .config import ConfigError, default_config, resolve_config
from .presets import run_preset, preset_names

__all__ = [
    "__version__",
    "Tensor", "ShapeError", "backward", "no_grad",
    "BscChannel",
    "BitStream", "pack_fixed", "unpack_fixed", "huffman_build",
    "huffman_encode", "huffman_decode_resync", "symbol_match_rate",
    "QuantizerState", "soft_quantize", "hard_quantize", "straight_through",
    "Codec", "EncoderModel", "DecoderModel", "AttentionGate", "offload",
    "AttributionMap", "attribute", "attribute_integrated", "xai_loss",
    "SliceSpec", "make_slice_spec", "slice_latent", "recover_latent",
    "TaskModel", "DivergenceError", "train_task_model", "task_accuracy",
    "TrainConfig", "LossWeights", "run_two_stage", "stage1_denoise",
    "stage2_semantic", "evaluate", "derive_seed",
    "SemanticCodecEstimator",
    "ConfigError", "default_config", "resolve_config",
    "run_preset", "preset_names",
]
