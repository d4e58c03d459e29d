"""Desk-scale F0-controllable voice conversion.

A VQ-style content encoder and conditioned decoder trained with auxiliary
F0-extractor and speaker-classifier networks, on a self-contained numpy
autodiff core, plus the full preprocessing / conversion / evaluation
pipeline and a synthetic corpus so nothing external is required.
"""

from . import autodiff, config, converter, data, dsp, losses, metrics, model, pitch, training
from .autodiff import Tensor
from .config import RunConfig, toy_preset
from .converter import ConversionResult, convert, reconstruct, task_settings
from .dsp import AudioClip, AudioConfig, LogMelSpectrogram, StandardizationStats
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    DimensionError,
    DiscvcError,
    NonFiniteError,
    NumericError,
    UsageError,
)
from .losses import Batch, LossBreakdown, disc_losses
from .metrics import EvalConfig, delta_f0, dtw_align, evaluate_pair, mcd, trim_silence
from .model import ContentCode, DecoderOutput, ModelConfig, ParameterStore, init_params
from .pitch import LogF0Pattern, SpeakerF0Stats, estimate_f0, random_resample_f0, target_f0
from .rng import make_rng
from .training import AdamState, TrainConfig, train, train_step

__version__ = "0.1.0"
