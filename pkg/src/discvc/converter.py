"""Conversion pipeline: map the F0 pattern onto target-speaker statistics
(optionally shifted), re-decode the content with target conditioning, and
synthesize audio with the Griffin-Lim substitute vocoder.

The source utterance contributes only its content code; its F0 pattern and
speaker identity reach the decoder exclusively through the transformed
pattern and the requested timbre index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioClip, AudioConfig, LogMelSpectrogram, StandardizationStats, griffin_lim
from .errors import ConfigurationError, UsageError
from .model import ModelConfig, ParameterStore, decode, encode_content
from .pitch import LogF0Pattern, SpeakerF0Stats, target_f0
from .rng import make_rng

DEFAULT_CONTENT_SEED = 2024
GRIFFIN_LIM_ITERS = 60


@dataclass
class ConversionResult:
    mu: np.ndarray  # (F, T), standardized log-mel domain
    sigma: np.ndarray
    target_pattern: LogF0Pattern  # the conditioning actually given to the decoder
    clip: AudioClip | None


def _content_rng(seed):
    return make_rng(DEFAULT_CONTENT_SEED if seed is None else seed)


def convert(
    x: LogMelSpectrogram,
    f0: LogF0Pattern,
    speaker: int,
    beta: float,
    pitch_speaker: int,
    timbre_speaker: int,
    store: ParameterStore,
    model_config: ModelConfig,
    f0_stats: dict,
    mel_stats: StandardizationStats,
    audio_config: AudioConfig = AudioConfig(),
    tau: float = 0.5,
    content_seed: int | None = None,
    hard_content: bool = False,
    vocode: bool = True,
    gl_iters: int = GRIFFIN_LIM_ITERS,
) -> ConversionResult:
    """Apply (beta, pitch-speaker, timbre-speaker) conversion to one utterance.

    ``f0_stats`` maps 1-based speaker indices to SpeakerF0Stats. Content
    sampling uses a fixed seed by default so conversions are reproducible;
    ``hard_content`` switches to deterministic argmax assignments.
    """
    for label, idx in (("source", speaker), ("pitch target", pitch_speaker)):
        if idx not in f0_stats:
            raise ConfigurationError(f"no F0 statistics for {label} speaker {idx}")
    if not 1 <= timbre_speaker <= model_config.num_speakers:
        raise ConfigurationError(f"timbre speaker {timbre_speaker} outside the trained set")

    pattern = target_f0(f0, f0_stats[speaker], f0_stats[pitch_speaker], beta=beta)
    code = encode_content(
        x.values, store, model_config, tau=tau, rng=_content_rng(content_seed), hard=hard_content
    )
    out = decode(code, pattern.values, timbre_speaker, store, model_config)
    clip = None
    if vocode:
        mel = LogMelSpectrogram(values=out.mu.data, standardized=True)
        clip = griffin_lim(mel, mel_stats, iters=gl_iters, config=audio_config)
    return ConversionResult(
        mu=out.mu.data, sigma=out.sigma.data, target_pattern=pattern, clip=clip
    )


def reconstruct(
    x: LogMelSpectrogram,
    f0: LogF0Pattern,
    speaker: int,
    store: ParameterStore,
    model_config: ModelConfig,
    tau: float = 0.5,
    content_seed: int | None = None,
    hard_content: bool = False,
) -> np.ndarray:
    """Identity-settings decode of an utterance; returns the mean spectrogram."""
    code = encode_content(
        x.values, store, model_config, tau=tau, rng=_content_rng(content_seed), hard=hard_content
    )
    out = decode(code, f0.values, speaker, store, model_config)
    return out.mu.data


def task_settings(task: str, source: int, beta=None, target=None):
    """Map a task name to (beta, pitch_speaker, timbre_speaker).

    P shifts the F0 pattern by beta only; T re-targets timbre only; PT maps
    both pitch statistics and timbre to the target speaker.
    """
    task = task.upper()
    if task == "P":
        if beta is None:
            raise UsageError("task P needs --beta")
        if target is not None:
            raise UsageError("task P does not take a target speaker")
        return float(beta), source, source
    if task == "T":
        if target is None:
            raise UsageError("task T needs --target-speaker")
        if beta not in (None, 0.0):
            raise UsageError("task T does not take a beta shift")
        return 0.0, source, int(target)
    if task == "PT":
        if target is None:
            raise UsageError("task PT needs --target-speaker")
        if beta not in (None, 0.0):
            raise UsageError("task PT does not take a beta shift")
        return 0.0, int(target), int(target)
    raise UsageError(f"unknown task {task!r}; expected P, T, or PT")
