"""Fundamental-frequency machinery.

A cumulative-mean-normalized-difference (YIN-style) estimator produces the
per-frame log-F0 pattern: natural-log Hz on voiced frames, exactly 0 on
unvoiced frames, length-aligned with the mel spectrogram of the same clip.
On top of that sit per-speaker voiced statistics, the training-time random
resampling of conditioning, and the affine pattern transform used at
conversion time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioClip, AudioConfig, num_frames
from .errors import ConfigurationError, DataError, DimensionError

F0_FLOOR = 50.0
F0_CEIL = 600.0
SEARCH_FMIN = 50.0
SEARCH_FMAX = 500.0
YIN_WINDOW = 1024
YIN_THRESHOLD = 0.15
F0_STD_FLOOR = 1e-4
RESAMPLE_SHIFT_LOW = 0.3
RESAMPLE_SHIFT_HIGH = 3.0


@dataclass
class LogF0Pattern:
    values: np.ndarray  # (T,), 0 on unvoiced frames

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise DimensionError("LogF0Pattern expects a vector")

    def __len__(self):
        return len(self.values)

    @property
    def voiced_mask(self) -> np.ndarray:
        return self.values != 0.0

    @property
    def voiced_values(self) -> np.ndarray:
        return self.values[self.voiced_mask]


@dataclass
class SpeakerF0Stats:
    mean: float
    std: float
    speaker: int

    def __post_init__(self):
        if self.std <= 0:
            raise DataError("speaker F0 std must be positive")


def _difference_function(frames: np.ndarray, window: int, tau_max: int) -> np.ndarray:
    """YIN difference d(tau) for each row; frames are (N, window + tau_max)."""
    n = frames.shape[0]
    length = frames.shape[1]
    sq = frames * frames
    cum = np.concatenate([np.zeros((n, 1)), np.cumsum(sq, axis=1)], axis=1)
    energy0 = cum[:, window] - cum[:, 0]  # sum over the fixed first window
    taus = np.arange(tau_max + 1)
    energy_tau = cum[:, taus + window] - cum[:, taus]
    # cross term via FFT correlation of the leading window against the frame
    nfft = 1
    while nfft < length + window:
        nfft *= 2
    spec_full = np.fft.rfft(frames, nfft, axis=1)
    spec_head = np.fft.rfft(frames[:, :window], nfft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), nfft, axis=1)[:, : tau_max + 1]
    d = energy0[:, None] + energy_tau - 2.0 * corr
    return np.maximum(d, 0.0)


def _cmnd(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean-normalized difference; rows with zero energy become 1."""
    taus = np.arange(d.shape[1])
    csum = np.cumsum(d[:, 1:], axis=1)
    out = np.ones_like(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d[:, 1:] * taus[1:] / csum
    out[:, 1:] = np.where(csum > 0, ratio, 1.0)
    return out


def _pick_period(row: np.ndarray, tau_min: int, tau_max: int, threshold: float):
    """First dip under threshold, descended to its local minimum; None if unvoiced."""
    tau = None
    for t in range(tau_min, tau_max + 1):
        if row[t] < threshold:
            tau = t
            while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
                tau += 1
            break
    if tau is None:
        return None
    if 0 < tau < len(row) - 1:
        a, b, c = row[tau - 1], row[tau], row[tau + 1]
        denom = a - 2.0 * b + c
        if abs(denom) > 1e-12:
            shift = 0.5 * (a - c) / denom
            if abs(shift) <= 1.0:
                return tau + shift
    return float(tau)


def estimate_f0(clip: AudioClip, config: AudioConfig = AudioConfig()) -> LogF0Pattern:
    """Per-frame log F0, hop-aligned with the spectrogram of the same clip."""
    x = clip.samples
    if len(x) < YIN_WINDOW:
        raise DataError(f"clip of {len(x)} samples is too short for F0 analysis")
    sr, hop = clip.sample_rate, config.hop
    tau_min = int(sr / SEARCH_FMAX)
    tau_max = int(np.ceil(sr / SEARCH_FMIN))
    t_out = num_frames(len(x), hop)

    seg_len = YIN_WINDOW + tau_max
    half = YIN_WINDOW // 2
    xp = np.pad(x, (half, half + tau_max + hop))
    starts = hop * np.arange(t_out)
    frames = xp[starts[:, None] + np.arange(seg_len)[None, :]]

    d = _difference_function(frames, YIN_WINDOW, tau_max)
    nd = _cmnd(d)

    values = np.zeros(t_out)
    for t in range(t_out):
        period = _pick_period(nd[t], tau_min, tau_max, YIN_THRESHOLD)
        if period is not None and period > 0:
            f0 = np.clip(sr / period, F0_FLOOR, F0_CEIL)
            values[t] = np.log(f0)
    return LogF0Pattern(values=values)


def speaker_stats(patterns, speaker: int) -> SpeakerF0Stats:
    """Voiced-frame mean and sample std pooled over a speaker's patterns."""
    voiced = np.concatenate([p.voiced_values for p in patterns]) if patterns else np.array([])
    if voiced.size < 2:
        raise DataError("speaker F0 stats need at least two voiced frames")
    mean = float(voiced.mean())
    std = float(max(voiced.std(ddof=1), F0_STD_FLOOR))
    return SpeakerF0Stats(mean=mean, std=std, speaker=speaker)


def random_resample_f0(pattern: LogF0Pattern, rng: np.random.Generator) -> LogF0Pattern:
    """Shift all voiced frames by one beta ~ Uniform([0.3, 3)); zeros stay zero."""
    beta = rng.uniform(RESAMPLE_SHIFT_LOW, RESAMPLE_SHIFT_HIGH)
    return shift_f0(pattern, beta)


def shift_f0(pattern: LogF0Pattern, beta: float) -> LogF0Pattern:
    values = np.where(pattern.voiced_mask, pattern.values + beta, 0.0)
    return LogF0Pattern(values=values)


def random_resample_speaker(num_speakers: int, rng: np.random.Generator) -> int:
    """Uniform speaker index in {1..S}."""
    if num_speakers < 1:
        raise ConfigurationError("need at least one speaker")
    return int(rng.integers(1, num_speakers + 1))


def target_f0(
    pattern: LogF0Pattern,
    src: SpeakerF0Stats,
    tgt: SpeakerF0Stats,
    beta: float = 0.0,
) -> LogF0Pattern:
    """Affine map of voiced frames onto the target speaker's voiced statistics,
    plus an optional constant shift; unvoiced frames stay exactly zero."""
    scaled = (tgt.std / src.std) * (pattern.values - src.mean) + tgt.mean + beta
    return LogF0Pattern(values=np.where(pattern.voiced_mask, scaled, 0.0))
