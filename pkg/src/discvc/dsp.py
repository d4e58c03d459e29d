"""Waveform <-> feature transforms.

STFT with Hann window and reflect-centred frames, triangular mel filterbank,
log compression, corpus standardization, DCT mel-cepstra (for the distortion
metric) and a Griffin-Lim synthesizer used in place of a neural vocoder.

All transforms are pure functions of their inputs; fitted statistics are
separate value objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigurationError, DataError, DimensionError

LOG_FLOOR = 1e-5
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 16000
    n_fft: int = 1024
    hop: int = 256
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 40.0
    fmax: float = 7600.0


@dataclass
class AudioClip:
    samples: np.ndarray  # mono, float in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DimensionError("AudioClip expects a mono sample vector")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class StandardizationStats:
    """Per-frequency mean/std pooled over every frame of the fitting corpus."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionError("stats mean/std must be equal-length vectors")
        if (self.std <= 0).any():
            raise DataError("standardization std must be positive")


@dataclass
class LogMelSpectrogram:
    values: np.ndarray  # (F, T)
    standardized: bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DimensionError("LogMelSpectrogram expects an (F, T) matrix")


def hann_window(length: int) -> np.ndarray:
    # periodic Hann, the STFT convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def num_frames(n_samples: int, hop: int) -> int:
    return 1 + n_samples // hop


def stft(clip: AudioClip, config: AudioConfig = AudioConfig()) -> np.ndarray:
    """Complex spectrogram, shape (n_fft//2 + 1, T) with T = 1 + len//hop.

    Frame t is centred on sample t*hop; the signal is reflect-padded by
    n_fft//2 on both sides.
    """
    x = clip.samples
    if len(x) < config.n_fft:
        raise DataError(
            f"clip of {len(x)} samples is shorter than one analysis window ({config.n_fft})"
        )
    n_fft, hop = config.n_fft, config.hop
    t_out = num_frames(len(x), hop)
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    idx = np.arange(n_fft)[None, :] + hop * np.arange(t_out)[:, None]
    frames = xp[idx] * hann_window(config.win_length)
    return np.fft.rfft(frames, n=n_fft, axis=1).T


def istft(spec: np.ndarray, config: AudioConfig = AudioConfig()) -> np.ndarray:
    """Least-squares inverse of ``stft`` via windowed overlap-add."""
    n_fft, hop = config.n_fft, config.hop
    win = hann_window(config.win_length)
    frames = np.fft.irfft(spec.T, n=n_fft, axis=1) * win
    t_out = spec.shape[1]
    total = n_fft + hop * (t_out - 1)
    y = np.zeros(total)
    wsum = np.zeros(total)
    for t in range(t_out):
        y[t * hop : t * hop + n_fft] += frames[t]
        wsum[t * hop : t * hop + n_fft] += win * win
    y = y / np.maximum(wsum, 1e-10)
    pad = n_fft // 2
    return y[pad : total - pad]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(config: AudioConfig = AudioConfig()) -> np.ndarray:
    """Triangular filters, shape (n_mels, n_fft//2 + 1), peak height 1."""
    if not 0 <= config.fmin < config.fmax <= config.sample_rate / 2:
        raise ConfigurationError("mel filterbank needs 0 <= fmin < fmax <= sr/2")
    n_bins = config.n_fft // 2 + 1
    freqs = np.linspace(0, config.sample_rate / 2, n_bins)
    mel_pts = np.linspace(_hz_to_mel(config.fmin), _hz_to_mel(config.fmax), config.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        lo, centre, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (freqs - lo) / (centre - lo)
        down = (hi - freqs) / (hi - centre)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_spectrogram(clip: AudioClip, config: AudioConfig = AudioConfig()) -> np.ndarray:
    """Power mel spectrogram, shape (n_mels, T)."""
    power = np.abs(stft(clip, config)) ** 2
    return mel_filterbank(config) @ power


def log_compress(mel: np.ndarray) -> np.ndarray:
    if (np.asarray(mel) < 0).any():
        raise DataError("log_compress expects non-negative mel energies")
    return np.log(mel + LOG_FLOOR)


def log_mel_spectrogram(clip: AudioClip, config: AudioConfig = AudioConfig()) -> np.ndarray:
    return log_compress(mel_spectrogram(clip, config))


def fit_standardization(corpus) -> StandardizationStats:
    """Pool per-frequency moments over all frames of all matrices.

    ``corpus`` is any iterable of (F, T) arrays; accumulation is float64 so
    the result is independent of iteration order at 1e-6.
    """
    total = None
    total_sq = None
    count = 0
    for mat in corpus:
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2:
            raise DimensionError("standardization corpus entries must be (F, T)")
        if total is None:
            total = mat.sum(axis=1)
            total_sq = (mat * mat).sum(axis=1)
        else:
            total += mat.sum(axis=1)
            total_sq += (mat * mat).sum(axis=1)
        count += mat.shape[1]
    if total is None or count < 2:
        raise DataError("standardization needs at least one matrix with two total frames")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    return StandardizationStats(mean=mean, std=np.maximum(np.sqrt(var), STD_FLOOR))


def standardize(x0: np.ndarray, stats: StandardizationStats) -> LogMelSpectrogram:
    x0 = np.asarray(x0)
    if x0.shape[0] != stats.mean.shape[0]:
        raise DimensionError("frequency count does not match fitted stats")
    values = (x0 - stats.mean[:, None]) / stats.std[:, None]
    return LogMelSpectrogram(values=values, standardized=True)


def destandardize(x: LogMelSpectrogram, stats: StandardizationStats) -> np.ndarray:
    if not x.standardized:
        return np.asarray(x.values, dtype=np.float64)
    return x.values * stats.std[:, None] + stats.mean[:, None]


def mel_cepstra(x0: np.ndarray, order: int = 13) -> np.ndarray:
    """Orthonormal DCT-II cepstra of a log-mel matrix, coefficients 1..order.

    The zeroth (energy) coefficient is excluded.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if not 1 <= order < x0.shape[0]:
        raise ConfigurationError(f"cepstral order {order} out of range for F={x0.shape[0]}")
    coeffs = scipy.fft.dct(x0, type=2, axis=0, norm="ortho")
    return coeffs[1 : order + 1]


def spectral_distance(target_mag: np.ndarray, estimate_mag: np.ndarray) -> float:
    """Relative Frobenius mismatch between two magnitude spectrograms."""
    return float(
        np.linalg.norm(target_mag - estimate_mag) / max(np.linalg.norm(target_mag), 1e-12)
    )


def invert_mel(mel_power: np.ndarray, config: AudioConfig, refine_iters: int = 30) -> np.ndarray:
    """Linear-frequency power spectrum from mel power.

    A clamped pseudo-inverse gives the start point, then multiplicative
    updates drive fb @ p back onto the observed mel energies. The refinement
    re-concentrates energy into harmonic peaks that the plain pseudo-inverse
    smears, which is what keeps the synthesized audio pitch-trackable.
    """
    fb = mel_filterbank(config)
    p = np.clip(np.linalg.pinv(fb) @ mel_power, 1e-10, None)
    norm = fb.sum(axis=0)[:, None] + 1e-12
    for _ in range(refine_iters):
        ratio = mel_power / np.maximum(fb @ p, 1e-12)
        p *= (fb.T @ ratio) / norm
    return p


def griffin_lim(
    x: LogMelSpectrogram,
    stats: StandardizationStats,
    iters: int = 60,
    config: AudioConfig = AudioConfig(),
    track_convergence: bool = False,
):
    """Waveform from a (standardized) log-mel spectrogram.

    Destandardize, undo the log, lift mel back to the linear-frequency power
    spectrum, then recover phase by alternating projection. Deterministic
    (zero initial phase).
    """
    if iters < 1:
        raise ConfigurationError("griffin_lim needs at least one iteration")
    log_mel = destandardize(x, stats)
    mel_power = np.maximum(np.exp(log_mel) - LOG_FLOOR, 0.0)
    power = invert_mel(mel_power, config)
    target = np.sqrt(power)

    spec = target.astype(np.complex128)
    history = []
    y = istft(spec, config)
    for _ in range(iters):
        reproj = stft(AudioClip(y, config.sample_rate), config)
        reproj = reproj[:, : target.shape[1]]
        if track_convergence:
            history.append(spectral_distance(target, np.abs(reproj)))
        phase = np.angle(reproj)
        y = istft(target * np.exp(1j * phase), config)
    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    clip = AudioClip(y, config.sample_rate)
    return (clip, history) if track_convergence else clip


# -- 16-bit PCM WAV i/o ---------------------------------------------------------


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM RIFF file; anything else is rejected."""
    import wave

    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            if wf.getcomptype() != "NONE":
                raise DataError(f"{path}: compressed WAV ({wf.getcomptype()}) not supported")
            raw = wf.readframes(wf.getnframes())
            rate = wf.getframerate()
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: not a readable RIFF/WAV file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav(path, clip: AudioClip) -> None:
    import wave

    # same 1/32768 scale as read_wav, so write->read round trips to 0.5 LSB
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())
