"""Objective evaluation: silence trimming, endpoint-free DTW, the log-F0
error (voiced-frame RMSE after alignment) and mel-cepstral distortion.

Endpoint-free means the optimal path must traverse one sequence completely
while the other may contribute only a contiguous window: paths either run
from row 0 to the last row (free start/end columns) or from column 0 to the
last column (free start/end rows). A margin limits how far from the corners
the free ends may drift; the default is unrestricted. Local steps are
(1,0), (0,1), (1,1) and the minimized objective is the summed frame cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dsp import AudioClip, AudioConfig, log_mel_spectrogram, mel_cepstra
from .errors import ConfigurationError, DataError
from .pitch import LogF0Pattern, estimate_f0

MCD_SCALE = 10.0 * math.sqrt(2.0) / math.log(10.0)
TRIM_WINDOW_SECONDS = 0.025
TRIM_THRESHOLD_DB = 40.0


@dataclass(frozen=True)
class EvalConfig:
    dtw_margin: int | None = None  # None = unrestricted free ends
    mcd_order: int = 13


@dataclass
class DtwResult:
    path: list  # [(i, j)] monotone in both indices
    total_cost: float

    @property
    def mean_cost(self) -> float:
        return self.total_cost / len(self.path)


def trim_silence(clip: AudioClip, threshold_db: float = TRIM_THRESHOLD_DB) -> AudioClip:
    """Drop leading/trailing windows quieter than the loudest one by threshold_db."""
    win = max(1, int(TRIM_WINDOW_SECONDS * clip.sample_rate))
    n_win = len(clip.samples) // win
    if n_win == 0:
        raise DataError("clip shorter than one trim window")
    chunks = clip.samples[: n_win * win].reshape(n_win, win)
    rms = np.sqrt((chunks**2).mean(axis=1))
    peak = rms.max()
    if peak <= 0:
        raise DataError("cannot trim a fully silent clip")
    keep = np.flatnonzero(rms >= peak * 10.0 ** (-threshold_db / 20.0))
    start = int(keep[0]) * win
    end = min((int(keep[-1]) + 1) * win, len(clip.samples))
    return AudioClip(clip.samples[start:end], clip.sample_rate)


def _cost_matrix(a: np.ndarray, b: np.ndarray, metric) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DataError("DTW inputs must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise DataError("DTW sequences must share vector dimension")
    diff = a[:, None, :] - b[None, :, :]
    if metric == "abs":
        return np.abs(diff).sum(axis=2)
    if metric == "euclidean":
        return np.sqrt((diff**2).sum(axis=2))
    if callable(metric):
        return np.array([[metric(x, y) for y in b] for x in a])
    raise ConfigurationError(f"unknown DTW metric {metric!r}")


def _dtw_full_rows(cost: np.ndarray, margin):
    """Best path from row 0 to the last row; start/end columns free within margin.

    Returns (total cost, path) or (inf, None) when the margin forbids any path.
    """
    n, m = cost.shape
    lim = m - 1 if margin is None else min(margin, m - 1)
    inf = np.inf
    acc = np.full((n, m), inf)
    back = np.zeros((n, m), dtype=np.int8)  # 1=(0,1), 2=(1,0), 3=(1,1), 0=start
    for j in range(m):
        best, move = (0.0, 0) if j <= lim else (inf, 0)
        if j > 0 and acc[0, j - 1] < best:
            best, move = acc[0, j - 1], 1
        acc[0, j] = cost[0, j] + best
        back[0, j] = move
    for i in range(1, n):
        row_prev = acc[i - 1]
        row = acc[i]
        for j in range(m):
            best, move = row_prev[j], 2
            if j > 0:
                if row_prev[j - 1] <= best:
                    best, move = row_prev[j - 1], 3
                if row[j - 1] < best:
                    best, move = row[j - 1], 1
            row[j] = cost[i, j] + best
            back[i, j] = move
    j_lo = 0 if margin is None else max(0, m - 1 - margin)
    j_end = int(np.argmin(acc[n - 1, j_lo:])) + j_lo
    if not np.isfinite(acc[n - 1, j_end]):
        return np.inf, None
    path = []
    i, j = n - 1, j_end
    while True:
        path.append((i, j))
        move = back[i, j]
        if move == 0:
            break
        if move == 1:
            j -= 1
        elif move == 2:
            i -= 1
        else:
            i -= 1
            j -= 1
    path.reverse()
    return float(acc[n - 1, j_end]), path


def dtw_align(a, b, metric="euclidean", margin: int | None = None) -> DtwResult:
    """Endpoint-free DTW between two vector sequences.

    The better of the two traversal families (a fully consumed vs b fully
    consumed) wins; ties prefer the diagonal.
    """
    cost = _cost_matrix(a, b, metric)
    cost_a, path_a = _dtw_full_rows(cost, margin)
    cost_b, path_b = _dtw_full_rows(cost.T, margin)
    if path_b is not None:
        path_b = [(i, j) for j, i in path_b]
    if path_a is None and path_b is None:
        raise DataError("DTW margin admits no valid path")
    if path_b is None or (path_a is not None and cost_a <= cost_b):
        return DtwResult(path=path_a, total_cost=cost_a)
    return DtwResult(path=path_b, total_cost=cost_b)


def delta_f0(
    target: LogF0Pattern, converted: LogF0Pattern, margin: int | None = None
) -> float:
    """RMSE between aligned voiced subsequences of two log-F0 patterns."""
    tv, cv = target.voiced_values, converted.voiced_values
    if tv.size == 0 or cv.size == 0:
        raise DataError("delta_f0 needs at least one voiced frame on each side")
    result = dtw_align(tv, cv, metric="abs", margin=margin)
    sq = [(tv[i] - cv[j]) ** 2 for i, j in result.path]
    return float(np.sqrt(np.mean(sq)))


def mcd(
    a_logmel: np.ndarray,
    b_logmel: np.ndarray,
    order: int = 13,
    margin: int | None = None,
) -> float:
    """Mel-cepstral distortion over DTW-aligned frames, in the usual dB scale."""
    ca = mel_cepstra(a_logmel, order=order).T
    cb = mel_cepstra(b_logmel, order=order).T
    result = dtw_align(ca, cb, metric="euclidean", margin=margin)
    return MCD_SCALE * result.mean_cost


def evaluate_pair(
    target_clip: AudioClip,
    converted_clip: AudioClip,
    target_pattern: LogF0Pattern,
    audio_config: AudioConfig = AudioConfig(),
    eval_config: EvalConfig = EvalConfig(),
) -> dict:
    """Trim both clips, then measure F0 fidelity and spectral distortion.

    The F0 error compares ``target_pattern`` (the conditioning the converter
    was asked to realize) against the F0 track of the converted audio; the
    distortion compares the two clips' log-mel spectrograms.
    """
    target_trimmed = trim_silence(target_clip)
    converted_trimmed = trim_silence(converted_clip)
    converted_f0 = estimate_f0(converted_trimmed, audio_config)
    df0 = delta_f0(target_pattern, converted_f0, margin=eval_config.dtw_margin)
    distortion = mcd(
        log_mel_spectrogram(target_trimmed, audio_config),
        log_mel_spectrogram(converted_trimmed, audio_config),
        order=eval_config.mcd_order,
        margin=eval_config.dtw_margin,
    )
    return {"delta_f0": df0, "mcd": distortion}


# -- batch reports -------------------------------------------------------------


def aggregate_report(rows: list) -> dict:
    """Per-pair rows plus mean/std summaries in table style."""
    summary = {}
    for key in ("delta_f0", "mcd"):
        vals = np.array([r[key] for r in rows], dtype=np.float64)
        summary[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return {"pairs": rows, "summary": summary}


def write_report_csv(path, rows: list) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["pair_id", "task", "delta_f0", "mcd"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in writer.fieldnames})


def write_report_json(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
