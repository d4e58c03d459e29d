"""Training objective: reconstruction likelihood plus the auxiliary
consistency terms that penalize disagreement between the conditioning
(F0 pattern, speaker) and what can be read back off the generated spectrogram.

Per batch element the graph computes

  like  Gaussian NLL of x under the reconstruction (mu, sigma)
  p     Laplace NLL of the resampled F0 target vs the extractor applied to
        the spectrogram decoded under that resampled conditioning
  p0    the same for the all-zero (fully unvoiced) F0 pattern
  p1    extractor on the real input vs the real F0 pattern
  p2    extractor on the reconstruction mean vs the real F0 pattern
  t     classifier NLL of the resampled speaker on the resampled decode
  t1/t2 classifier NLL of the true speaker on input / reconstruction

and the total is eta*like + eta_p*(p+p0+p1+p2) + eta_t*(t + t1/2 + t2/2)
with eta = 1/(F*T), eta_p = 1/(4T), eta_t = 1/(2*T_S). Expectations over the
decoder output are approximated by its mean; every term is minimized jointly
w.r.t. all four networks (no gradient reversal), and the encoder's KL term
against the uniform code prior is a constant and never appears.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, NumericError
from .model import (
    ModelConfig,
    ParameterStore,
    classify_speaker,
    decode,
    encode_content,
    extract_pitch,
    segment_count,
)
from .pitch import RESAMPLE_SHIFT_HIGH, RESAMPLE_SHIFT_LOW

HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)
LOG_TWO = math.log(2.0)

LOSS_FIELDS = ("like", "p", "p0", "p1", "p2", "t", "t1", "t2", "total")


@dataclass
class LossBreakdown:
    like: float
    p: float
    p0: float
    p1: float
    p2: float
    t: float
    t1: float
    t2: float
    total: float

    def as_row(self):
        return [getattr(self, f) for f in LOSS_FIELDS]

    def recombined(self, eta: float, eta_p: float, eta_t: float) -> float:
        return (
            eta * self.like
            + eta_p * (self.p + self.p0 + self.p1 + self.p2)
            + eta_t * (self.t + 0.5 * self.t1 + 0.5 * self.t2)
        )


@dataclass
class Batch:
    """Aligned training arrays: x (B,F,T), f0 (B,T), speakers (B,) 1-based."""

    x: np.ndarray
    f0: np.ndarray
    speakers: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.f0 = np.asarray(self.f0, dtype=np.float32)
        self.speakers = np.asarray(self.speakers, dtype=np.int64)
        if self.x.ndim != 3 or self.f0.ndim != 2 or self.speakers.ndim != 1:
            raise DimensionError("Batch expects x (B,F,T), f0 (B,T), speakers (B,)")
        if not (self.x.shape[0] == self.f0.shape[0] == self.speakers.shape[0]):
            raise DimensionError("Batch arrays disagree on batch size")
        if self.x.shape[2] != self.f0.shape[1]:
            raise DimensionError("Batch x and f0 disagree on frame count")

    @property
    def size(self) -> int:
        return self.x.shape[0]


def gaussian_nll(x, mu: Tensor, sigma: Tensor) -> Tensor:
    """Sum over entries of the independent-Gaussian negative log density."""
    if (sigma.data <= 0).any():
        raise NumericError("gaussian_nll requires strictly positive sigma")
    x = x if isinstance(x, Tensor) else ad.constant(x)
    if x.shape != mu.shape or x.shape != sigma.shape:
        raise DimensionError("gaussian_nll operands must share one shape")
    resid = ad.sub(x, mu)
    quad = ad.div(resid * resid, (sigma * sigma) * 2.0)
    return ad.tsum(ad.log(sigma) + quad) + HALF_LOG_TWO_PI * x.size


def laplace_nll(target, pred: Tensor) -> Tensor:
    """Sum over frames of the unit-scale Laplace negative log density.

    Every frame contributes, including zero-valued unvoiced targets.
    """
    target = target if isinstance(target, Tensor) else ad.constant(target)
    if target.shape != pred.shape:
        raise DimensionError(
            f"laplace_nll length mismatch: target {target.shape} vs prediction {pred.shape}"
        )
    return ad.tsum(ad.absolute(ad.sub(target, pred))) + LOG_TWO * target.size


def categorical_nll(speakers, logits: Tensor) -> Tensor:
    """Per-segment cross entropy against 1-based speaker indices, summed.

    logits: (S, T_S) with an int speaker, or (B, S, T_S) with (B,) speakers.
    """
    s0 = np.atleast_1d(np.asarray(speakers, dtype=np.int64)) - 1
    n_classes = logits.shape[-2]
    if (s0 < 0).any() or (s0 >= n_classes).any():
        raise DimensionError(f"speaker index out of range 1..{n_classes}")
    ls = ad.log_softmax(logits, axis=-2)
    if logits.data.ndim == 2:
        onehot = np.zeros((n_classes, 1), dtype=np.float32)
        onehot[s0[0], 0] = 1.0
    else:
        if s0.shape[0] != logits.shape[0]:
            raise DimensionError("speaker vector does not match logits batch")
        onehot = np.zeros((logits.shape[0], n_classes, 1), dtype=np.float32)
        onehot[np.arange(logits.shape[0]), s0, 0] = 1.0
    return -ad.tsum(ls * ad.constant(onehot))


def loss_weights(n_mels: int, t_frames: int):
    """(eta, eta_p, eta_t) for the stated per-entry normalizations."""
    return 1.0 / (n_mels * t_frames), 1.0 / (4.0 * t_frames), 1.0 / (
        2.0 * segment_count(t_frames)
    )


def resample_conditioning(batch: Batch, num_speakers: int, rng: np.random.Generator):
    """Random replacement conditioning: per-element F0 shift and speaker draw.

    Draw order (one uniform vector, then one integer vector) is part of the
    reproducibility contract.
    """
    betas = rng.uniform(RESAMPLE_SHIFT_LOW, RESAMPLE_SHIFT_HIGH, size=batch.size)
    f0_r = np.where(
        batch.f0 != 0, batch.f0 + betas[:, None].astype(np.float32), 0.0
    ).astype(np.float32)
    s_r = rng.integers(1, num_speakers + 1, size=batch.size)
    return f0_r, s_r


def disc_losses(
    batch: Batch,
    store: ParameterStore,
    config: ModelConfig,
    tau: float,
    rng: np.random.Generator,
    no_aux: bool = False,
):
    """Full training objective on one minibatch.

    Returns (LossBreakdown of per-term batch means, total loss Tensor).
    With ``no_aux`` only the likelihood term is computed; the auxiliary
    columns are reported as zero and carry no gradient.
    """
    b = batch.size
    n_mels, t_frames = batch.x.shape[1], batch.x.shape[2]
    if n_mels != config.n_mels:
        raise DimensionError(f"batch has {n_mels} mel bands, model expects {config.n_mels}")
    eta, eta_p, eta_t = loss_weights(n_mels, t_frames)

    @contextmanager
    def term(name):
        try:
            yield
        except NumericError as exc:
            raise NumericError(f"loss term '{name}': {exc}") from exc

    x_t = ad.constant(batch.x)
    with term("like"):
        code = encode_content(x_t, store, config, tau=tau, rng=rng)
        recon = decode(code, batch.f0, batch.speakers, store, config)
        like = gaussian_nll(x_t, recon.mu, recon.sigma) / b
    total = like * eta

    if no_aux:
        zero = [0.0] * 7
        breakdown = LossBreakdown(like.item(), *zero, total.item())
        return breakdown, total

    f0_r, s_r = resample_conditioning(batch, config.num_speakers, rng)
    with term("p"):
        out_r = decode(code, f0_r, s_r, store, config)
        p = laplace_nll(f0_r, extract_pitch(out_r.mu, store, config)) / b
    with term("p0"):
        f0_zero = np.zeros_like(batch.f0)
        out_zero = decode(code, f0_zero, batch.speakers, store, config)
        p0 = laplace_nll(f0_zero, extract_pitch(out_zero.mu, store, config)) / b
    with term("p1"):
        p1 = laplace_nll(batch.f0, extract_pitch(x_t, store, config)) / b
    with term("p2"):
        p2 = laplace_nll(batch.f0, extract_pitch(recon.mu, store, config)) / b
    with term("t"):
        t = categorical_nll(s_r, classify_speaker(out_r.mu, store, config)) / b
    with term("t1"):
        t1 = categorical_nll(batch.speakers, classify_speaker(x_t, store, config)) / b
    with term("t2"):
        t2 = categorical_nll(batch.speakers, classify_speaker(recon.mu, store, config)) / b

    total = total + (p + p0 + p1 + p2) * eta_p + (t + t1 * 0.5 + t2 * 0.5) * eta_t
    breakdown = LossBreakdown(
        like.item(),
        p.item(),
        p0.item(),
        p1.item(),
        p2.item(),
        t.item(),
        t1.item(),
        t2.item(),
        total.item(),
    )
    return breakdown, total
