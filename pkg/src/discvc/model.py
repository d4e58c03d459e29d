"""The four networks: content encoder, decoder, F0 extractor, speaker classifier.

All convolutions are weight-normalized (explicit g * v / ||v|| trainable
reparameterization) with layer norm and ReLU between blocks. The content
encoder emits per-frame logits over a codebook and samples soft one-hot
assignments with Gumbel-Softmax; the decoder consumes content embeddings,
the raw log-F0 row, a voiced-mask row, and a speaker embedding broadcast
over time, and emits the mean and (clamped-log) standard deviation of the
spectrogram. Inputs may be (F, T) or batched (B, F, T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, DimensionError
from .serialization import read_container, write_container

WEIGHT_INIT_SCALE = 0.05
LOG_SIGMA_MIN = -7.0
LOG_SIGMA_MAX = 2.0


@dataclass(frozen=True)
class ModelConfig:
    n_mels: int = 80
    num_speakers: int = 2
    codebook_size: int = 128
    content_dim: int = 16
    enc_channels: int = 256
    dec_channels: int = 256
    pext_channels: int = 128
    cls_channels: int = 128
    speaker_embed_dim: int = 64
    kernel: int = 5

    @property
    def pad(self) -> int:
        return (self.kernel - 1) // 2


def segment_count(t: int) -> int:
    """Time resolution of the speaker classifier: two stride-4 stages."""
    return math.ceil(math.ceil(t / 4) / 4)


@dataclass
class ContentCode:
    embeddings: Tensor  # (.., N_C, T)
    soft_assignments: Tensor  # (.., K, T), columns on the simplex


@dataclass
class DecoderOutput:
    mu: Tensor  # (.., F, T)
    sigma: Tensor  # (.., F, T), exp of clamped log-sigma
    log_sigma: Tensor


class ParameterStore:
    """Named trainable tensors, grouped by network via name prefixes."""

    GROUPS = ("encoder", "decoder", "f0_extractor", "classifier", "codebook")

    def __init__(self, tensors: dict):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def group(self, prefix: str):
        return {k: v for k, v in self._tensors.items() if k.split(".")[0] == prefix or k == prefix}

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    @property
    def num_params(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def arrays(self) -> dict:
        return {k: t.data for k, t in self._tensors.items()}


# -- initialization -------------------------------------------------------------


def _init_wn_conv(tensors, prefix, c_out, c_in, k, rng):
    v = (rng.standard_normal((c_out, c_in, k)) * WEIGHT_INIT_SCALE).astype(np.float32)
    g = np.sqrt((v.astype(np.float64) ** 2).sum(axis=(1, 2))).astype(np.float32)
    tensors[f"{prefix}.v"] = ad.parameter(v)
    tensors[f"{prefix}.g"] = ad.parameter(g)
    tensors[f"{prefix}.b"] = ad.parameter(np.zeros(c_out, dtype=np.float32))


def _init_norm(tensors, prefix, channels):
    tensors[f"{prefix}.gain"] = ad.parameter(np.ones(channels, dtype=np.float32))
    tensors[f"{prefix}.bias"] = ad.parameter(np.zeros(channels, dtype=np.float32))


def init_params(config: ModelConfig, rng: np.random.Generator) -> ParameterStore:
    """Deterministic initialization of every network from one generator."""
    k = config.kernel
    t: dict = {}

    c = config.enc_channels
    chans = [config.n_mels, c, c, c]
    for i in range(3):
        _init_wn_conv(t, f"encoder.block{i}.conv", chans[i + 1], chans[i], k, rng)
        _init_norm(t, f"encoder.block{i}.norm", chans[i + 1])
    _init_wn_conv(t, "encoder.head", config.codebook_size, c, k, rng)
    t["codebook"] = ad.parameter(
        (rng.standard_normal((config.content_dim, config.codebook_size)) * 0.1).astype(np.float32)
    )

    c = config.dec_channels
    dec_in = config.content_dim + 2 + config.speaker_embed_dim
    chans = [dec_in, c, c, c, c]
    for i in range(4):
        _init_wn_conv(t, f"decoder.block{i}.conv", chans[i + 1], chans[i], k, rng)
        _init_norm(t, f"decoder.block{i}.norm", chans[i + 1])
    _init_wn_conv(t, "decoder.mu_head", config.n_mels, c, k, rng)
    _init_wn_conv(t, "decoder.logsig_head", config.n_mels, c, k, rng)
    t["decoder.speaker_embed"] = ad.parameter(
        (rng.standard_normal((config.num_speakers, config.speaker_embed_dim)) * 0.1).astype(
            np.float32
        )
    )

    c = config.pext_channels
    chans = [config.n_mels, c, c, c]
    for i in range(3):
        _init_wn_conv(t, f"f0_extractor.block{i}.conv", chans[i + 1], chans[i], k, rng)
        _init_norm(t, f"f0_extractor.block{i}.norm", chans[i + 1])
    _init_wn_conv(t, "f0_extractor.head", 1, c, k, rng)

    c = config.cls_channels
    chans = [config.n_mels, c, c]
    for i in range(2):
        _init_wn_conv(t, f"classifier.block{i}.conv", chans[i + 1], chans[i], k, rng)
        _init_norm(t, f"classifier.block{i}.norm", chans[i + 1])
    _init_wn_conv(t, "classifier.head", config.num_speakers, c, k, rng)

    return ParameterStore(t)


# -- forward passes -------------------------------------------------------------


def _wn_conv(store, prefix, x, pad, stride=1):
    v, g, b = store[f"{prefix}.v"], store[f"{prefix}.g"], store[f"{prefix}.b"]
    c_out = v.shape[0]
    norm = ad.sqrt(ad.tsum(v * v, axis=(1, 2), keepdims=True) + 1e-12)
    w = v * ad.reshape(g, (c_out, 1, 1)) / norm
    y = ad.conv1d(x, w, stride=stride, pad=pad)
    return y + ad.reshape(b, (c_out, 1))


def _block(store, prefix, x, pad, stride=1):
    y = _wn_conv(store, f"{prefix}.conv", x, pad, stride)
    y = ad.layer_norm(y, store[f"{prefix}.norm.gain"], store[f"{prefix}.norm.bias"])
    return ad.relu(y)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.constant(x)


def encode_content(
    x,
    store: ParameterStore,
    config: ModelConfig,
    tau: float,
    rng: np.random.Generator,
    hard: bool = False,
) -> ContentCode:
    """Content code from a standardized log-mel input.

    ``hard`` replaces the Gumbel-Softmax draw with a deterministic argmax
    one-hot (inference only; the hard path carries no gradient).
    """
    h = _as_tensor(x)
    for i in range(3):
        h = _block(store, f"encoder.block{i}", h, config.pad)
    logits = _wn_conv(store, "encoder.head", h, config.pad)
    if hard:
        idx = np.argmax(logits.data, axis=-2)
        onehot = np.zeros_like(logits.data)
        np.put_along_axis(onehot, idx[..., None, :], 1.0, axis=-2)
        assignments = ad.constant(onehot)
    else:
        assignments = ad.gumbel_softmax(logits, tau=tau, rng=rng, axis=-2)
    embeddings = ad.matmul(store["codebook"], assignments)
    return ContentCode(embeddings=embeddings, soft_assignments=assignments)


def _conditioning(content: ContentCode, f0_values, speaker, store, config) -> Tensor:
    emb_table = store["decoder.speaker_embed"]
    c = content.embeddings
    batched = c.data.ndim == 3
    f0 = np.asarray(f0_values, dtype=np.float32)
    if f0.ndim != (2 if batched else 1):
        raise DimensionError("F0 pattern rank does not match content batch rank")
    t_frames = c.data.shape[-1]
    if f0.shape[-1] != t_frames:
        raise DimensionError(
            f"content has {t_frames} frames but F0 pattern has {f0.shape[-1]}"
        )
    f0_row = f0[..., None, :]
    mask_row = (f0_row != 0).astype(np.float32)
    speaker0 = np.asarray(speaker, dtype=np.int64) - 1  # public ids are 1-based
    if (speaker0 < 0).any() or (speaker0 >= config.num_speakers).any():
        raise DimensionError(f"speaker index out of range 1..{config.num_speakers}")
    if batched:
        emb = ad.embedding(emb_table, np.broadcast_to(speaker0, c.data.shape[:1]))
        emb = ad.reshape(emb, (c.data.shape[0], config.speaker_embed_dim, 1))
        emb = ad.broadcast_to(emb, (c.data.shape[0], config.speaker_embed_dim, t_frames))
    else:
        emb = ad.embedding(emb_table, np.atleast_1d(speaker0))
        emb = ad.reshape(emb, (config.speaker_embed_dim, 1))
        emb = ad.broadcast_to(emb, (config.speaker_embed_dim, t_frames))
    rows = [c, ad.constant(f0_row), ad.constant(mask_row), emb]
    return ad.concat(rows, axis=-2)


def decode(
    content: ContentCode,
    f0_values,
    speaker,
    store: ParameterStore,
    config: ModelConfig,
) -> DecoderOutput:
    """Spectrogram mean and std from (content, F0 pattern, speaker index)."""
    h = _conditioning(content, f0_values, speaker, store, config)
    for i in range(4):
        h = _block(store, f"decoder.block{i}", h, config.pad)
    mu = _wn_conv(store, "decoder.mu_head", h, config.pad)
    log_sigma = ad.clamp(
        _wn_conv(store, "decoder.logsig_head", h, config.pad), LOG_SIGMA_MIN, LOG_SIGMA_MAX
    )
    return DecoderOutput(mu=mu, sigma=ad.exp(log_sigma), log_sigma=log_sigma)


def extract_pitch(m, store: ParameterStore, config: ModelConfig) -> Tensor:
    """Per-frame log-F0 estimate from a log-mel-domain input: (.., T)."""
    h = _as_tensor(m)
    batched = h.data.ndim == 3
    for i in range(3):
        h = _block(store, f"f0_extractor.block{i}", h, config.pad)
    out = _wn_conv(store, "f0_extractor.head", h, config.pad)
    shape = (out.data.shape[0], out.data.shape[-1]) if batched else (out.data.shape[-1],)
    return ad.reshape(out, shape)


def classify_speaker(m, store: ParameterStore, config: ModelConfig) -> Tensor:
    """Per-segment speaker logits, shape (.., S, ceil(ceil(T/4)/4))."""
    h = _as_tensor(m)
    for i in range(2):
        h = _block(store, f"classifier.block{i}", h, config.pad, stride=4)
    return _wn_conv(store, "classifier.head", h, config.pad)


# -- checkpoint i/o -------------------------------------------------------------


def save_params(path, store: ParameterStore, config_text: str = "") -> None:
    write_container(path, config_text, store.arrays())


def load_params(path):
    """Returns (ParameterStore, config text). Bit-exact with save_params."""
    text, arrays = read_container(path)
    tensors = {name: ad.parameter(arr) for name, arr in arrays.items()}
    return ParameterStore(tensors), text
