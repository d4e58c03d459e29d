"""Optimization loop.

A training sample is one utterance per speaker, jointly random-cropped to a
fixed frame count; a minibatch stacks ``batch_size`` such samples. Every
stochastic decision at step k is drawn from a Philox stream keyed on
(seed, k, purpose), so resuming from any checkpoint reproduces the remaining
trajectory bit-for-bit.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, DataError
from .losses import LOSS_FIELDS, Batch, LossBreakdown, disc_losses
from .model import ModelConfig, ParameterStore, init_params
from .rng import make_rng
from .serialization import read_container, write_container

_BATCH_STREAM = 0
_LOSS_STREAM = 1


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    t_crop: int = 128
    tau_start: float = 2.0
    tau_end: float = 0.5
    tau_anneal_steps: int = 5000
    checkpoint_every: int = 500
    no_aux: bool = False


def tau_at_step(config: TrainConfig, step: int) -> float:
    """Linear anneal from tau_start to tau_end, then hold."""
    frac = min(1.0, step / max(1, config.tau_anneal_steps))
    return config.tau_start + (config.tau_end - config.tau_start) * frac


def _validate_dataset(dataset: dict) -> list:
    if not dataset:
        raise DataError("empty dataset")
    speakers = sorted(dataset)
    if speakers != list(range(1, len(speakers) + 1)):
        raise DataError(f"speaker indices must be dense from 1, got {speakers}")
    for s in speakers:
        if not dataset[s]:
            raise DataError(f"speaker {s} has no utterances")
    return speakers


def _crop_or_pad(x: np.ndarray, f0: np.ndarray, t_crop: int, rng: np.random.Generator):
    t_u = x.shape[1]
    if t_u > t_crop:
        off = int(rng.integers(0, t_u - t_crop + 1))
        return x[:, off : off + t_crop], f0[off : off + t_crop]
    if t_u == t_crop:
        return x, f0
    pad = t_crop - t_u  # pad frames: zero features, unvoiced F0
    return (
        np.pad(x, ((0, 0), (0, pad))),
        np.pad(f0, (0, pad)),
    )


def make_batch(dataset: dict, t_crop: int, batch_size: int, rng: np.random.Generator) -> Batch:
    """One minibatch: batch_size samples x one utterance per speaker."""
    speakers = _validate_dataset(dataset)
    xs, f0s, sids = [], [], []
    for _ in range(batch_size):
        for s in speakers:
            utts = dataset[s]
            idx = int(rng.integers(0, len(utts))) if len(utts) > 1 else 0
            x, f0 = utts[idx]
            x_c, f0_c = _crop_or_pad(np.asarray(x), np.asarray(f0), t_crop, rng)
            xs.append(x_c)
            f0s.append(f0_c)
            sids.append(s)
    return Batch(x=np.stack(xs), f0=np.stack(f0s), speakers=np.array(sids))


def make_batches(dataset: dict, config: TrainConfig, start_step: int = 1):
    """Infinite iterator of (step, batch) with per-step derived randomness."""
    step = start_step
    while True:
        rng = make_rng(config.seed, step, _BATCH_STREAM)
        yield step, make_batch(dataset, config.t_crop, config.batch_size, rng)
        step += 1


class AdamState:
    """Per-tensor first/second movalues plus the shared step counter."""

    def __init__(self, store: ParameterStore):
        self.m = {k: np.zeros_like(t.data) for k, t in store.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in store.items()}
        self.count = 0

    def arrays(self) -> dict:
        out = {}
        for k, arr in self.m.items():
            out[f"opt.m.{k}"] = arr
        for k, arr in self.v.items():
            out[f"opt.v.{k}"] = arr
        return out

    @classmethod
    def from_arrays(cls, store: ParameterStore, arrays: dict, count: int) -> "AdamState":
        state = cls(store)
        state.count = count
        for k in state.m:
            try:
                state.m[k] = arrays[f"opt.m.{k}"]
                state.v[k] = arrays[f"opt.v.{k}"]
            except KeyError as exc:
                raise CheckpointError(f"checkpoint missing optimizer state for {k}") from exc
        return state


def clip_gradients(store: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for _, tensor in store.items():
        if tensor.grad is not None:
            total += float(np.sum(tensor.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = np.float32(max_norm / norm)
        for _, tensor in store.items():
            if tensor.grad is not None:
                tensor.grad *= scale
    return norm


def adam_update(store: ParameterStore, state: AdamState, config: TrainConfig) -> None:
    state.count += 1
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**state.count
    bias2 = 1.0 - b2**state.count
    lr = np.float32(config.learning_rate)
    eps = np.float32(config.adam_eps)
    for name, tensor in store.items():
        g = tensor.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        m_hat = m / np.float32(bias1)
        v_hat = v / np.float32(bias2)
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train_step(
    batch: Batch,
    store: ParameterStore,
    opt: AdamState,
    model_config: ModelConfig,
    config: TrainConfig,
    rng: np.random.Generator,
    tau: float,
) -> LossBreakdown:
    """Forward, backward, clip, Adam update; returns the pre-update losses."""
    store.zero_grads()
    breakdown, total = disc_losses(
        batch, store, model_config, tau=tau, rng=rng, no_aux=config.no_aux
    )
    total.backward()
    clip_gradients(store, config.grad_clip)
    adam_update(store, opt, config)
    return breakdown


# -- checkpoint bookkeeping -------------------------------------------------------


def save_checkpoint(path, store: ParameterStore, opt: AdamState, step: int, config_text: str):
    blob = f"kind=checkpoint\nstep={step}\n---\n{config_text}"
    tensors = dict(store.arrays())
    tensors.update(opt.arrays())
    write_container(path, blob, tensors)


def load_checkpoint(path):
    """Returns (store, optimizer state, step, embedded config text)."""
    blob, arrays = read_container(path)
    header, _, config_text = blob.partition("---\n")
    step = None
    for line in header.splitlines():
        if line.startswith("step="):
            step = int(line.split("=", 1)[1])
    if step is None:
        raise CheckpointError(f"{path}: checkpoint blob carries no step marker")
    params = {k: ad.parameter(v) for k, v in arrays.items() if not k.startswith("opt.")}
    store = ParameterStore(params)
    opt = AdamState.from_arrays(store, arrays, count=step)
    return store, opt, step, config_text


@dataclass
class TrainResult:
    store: ParameterStore
    checkpoint_path: Path
    log_path: Path
    history: list  # LossBreakdown per step of this invocation


def train(
    dataset: dict,
    model_config: ModelConfig,
    config: TrainConfig,
    out_dir,
    config_text: str = "",
    resume_from=None,
    progress=None,
) -> TrainResult:
    """Run (or resume) the optimization loop and emit checkpoints plus a CSV log.

    The log has one row per step: step, the nine loss scalars, wall-clock ms.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if resume_from is not None:
        store, opt, start_step, _ = load_checkpoint(resume_from)
    else:
        store = init_params(model_config, make_rng(config.seed))
        opt = AdamState(store)
        start_step = 0

    log_path = out_dir / "train_log.csv"
    fresh_log = resume_from is None or not log_path.exists()
    log_file = open(log_path, "w" if fresh_log else "a", newline="")
    writer = csv.writer(log_file)
    if fresh_log:
        writer.writerow(["step", *LOSS_FIELDS, "wall_ms"])

    ckpt_path = out_dir / "model.ckpt"
    history = []
    try:
        for step in range(start_step + 1, config.steps + 1):
            t0 = time.perf_counter()
            batch_rng = make_rng(config.seed, step, _BATCH_STREAM)
            loss_rng = make_rng(config.seed, step, _LOSS_STREAM)
            batch = make_batch(dataset, config.t_crop, config.batch_size, batch_rng)
            breakdown = train_step(
                batch, store, opt, model_config, config, loss_rng, tau_at_step(config, step)
            )
            opt.count = step  # keep Adam bias correction aligned with the step id
            wall_ms = (time.perf_counter() - t0) * 1000.0
            writer.writerow([step, *[f"{v:.10g}" for v in breakdown.as_row()], f"{wall_ms:.2f}"])
            history.append(breakdown)
            if progress is not None:
                progress(step, breakdown)
            if step % config.checkpoint_every == 0 or step == config.steps:
                log_file.flush()
                save_checkpoint(ckpt_path, store, opt, step, config_text)
    finally:
        log_file.close()
    return TrainResult(store=store, checkpoint_path=ckpt_path, log_path=log_path, history=history)


def read_log(path) -> list:
    """Training log rows as dicts with floats."""
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k == "step" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
