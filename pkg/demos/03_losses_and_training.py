"""The training objective and a miniature optimization run.

Shows the loss terms on a random batch, the weighted recombination, and a
couple hundred steps of real training on a micro corpus. The full-size runs
go through the CLI (see README).

Run:  python3 demos/03_losses_and_training.py   (~1 minute)
"""

import tempfile
from pathlib import Path

import numpy as np

from discvc import data, dsp, losses, model as mdl, training as tr
from discvc.rng import make_rng

work = Path(tempfile.mkdtemp(prefix="discvc_demo_"))
print(f"working under {work}")

# --- a micro corpus and its feature cache ----------------------------------------
manifest_path = data.generate_corpus(work / "corpus", num_speakers=2,
                                     train_per_speaker=3, test_per_speaker=1, seed=1)
manifest = data.DatasetManifest.read(manifest_path)
cache_dir, count, _ = data.preprocess(manifest, work / "cache")
dataset = data.load_dataset(cache_dir)
print(f"cached {count} utterances; train split: "
      f"{ {s: len(u) for s, u in dataset.items()} }")

# --- one batch, all loss terms ---------------------------------------------------
model_cfg = mdl.ModelConfig(num_speakers=2, codebook_size=32, enc_channels=32,
                            dec_channels=32, pext_channels=24, cls_channels=24,
                            speaker_embed_dim=8)
store = mdl.init_params(model_cfg, make_rng(0))
print(f"model: {store.num_params:,} parameters in {len(store.names())} tensors")

batch = tr.make_batch(dataset, t_crop=48, batch_size=4, rng=make_rng(0, 1, 0))
breakdown, total = losses.disc_losses(batch, store, model_cfg, tau=2.0, rng=make_rng(0, 1, 1))
print("\nloss terms on a random batch (fresh model):")
for field in losses.LOSS_FIELDS:
    print(f"  {field:>5s} = {getattr(breakdown, field):10.4f}")

eta, eta_p, eta_t = losses.loss_weights(model_cfg.n_mels, 48)
print(f"weights: eta={eta:.2e}, eta_p={eta_p:.2e}, eta_t={eta_t:.2e}")
print(f"recombination check: {breakdown.recombined(eta, eta_p, eta_t):.6f} "
      f"== total {breakdown.total:.6f}")

# --- a short optimization run ---------------------------------------------------
train_cfg = tr.TrainConfig(steps=200, batch_size=4, t_crop=48, seed=7,
                           tau_anneal_steps=150, checkpoint_every=100,
                           learning_rate=4e-4)
marks = {}

def watch(step, bd):
    if step in (10, 50, 100, 200):
        marks[step] = bd.total
        print(f"  step {step:>4d}: total {bd.total:.4f}  like {bd.like:.1f}  "
              f"p1 {bd.p1:.2f}  t1 {bd.t1:.3f}")

print("\ntraining 200 steps on the micro corpus:")
result = tr.train(dataset, model_cfg, train_cfg, work / "run", progress=watch)
print(f"total loss {marks[10]:.3f} (step 10) -> {marks[200]:.3f} (step 200)")
print(f"checkpoint written to {result.checkpoint_path}")

# --- determinism: resume and get the identical trajectory --------------------------
resumed = tr.train(dataset, model_cfg, train_cfg, work / "run",
                   resume_from=result.checkpoint_path)
print(f"resume from the final checkpoint adds {len(resumed.history)} steps (already done)")

rerun = tr.train(dataset, model_cfg, train_cfg, work / "rerun")
identical = all(
    a.as_row() == b.as_row() for a, b in zip(result.history, rerun.history)
)
print(f"fresh rerun reproduces the loss sequence exactly: {identical}")
