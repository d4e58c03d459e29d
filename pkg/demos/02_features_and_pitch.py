"""Feature pipeline walk-through: synthetic speech in, log-mel and F0 out,
and back to audio through Griffin-Lim.

Run:  python3 demos/02_features_and_pitch.py
Writes WAVs (and a PNG when matplotlib is available) into demos/output/.
"""

from pathlib import Path

import numpy as np

from discvc import data, dsp, pitch
from discvc.rng import make_rng

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)
cfg = dsp.AudioConfig()

# --- make a clip with a known pitch contour --------------------------------------
clip = data.synth_utterance(speaker_index=2, rng=make_rng(42, 2, 0))
dsp.write_wav(out_dir / "source.wav", clip)
print(f"synthetic clip: {clip.duration:.2f} s at {clip.sample_rate} Hz")

# --- spectrogram features ---------------------------------------------------
logmel = dsp.log_mel_spectrogram(clip, cfg)
print(f"log-mel: {logmel.shape[0]} bands x {logmel.shape[1]} frames "
      f"(hop {cfg.hop / cfg.sample_rate * 1000:.0f} ms)")

stats = dsp.fit_standardization([logmel])
x = dsp.standardize(logmel, stats)
print(f"standardized: mean {x.values.mean():+.4f}, std {x.values.std():.4f}")

# --- pitch tracking ---------------------------------------------------
pattern = pitch.estimate_f0(clip, cfg)
voiced = pattern.voiced_values
print(f"F0 pattern: {len(pattern)} frames, {pattern.voiced_mask.mean():.0%} voiced, "
      f"median {np.exp(np.median(voiced)):.1f} Hz")
assert len(pattern) == logmel.shape[1], "features and F0 share the frame grid"

# --- per-speaker statistics and the target-pattern transform ----------------------
stats_by_speaker = {}
for s in (1, 2):
    pats = [pitch.estimate_f0(data.synth_utterance(s, make_rng(42, s, k)), cfg) for k in range(4)]
    stats_by_speaker[s] = pitch.speaker_stats(pats, s)
    print(f"speaker {s}: mean F0 {np.exp(stats_by_speaker[s].mean):.1f} Hz, "
          f"log-std {stats_by_speaker[s].std:.3f}")

moved = pitch.target_f0(pattern, stats_by_speaker[2], stats_by_speaker[1], beta=0.0)
print(f"pattern mapped 2->1: median {np.exp(np.median(moved.voiced_values)):.1f} Hz "
      f"(unvoiced frames untouched: {(moved.values == 0).sum()})")

# --- resynthesis ---------------------------------------------------
recovered = dsp.griffin_lim(x, stats, iters=60, config=cfg)
dsp.write_wav(out_dir / "resynthesized.wav", recovered)
re_pattern = pitch.estimate_f0(recovered, cfg)
print(f"Griffin-Lim round trip: {re_pattern.voiced_mask.mean():.0%} voiced, "
      f"median {np.exp(np.median(re_pattern.voiced_values)):.1f} Hz")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    ax1.imshow(logmel, origin="lower", aspect="auto", cmap="magma")
    ax1.set_ylabel("mel band")
    ax1.set_title("log-mel spectrogram")
    frames = np.arange(len(pattern))
    hz = np.where(pattern.voiced_mask, np.exp(pattern.values), np.nan)
    ax2.plot(frames, hz, ".", markersize=3)
    ax2.set_ylabel("F0 (Hz)")
    ax2.set_xlabel("frame")
    ax2.set_title("estimated pitch contour")
    fig.tight_layout()
    fig.savefig(out_dir / "features.png", dpi=120)
    print(f"wrote {out_dir / 'features.png'}")
except ImportError:
    print("matplotlib not installed; skipping the plot")
