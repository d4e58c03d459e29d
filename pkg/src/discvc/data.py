"""Dataset plumbing: the WAV manifest, the feature cache, fitted-statistics
files, and a seeded synthetic corpus generator so everything runs without
external data.

Cache layout (one directory):
    stats.feat              mel mean/std + per-speaker F0 stats
    s01_utt000.feat ...     one container per utterance:
                            logmel (standardized), f0, speaker

The synthetic corpus is formant-filtered sawtooth phonation: each speaker
has a base pitch and a vowel inventory (formant triples); each clip is a
few vowel segments under a slowly wandering pitch contour with silence at
the edges and a mild noise floor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from . import dsp
from .dsp import AudioClip, AudioConfig, StandardizationStats
from .errors import DataError
from .pitch import LogF0Pattern, SpeakerF0Stats, estimate_f0, speaker_stats
from .rng import make_rng
from .serialization import read_container, write_container

SPLITS = ("train", "test")


@dataclass
class ManifestEntry:
    speaker_name: str
    speaker_index: int
    path: Path
    split: str


@dataclass
class DatasetManifest:
    entries: list
    root: Path

    def __post_init__(self):
        if not self.entries:
            raise DataError("empty manifest")
        indices = sorted({e.speaker_index for e in self.entries})
        if indices != list(range(1, len(indices) + 1)):
            raise DataError(f"speaker indices must be dense from 1, got {indices}")
        for e in self.entries:
            if e.split not in SPLITS:
                raise DataError(f"{e.path}: split must be one of {SPLITS}, got {e.split!r}")
            if not (self.root / e.path).exists():
                raise DataError(f"manifest references missing file {self.root / e.path}")

    @property
    def num_speakers(self) -> int:
        return max(e.speaker_index for e in self.entries)

    def split_entries(self, split: str):
        return [e for e in self.entries if e.split == split]

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        entries = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"speaker", "index", "path", "split"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise DataError(f"{path}: manifest needs columns {sorted(required)}")
            for row in reader:
                entries.append(
                    ManifestEntry(
                        speaker_name=row["speaker"],
                        speaker_index=int(row["index"]),
                        path=Path(row["path"]),
                        split=row["split"],
                    )
                )
        return cls(entries=entries, root=path.parent)

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["speaker", "index", "path", "split"])
            for e in self.entries:
                writer.writerow([e.speaker_name, e.speaker_index, e.path.as_posix(), e.split])


# -- synthetic corpus -------------------------------------------------------------

SPEAKER_VOICES = [
    # base F0 (Hz), vowel formant triples (Hz)
    (125.0, [(730, 1090, 2440), (270, 2290, 3010), (530, 1840, 2480)]),
    (205.0, [(850, 1220, 2810), (310, 2790, 3310), (610, 2330, 2990)]),
    (155.0, [(660, 1720, 2410), (400, 1900, 2550), (300, 870, 2240)]),
    (260.0, [(800, 1150, 2900), (350, 2500, 3300), (500, 1600, 2700)]),
]


def _resonator(x: np.ndarray, freq: float, sr: int, bandwidth: float = 120.0) -> np.ndarray:
    r = np.exp(-np.pi * bandwidth / sr)
    theta = 2.0 * np.pi * freq / sr
    b = [1.0 - r]
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return scipy.signal.lfilter(b, a, x)


def synth_utterance(
    speaker_index: int,
    rng: np.random.Generator,
    sr: int = 16000,
    seconds: float = 1.2,
    edge_silence: float = 0.12,
) -> AudioClip:
    """One voiced clip: sawtooth phonation through per-vowel formant filters."""
    base_f0, vowels = SPEAKER_VOICES[(speaker_index - 1) % len(SPEAKER_VOICES)]
    n = int(seconds * sr)
    t = np.arange(n) / sr

    # per-utterance register (+-2 st) plus within-utterance movement (~+-4 st):
    # together they spread each speaker's voiced frames over a wide F0 band
    register = 2.0 ** (rng.uniform(-2.0, 2.0) / 12.0)
    w1, w2 = rng.uniform(0.8, 2.0), rng.uniform(2.5, 4.5)
    ph1, ph2 = rng.uniform(0, 2 * np.pi, 2)
    depth = rng.uniform(0.16, 0.28)
    contour = base_f0 * register * 2.0 ** (
        depth * np.sin(2 * np.pi * w1 * t + ph1) + 0.10 * np.sin(2 * np.pi * w2 * t + ph2)
    )
    phase = np.cumsum(contour) / sr
    source = 2.0 * (phase % 1.0) - 1.0  # sawtooth, full harmonic stack

    # vowel segments with their own formant filters
    n_segments = int(rng.integers(2, 5))
    bounds = np.linspace(0, n, n_segments + 1, dtype=int)
    voiced = np.zeros(n)
    for k in range(n_segments):
        f1, f2, f3 = vowels[int(rng.integers(0, len(vowels)))]
        lo, hi = bounds[k], bounds[k + 1]
        seg = np.zeros(n)
        seg[lo:hi] = source[lo:hi]
        shaped = (
            1.0 * _resonator(seg, f1, sr)
            + 0.6 * _resonator(seg, f2, sr)
            + 0.35 * _resonator(seg, f3, sr)
            + 0.25 * seg  # keep the full harmonic stack under every vowel
        )
        voiced[lo:hi] = shaped[lo:hi]

    fade = int(0.02 * sr)
    envelope = np.ones(n)
    envelope[:fade] = np.linspace(0, 1, fade)
    envelope[-fade:] = np.linspace(1, 0, fade)
    voiced *= envelope
    voiced += 0.002 * rng.standard_normal(n)
    voiced *= 0.45 / np.max(np.abs(voiced))

    pad = np.zeros(int(edge_silence * sr))
    return AudioClip(np.concatenate([pad, voiced, pad]), sr)


def generate_corpus(
    out_dir,
    num_speakers: int = 2,
    train_per_speaker: int = 8,
    test_per_speaker: int = 8,
    seed: int = 0,
    sr: int = 16000,
) -> Path:
    """Write a seeded synthetic corpus plus manifest.csv; returns the manifest path."""
    if not 2 <= num_speakers <= len(SPEAKER_VOICES):
        raise DataError(f"synthetic corpus supports 2..{len(SPEAKER_VOICES)} speakers")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in range(1, num_speakers + 1):
        for k in range(train_per_speaker + test_per_speaker):
            rng = make_rng(seed, s, k)
            clip = synth_utterance(s, rng, sr=sr, seconds=float(rng.uniform(1.0, 1.5)))
            split = "train" if k < train_per_speaker else "test"
            rel = Path(f"spk{s}") / f"utt{k:03d}.wav"
            (out_dir / rel.parent).mkdir(exist_ok=True)
            dsp.write_wav(out_dir / rel, clip)
            entries.append(
                ManifestEntry(
                    speaker_name=f"spk{s}", speaker_index=s, path=rel, split=split
                )
            )
    manifest = DatasetManifest(entries=entries, root=out_dir)
    manifest.write(out_dir / "manifest.csv")
    return out_dir / "manifest.csv"


# -- feature cache -------------------------------------------------------------


def _entry_id(entry: ManifestEntry) -> str:
    return f"s{entry.speaker_index:02d}_{entry.path.stem}"


def preprocess(
    manifest: DatasetManifest,
    out_dir,
    config: AudioConfig = AudioConfig(),
    skip_bad: bool = False,
    log=None,
):
    """Extract aligned (standardized log-mel, F0) pairs for every utterance.

    Standardization and speaker F0 statistics are fitted on the train split
    only. Returns (cache dir, number of processed utterances).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    features = {}
    failures = []
    for entry in manifest.entries:
        try:
            clip = dsp.read_wav(manifest.root / entry.path)
            if clip.sample_rate != config.sample_rate:
                raise DataError(
                    f"{entry.path}: sample rate {clip.sample_rate} != configured {config.sample_rate}"
                )
            logmel = dsp.log_mel_spectrogram(clip, config)
            f0 = estimate_f0(clip, config)
            if len(f0) != logmel.shape[1]:
                raise DataError(f"{entry.path}: feature length mismatch")
            features[_entry_id(entry)] = (entry, logmel, f0)
        except DataError as exc:
            if not skip_bad:
                raise
            failures.append(str(exc))
            if log:
                log(f"skipping {entry.path}: {exc}")

    train_items = [v for v in features.values() if v[0].split == "train"]
    if not train_items:
        raise DataError("no usable train-split utterances")
    mel_stats = dsp.fit_standardization([lm for _, lm, _ in train_items])

    f0_stats = {}
    for s in range(1, manifest.num_speakers + 1):
        patterns = [f0 for e, _, f0 in train_items if e.speaker_index == s]
        if patterns:
            f0_stats[s] = speaker_stats(patterns, speaker=s)

    stats_arrays = {
        "mel_mean": mel_stats.mean.astype(np.float32),
        "mel_std": mel_stats.std.astype(np.float32),
        "f0_mean": np.array(
            [f0_stats[s].mean if s in f0_stats else 0.0 for s in range(1, manifest.num_speakers + 1)],
            dtype=np.float32,
        ),
        "f0_std": np.array(
            [f0_stats[s].std if s in f0_stats else 0.0 for s in range(1, manifest.num_speakers + 1)],
            dtype=np.float32,
        ),
    }
    write_container(
        out_dir / "stats.feat",
        f"kind=stats\nnum_speakers={manifest.num_speakers}\n",
        stats_arrays,
    )

    for uid, (entry, logmel, f0) in sorted(features.items()):
        x = dsp.standardize(logmel, mel_stats)
        blob = (
            f"kind=features\nid={uid}\nspeaker={entry.speaker_index}\n"
            f"split={entry.split}\nsource={entry.path.as_posix()}\n"
        )
        write_container(
            out_dir / f"{uid}.feat",
            blob,
            {
                "logmel": x.values,
                "f0": f0.values.astype(np.float32),
                "speaker": np.array([entry.speaker_index], dtype=np.float32),
            },
        )
    return out_dir, len(features), failures


def _parse_blob(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def load_stats(cache_dir):
    """Returns (StandardizationStats, {speaker: SpeakerF0Stats}, num_speakers)."""
    path = Path(cache_dir) / "stats.feat"
    if not path.exists():
        raise DataError(f"no stats.feat in {cache_dir}; run preprocess first")
    blob, arrays = read_container(path)
    meta = _parse_blob(blob)
    if meta.get("kind") != "stats":
        raise DataError(f"{path}: expected a stats container, got kind={meta.get('kind')!r}")
    n = int(meta["num_speakers"])
    mel = StandardizationStats(
        mean=arrays["mel_mean"].astype(np.float64), std=arrays["mel_std"].astype(np.float64)
    )
    f0_stats = {}
    for s in range(1, n + 1):
        std = float(arrays["f0_std"][s - 1])
        if std > 0:
            f0_stats[s] = SpeakerF0Stats(
                mean=float(arrays["f0_mean"][s - 1]), std=std, speaker=s
            )
    return mel, f0_stats, n


def load_cache_entry(path):
    """Returns (meta dict, standardized logmel (F,T), LogF0Pattern, speaker index)."""
    blob, arrays = read_container(path)
    meta = _parse_blob(blob)
    if meta.get("kind") != "features":
        raise DataError(f"{path}: expected a features container, got kind={meta.get('kind')!r}")
    f0 = LogF0Pattern(arrays["f0"].astype(np.float64))
    return meta, arrays["logmel"], f0, int(arrays["speaker"][0])


def load_dataset(cache_dir, split: str = "train") -> dict:
    """Trainer-shaped dataset {speaker: [(logmel, f0), ...]} from a cache dir."""
    cache_dir = Path(cache_dir)
    dataset: dict = {}
    for path in sorted(cache_dir.glob("*.feat")):
        if path.name == "stats.feat":
            continue
        meta, logmel, f0, speaker = load_cache_entry(path)
        if meta.get("split") != split:
            continue
        dataset.setdefault(speaker, []).append((logmel, f0.values.astype(np.float32)))
    if not dataset:
        raise DataError(f"no '{split}' entries in cache {cache_dir}")
    return dataset


def list_cache_entries(cache_dir, split=None) -> list:
    """(uid, meta) pairs for every feature container in the cache."""
    out = []
    for path in sorted(Path(cache_dir).glob("*.feat")):
        if path.name == "stats.feat":
            continue
        blob, _ = read_container(path)
        meta = _parse_blob(blob)
        if split is None or meta.get("split") == split:
            out.append((path.stem, meta))
    return out
