"""Dataset plumbing: manifest validation, synthetic corpus, cache round trips."""

import numpy as np
import pytest

from discvc import data, dsp, pitch
from discvc.dsp import AudioConfig
from discvc.errors import DataError
from discvc.rng import make_rng

CFG = AudioConfig(n_mels=24)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest_path = data.generate_corpus(
        root, num_speakers=2, train_per_speaker=3, test_per_speaker=2, seed=5
    )
    return data.DatasetManifest.read(manifest_path)


@pytest.fixture(scope="module")
def cache(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cache")
    cache_dir, count, failures = data.preprocess(corpus, out, config=CFG)
    assert count == 10 and not failures
    return cache_dir


# -- manifest -----------------------------------------------------------------


def test_manifest_round_trip(corpus, tmp_path):
    path = tmp_path / "m.csv"
    corpus.write(path)
    # rewrite root-relative paths against the original corpus root
    text = path.read_text()
    (corpus.root / "m2.csv").write_text(text)
    back = data.DatasetManifest.read(corpus.root / "m2.csv")
    assert back.num_speakers == corpus.num_speakers
    assert len(back.entries) == len(corpus.entries)


def test_manifest_rejects_sparse_indices(corpus):
    entries = [e for e in corpus.entries if e.speaker_index == 1]
    bad = [data.ManifestEntry(e.speaker_name, 2, e.path, e.split) for e in entries]
    with pytest.raises(DataError):
        data.DatasetManifest(entries=bad, root=corpus.root)


def test_manifest_rejects_missing_file(corpus):
    bad = corpus.entries + [data.ManifestEntry("ghost", 1, data.Path("nope.wav"), "train")]
    with pytest.raises(DataError):
        data.DatasetManifest(entries=bad, root=corpus.root)


def test_manifest_rejects_bad_split(corpus):
    e = corpus.entries[0]
    with pytest.raises(DataError):
        data.DatasetManifest(
            entries=[data.ManifestEntry(e.speaker_name, 1, e.path, "dev")], root=corpus.root
        )


# -- synthetic corpus -----------------------------------------------------------


def test_synth_utterance_is_trackable():
    clip = data.synth_utterance(1, make_rng(3, 1, 0))
    pat = pitch.estimate_f0(clip, CFG)
    assert pat.voiced_mask.mean() > 0.5
    base = data.SPEAKER_VOICES[0][0]
    median = np.exp(np.median(pat.voiced_values))
    assert base * 0.7 < median < base * 1.4


def test_synth_corpus_deterministic(tmp_path):
    m1 = data.generate_corpus(tmp_path / "a", num_speakers=2, train_per_speaker=1,
                              test_per_speaker=1, seed=9)
    m2 = data.generate_corpus(tmp_path / "b", num_speakers=2, train_per_speaker=1,
                              test_per_speaker=1, seed=9)
    for e1, e2 in zip(data.DatasetManifest.read(m1).entries, data.DatasetManifest.read(m2).entries):
        b1 = (m1.parent / e1.path).read_bytes()
        b2 = (m2.parent / e2.path).read_bytes()
        assert b1 == b2


def test_speakers_have_distinct_pitch():
    stats = {}
    for s in (1, 2):
        pats = [pitch.estimate_f0(data.synth_utterance(s, make_rng(1, s, k)), CFG) for k in range(3)]
        stats[s] = pitch.speaker_stats(pats, s)
    assert abs(stats[1].mean - stats[2].mean) > 0.3  # well separated in log-Hz


# -- preprocessing / cache -----------------------------------------------------------


def test_cache_lengths_aligned(cache):
    for path in sorted(cache.glob("s*_*.feat")):
        _, logmel, f0, _ = data.load_cache_entry(path)
        assert logmel.shape[1] == len(f0)
        assert logmel.shape[0] == CFG.n_mels


def test_cache_stats_exclude_test_split(corpus, cache):
    mel_stats, f0_stats, n = data.load_stats(cache)
    assert n == 2
    # recompute from train split only; must match the stored stats
    logmels = []
    for e in corpus.split_entries("train"):
        clip = dsp.read_wav(corpus.root / e.path)
        logmels.append(dsp.log_mel_spectrogram(clip, CFG))
    direct = dsp.fit_standardization(logmels)
    np.testing.assert_allclose(mel_stats.mean, direct.mean, atol=1e-6)
    np.testing.assert_allclose(mel_stats.std, direct.std, atol=1e-6)


def test_cache_train_entries_standardized(cache):
    ds = data.load_dataset(cache, split="train")
    pooled = np.concatenate([x for x, _ in ds[1] + ds[2]], axis=1)
    assert abs(pooled.mean()) < 0.05
    assert 0.9 < pooled.std() < 1.1


def test_preprocess_rerun_byte_identical(corpus, cache, tmp_path):
    second = tmp_path / "cache2"
    data.preprocess(corpus, second, config=CFG)
    for path in sorted(cache.glob("*.feat")):
        assert (second / path.name).read_bytes() == path.read_bytes()


def test_preprocess_skip_bad_continues(corpus, tmp_path):
    bad_root = tmp_path / "badcorpus"
    bad_root.mkdir()
    for e in corpus.entries:
        (bad_root / e.path.parent).mkdir(parents=True, exist_ok=True)
        (bad_root / e.path).write_bytes((corpus.root / e.path).read_bytes())
    (bad_root / corpus.entries[0].path).write_bytes(b"garbage")
    corpus.write(bad_root / "manifest.csv")
    bad_manifest = data.DatasetManifest.read(bad_root / "manifest.csv")
    with pytest.raises(DataError):
        data.preprocess(bad_manifest, tmp_path / "c1", config=CFG)
    _, count, failures = data.preprocess(
        bad_manifest, tmp_path / "c2", config=CFG, skip_bad=True
    )
    assert count == len(corpus.entries) - 1
    assert len(failures) == 1


def test_load_dataset_split_filter(cache):
    train = data.load_dataset(cache, split="train")
    test = data.load_dataset(cache, split="test")
    assert {len(v) for v in train.values()} == {3}
    assert {len(v) for v in test.values()} == {2}


def test_list_cache_entries(cache):
    all_entries = data.list_cache_entries(cache)
    test_only = data.list_cache_entries(cache, split="test")
    assert len(all_entries) == 10 and len(test_only) == 4
    uid, meta = all_entries[0]
    assert meta["kind"] == "features" and "speaker" in meta
