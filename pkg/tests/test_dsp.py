"""Feature-extraction contracts: STFT geometry, mel filterbank, standardization,
cepstra, Griffin-Lim behaviour, WAV round trips."""

import numpy as np
import pytest
import scipy.fft

from discvc import dsp
from discvc.dsp import AudioClip, AudioConfig
from discvc.errors import ConfigurationError, DataError


CFG = AudioConfig()


def sine_clip(freq=1000.0, seconds=1.0, sr=16000, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


# -- stft -----------------------------------------------------------------------


def test_stft_zero_clip_is_zero():
    clip = AudioClip(np.zeros(4000), 16000)
    assert np.abs(dsp.stft(clip, CFG)).max() == 0.0


def test_stft_sine_peak_bin():
    spec = np.abs(dsp.stft(sine_clip(), CFG))
    interior = spec[:, 3:-3]
    peaks = interior.argmax(axis=0)
    assert (peaks == round(1000 * CFG.n_fft / CFG.sample_rate)).all()
    assert (peaks == 64).all()


def test_stft_frame_count_one_second():
    spec = dsp.stft(sine_clip(seconds=1.0), CFG)
    assert spec.shape == (CFG.n_fft // 2 + 1, 63)


def test_stft_short_clip_rejected():
    with pytest.raises(DataError):
        dsp.stft(AudioClip(np.zeros(100), 16000), CFG)


def test_istft_inverts_stft():
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.5, 0.5, 8000)
    spec = dsp.stft(AudioClip(x, 16000), CFG)
    y = dsp.istft(spec, CFG)
    n = min(len(x), len(y))
    # interior must match; edges lose the taper
    np.testing.assert_allclose(y[512 : n - 512], x[512 : n - 512], atol=1e-8)


# -- mel filterbank ---------------------------------------------------------------


def test_filterbank_nonnegative_and_two_band_overlap():
    fb = dsp.mel_filterbank(CFG)
    assert (fb >= 0).all()
    assert ((fb > 0).sum(axis=0) <= 2).all()


def test_filterbank_partition_of_unity_interior():
    fb = dsp.mel_filterbank(CFG)
    colsum = fb.sum(axis=0)
    assert (colsum <= 1.0 + 1e-9).all()
    freqs = np.linspace(0, CFG.sample_rate / 2, CFG.n_fft // 2 + 1)
    interior = (freqs > 200) & (freqs < 7000)
    np.testing.assert_allclose(colsum[interior], 1.0, atol=1e-9)


def test_mel_energy_concentrates_around_sine():
    mel = dsp.mel_spectrogram(sine_clip(1000.0), CFG)
    band_energy = mel.sum(axis=1)
    fb = dsp.mel_filterbank(CFG)
    freqs = np.linspace(0, CFG.sample_rate / 2, CFG.n_fft // 2 + 1)
    bin_1k = np.argmin(np.abs(freqs - 1000))
    bracketing = np.argsort(fb[:, bin_1k])[-2:]
    assert band_energy[bracketing].sum() / band_energy.sum() > 0.8


def test_mel_zero_clip_zero_matrix():
    mel = dsp.mel_spectrogram(AudioClip(np.zeros(4000), 16000), CFG)
    assert not mel.any()


# -- log compression ---------------------------------------------------------------


def test_log_compress_values():
    out = dsp.log_compress(np.array([[0.0, 1.0]]))
    np.testing.assert_allclose(out, [[np.log(1e-5), np.log(1.0 + 1e-5)]])
    assert out[0, 0] == pytest.approx(-11.5129, abs=1e-3)


def test_log_compress_monotone():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 5, (4, 6))
    b = a + rng.uniform(0, 2, (4, 6))
    assert (dsp.log_compress(a) <= dsp.log_compress(b)).all()


def test_log_compress_rejects_negatives():
    with pytest.raises(DataError):
        dsp.log_compress(np.array([[-0.1]]))


# -- standardization ---------------------------------------------------------------


def test_fit_standardization_degenerate_constant():
    stats = dsp.fit_standardization([np.full((3, 5), 3.0)])
    np.testing.assert_allclose(stats.mean, 3.0)
    np.testing.assert_allclose(stats.std, dsp.STD_FLOOR)


def test_fit_standardization_restandardize_corpus():
    rng = np.random.default_rng(5)
    corpus = [rng.normal(2.0, 1.5, (4, 50)) for _ in range(3)]
    stats = dsp.fit_standardization(corpus)
    z = np.concatenate([dsp.standardize(m, stats).values for m in corpus], axis=1)
    assert np.abs(z.mean(axis=1)).max() < 1e-5
    np.testing.assert_allclose(z.std(axis=1), 1.0, atol=1e-4)


def test_fit_standardization_matches_concatenated():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=(4, 9)), rng.normal(size=(4, 14))
    stats = dsp.fit_standardization([a, b])
    both = np.concatenate([a, b], axis=1)
    np.testing.assert_allclose(stats.mean, both.mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(stats.std, both.std(axis=1), atol=1e-12)


def test_fit_standardization_order_independent():
    rng = np.random.default_rng(7)
    mats = [rng.normal(size=(4, rng.integers(5, 20))) for _ in range(6)]
    s1 = dsp.fit_standardization(mats)
    s2 = dsp.fit_standardization(list(reversed(mats)))
    np.testing.assert_allclose(s1.mean, s2.mean, atol=1e-6)
    np.testing.assert_allclose(s1.std, s2.std, atol=1e-6)


def test_fit_standardization_empty_rejected():
    with pytest.raises(DataError):
        dsp.fit_standardization([])


def test_standardize_round_trip():
    rng = np.random.default_rng(8)
    corpus = [rng.normal(1.0, 2.0, (4, 30))]
    stats = dsp.fit_standardization(corpus)
    x0 = rng.normal(1.0, 2.0, (4, 12))
    back = dsp.destandardize(dsp.standardize(x0, stats), stats)
    np.testing.assert_allclose(back, x0, atol=1e-5)


def test_standardize_mean_input_gives_zero():
    stats = dsp.StandardizationStats(mean=np.array([2.0, -1.0]), std=np.array([4.0, 2.0]))
    x0 = np.tile(stats.mean[:, None], (1, 7))
    assert not dsp.standardize(x0, stats).values.any()


def test_standardize_hand_value():
    stats = dsp.StandardizationStats(mean=np.array([2.0]), std=np.array([4.0]))
    out = dsp.standardize(np.array([[6.0]]), stats)
    assert out.values[0, 0] == pytest.approx(1.0)


# -- mel cepstra ---------------------------------------------------------------


def test_mel_cepstra_constant_column_is_zero():
    out = dsp.mel_cepstra(np.full((16, 3), 2.5), order=8)
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_mel_cepstra_orthonormal_reconstruction():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(16, 4))
    coeffs = scipy.fft.dct(x, type=2, axis=0, norm="ortho")
    back = scipy.fft.idct(coeffs, type=2, axis=0, norm="ortho")
    np.testing.assert_allclose(back, x, atol=1e-4)
    np.testing.assert_allclose(dsp.mel_cepstra(x, order=8), coeffs[1:9], atol=1e-12)


def test_mel_cepstra_cosine_single_coefficient():
    f_bins = 16
    k = 3
    col = np.cos(np.pi * (np.arange(f_bins) + 0.5) * k / f_bins)
    out = dsp.mel_cepstra(col[:, None], order=8)
    energy = out[:, 0] ** 2
    assert energy[k - 1] / energy.sum() > 0.999


def test_mel_cepstra_order_validation():
    with pytest.raises(ConfigurationError):
        dsp.mel_cepstra(np.zeros((8, 2)), order=8)


# -- griffin-lim ---------------------------------------------------------------


@pytest.fixture(scope="module")
def voiced_fixture():
    # broadband harmonic stack with a noise floor, like a voiced speech frame
    sr = 16000
    rng = np.random.default_rng(21)
    t = np.arange(int(0.7 * sr)) / sr
    x = np.zeros_like(t)
    for h in range(1, 46):
        x += np.sin(2 * np.pi * 150 * h * t + 0.3 * h) / h
    x += 0.01 * rng.standard_normal(len(t))
    x *= 0.4 / np.max(np.abs(x))
    clip = AudioClip(x, sr)
    logmel = dsp.log_mel_spectrogram(clip, CFG)
    stats = dsp.fit_standardization([logmel])
    return clip, logmel, stats


def test_griffin_lim_output_length(voiced_fixture):
    clip, logmel, stats = voiced_fixture
    x = dsp.standardize(logmel, stats)
    out = dsp.griffin_lim(x, stats, iters=3, config=CFG)
    t_frames = logmel.shape[1]
    assert abs(len(out.samples) - t_frames * CFG.hop) <= CFG.n_fft


def test_griffin_lim_convergence_non_increasing(voiced_fixture):
    _, logmel, stats = voiced_fixture
    x = dsp.standardize(logmel, stats)
    _, history = dsp.griffin_lim(x, stats, iters=12, config=CFG, track_convergence=True)
    diffs = np.diff(history)
    assert (diffs <= 1e-6).all()


def test_griffin_lim_round_trip_log_mel_error(voiced_fixture):
    clip, logmel, stats = voiced_fixture
    x = dsp.standardize(logmel, stats)
    out = dsp.griffin_lim(x, stats, iters=40, config=CFG)
    back = dsp.log_mel_spectrogram(out, CFG)
    t = min(back.shape[1], logmel.shape[1])
    err = np.abs(back[:, 2 : t - 2] - logmel[:, 2 : t - 2]).mean()
    assert err < 1.0


# -- wav i/o ---------------------------------------------------------------


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    clip = AudioClip(rng.uniform(-0.9, 0.9, 5000), 16000)
    path = tmp_path / "clip.wav"
    dsp.write_wav(path, clip)
    back = dsp.read_wav(path)
    assert back.sample_rate == 16000
    np.testing.assert_allclose(back.samples, clip.samples, atol=0.51 / 32768)


def test_read_wav_rejects_garbage(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"not a riff file at all")
    with pytest.raises(DataError):
        dsp.read_wav(path)


def test_read_wav_rejects_stereo(tmp_path):
    import wave

    path = tmp_path / "stereo.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes(np.zeros(400, dtype="<i2").tobytes())
    with pytest.raises(DataError):
        dsp.read_wav(path)
