"""End-to-end CLI workflows on a miniature corpus, plus exit-code contracts."""

import numpy as np
import pytest

from discvc.cli import main
from discvc.serialization import read_container

TINY_SETS = [
    "--set", "audio.n_fft=512",
    "--set", "audio.hop=128",
    "--set", "audio.win_length=512",
    "--set", "audio.n_mels=24",
    "--set", "model.codebook_size=8",
    "--set", "model.content_dim=4",
    "--set", "model.enc_channels=8",
    "--set", "model.dec_channels=8",
    "--set", "model.pext_channels=6",
    "--set", "model.cls_channels=6",
    "--set", "model.speaker_embed_dim=4",
    "--set", "train.steps=4",
    "--set", "train.batch_size=2",
    "--set", "train.t_crop=16",
    "--set", "train.checkpoint_every=2",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    corpus = root / "corpus"
    cache = root / "cache"
    run = root / "run"
    assert main(["generate", "--out", str(corpus), "--speakers", "2",
                 "--train-clips", "2", "--test-clips", "1", "--seed", "3"]) == 0
    assert main(["preprocess", "--manifest", str(corpus / "manifest.csv"),
                 "--cache", str(cache), *TINY_SETS]) == 0
    assert main(["train", "--cache", str(cache), "--out", str(run), *TINY_SETS]) == 0
    return {"corpus": corpus, "cache": cache, "run": run, "root": root}


def test_preprocess_wrote_cache(workspace):
    cache = workspace["cache"]
    assert (cache / "stats.feat").exists()
    feats = [p for p in cache.glob("*.feat") if p.name != "stats.feat"]
    assert len(feats) == 6


def test_train_wrote_checkpoint_and_log(workspace):
    run = workspace["run"]
    assert (run / "model.ckpt").exists()
    log = (run / "train_log.csv").read_text().splitlines()
    assert log[0].startswith("step,like,")
    assert len(log) == 5  # header + 4 steps


def test_checkpoint_embeds_effective_config(workspace):
    text, _ = read_container(workspace["run"] / "model.ckpt")
    assert "kind=checkpoint" in text
    assert "n_mels = 24" in text
    assert "num_speakers = 2" in text


def test_convert_from_cache_entry(workspace, capsys):
    out_wav = workspace["root"] / "conv.wav"
    feat = workspace["root"] / "conv.feat"
    code = main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--cache", str(workspace["cache"]),
        "--utterance", "s01_utt002",
        "--task", "PT", "--target-speaker", "2",
        "--out", str(out_wav),
        "--features", str(feat),
        "--gl-iters", "3",
    ])
    assert code == 0
    assert out_wav.exists()
    blob, tensors = read_container(feat)
    assert "kind=conversion" in blob and "timbre_speaker=2" in blob
    assert set(tensors) == {"mu", "lambda_target"}
    assert tensors["mu"].shape[0] == 24


def test_convert_task_p_from_wav(workspace):
    out_wav = workspace["root"] / "p.wav"
    entry = workspace["corpus"] / "spk1" / "utt000.wav"
    code = main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--cache", str(workspace["cache"]),
        "--input-wav", str(entry), "--source-speaker", "1",
        "--task", "P", "--beta", "0.405",
        "--out", str(out_wav), "--gl-iters", "2",
    ])
    assert code == 0 and out_wav.exists()


def test_convert_conflicting_flags_exit_2(workspace):
    code = main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--cache", str(workspace["cache"]),
        "--utterance", "s01_utt002",
        "--input-wav", "x.wav",
        "--task", "PT", "--target-speaker", "2",
        "--out", "nope.wav",
    ])
    assert code == 2


def test_convert_task_p_with_target_exit_2(workspace):
    code = main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--cache", str(workspace["cache"]),
        "--utterance", "s01_utt002",
        "--task", "P", "--beta", "0.1", "--target-speaker", "2",
        "--out", "nope.wav",
    ])
    assert code == 2


def test_evaluate_pairs_and_self_pair(workspace, tmp_path):
    # convert one utterance, then evaluate it against the source and itself
    root = workspace["root"]
    wav = root / "eval_conv.wav"
    feat = root / "eval_conv.feat"
    assert main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--cache", str(workspace["cache"]),
        "--utterance", "s02_utt002",
        "--task", "P", "--beta", "0.0",
        "--out", str(wav), "--features", str(feat), "--gl-iters", "3",
    ]) == 0

    # self pair: converted clip against itself with its own pattern as target
    import discvc.dsp as dsp
    import discvc.pitch as pitch
    import discvc.metrics as metrics
    from discvc.dsp import AudioConfig
    from discvc.serialization import write_container

    acfg = AudioConfig(n_fft=512, hop=128, win_length=512, n_mels=24)
    self_pattern = pitch.estimate_f0(metrics.trim_silence(dsp.read_wav(wav)), acfg)
    self_feat = root / "self.feat"
    write_container(self_feat, "kind=conversion\n",
                    {"lambda_target": self_pattern.values.astype(np.float32)})

    pairs = root / "pairs.csv"
    pairs.write_text(
        "pair_id,task,target_wav,converted_wav,features\n"
        f"self,P,{wav.name},{wav.name},{self_feat.name}\n"
    )
    report_base = root / "report"
    code = main(["evaluate", "--pairs", str(pairs), "--out", str(report_base),
                 "--set", "audio.n_fft=512", "--set", "audio.hop=128",
                 "--set", "audio.win_length=512", "--set", "audio.n_mels=24"])
    assert code == 0
    csv_text = (root / "report.csv").read_text().splitlines()
    assert csv_text[0] == "pair_id,task,delta_f0,mcd"
    row = csv_text[1].split(",")
    # the stored target pattern is float32, so "identical" is quantized
    assert float(row[2]) == pytest.approx(0.0, abs=1e-6)
    assert float(row[3]) == pytest.approx(0.0, abs=1e-9)
    import json
    report = json.loads((root / "report.json").read_text())
    assert report["summary"]["delta_f0"]["mean"] == pytest.approx(0.0, abs=1e-6)


def test_evaluate_report_stable_across_runs(workspace):
    root = workspace["root"]
    if not (root / "pairs.csv").exists():
        pytest.skip("depends on the evaluate test having run")
    first = (root / "report.csv").read_bytes()
    assert main(["evaluate", "--pairs", str(root / "pairs.csv"), "--out", str(root / "report"),
                 "--set", "audio.n_fft=512", "--set", "audio.hop=128",
                 "--set", "audio.win_length=512", "--set", "audio.n_mels=24"]) == 0
    assert (root / "report.csv").read_bytes() == first


def test_inspect_checkpoint(workspace, capsys):
    assert main(["inspect", str(workspace["run"] / "model.ckpt")]) == 0
    out = capsys.readouterr().out
    assert "kind=checkpoint" in out
    assert "encoder.block0.conv.v" in out


def test_missing_file_exit_3(workspace):
    assert main(["inspect", "/nonexistent/path.ckpt"]) == 3
    assert main(["preprocess", "--manifest", "/nonexistent/m.csv", "--cache", "/tmp/x"]) == 3


def test_unknown_config_key_exit_2(workspace):
    code = main(["preprocess", "--manifest", str(workspace["corpus"] / "manifest.csv"),
                 "--cache", "/tmp/zzz", "--set", "audio.bogus=1"])
    assert code == 2


def test_cache_env_var_fallback(workspace, monkeypatch, tmp_path):
    monkeypatch.setenv("DISCVC_CACHE_DIR", str(workspace["cache"]))
    out_wav = tmp_path / "env.wav"
    code = main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--utterance", "s01_utt002",
        "--task", "T", "--target-speaker", "2",
        "--out", str(out_wav), "--gl-iters", "2",
    ])
    assert code == 0 and out_wav.exists()


def test_no_cache_anywhere_exit_2(workspace, monkeypatch):
    monkeypatch.delenv("DISCVC_CACHE_DIR", raising=False)
    code = main([
        "convert",
        "--checkpoint", str(workspace["run"] / "model.ckpt"),
        "--utterance", "s01_utt002", "--task", "T", "--target-speaker", "2",
        "--out", "x.wav",
    ])
    assert code == 2


def test_effective_config_printed(workspace, capsys):
    main(["preprocess", "--manifest", str(workspace["corpus"] / "manifest.csv"),
          "--cache", str(workspace["root"] / "cache_print"), *TINY_SETS])
    out = capsys.readouterr().out
    assert "# effective configuration" in out
    assert "[audio]" in out and "n_mels = 24" in out


def test_train_no_aux_flag(workspace, tmp_path):
    code = main(["train", "--cache", str(workspace["cache"]), "--out", str(tmp_path / "na"),
                 "--no-aux", *TINY_SETS])
    assert code == 0
    log = (tmp_path / "na" / "train_log.csv").read_text().splitlines()
    header = log[0].split(",")
    p_idx = header.index("p")
    for line in log[1:]:
        assert float(line.split(",")[p_idx]) == 0.0
