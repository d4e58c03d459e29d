"""Command-line entry point: preprocess, train, convert, evaluate, inspect.

Every command resolves its effective configuration (file < --set overrides)
and prints it before doing work. Exit codes: 0 success, 2 usage error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import data, dsp, metrics, pitch, training
from .converter import convert, task_settings
from .errors import DataError, DiscvcError, UsageError
from .serialization import read_container, write_container

CACHE_ENV = "DISCVC_CACHE_DIR"


def _resolve_config(args) -> cfg.RunConfig:
    if getattr(args, "toy", False):
        run = cfg.toy_preset()
    elif getattr(args, "config", None):
        run = cfg.read_config(args.config)
    else:
        run = cfg.RunConfig()
    run = cfg.apply_overrides(run, getattr(args, "set", None))
    return run


def _print_config(run: cfg.RunConfig) -> None:
    print("# effective configuration")
    print(cfg.to_text(run))


def _cache_dir(args) -> Path:
    raw = getattr(args, "cache", None) or os.environ.get(CACHE_ENV)
    if not raw:
        raise UsageError(f"no cache directory: pass --cache or set {CACHE_ENV}")
    return Path(raw)


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    manifest = data.generate_corpus(
        args.out,
        num_speakers=args.speakers,
        train_per_speaker=args.train_clips,
        test_per_speaker=args.test_clips,
        seed=args.seed,
    )
    print(f"wrote synthetic corpus with manifest {manifest}")
    return 0


def cmd_preprocess(args) -> int:
    run = _resolve_config(args)
    _print_config(run)
    manifest = data.DatasetManifest.read(args.manifest)
    cache_dir, count, failures = data.preprocess(
        manifest, _cache_dir(args), config=run.audio, skip_bad=args.skip_bad, log=print
    )
    print(f"cached {count} utterances in {cache_dir}" + (f" ({len(failures)} skipped)" if failures else ""))
    return 0


def cmd_train(args) -> int:
    run = _resolve_config(args)
    cache_dir = _cache_dir(args)
    _, _, num_speakers = data.load_stats(cache_dir)
    model_cfg = dataclasses.replace(
        run.model, num_speakers=num_speakers, n_mels=run.audio.n_mels
    )
    train_cfg = dataclasses.replace(run.train, no_aux=args.no_aux or run.train.no_aux)
    run = dataclasses.replace(run, model=model_cfg, train=train_cfg)
    _print_config(run)

    dataset = data.load_dataset(cache_dir, split="train")
    last = {"step": 0}

    def progress(step, breakdown):
        if step % args.log_every == 0 or step == train_cfg.steps:
            print(f"step {step:6d}  total {breakdown.total:.5f}  like {breakdown.like:.2f}")
        last["step"] = step

    result = training.train(
        dataset,
        model_cfg,
        train_cfg,
        args.out,
        config_text=cfg.to_text(run),
        resume_from=args.resume,
        progress=progress,
    )
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def _load_checkpoint_bundle(path):
    store, _, step, text = training.load_checkpoint(path)
    run = cfg.from_text(text)
    return store, step, run


def cmd_convert(args) -> int:
    store, step, run = _load_checkpoint_bundle(args.checkpoint)
    _print_config(run)
    cache_dir = _cache_dir(args)
    mel_stats, f0_stats, _ = data.load_stats(cache_dir)

    if args.utterance:
        if args.input_wav or args.source_speaker:
            raise UsageError("--utterance conflicts with --input-wav/--source-speaker")
        meta, logmel, f0, speaker = data.load_cache_entry(cache_dir / f"{args.utterance}.feat")
        x = dsp.LogMelSpectrogram(values=logmel, standardized=True)
    else:
        if not args.input_wav or not args.source_speaker:
            raise UsageError("need --utterance, or --input-wav with --source-speaker")
        clip = dsp.read_wav(args.input_wav)
        raw = dsp.log_mel_spectrogram(clip, run.audio)
        x = dsp.standardize(raw, mel_stats)
        f0 = pitch.estimate_f0(clip, run.audio)
        speaker = args.source_speaker

    if args.task:
        beta, pitch_speaker, timbre_speaker = task_settings(
            args.task, speaker, beta=args.beta, target=args.target_speaker
        )
    else:
        beta = args.beta or 0.0
        pitch_speaker = args.pitch_speaker or speaker
        timbre_speaker = args.timbre_speaker or speaker

    print(
        f"converting speaker {speaker}: beta={beta:+.4f}, "
        f"pitch->spk{pitch_speaker}, timbre->spk{timbre_speaker} (checkpoint step {step})"
    )
    result = convert(
        x,
        f0,
        speaker,
        beta,
        pitch_speaker,
        timbre_speaker,
        store,
        run.model,
        f0_stats,
        mel_stats,
        run.audio,
        tau=run.train.tau_end,
        content_seed=args.content_seed,
        hard_content=args.hard_content,
        gl_iters=args.gl_iters,
    )
    out_wav = Path(args.out)
    out_wav.parent.mkdir(parents=True, exist_ok=True)
    dsp.write_wav(out_wav, result.clip)
    print(f"wrote {out_wav}")
    if args.features:
        blob = (
            f"kind=conversion\nsource_speaker={speaker}\nbeta={beta}\n"
            f"pitch_speaker={pitch_speaker}\ntimbre_speaker={timbre_speaker}\n"
        )
        write_container(
            args.features,
            blob,
            {
                "mu": result.mu,
                "lambda_target": result.target_pattern.values.astype(np.float32),
            },
        )
        print(f"wrote {args.features}")
    return 0


def cmd_evaluate(args) -> int:
    run = _resolve_config(args)
    _print_config(run)
    import csv

    rows = []
    with open(args.pairs, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"pair_id", "task", "target_wav", "converted_wav", "features"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(f"{args.pairs}: pairs manifest needs columns {sorted(required)}")
        pairs = list(reader)
    base = Path(args.pairs).parent
    for pair in pairs:
        _, tensors = read_container(base / pair["features"])
        target_pattern = pitch.LogF0Pattern(tensors["lambda_target"].astype(np.float64))
        out = metrics.evaluate_pair(
            dsp.read_wav(base / pair["target_wav"]),
            dsp.read_wav(base / pair["converted_wav"]),
            target_pattern,
            run.audio,
            run.eval,
        )
        rows.append({"pair_id": pair["pair_id"], "task": pair["task"], **out})
        print(f"{pair['pair_id']:>16s} [{pair['task']}]  dF0 {out['delta_f0']:.4f}  MCD {out['mcd']:.3f}")
    report = metrics.aggregate_report(rows)
    out_base = Path(args.out)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    metrics.write_report_csv(out_base.with_suffix(".csv"), rows)
    metrics.write_report_json(out_base.with_suffix(".json"), report)
    for key, s in report["summary"].items():
        print(f"{key}: {s['mean']:.4f} +- {s['std']:.4f}")
    print(f"report: {out_base.with_suffix('.csv')} / {out_base.with_suffix('.json')}")
    return 0


def cmd_inspect(args) -> int:
    text, tensors = read_container(args.path)
    print(f"container: {args.path}")
    print("--- config blob ---")
    print(text if text.strip() else "(empty)")
    print("--- tensors ---")
    total = 0
    for name, arr in tensors.items():
        print(f"{name:<40s} {str(arr.shape):<18s} {arr.dtype}")
        total += arr.size
    print(f"{len(tensors)} tensors, {total} values")
    return 0


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discvc",
        description="F0-controllable voice conversion with auxiliary consistency training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="sectioned key=value config file")
        p.add_argument("--toy", action="store_true", help="start from the bundled toy preset")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")

    p = sub.add_parser("generate", help="write the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--train-clips", type=int, default=8)
    p.add_argument("--test-clips", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="extract features and fit statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", help=f"cache directory (default ${CACHE_ENV})")
    p.add_argument("--skip-bad", action="store_true", help="skip unreadable files instead of aborting")
    add_config_args(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="optimize the model on a feature cache")
    p.add_argument("--cache", help=f"cache directory (default ${CACHE_ENV})")
    p.add_argument("--out", required=True, help="run directory for checkpoints and logs")
    p.add_argument("--no-aux", action="store_true", help="reconstruction-only ablation")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--log-every", type=int, default=50)
    add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert pitch and/or timbre of an utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", help=f"stats source (default ${CACHE_ENV})")
    p.add_argument("--utterance", help="cache id to convert (e.g. s01_utt008)")
    p.add_argument("--input-wav", help="raw WAV input (needs --source-speaker)")
    p.add_argument("--source-speaker", type=int)
    p.add_argument("--task", choices=["P", "T", "PT"], help="P: pitch shift, T: timbre, PT: both")
    p.add_argument("--beta", type=float, help="log-F0 shift for task P")
    p.add_argument("--target-speaker", type=int, help="target speaker for tasks T/PT")
    p.add_argument("--pitch-speaker", type=int, help="explicit pitch-statistics target")
    p.add_argument("--timbre-speaker", type=int, help="explicit timbre target")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--features", help="also write mu/lambda feature container here")
    p.add_argument("--hard-content", action="store_true", help="argmax content codes")
    p.add_argument("--content-seed", type=int, help="seed for the content sampling draw")
    p.add_argument("--gl-iters", type=int, default=60)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("evaluate", help="score converted/target pairs")
    p.add_argument("--pairs", required=True, help="CSV: pair_id,task,target_wav,converted_wav,features")
    p.add_argument("--out", required=True, help="report path base (.csv and .json written)")
    add_config_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="describe a checkpoint/cache/stats container")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DiscvcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
