"""Command-line entry point: ``telecodec <subcommand> [options]``.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import InsufficientDecay, InvalidInput, TelecodecError, ValidationError

log = logging.getLogger("telecodec")

SNAPSHOT_NAME = "resolved_config.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _snapshot(out_dir, cfg: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / SNAPSHOT_NAME
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return path


def _load_json(path) -> dict:
    from .errors import IoError

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise IoError(path, f"cannot read config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a flat JSON object")
    return doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_dataset(args) -> int:
    from .dataset import build_dataset, verify_partition

    cfg = {"n_train": 200, "n_val": 20, "n_test": 20, "seed": 0, "out": "data"}
    if args.config:
        cfg.update(_load_json(args.config))
    for key in ("n_train", "n_val", "n_test", "seed", "out"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    for key in ("n_train", "n_val", "n_test"):
        if int(cfg[key]) < 1:
            raise ValidationError(f"{key.replace('_', '-')} must be >= 1, got {cfg[key]}")
    manifest = build_dataset(cfg["out"], int(cfg["n_train"]), int(cfg["n_val"]), int(cfg["n_test"]),
                             int(cfg["seed"]))
    _snapshot(cfg["out"], cfg)
    report = verify_partition(manifest)
    counts = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    print(Path(cfg["out"]) / "manifest.jsonl")
    print(f"groups: train={counts['train']} val={counts['val']} test={counts['test']}")
    print(report.summary())
    return 0 if report.ok else 2


def _train_config(args):
    from .train.loop import TrainConfig

    flat = TrainConfig().to_flat()
    if args.config:
        flat.update(_load_json(args.config))
    overrides = {
        "tasks": args.tasks,
        "seed": args.seed,
        "steps": args.steps,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "out_dir": args.out,
        "dataset": args.dataset,
        "model.n_quantizers": args.n_quantizers,
        "model.downsample_factor": args.downsample_factor,
    }
    for key, value in overrides.items():
        if value is not None:
            flat[key] = value
    if args.seed is not None:
        flat["model.seed"] = args.seed
    return TrainConfig.from_flat(flat)


def cmd_train(args) -> int:
    from .train.loop import smoothed, train_loop

    cfg = _train_config(args)
    if not cfg.dataset:
        raise ValidationError("train needs --dataset (or 'dataset' in the config)")

    def progress(step, rec):
        if step % 100 == 0 or step == cfg.steps:
            log.info("step %d task %s total %.4f", step, rec["task_id"], rec["total"])

    result = train_loop(cfg, cfg.dataset, out_dir=cfg.out_dir, progress=progress)
    totals = [h["total"] for h in result.history]
    if totals:
        s = smoothed(totals)
        print(f"loss (moving avg): first {s[0]:.4f} last {s[-1]:.4f}")
    print(result.checkpoint)
    return 0


def cmd_dereverb(args) -> int:
    from .codec.checkpoint import load_checkpoint
    from .codec.inference import dereverb
    from .dsp.wavio import read_wav, write_wav

    model, _ = load_checkpoint(_need(args.checkpoint, "--checkpoint"))
    x = read_wav(args.input)
    y = dereverb(x, model)
    write_wav(args.output, y)
    print(args.output)
    return 0


def _blind(audio) -> str:
    from .dsp.rt60 import blind_rt60

    try:
        return f"{blind_rt60(audio):.3f} s"
    except (InsufficientDecay, InvalidInput) as exc:
        return f"n/a ({exc})"


def cmd_teleport(args) -> int:
    from .codec.checkpoint import load_checkpoint
    from .codec.inference import teleport
    from .dsp.wavio import read_wav, write_wav

    model, _ = load_checkpoint(_need(args.checkpoint, "--checkpoint"))
    a, b = read_wav(args.a), read_wav(args.b)
    ya, yb = teleport(a, b, model)
    write_wav(args.out_a, ya)
    write_wav(args.out_b, yb)
    for name, sig in (("input a", a), ("input b", b), ("output a", ya), ("output b", yb)):
        print(f"blind RT60 {name}: {_blind(sig)}")
    return 0


def cmd_encode(args) -> int:
    from .codec.checkpoint import load_checkpoint
    from .codec.inference import encode, export_tokens
    from .dsp.wavio import read_wav

    model, _ = load_checkpoint(_need(args.checkpoint, "--checkpoint"))
    x = read_wav(args.input)
    lat = encode(x, model)
    if lat.speech_tokens is not None:
        export_tokens(lat, args.output)
        doc = json.loads(Path(args.output).read_text())
        doc["n_samples"] = len(x)
    else:
        doc = {
            "downsample_factor": lat.downsample_factor,
            "speech_emb": lat.speech_emb.tolist(),
            "acoustic_emb": lat.acoustic_emb.tolist(),
            "n_samples": len(x),
        }
    Path(args.output).write_text(json.dumps(doc))
    print(args.output)
    return 0


def cmd_decode(args) -> int:
    from .codec.checkpoint import load_checkpoint
    from .codec.inference import decode, tokens_to_latents
    from .codec.latents import LatentPair
    from .dsp.buffers import AudioBuffer
    from .dsp.wavio import write_wav

    model, _ = load_checkpoint(_need(args.checkpoint, "--checkpoint"))
    doc = _load_json(args.input)
    if "speech_tokens" in doc:
        lat = tokens_to_latents(np.asarray(doc["speech_tokens"]), np.asarray(doc["acoustic_tokens"]), model)
    else:
        lat = LatentPair(np.asarray(doc["speech_emb"]), np.asarray(doc["acoustic_emb"]),
                         int(doc.get("downsample_factor", 1)))
    y = decode(lat, model)
    n = doc.get("n_samples")
    if n is not None:
        y = AudioBuffer(y.samples[: int(n)])
    write_wav(args.output, y)
    print(args.output)
    return 0


def _manifest_items(manifest, split: str, limit: int | None = None):
    """Reverberant items ``(audio, speaker, room, rt60)`` of a split."""
    items = []
    entries = manifest.split(split)[:limit]
    for e in entries:
        g = manifest.load_group(e)
        for (c, r), name in (((1, 1), "reverb_11"), ((1, 2), "reverb_12"),
                             ((2, 1), "reverb_21"), ((2, 2), "reverb_22")):
            items.append((getattr(g, name), e.speaker_ids[c - 1], e.room_ids[r - 1],
                          (e.rt60_small, e.rt60_large)[r - 1]))
    return items


def run_evaluation(model, manifest, out_dir, probe_cfg=None, train_limit: int = 50) -> dict:
    """Correlation, teleportation and probe battery; writes reports under ``out_dir``."""
    from .eval.analysis import (
        ProbeConfig,
        TeleportPair,
        disentangle_scores,
        export_scatter,
        rt60_correlation,
        teleport_rt60_eval,
        write_jsonl,
    )

    out = Path(out_dir)
    corr = rt60_correlation(model, _manifest_items(manifest, "train", train_limit),
                            _manifest_items(manifest, "test"))
    pairs = []
    for e in manifest.split("test"):
        g = manifest.load_group(e)
        pairs.append(TeleportPair(g.reverb_11, g.reverb_22, g.reverb_12, g.reverb_21,
                                  e.rt60_small, e.rt60_large, e.group_id))
    tele = teleport_rt60_eval(model, pairs)
    probe_cfg = probe_cfg or ProbeConfig()
    scores, room_sum, speaker_sum = disentangle_scores(model, probe_cfg, return_summaries=True)
    report = {
        "rt60_correlation": corr.r,
        "explained_variance_ratio": corr.pca.explained_variance_ratio.tolist(),
        "swap_success_fraction": tele.success_fraction,
        "teleport": tele.summary(),
        "probe_accuracies": scores.as_dict(),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    write_jsonl(out / "teleport.jsonl", [vars(r) for r in tele.rows])
    write_jsonl(out / "rt60_projection.jsonl",
                [{"pc1": float(c[0]), "rt60": float(t)} for c, t in zip(corr.test_coords, corr.test_rt60)])
    export_scatter(out / "scatter_rooms_acoustic.txt", room_sum.acoustic, room_sum.room_ids)
    export_scatter(out / "scatter_rooms_speech.txt", room_sum.speech, room_sum.room_ids)
    export_scatter(out / "scatter_speakers_speech.txt", speaker_sum.speech, speaker_sum.speaker_ids)
    export_scatter(out / "scatter_speakers_acoustic.txt", speaker_sum.acoustic, speaker_sum.speaker_ids)
    return report


def cmd_evaluate(args) -> int:
    from .eval.analysis import ProbeConfig, planted_correlation

    out = Path(args.out or "eval")
    cfg = {"checkpoint": args.checkpoint, "dataset": args.dataset, "out": str(out),
           "seed": args.seed or 0, "probe_items": args.probe_items, "self_test": args.self_test}
    _snapshot(out, cfg)
    if args.self_test:
        res = planted_correlation(seed=cfg["seed"])
        report = {"mode": "planted", "rt60_correlation": res.r}
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        print(f"planted-embedding correlation: r = {res.r:.4f}")
        return 0
    from .codec.checkpoint import load_checkpoint
    from .dataset import DatasetManifest

    model, _ = load_checkpoint(_need(args.checkpoint, "--checkpoint"))
    manifest = DatasetManifest.load(_need(args.dataset, "--dataset"))
    probe = ProbeConfig(n_items=args.probe_items, seed=cfg["seed"])
    report = run_evaluation(model, manifest, out, probe)
    print(f"rt60 correlation (PC1): {report['rt60_correlation']:.4f}")
    print(f"swap success fraction: {report['swap_success_fraction']:.3f}")
    for k, v in report["probe_accuracies"].items():
        print(f"{k}: {v:.3f}")
    return 0


def cmd_ablate(args) -> int:
    from .dataset import DatasetManifest, GroupBank
    from .eval.analysis import ablate_downsampling, write_jsonl

    cfg = _train_config(args)
    if not cfg.dataset:
        raise ValidationError("ablate-downsample needs --dataset")
    try:
        factors = [int(f) for f in args.factors.split(",")]
    except ValueError:
        raise ValidationError(f"--factors must be comma-separated integers, got {args.factors!r}") from None
    if 1 not in factors or min(factors) < 1:
        raise ValidationError("--factors must be positive and include the baseline factor 1")
    manifest = DatasetManifest.load(cfg.dataset)
    eval_bank = GroupBank.from_manifest(manifest, "test")
    stacks = [eval_bank[i] for i in range(min(len(eval_bank), args.eval_groups))]
    out = Path(cfg.out_dir)
    _snapshot(out, {**cfg.to_flat(), "factors": factors, "eval_groups": args.eval_groups})
    table = ablate_downsampling(cfg, factors, GroupBank.from_manifest(manifest, "train"), stacks,
                                out_dir=out)
    write_jsonl(out / "ablation.jsonl", table.to_records())
    (out / "ablation.txt").write_text(table.format() + "\n")
    print(table.format())
    return 0


def _need(value, flag):
    if not value:
        raise ValidationError(f"missing required option {flag}")
    return value


# ---------------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--dataset", help="dataset directory or manifest file")
    p.add_argument("--tasks", help="comma-separated task ids, e.g. rr,dr,at_ds")
    p.add_argument("--n-quantizers", type=int, help="RVQ stages per stream (0 = no quantization)")
    p.add_argument("--downsample-factor", type=int, help="acoustic temporal downsampling factor")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="telecodec", description="Split-latent speech codec toolkit.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint")
        return p

    p = add("build-dataset", cmd_build_dataset, "generate the synthetic dataset")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-val", type=int)
    p.add_argument("--n-test", type=int)

    p = add("train", cmd_train, "train a codec")
    _add_train_flags(p)

    p = add("dereverb", cmd_dereverb, "decode with the acoustic embedding zeroed")
    p.add_argument("input")
    p.add_argument("output")

    p = add("teleport", cmd_teleport, "swap acoustic embeddings of two recordings")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("out_a")
    p.add_argument("out_b")

    p = add("encode", cmd_encode, "export tokens (or embeddings) of a recording")
    p.add_argument("input")
    p.add_argument("output")

    p = add("decode", cmd_decode, "decode exported tokens/embeddings to WAV")
    p.add_argument("input")
    p.add_argument("output")

    p = add("evaluate", cmd_evaluate, "run the evaluation battery")
    p.add_argument("--dataset")
    p.add_argument("--probe-items", type=int, default=100)
    p.add_argument("--self-test", action="store_true",
                   help="run the correlation pipeline on planted embeddings instead of a model")

    p = add("ablate-downsample", cmd_ablate, "train and compare acoustic downsampling factors")
    _add_train_flags(p)
    p.add_argument("--factors", default="1,2,4,10,30,150")
    p.add_argument("--eval-groups", type=int, default=20)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if not getattr(args, "func", None):
            parser.print_help()
            return 1
        if getattr(args, "out", None) is None and args.command in ("train", "ablate-downsample"):
            args.out = f"runs/{args.command}"
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TelecodecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
