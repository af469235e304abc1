"""Command-line interface.

Subcommands: gen-data, train, infer, eval, bench, analyze. Exit codes:
0 on success, 2 for usage or input errors (bad flags, missing or malformed
files), 1 for unexpected internal failures. Training settings resolve as
explicit flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import (
    activation_entropy,
    region_correlation,
    style_scatter,
    weight_activation,
    write_graph_dot,
    write_scatter_csv,
)
from .audio import (
    FeatureSequence,
    load_features,
    load_wav,
    MelConfig,
    mel_features,
    write_features,
)
from .bench import format_report, run_benchmark
from .errors import FacemotionError
from .mesh import (
    TemplateMesh,
    load_mesh_sequence,
    load_region_masks,
    write_mesh_sequence,
)
from .metrics import evaluate_pair, format_table, write_report_csv
from .model import FaceAnimator, ModelConfig, parse_config_text
from .synthetic import SynthSpec, gen_corpus
from .training import (
    TrainConfig,
    load_corpus,
    restore_model,
    restore_optimizer,
    train,
)


class UsageError(Exception):
    """Input problems that are the caller's fault; mapped to exit code 2."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facemotion",
        description="Speech-driven 3D face animation: data, training, inference, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    # defaults live on SynthSpec; omitted flags fall through to it
    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--identities", type=int, default=None)
    p.add_argument("--sentences", type=int, default=None)
    p.add_argument("--vertices", type=int, default=None)
    p.add_argument("--phonemes", type=int, default=None)
    p.add_argument("--fps", type=float, default=None)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoints and the log")
    p.add_argument("--config", help="model config file (key = value lines)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--freeze-epochs", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-modulation", action="store_true",
                   help="ablation: bypass style modulation")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("infer", help="synthesize a mesh sequence")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", help="driving features (FMAT)")
    src.add_argument("--wav", help="driving audio (16-bit PCM mono WAV)")
    p.add_argument("--template", required=True, help="template mesh (MSEQ; frames are averaged)")
    p.add_argument("--style", required=True, help="style reference clip (MSEQ)")
    p.add_argument("--out", required=True, help="output MSEQ path")

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted .mseq files")
    p.add_argument("--truth", required=True, help="directory of ground-truth .mseq files")
    p.add_argument("--masks", required=True, help="region mask sidecar file")
    p.add_argument("--lip-mask", default="lip")
    p.add_argument("--upper-mask", default="upper")
    p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("bench", help="measure synthesis throughput")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--out", help="write the report to a file as well")

    p = sub.add_parser("analyze", help="style scatter, region graph, or activation maps")
    p.add_argument("--mode", required=True, choices=["scatter", "regions", "activation"])
    p.add_argument("--corpus", help="corpus directory (scatter and regions modes)")
    p.add_argument("--checkpoint", help="trained checkpoint (activation mode)")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_gen_data(args) -> int:
    overrides = {
        "vertex_count": args.vertices,
        "phonemes": args.phonemes,
        "identities": args.identities,
        "sentences": args.sentences,
        "fps": args.fps,
        "seed": args.seed,
    }
    spec = SynthSpec(**{k: v for k, v in overrides.items() if v is not None})
    out = gen_corpus(spec, args.out)
    print(f"wrote corpus with {spec.identities * spec.sentences} samples to {out}")
    return 0


def cmd_train(args) -> int:
    corpus_dir = _require_dir(args.corpus, "corpus directory")
    if not (corpus_dir / "manifest.csv").is_file():
        raise UsageError(f"corpus directory {corpus_dir} has no manifest.csv")
    corpus = load_corpus(corpus_dir)
    sample = corpus.samples[0]

    overrides = {}
    if args.config:
        overrides.update(parse_config_text(_require_file(args.config, "config file").read_text()))
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.beta is not None:
        overrides["beta"] = args.beta
    if args.no_modulation:
        overrides["use_modulation"] = False
    overrides["vertex_count"] = corpus.vertex_count
    overrides["frontend_in"] = sample.features.channels
    overrides.setdefault("fps", sample.mesh.fps)

    train_kwargs = {}
    for key in ("epochs", "batch_size", "lr", "freeze_epochs", "seed"):
        value = getattr(args, key)
        if value is not None:
            train_kwargs[key] = value

    start_epoch = 0
    optimizer = None
    if args.resume:
        model, arrays, start_epoch, cfg = restore_model(
            _require_file(args.resume, "resume checkpoint")
        )
        if cfg.vertex_count != corpus.vertex_count:
            raise UsageError(
                f"checkpoint was trained for {cfg.vertex_count} vertices, "
                f"corpus has {corpus.vertex_count}"
            )
    else:
        defaults = ModelConfig(
            vertex_count=corpus.vertex_count, frontend_in=sample.features.channels
        )
        cfg = replace(defaults, **overrides)
        model = FaceAnimator(cfg, seed=train_kwargs.get("seed", 0))
    tcfg = TrainConfig(beta=overrides.get("beta", cfg.beta), **train_kwargs)
    if args.resume:
        optimizer = restore_optimizer(model, arrays, tcfg.lr)
        if start_epoch >= tcfg.epochs:
            raise UsageError(
                f"checkpoint is already at epoch {start_epoch}; raise --epochs past it"
            )
    log = train(corpus, model, tcfg, out_dir=args.out,
                optimizer=optimizer, start_epoch=start_epoch)
    last = log.rows[-1]
    print(
        f"trained to epoch {last.epoch}: data loss {last.data_loss:.6f}, "
        f"reg loss {last.reg_loss:.6f}; wrote {Path(args.out) / 'final.ckpt'}"
    )
    return 0


def cmd_infer(args) -> int:
    model, _, _, cfg = restore_model(_require_file(args.checkpoint, "checkpoint"))
    template_seq = load_mesh_sequence(_require_file(args.template, "template"))
    template = TemplateMesh(vertices=template_seq.frames.mean(axis=0))
    style = load_mesh_sequence(_require_file(args.style, "style clip"))
    for what, count in (("template", template.vertex_count), ("style clip", style.vertex_count)):
        if count != cfg.vertex_count:
            raise UsageError(
                f"{what} has {count} vertices but the model was trained for "
                f"{cfg.vertex_count}"
            )
    if args.wav:
        if cfg.frontend != "mel":
            raise UsageError("this checkpoint expects precomputed features, not audio")
        clip = load_wav(_require_file(args.wav, "wav file"))
        feat = mel_features(
            clip, MelConfig(window=cfg.mel_window, hop=cfg.mel_hop, bands=cfg.mel_bands)
        )
    else:
        feat = load_features(_require_file(args.features, "feature file"))
        if feat.channels != cfg.frontend_in:
            raise UsageError(
                f"features have {feat.channels} channels but the model expects "
                f"{cfg.frontend_in}"
            )
    result = model.synthesize(template, feat, style)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mesh_sequence(out, result)
    print(f"wrote {result.frame_count} frames ({result.duration:.2f}s) to {out}")
    return 0


def cmd_eval(args) -> int:
    pred_dir = _require_dir(args.pred, "prediction directory")
    truth_dir = _require_dir(args.truth, "ground-truth directory")
    masks = load_region_masks(_require_file(args.masks, "mask file"))
    for name in (args.lip_mask, args.upper_mask):
        if name not in masks:
            raise UsageError(f"mask {name!r} not present in {args.masks}")
    pred_files = sorted(pred_dir.glob("*.mseq"))
    if not pred_files:
        raise UsageError(f"no .mseq files in {pred_dir}")
    missing = [p.name for p in pred_files if not (truth_dir / p.name).is_file()]
    if missing:
        raise UsageError(f"no ground truth for: {', '.join(missing)}")
    reports = {}
    for pred_path in pred_files:
        pred = load_mesh_sequence(pred_path)
        truth = load_mesh_sequence(truth_dir / pred_path.name)
        reports[pred_path.stem] = evaluate_pair(
            pred, truth, masks[args.lip_mask], masks[args.upper_mask]
        )
    print(format_table(reports))
    if args.out:
        write_report_csv(args.out, reports)
        print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    model, _, _, _ = restore_model(_require_file(args.checkpoint, "checkpoint"))
    results = [
        run_benchmark(model, duration=args.duration, iterations=args.iterations,
                      threads=args.threads),
        run_benchmark(model, duration=2 * args.duration, iterations=args.iterations,
                      threads=args.threads),
    ]
    report = format_report(results)
    print(report)
    if args.out:
        Path(args.out).write_text(report + "\n", encoding="utf-8")
    return 0


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode in ("scatter", "regions"):
        if not args.corpus:
            raise UsageError(f"--mode {args.mode} requires --corpus")
        corpus = load_corpus(_require_dir(args.corpus, "corpus directory"))
        if args.mode == "scatter":
            scatter = style_scatter(
                [s.mesh for s in corpus.samples], [s.identity for s in corpus.samples]
            )
            write_scatter_csv(out / "style_scatter.csv", scatter)
            print(f"wrote {out / 'style_scatter.csv'} ({len(scatter.labels)} points)")
        else:
            graph = region_correlation([s.mesh for s in corpus.samples], corpus.masks)
            write_graph_dot(out / "region_graph.dot", graph)
            kept = ", ".join(
                f"{graph.names[i]}-{graph.names[j]} ({c:.2f})" for i, j, c in graph.edges
            )
            print(f"wrote {out / 'region_graph.dot'}; edges kept: {kept or 'none'}")
    else:
        if not args.checkpoint:
            raise UsageError("--mode activation requires --checkpoint")
        model, _, _, cfg = restore_model(_require_file(args.checkpoint, "checkpoint"))
        maps = weight_activation(model.embedding.data, cfg.vertex_count)
        write_features(
            out / "activation_maps.fmat",
            FeatureSequence(rows=maps.maps, frame_rate=0.0),
        )
        summary = (
            f"motion features: {maps.feature_count}\n"
            f"sparsity (|w| < 1e-3): {maps.sparsity:.4f}\n"
            f"mean activation entropy: {activation_entropy(maps):.4f}\n"
        )
        (out / "activation_summary.txt").write_text(summary, encoding="utf-8")
        print(summary.strip())
        print(f"wrote {out / 'activation_maps.fmat'}")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, FacemotionError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
