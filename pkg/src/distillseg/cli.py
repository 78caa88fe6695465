"""Command-line entry point.

Subcommands: ingest, synth, embed, simulate, serve, train, curve, eval, plot.
Exit codes: 0 success, 1 domain error, 2 usage error. All randomness is
controlled by --seed; --config points at a JSON file whose keys provide
defaults that explicit flags override. Every artifact-producing subcommand
embeds the resolved run configuration and its hash for provenance.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import errors
from .cache import EmbeddingCache
from .data import (build_manifest, generate_synthetic_corpus, load_manifest,
                   save_manifest)
from .decoder import DecoderConfig, init_decoder, load_checkpoint, save_checkpoint
from .encoder import EncoderGateway, SamAdapter, ToyPitAdapter
from .metrics import emit_curve_plot, evaluate_model, save_report
from .prompts import AnnotationLog, simulate_annotation
from .training import (DEFAULT_BUDGETS, TrainConfig, latest_records_by_id,
                       run_curve, select_increment, train_decoder)

CACHE_ENV = "DISTILLSEG_CACHE"


def _config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _build_gateway(args) -> EncoderGateway:
    cache_dir = getattr(args, "cache", None) or os.environ.get(CACHE_ENV)
    cache = EmbeddingCache(cache_dir) if cache_dir else None
    if getattr(args, "sam_checkpoint", None):
        adapter = SamAdapter(checkpoint=args.sam_checkpoint,
                             model_type=args.sam_model_type)
    elif getattr(args, "toy_encoder", False):
        adapter = ToyPitAdapter(seed=args.seed)
    else:
        adapter = None
    return EncoderGateway(adapter=adapter, cache=cache)


def _decoder_config(args, gateway, manifest) -> DecoderConfig:
    sample = manifest.samples[0]
    emb = gateway.embedding(sample)
    return DecoderConfig(
        in_channels=emb.shape[0],
        channel_schedule=tuple(args.channels),
        target_width=sample.width, target_height=sample.height,
        init_seed=args.seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        budgets=tuple(args.budgets) if hasattr(args, "budgets") else DEFAULT_BUDGETS,
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, optimizer=args.optimizer,
        seed=args.seed, tau=args.tau, nested=not args.independent_budgets)


def _run_config(args, gateway) -> dict:
    doc = {k: v for k, v in sorted(vars(args).items())
           if k != "func" and not callable(v)}
    doc["encoder_id"] = gateway.encoder_id if gateway else None
    return doc


def _records_for_training(args, manifest, gateway):
    if args.annotations:
        return AnnotationLog(args.annotations).records()
    # no log supplied: simulate annotations on the fly (box mode by default)
    train_ids = manifest.ids("train")
    return simulate_annotation(manifest, train_ids, args.sim_mode, gateway)


# -- subcommand implementations ---------------------------------------------------

def cmd_ingest(args) -> int:
    split_spec = json.loads(Path(args.split_spec).read_text())
    manifest = build_manifest(args.images, args.masks, split_spec)
    save_manifest(manifest, args.out)
    print(f"wrote {args.out}: {manifest.split_counts}")
    return 0


def cmd_synth(args) -> int:
    manifest = generate_synthetic_corpus(args.n, args.seed, args.size, args.out)
    print(f"wrote {len(manifest)} samples under {args.out} "
          f"({manifest.split_counts})")
    return 0


def cmd_embed(args) -> int:
    manifest = load_manifest(args.manifest)
    gateway = _build_gateway(args)
    if gateway.cache is None:
        raise errors.DistillsegError(
            f"no cache directory (use --cache or ${CACHE_ENV})")
    count = gateway.warm_cache(manifest)
    print(f"cached {count} embeddings under {gateway.cache.root} "
          f"(encoder {gateway.encoder_id})")
    return 0


def cmd_simulate(args) -> int:
    manifest = load_manifest(args.manifest)
    gateway = _build_gateway(args)
    ids = args.ids.split(",") if args.ids else [
        s.id for s in manifest.samples if s.gt_mask_path]
    records = simulate_annotation(manifest, ids, args.mode, gateway,
                                  grid_size=args.grid, nms_iou=args.nms_iou)
    log = AnnotationLog(args.out)
    log.extend(records)
    meta = {"run_config": _run_config(args, gateway)}
    meta["config_hash"] = _config_hash(meta["run_config"])
    (log.root / "run_config.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"appended {len(records)} {args.mode}-mode records to {log.log_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    manifest = load_manifest(args.manifest)
    gateway = _build_gateway(args)
    log = AnnotationLog(args.log)
    static = args.ui if args.ui and Path(args.ui).exists() else None
    app = create_app(manifest, gateway, log, budgets=tuple(args.budgets),
                     static_dir=static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    gateway = _build_gateway(args)
    records = _records_for_training(args, manifest, gateway)
    by_id = latest_records_by_id(records)
    selected = select_increment(manifest.ids("train"), args.budget, args.seed)
    missing = [i for i in selected if i not in by_id]
    if missing:
        raise errors.MissingAnnotation(f"no annotation for {missing[:5]}")
    config = _train_config(args)
    decoder_config = _decoder_config(args, gateway, manifest)
    provider = lambda sid: gateway.embedding(manifest.get(sid))
    params, history = train_decoder(config, decoder_config,
                                    [by_id[i] for i in selected], provider)
    save_checkpoint(params, config.epochs, args.out)
    run_config = _run_config(args, gateway)
    summary = {"run_config": run_config, "config_hash": _config_hash(run_config),
               "budget": args.budget, "param_digest": history.param_digest,
               "first_epoch_loss": history.epoch_losses[0],
               "final_epoch_loss": history.epoch_losses[-1],
               "wall_time": history.wall_time}
    Path(args.out).with_suffix(".train.json").write_text(
        json.dumps(summary, indent=2) + "\n")
    print(f"trained budget {args.budget}: loss "
          f"{history.epoch_losses[0]:.4f} -> {history.epoch_losses[-1]:.4f}, "
          f"checkpoint {args.out}")
    return 0


def cmd_curve(args) -> int:
    manifest = load_manifest(args.manifest)
    gateway = _build_gateway(args)
    records = _records_for_training(args, manifest, gateway)
    config = _train_config(args)
    decoder_config = _decoder_config(args, gateway, manifest)
    report = run_curve(config, decoder_config, manifest, records, gateway,
                       eval_split=args.split)
    doc = report.to_dict()
    doc["run_config"] = _run_config(args, gateway)
    doc["config_hash"] = _config_hash(doc["run_config"])
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    for entry in report.entries:
        m = entry.metrics
        print(f"budget {entry.budget:>3}: micro_f1 {m.micro_f1:.4f} "
              f"miou {m.miou:.4f} mean_image_iou {m.mean_image_iou:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import REFERENCE_CAVEAT, REFERENCE_ROWS

    manifest = load_manifest(args.manifest)
    gateway = _build_gateway(args)
    params, _epoch = load_checkpoint(args.checkpoint)
    report = evaluate_model(params, manifest, args.split, args.tau, gateway)
    run_config = _run_config(args, gateway)
    save_report(report, args.out, extra={
        "run_config": run_config, "config_hash": _config_hash(run_config),
        "reference_rows": REFERENCE_ROWS, "reference_caveat": REFERENCE_CAVEAT})
    print(f"{args.split}: micro_f1 {report.micro_f1:.4f} miou "
          f"{report.miou:.4f} mean_image_iou {report.mean_image_iou:.4f}")
    print(f"{'row':<28} {'macro_f1':>8} {'accuracy':>8} {'macro_p':>8} "
          f"{'macro_r':>8}")
    rows = {**REFERENCE_ROWS,
            "this_run": {"macro_f1": report.macro_f1,
                         "accuracy": report.accuracy,
                         "macro_precision": report.macro_precision,
                         "macro_recall": report.macro_recall}}
    for name, row in rows.items():
        print(f"{name:<28} {row['macro_f1']:>8.3f} {row['accuracy']:>8.3f} "
              f"{row['macro_precision']:>8.3f} {row['macro_recall']:>8.3f}")
    print(f"note: {REFERENCE_CAVEAT}")
    print(f"wrote {args.out}")
    return 0


def cmd_plot(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    csv_path = emit_curve_plot(doc, args.out)
    print(f"wrote {args.out} and {csv_path}")
    return 0


# -- argument wiring ----------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    # also accepted before the subcommand; SUPPRESS keeps the subparser from
    # clobbering a value parsed at the top level
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--config", default=argparse.SUPPRESS,
                   help="JSON config file; explicit flags win")


def _add_gateway_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--toy-encoder", action="store_true",
                   help="use the deterministic weight-free toy adapter")
    p.add_argument("--sam-checkpoint", default=None,
                   help="path to a segment-anything checkpoint (optional)")
    p.add_argument("--sam-model-type", default="vit_h")
    p.add_argument("--cache", default=None,
                   help=f"embedding cache dir (default ${CACHE_ENV})")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--annotations", default=None,
                   help="annotation log dir; omitted = simulate on the fly")
    p.add_argument("--sim-mode", default="box",
                   choices=["automatic", "point", "box"])
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--optimizer", default="adaptive_moment",
                   choices=["adaptive_moment", "plain_sgd"])
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--channels", type=_int_list, default=[128, 64, 32],
                   help="decoder channel schedule, e.g. 128,64,32")
    p.add_argument("--independent-budgets", action="store_true",
                   help="resample each budget instead of nested prefixes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distillseg",
        description="Prompt-driven annotation and distilled-decoder training")
    parser.add_argument("--config", default=None,
                        help="JSON config file; explicit flags win")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a manifest from image/mask dirs")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--split-spec", required=True,
                   help="JSON file mapping sample id -> split")
    p.add_argument("--out", required=True)
    _add_common_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic pit corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--out", required=True)
    _add_common_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("embed", help="warm the embedding cache")
    p.add_argument("--manifest", required=True)
    _add_gateway_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("simulate", help="simulated prompt annotation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", required=True,
                   choices=["automatic", "point", "box"])
    p.add_argument("--ids", default=None, help="comma-separated subset")
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--nms-iou", type=float, default=0.7)
    p.add_argument("--out", required=True, help="annotation log dir")
    _add_gateway_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--log", required=True, help="annotation log dir")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--budgets", type=_int_list, default=list(DEFAULT_BUDGETS))
    p.add_argument("--ui", default=None, help="static UI directory to mount")
    _add_gateway_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="train the decoder at one budget")
    p.add_argument("--manifest", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_gateway_flags(p)
    _add_train_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("curve", help="train/evaluate across budgets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--budgets", type=_int_list, default=list(DEFAULT_BUDGETS))
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True, help="curve report JSON path")
    _add_gateway_flags(p)
    _add_train_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_gateway_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a curve report to plot + CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    _add_common_flags(p)
    p.set_defaults(func=cmd_plot)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser,
                       argv: list[str]) -> list[str]:
    """Inject config-file values as defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    config_path = argv[idx + 1]
    doc = json.loads(Path(config_path).read_text())
    defaults = {k.replace("-", "_"): v for k, v in doc.items()}
    parser.set_defaults(**defaults)
    for action in parser._subparsers._group_actions:  # argparse internals
        for sub_parser in action.choices.values():
            sub_parser.set_defaults(**{
                k: v for k, v in defaults.items()
                if any(k == a.dest for a in sub_parser._actions)})
    return argv


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except errors.DistillsegError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
