"""Command-line entry point: ``emoimage <verb> [options]``.

Verbs: extract, train, evaluate, ablate, order-search, report, plus the
weight helpers mock-weights and convert-weights.  On failure a single line
``error<TAB><kind><TAB><message>`` goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import archive
from .config import VARIANT_IDS, dump_config, load_config

log = logging.getLogger("emoimage")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML/JSON run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. augment.cutmix.enabled=false")
    parser.add_argument("--seed", type=int, help="training seed (overrides train.seed)")
    parser.add_argument("--data-root", type=Path, help="directory of EmoDB wav files")
    parser.add_argument("--weights", type=Path, help="VGGW1 archive with pre-trained feature layers")
    parser.add_argument("--out", type=Path, default=Path("runs"), help="output directory or file")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emoimage", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("extract", help="trim clips and cache their feature images")
    _common(p)

    p = sub.add_parser("train", help="train and evaluate one variant")
    _common(p)
    p.add_argument("--variant", default=None, choices=VARIANT_IDS)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="split manifest to reuse (default: recompute from config)")

    p = sub.add_parser("ablate", help="run the A-F ablation matrix")
    _common(p)
    p.add_argument("--variants", default="ABCDEF", help="variant ids, e.g. ABCDEF or A,E,F")
    p.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")

    p = sub.add_parser("order-search", help="rank all feature-block orders with logistic regression")
    _common(p)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("report", help="re-render a report from a metrics file")
    _common(p)
    p.add_argument("--metrics", type=Path, required=True)

    p = sub.add_parser("mock-weights", help="write a randomly initialised feature archive")
    _common(p)
    p.add_argument("--no-batch-norm", action="store_true")

    p = sub.add_parser("convert-weights", help="convert a torchvision vgg16(_bn) state dict to VGGW1")
    _common(p)
    p.add_argument("--torch-state", type=Path, required=True)
    return parser


def _config(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    return load_config(args.config, overrides)


def _corpus(args):
    from .dataset import load_emodb

    if args.data_root is None:
        raise ValueError("--data-root is required for this command")
    corpus = load_emodb(args.data_root)
    if not corpus:
        raise ValueError(f"no EmoDB wav files found under {args.data_root}")
    return corpus


def cmd_extract(args) -> int:
    from .features import image_from_samples, log_width_stats, save_image, trim_silence

    cfg = _config(args)
    images = []
    out = args.out / "features"
    for clip in _corpus(args):
        samples = trim_silence(clip, cfg.trim).samples
        samples = np.pad(samples, (0, max(0, cfg.dsp.frame_length - len(samples))))
        image = image_from_samples(samples, cfg.dsp, cfg.order, source_id=clip.clip_id, label=clip.label)
        save_image(image, out / clip.clip_id)
        images.append(image)
    stats = log_width_stats(images)
    print(f"extracted\t{len(images)}\twidth_min\t{stats['min']:.0f}\twidth_max\t{stats['max']:.0f}")
    return 0


def cmd_train(args) -> int:
    from .dataset import write_manifest
    from .experiments import make_split, run_experiment
    from .report import emit_report

    cfg = _config(args)
    if args.variant:
        cfg = cfg.with_variant(args.variant)
    corpus = _corpus(args)
    data = make_split(corpus, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    manifest = write_manifest(data, args.out / "split_manifest.tsv")
    dump_config(cfg, args.out / "config.yaml")
    report = run_experiment(cfg, data, args.weights, args.out, manifest)
    emit_report(report, args.out)
    print(f"Model-{report.variant}\tseed\t{report.seed}\taccuracy\t{report.accuracy:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    from .dataset import evaluation_batches, split_from_manifest
    from .experiments import make_pipeline, make_split
    from .model import build_vgg16, evaluate, load_checkpoint
    from .report import RunReport, emit_report

    cfg = _config(args)
    use_bn = cfg.train.use_batch_norm
    meta_path = Path(str(args.checkpoint) + ".meta")
    if meta_path.exists():
        use_bn = archive.read_metadata(meta_path).get("use_batch_norm", str(use_bn)) == "True"
    corpus = _corpus(args)
    data = split_from_manifest(corpus, args.manifest) if args.manifest else make_split(corpus, cfg)
    model = build_vgg16(use_bn, classifier_hidden=cfg.train.classifier_hidden, dropout=cfg.train.dropout)
    load_checkpoint(model, args.checkpoint)
    result = evaluate(model, evaluation_batches(data.test, make_pipeline(cfg)))
    report = RunReport(cfg.variant, cfg.train.seed, result.accuracy, result.confusion,
                       config=cfg.to_dict(), manifest=str(args.manifest or ""))
    emit_report(report, args.out)
    print(f"accuracy\t{result.accuracy:.4f}\tn\t{result.total}")
    return 0


def cmd_ablate(args) -> int:
    from .experiments import run_ablation
    from .report import summary_table

    cfg = _config(args)
    variants = [v for v in args.variants.replace(",", "").upper()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    _, rows = run_ablation(variants, cfg, seeds, _corpus(args), args.weights, args.out)
    sys.stdout.write(summary_table(rows))
    return 0


def cmd_order_search(args) -> int:
    from .experiments import make_split, order_search, write_order_ranking

    cfg = _config(args)
    data = make_split(_corpus(args), cfg)
    result = order_search(data.train, cfg.split_seed, cfg, folds=args.folds)
    path = write_order_ranking(result, args.out / "order_ranking.tsv")
    print(f"ranked\t{len(result.ranked)}\tshortlist\t{len(result.shortlist)}\tbest\t{result.best_score:.4f}\t{path}")
    for order in result.shortlist:
        print(f"shortlisted\t{order}")
    return 0


def cmd_report(args) -> int:
    from .report import emit_report, parse_metrics, report_from_metrics

    report = report_from_metrics(parse_metrics(args.metrics))
    paths = emit_report(report, args.out)
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


def cmd_mock_weights(args) -> int:
    from .model import write_mock_archive

    seed = 0 if args.seed is None else args.seed
    path = write_mock_archive(args.out, seed=seed, use_batch_norm=not args.no_batch_norm)
    print(f"wrote\t{path}")
    return 0


def cmd_convert_weights(args) -> int:
    import torch

    from .model import convert_torchvision_state

    state = torch.load(args.torch_state, map_location="cpu", weights_only=True)
    tensors = convert_torchvision_state({k: v.numpy() for k, v in state.items()})
    path = archive.write_archive(args.out, tensors)
    print(f"wrote\t{path}\ttensors\t{len(tensors)}")
    return 0


COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "order-search": cmd_order_search,
    "report": cmd_report,
    "mock-weights": cmd_mock_weights,
    "convert-weights": cmd_convert_weights,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.verb](args)
    except Exception as exc:
        message = " ".join(str(exc).split())
        print(f"error\t{type(exc).__name__}\t{message}", file=sys.stderr)
        if args.verbose:
            log.exception("command failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())
