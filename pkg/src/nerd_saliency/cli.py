"""Command-line interface: ``nerd {detect,eval,bench,genfilters}``.

Any long option may also come from ``--config FILE`` (``key = value`` lines,
``#`` comments); options given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import evaluation
from .estimator import NeRDSaliency
from .features import export_filter_bank, generate_filter_bank
from .imaging import load_image, save_gray, save_label_pgm

log = logging.getLogger("nerd_saliency")


def _float_list(text):
    try:
        values = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _probability(text):
    p = float(text)
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"connectivity must lie in [0, 1], got {text}")
    return p


def _sigma(text):
    if str(text).lower() == "auto":
        return None
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("sigma must be positive or 'auto'")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed for every stochastic stage")
    common.add_argument("--config", type=Path, help="key=value file supplying option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    pipe = argparse.ArgumentParser(add_help=False)
    g = pipe.add_argument_group("pipeline")
    g.add_argument("--filters", type=Path, help="NERD-FB filter bank (default: procedural bank)")
    g.add_argument("--filter-kind", choices=("gabor", "random"), default="gabor")
    g.add_argument("--n-filters", type=int, default=96)
    g.add_argument("--kernel-size", type=int, default=11)
    g.add_argument("--connectivity", type=_probability, default=0.25)
    g.add_argument("--stride", type=int, default=4)
    g.add_argument("--padding", choices=("edge", "zero"), default="edge")
    g.add_argument("--superpixels", type=int, default=300)
    g.add_argument("--atom-counts", type=_int_list, default=[5, 25, 45, 65, 85])
    g.add_argument("--compactness", type=float, default=10.0)
    g.add_argument("--slic-iterations", type=int, default=10)
    g.add_argument("--sigma", type=_sigma, default=None, help="divergence kernel width or 'auto'")

    parser = argparse.ArgumentParser(prog="nerd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[common, pipe], help="compute a saliency map")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, help="output map (.png or .pgm); default <image>_saliency.png")
    p.add_argument("--dump-dir", type=Path, help="also write the segmentation and per-layer maps here")

    p = sub.add_parser("eval", parents=[common, pipe], help="evaluate against ground-truth masks")
    p.add_argument("images", type=Path)
    p.add_argument("masks", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="leave the seconds column empty")

    p = sub.add_parser("bench", parents=[common, pipe], help="time the pipeline across connectivities")
    p.add_argument("image", type=Path)
    p.add_argument("--connectivity-sweep", type=_float_list, default=[0.25, 0.75, 1.0])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--conv-only", action="store_true", help="time the convolution stage only")
    p.add_argument("--out", type=Path, default=Path("bench.csv"))

    p = sub.add_parser("genfilters", parents=[common], help="write a procedural NERD-FB filter bank")
    p.add_argument("--count", type=int, default=96)
    p.add_argument("--size", type=int, default=11)
    p.add_argument("--kind", choices=("gabor", "random"), default="gabor")
    p.add_argument("--out", type=Path, default=Path("filters.nerdfb"))
    return parser


def read_config(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(parser, argv):
    """Re-read ``--config`` values as subcommand defaults."""
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None) is None:
        return
    values = read_config(pre.config)
    subparser = parser._subparsers._group_actions[0].choices[pre.command]
    actions = {a.dest: a for a in subparser._actions}
    unknown = sorted(set(values) - set(actions) - {"config", "help"})
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, value in values.items():
        if isinstance(actions[key], argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = value
    subparser.set_defaults(**defaults)


def _estimator(args) -> NeRDSaliency:
    return NeRDSaliency(
        n_filters=args.n_filters,
        kernel_size=args.kernel_size,
        filter_kind=args.filter_kind,
        filter_path=args.filters,
        connectivity=args.connectivity,
        stride=args.stride,
        padding=args.padding,
        n_superpixels=args.superpixels,
        atom_counts=tuple(args.atom_counts),
        compactness=args.compactness,
        slic_iterations=args.slic_iterations,
        sigma=args.sigma,
        seed=args.seed,
    )


def cmd_detect(args) -> int:
    img = load_image(args.image)
    est = _estimator(args).fit()
    det = est.detect(img)
    out = args.out or args.image.with_name(args.image.stem + "_saliency.png")
    save_gray(det.saliency, out)
    if args.dump_dir:
        args.dump_dir.mkdir(parents=True, exist_ok=True)
        save_label_pgm(det.segmentation.labels, args.dump_dir / "segmentation.pgm")
        for k, layer in zip(est.hierarchy_.atom_counts, det.layer_maps):
            peak = layer.max()
            save_gray(layer / peak if peak > 0 else layer, args.dump_dir / f"layer_{k:03d}.png")
    for stage, secs in det.timings.items():
        print(f"{stage:10s} {secs:.4f} s")
    print(f"wrote {out}")
    return 0


def cmd_eval(args) -> int:
    if not args.images.is_dir() or not args.masks.is_dir():
        raise FileNotFoundError("image and mask directories must exist")
    if args.jobs < 1:
        raise ValueError("--jobs must be >= 1")
    est = _estimator(args).fit()
    report = evaluation.evaluate_dataset(args.images, args.masks, est.transform, jobs=args.jobs)
    for name, error in report.errors:
        print(f"skipped {name}: {error}", file=sys.stderr)
    if not report.results:
        print("error: no valid image/mask pairs", file=sys.stderr)
        return 1
    args.out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_csv(report, args.out_dir / "report.csv", timing=not args.no_timing)
    evaluation.write_pr_csv(report.mean_precision, report.mean_recall, args.out_dir / "pr_curve.csv")
    print(f"{len(report.results)} images, mean PR-AUC {report.mean_auc:.4f}")
    return 0


def cmd_bench(args) -> int:
    sweep = args.connectivity_sweep
    if any(not 0.0 <= p <= 1.0 for p in sweep):
        raise ValueError(f"connectivity sweep values must lie in [0, 1], got {sweep}")
    img = load_image(args.image)
    reports = evaluation.bench_pipeline(
        img, _estimator(args), sweep, repeats=args.repeats, image_id=args.image.name, conv_only=args.conv_only
    )
    evaluation.write_bench_csv(reports, args.out)
    dense_conv = next((r.stage_seconds["conv"] for r in reports if r.connectivity == 1.0), None)
    for r in reports:
        line = f"p={r.connectivity:.2f} macs {r.macs_actual}/{r.macs_dense} ({r.mac_ratio:.3f}) conv {r.stage_seconds['conv']:.4f} s"
        if dense_conv:
            line += f" ({100 * (1 - r.stage_seconds['conv'] / dense_conv):.1f}% faster than dense)"
        print(line)
    return 0


def cmd_genfilters(args) -> int:
    bank = generate_filter_bank(args.count, args.size, args.kind, 1.0, args.seed)
    export_filter_bank(bank, args.out)
    print(f"wrote {args.out} ({bank.count} filters, {args.size}x{args.size})")
    return 0


COMMANDS = {"detect": cmd_detect, "eval": cmd_eval, "bench": cmd_bench, "genfilters": cmd_genfilters}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        if args.verbose:
            log.exception("%s failed", args.command)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
