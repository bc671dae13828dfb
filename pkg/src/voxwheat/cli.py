"""Command-line entry point.

Exit codes:
    0   success
    2   convert: some inputs failed, the rest were written
    64  usage error
    65  split: label table is missing labels or malformed
    66  inspect: tensor file unreadable or corrupt
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import archgen, pipeline, tensorio
from .dataset import MissingLabelError
from .errors import LabelError, ManifestError, ShapeError, TensorFormatError, VoxwheatError
from .resample import Envelope

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_NOINPUT = 66


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError("must be a finite number > 0")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _fraction(text):
    v = _positive_float(text)
    if not v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def _envelope(text):
    if text == "none":
        return None
    try:
        return Envelope.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _thread_list(text):
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="voxwheat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("convert", help="convert PLY point clouds to voxel tensors")
    c.add_argument("--input", action="append", required=True,
                   help="PLY path or glob; repeatable")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--resolution", type=_positive_float, default=1.0)
    c.add_argument("--channels", choices=("rgb", "nir", "rgbn"), default="rgb")
    c.add_argument("--envelope", type=_envelope, default=None,
                   help="none, spike-rgb, head, dataset2 or WxHxD")
    c.add_argument("--format", choices=tensorio.FORMATS, default="v3d")
    c.add_argument("--threads", type=_positive_int, default=pipeline.default_threads())
    c.add_argument("--batch-size", type=_positive_int, default=16)
    c.add_argument("--nir-name", action="append", default=None,
                   help="PLY property holding NIR; repeatable, tried in order")

    s = sub.add_parser("split", help="stratified train/test split and k-fold assignment")
    s.add_argument("--labels", required=True)
    s.add_argument("--test-frac", type=_fraction, default=0.1)
    s.add_argument("--folds", type=_positive_int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--strata", default="auto",
                   help="auto, class_label, severity_pct, infected_spikelets or total_spikelets")
    s.add_argument("--out", required=True)

    a = sub.add_parser("archgen", help="sample valid 3D-CNN specs")
    a.add_argument("--task", choices=archgen.TASKS, default="detection")
    a.add_argument("--batch-size", type=_positive_int, default=20)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--input-dims", default=None, help="W,H,D,C")
    a.add_argument("--out", required=True)

    i = sub.add_parser("inspect", help="print a tensor file header")
    i.add_argument("file")

    b = sub.add_parser("bench", help="conversion throughput per thread count")
    b.add_argument("--points", type=_positive_int, default=1_000_000, help="points per cloud")
    b.add_argument("--clouds", type=_positive_int, default=10)
    b.add_argument("--threads", type=_thread_list, default=[1, 2, 4, 8])
    b.add_argument("--resolution", type=_positive_float, default=1.0)
    b.add_argument("--seed", type=int, default=0)
    return p


def cmd_convert(args) -> int:
    config = pipeline.JobConfig(
        inputs=args.input, out_dir=args.out, resolution=args.resolution,
        channels=args.channels, envelope=args.envelope, fmt=args.format,
        threads=args.threads, batch_size=args.batch_size,
        nir_names=tuple(args.nir_name) if args.nir_name else pipeline.DEFAULT_NIR_NAMES)
    report = pipeline.convert_files(config)
    for line in report.lines():
        print(line)
    return report.exit_code


def cmd_split(args) -> int:
    try:
        text = Path(args.labels).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"split: cannot read {args.labels}: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    try:
        out = pipeline.split_labels(text, args.test_frac, args.folds, args.seed, args.strata)
    except MissingLabelError as exc:
        print("split: records without labels:", file=sys.stderr)
        for path in exc.paths:
            print(path, file=sys.stderr)
        return EXIT_DATAERR
    except (LabelError, ManifestError, VoxwheatError) as exc:
        print(f"split: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    Path(args.out).write_text(out, encoding="utf-8", newline="\n")
    return EXIT_OK


def cmd_archgen(args) -> int:
    overrides = {}
    if args.input_dims:
        overrides["input_dims"] = tuple(int(v) for v in args.input_dims.split(","))
    specs = archgen.sample_batch(args.seed, args.batch_size, args.task, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(len(specs)))
    for k, spec in enumerate(specs, start=1):
        path = out / f"model_{k:0{width}d}.spec"
        path.write_text(archgen.emit_spec(spec), encoding="utf-8", newline="\n")
        try:
            params = archgen.param_count(spec)
        except ShapeError:
            params = "infeasible"
        print(f"{path}\tconv={','.join(map(str, spec.conv_neurons))}"
              f"\tdense={','.join(map(str, spec.all_dense))}\tparams={params}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        data = Path(args.file).read_bytes()
        info = tensorio.describe(data)
    except OSError as exc:
        print(f"inspect: cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except TensorFormatError as exc:
        print(f"inspect: corrupt tensor at byte offset {exc.offset}: {exc.reason}",
              file=sys.stderr)
        return EXIT_NOINPUT
    print(f"format {info['format']}")
    print(f"magic {info['magic']}")
    print("dims {} {} {}".format(*info["dims"]))
    print(f"channels {info['channels']}")
    print(f"occupied {info['occupied']}")
    return EXIT_OK


def cmd_bench(args) -> int:
    report = pipeline.bench(args.points, args.threads, args.clouds, args.resolution,
                            seed=args.seed)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.deterministic else 1


COMMANDS = {"convert": cmd_convert, "split": cmd_split, "archgen": cmd_archgen,
            "inspect": cmd_inspect, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
