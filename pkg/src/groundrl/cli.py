"""Command-line entry point.

Subcommands: ``convert``, ``filter``, ``score``, ``serve``, ``eval``,
``grpo-demo``.  Machine output is always line-delimited JSON; human tables
go to stdout.  File-emitting commands write atomically (temp file plus
rename), so an interrupted run never leaves a truncated file at the target
path.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import signal
import sys
import tempfile
import threading
from pathlib import Path
from typing import IO, Iterator

from . import __version__
from .dataset import (
    convert_dataset,
    filter_pool,
    read_manifest,
    read_quality_entries,
    record_to_line,
)
from .geometry import BBox, PointXY
from .grpo import GrpoConfig, grpo_demo_train
from .mask_io import load_mask
from .metrics import EvalPair, MetricsReport, evaluate
from .rewards import GroundTruth
from .service import RewardServer, parse_bind, score_batch_file

DEFAULT_BIND_ENV = "GROUNDRL_BIND"
DEFAULT_BIND = "127.0.0.1:7447"

# Fixed synthetic scene for the training demo: a 100x100 image with the
# target box in the middle and both reference points inside it.
DEMO_SCENE = GroundTruth(
    bbox=BBox(20.0, 30.0, 70.0, 80.0),
    point_1=PointXY(45.0, 55.0),
    point_2=PointXY(30.0, 40.0),
    image_width=100.0,
    image_height=100.0,
)


class CliError(Exception):
    """Runtime failure that should exit with status 1."""


@contextlib.contextmanager
def atomic_output(path: str | Path) -> Iterator[IO[str]]:
    """Write to a temp file in the target directory, rename on success."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    tmp = Path(tmp_name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, target)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _machine_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def cmd_convert(args: argparse.Namespace) -> int:
    rows = read_manifest(args.manifest)
    questions = None
    if args.questions:
        questions = {
            str(r["id"]): str(r.get("question", ""))
            for r in read_manifest(args.questions)
        }
    outcome = convert_dataset(rows, questions=questions, base_dir=Path(args.manifest).parent)
    with atomic_output(args.out) as fh:
        for record in outcome.records:
            fh.write(record_to_line(record) + "\n")
    for _, message in outcome.errors:
        print(message, file=sys.stderr)
    print(_machine_line(outcome.summary()))
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    entries = read_quality_entries(args.scores)
    kept, discarded = filter_pool(entries, threshold=args.threshold)
    for path, group in ((args.keep, kept), (args.drop, discarded)):
        with atomic_output(path) as fh:
            for entry in group:
                fh.write(
                    _machine_line(
                        {"image_path": entry.image_path, "quality_score": entry.quality_score}
                    )
                    + "\n"
                )
    print(_machine_line({"kept": len(kept), "discarded": len(discarded)}))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    target = Path(args.out)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    os.close(fd)
    try:
        summary = score_batch_file(args.infile, tmp_name)
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    print(_machine_line(summary.as_dict()))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        host, port = parse_bind(args.bind)
        server = RewardServer(host, port, max_conns=args.max_conns)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot bind {args.bind}: {exc}") from None

    def _stop(signum: int, _frame: object) -> None:
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    host, port = server.bound_address
    print(f"listening on {host}:{port} (max {args.max_conns} connections)", file=sys.stderr)
    try:
        server.serve_forever(poll_interval=0.1)
    finally:
        server.server_close()
    return 0


def _load_eval_pairs(manifest_path: str) -> list[EvalPair]:
    base = Path(manifest_path).parent
    pairs = []
    for index, row in enumerate(read_manifest(manifest_path)):
        for key in ("id", "pred_mask", "gt_mask"):
            if key not in row:
                raise CliError(f"{manifest_path}: row {index} missing {key!r}")
        try:
            pairs.append(
                EvalPair(
                    sample_id=str(row["id"]),
                    pred=load_mask(base / str(row["pred_mask"])),
                    gt=load_mask(base / str(row["gt_mask"])),
                )
            )
        except (OSError, ValueError) as exc:
            raise CliError(f"{manifest_path}: row {index}: {exc}") from None
    return pairs


def _format_report_table(report: MetricsReport) -> str:
    ciou_label = "cIoU" if report.metric_set == "paper" else "cIoU(cum)"
    lines = [
        f"{'sample':<20} {'IoU':>8} {'gIoU':>8} {'cIoU':>8}",
        "-" * 48,
    ]
    for s in report.per_sample:
        lines.append(f"{s.sample_id:<20} {s.iou:>8.4f} {s.giou:>8.4f} {s.ciou:>8.4f}")
    lines.append("-" * 48)
    lines.append(
        f"{'mean (' + str(report.n_samples) + ' samples)':<20} "
        f"{report.miou:>8.4f} {report.giou:>8.4f} {report.ciou:>8.4f}  [{ciou_label}]"
    )
    return "\n".join(lines)


def cmd_eval(args: argparse.Namespace) -> int:
    pairs = _load_eval_pairs(args.manifest)
    report = evaluate(pairs, metric_set=args.metric_set)
    print(_format_report_table(report))
    print(_machine_line({"type": "summary", **report.summary_dict()}))
    if args.out:
        with atomic_output(args.out) as fh:
            for s in report.per_sample:
                fh.write(
                    _machine_line(
                        {"type": "sample", "id": s.sample_id, "iou": s.iou,
                         "giou": s.giou, "ciou": s.ciou}
                    )
                    + "\n"
                )
            fh.write(_machine_line({"type": "summary", **report.summary_dict()}) + "\n")
        if not args.no_figures:
            from .figures import save_metrics_figure

            save_metrics_figure(report, _figure_path(args.out))
    return 0


def cmd_grpo_demo(args: argparse.Namespace) -> int:
    cfg = GrpoConfig(epsilon=args.epsilon, beta=args.beta)
    result = grpo_demo_train(
        DEMO_SCENE,
        cfg,
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        group_size=args.group_size,
    )
    lines = [_machine_line(t.as_dict()) for t in result.trace]
    for line in lines:
        print(line)
    if args.out:
        with atomic_output(args.out) as fh:
            fh.write("\n".join(lines) + "\n")
        if not args.no_figures:
            from .figures import save_trace_figure

            save_trace_figure(result.trace, _figure_path(args.out))
    return 0


def _figure_path(out: str) -> Path:
    path = Path(out)
    fig = path.with_suffix(".png")
    if fig == path:
        fig = path.with_name(path.name + ".figure.png")
    return fig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundrl",
        description="Grounding rewards, GRPO utilities, mask conversion, "
        "segmentation metrics, and the reward-scoring service.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a mask manifest to supervision records")
    p.add_argument("--manifest", required=True, help="line-delimited JSON manifest")
    p.add_argument("--out", required=True, help="output records path")
    p.add_argument("--questions", help="optional id->question overrides (line-delimited JSON)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("filter", help="split an image pool by quality score")
    p.add_argument("--scores", required=True, help="line-delimited JSON quality scores")
    p.add_argument("--threshold", type=float, default=50.0,
                   help="keep entries with score strictly below this (default 50)")
    p.add_argument("--keep", required=True, help="output path for kept entries")
    p.add_argument("--drop", required=True, help="output path for discarded entries")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("score", help="score a batch of requests offline")
    p.add_argument("--in", dest="infile", required=True, help="request lines")
    p.add_argument("--out", required=True, help="response lines")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="run the reward-scoring TCP service")
    p.add_argument("--bind", default=os.environ.get(DEFAULT_BIND_ENV, DEFAULT_BIND),
                   help=f"HOST:PORT (default from ${DEFAULT_BIND_ENV} or {DEFAULT_BIND})")
    p.add_argument("--max-conns", type=int, default=64,
                   help="maximum concurrently served connections")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="evaluate predicted masks against ground truth")
    p.add_argument("--manifest", required=True,
                   help='line-delimited JSON rows {"id","pred_mask","gt_mask"}')
    p.add_argument("--metric-set", choices=("paper", "cumulative"), default="paper",
                   help="per-sample cIoU or dataset-cumulative cIoU")
    p.add_argument("--out", help="write per-sample records and the summary here")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grpo-demo", help="run the toy GRPO training demo")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=0.2, help="clip range")
    p.add_argument("--beta", type=float, default=5.0e-3, help="KL weight")
    p.add_argument("--out", help="write the trace here (and a figure alongside)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_grpo_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
