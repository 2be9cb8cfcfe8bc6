"""Command-line interface.

Subcommands: `run` processes a dataset sequence into a trajectory file,
`eval` scores an estimate against ground truth (CSV report plus a rendered
error figure), `plot` draws a top-down path figure, and `print-config`
dumps effective configuration values.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import evaluation, kitti_io, pipeline
from .config import EngineConfig, dump_config, load_config
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    LengthMismatchError,
    MalformedPoseLineError,
    MalformedScanError,
    OdometryError,
    UnsupportedFormatError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_DATA_ERRORS = (
    FileNotFoundError,
    OSError,
    MalformedScanError,
    MalformedPoseLineError,
    UnsupportedFormatError,
    LengthMismatchError,
    DegenerateGeometryError,
    ConfigError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="odom", description="LiDAR odometry engine")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a dataset sequence into a trajectory")
    run.add_argument("--dataset", required=True, help="dataset root directory")
    run.add_argument("--sequence", required=True, help="sequence id, e.g. 04")
    run.add_argument("--config", help="config file (key = value lines)")
    run.add_argument("--output", required=True, help="trajectory output file")
    run.add_argument("--diagnostics", help="per-frame diagnostics CSV")
    run.add_argument("--format", choices=["kitti", "tum"], default="kitti")
    run.add_argument("--max-frames", type=int, help="process only the first N scans")
    run.add_argument("--weight-decay", type=float, help="override coarse_sigma")

    ev = sub.add_parser("eval", help="absolute pose error of an estimate")
    ev.add_argument("--estimate", required=True)
    ev.add_argument("--ground-truth", required=True)
    ev.add_argument("--calib", help="calib file; conjugates ground truth into the sensor frame")
    ev.add_argument("--align", dest="align", action="store_true", default=EngineConfig().eval_align)
    ev.add_argument("--no-align", dest="align", action="store_false")
    ev.add_argument("--report", required=True, help="CSV report path; a figure lands next to it")

    plot = sub.add_parser("plot", help="top-down path figure")
    plot.add_argument("--estimate", required=True)
    plot.add_argument("--ground-truth")
    plot.add_argument("--out", required=True, help="figure output path (svg)")
    plot.add_argument("--plane", choices=["xy", "xz"], default="xy")

    pc = sub.add_parser("print-config", help="dump effective configuration")
    pc.add_argument("--config")
    return parser


def _load_cfg(path) -> EngineConfig:
    return load_config(path) if path else EngineConfig()


def _cmd_run(args) -> int:
    cfg = _load_cfg(args.config)
    if args.weight_decay is not None:
        cfg.coarse_sigma = args.weight_decay
        cfg.validate()
    sequence = kitti_io.load_sequence(args.dataset, args.sequence)
    scans = sequence.scan_paths[: args.max_frames] if args.max_frames else sequence.scan_paths

    poses = []
    diags = []
    summary = pipeline.run_sequence(
        (kitti_io.read_scan(p) for p in scans),
        cfg,
        on_pose=poses.append,
        on_diagnostics=diags.append,
    )
    kitti_io.write_trajectory(poses, args.output, format=args.format, dt=cfg.dt)
    if args.diagnostics:
        with open(args.diagnostics, "w", encoding="utf-8") as f:
            f.write(pipeline.diagnostics_header() + "\n")
            for d in diags:
                f.write(pipeline.diagnostics_row(d) + "\n")
    print(
        f"{summary.frame_count} frames, {summary.mean_ms:.1f} ms mean / "
        f"{summary.max_ms:.1f} ms max per frame, {summary.failure_count} fallback frames"
    )
    return EXIT_OK


def _ape_figure(report, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(report.per_frame, lw=1.0)
    ax.axhline(report.rmse, color="tab:red", ls="--", lw=0.8, label=f"rmse {report.rmse:.3f} m")
    ax.set_xlabel("frame")
    ax.set_ylabel("APE [m]")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _cmd_eval(args) -> int:
    estimate = kitti_io.read_trajectory(args.estimate)
    reference = kitti_io.read_trajectory(args.ground_truth)
    if args.calib:
        tr = kitti_io.read_calibration(args.calib)
        reference = kitti_io.apply_calibration(reference, tr)
    if len(reference) > len(estimate):
        reference = reference[: len(estimate)]
    report = evaluation.compute_ape(estimate, reference, align=args.align)
    evaluation.write_ape_csv(report, args.report)
    _ape_figure(report, Path(args.report).with_suffix(".svg"))
    print(f"rmse {report.rmse:.4f} m, mean {report.mean:.4f} m, std {report.std:.4f} m")
    return EXIT_OK


def _cmd_plot(args) -> int:
    estimate = kitti_io.read_trajectory(args.estimate)
    ax_idx = {"xy": (0, 1), "xz": (0, 2)}[args.plane]
    fig, ax = plt.subplots(figsize=(6, 6))
    xs = [p.translation[ax_idx[0]] for p in estimate]
    ys = [p.translation[ax_idx[1]] for p in estimate]
    ax.plot(xs, ys, label="estimate")
    if args.ground_truth:
        reference = kitti_io.read_trajectory(args.ground_truth)
        gx = [p.translation[ax_idx[0]] for p in reference]
        gy = [p.translation[ax_idx[1]] for p in reference]
        ax.plot(gx, gy, "--", label="ground truth")
    ax.set_xlabel(f"{args.plane[0]} [m]")
    ax.set_ylabel(f"{args.plane[1]} [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out)
    plt.close(fig)
    return EXIT_OK


def _cmd_print_config(args) -> int:
    sys.stdout.write(dump_config(_load_cfg(args.config)))
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
    "print-config": _cmd_print_config,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        print(f"odom: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OdometryError as exc:
        print(f"odom: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
