"""Command-line interface.

Subcommands: featurize, forward, sim, fit, eval, report.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import asr, calib, feats, pipeline, reps, sim

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_DATA_ERRORS = (
    pipeline.PipelineError, reps.FormatError, feats.AudioError,
    sim.SimilarityError, calib.MetricError, asr.AsrError,
    FileNotFoundError, ValueError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hirsim",
                description="Intelligibility prediction from hidden-representation similarity")
    p.add_argument("--manifest", help="trial manifest JSON")
    p.add_argument("--cache-dir", default="cache", help="representation cache directory")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--level", choices=list(reps.LEVELS), help="representation level")
    p.add_argument("--dtw-radius", type=int, help="fast-DTW corridor radius")
    p.add_argument("--fit-split", choices=["dev", "train_all"],
                   help="split the logistic mapping is fitted on")
    p.add_argument("--wcs-percent", action="store_true",
                   help="manifest correctness is on a 0-100 scale")
    p.add_argument("--lenient", action="store_true",
                   help="report per-trial failures instead of aborting")

    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("featurize", help="compute input-level log-mel representations")
    sp = sub.add_parser("forward", help="run the toy ASR over cached input representations")
    sp.add_argument("--levels", default="pre,enc,dec",
                    help="comma-separated levels to write (subset of pre,enc,dec)")
    sp = sub.add_parser("sim", help="score every trial at the chosen level")
    sp.add_argument("--scores", default="scores.csv", help="output CSV path")
    sp = sub.add_parser("fit", help="fit the logistic calibration mapping")
    sp.add_argument("--scores", default="scores.csv")
    sp.add_argument("--params", default="params.json", help="output params JSON path")
    sp = sub.add_parser("eval", help="evaluate predictions on the eval split")
    sp.add_argument("--scores", default="scores.csv")
    sp.add_argument("--params", default="params.json")
    sp.add_argument("--out-dir", default=".", help="directory for report files")
    sp = sub.add_parser("report", help="print a summary of an existing report.json")
    sp.add_argument("--report", default="report.json")
    return p


def _make_config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.PipelineConfig()
    overrides = {}
    if args.level is not None:
        overrides["level"] = args.level
    if args.dtw_radius is not None:
        overrides["dtw_radius"] = args.dtw_radius
    if args.fit_split is not None:
        overrides["fit_split"] = args.fit_split
    if args.wcs_percent:
        overrides["wcs_percent"] = True
    if args.lenient:
        overrides["lenient"] = True
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _require_manifest(args) -> str:
    if not args.manifest:
        print("error: --manifest is required for this command", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    return args.manifest


def _report_stage(name: str, result: pipeline.StageResult) -> int:
    print(f"{name}: {result.written} written, {result.skipped} up to date, "
          f"{len(result.failures)} failed")
    for sid, msg in result.failures:
        print(f"  FAILED {sid}: {msg}", file=sys.stderr)
    return EXIT_DATA if result.failures else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _make_config(args)
        if args.command == "featurize":
            res = pipeline.run_featurize(_require_manifest(args), args.cache_dir, cfg)
            return _report_stage("featurize", res)
        if args.command == "forward":
            levels = tuple(s.strip() for s in args.levels.split(",") if s.strip())
            res = pipeline.run_forward(_require_manifest(args), args.cache_dir, cfg,
                                       levels=levels)
            return _report_stage("forward", res)
        if args.command == "sim":
            res = pipeline.run_sim(_require_manifest(args), args.cache_dir,
                                   args.scores, cfg)
            print(f"sim: {res.written} trials scored -> {args.scores}")
            return EXIT_DATA if res.failures else EXIT_OK
        if args.command == "fit":
            params = pipeline.run_fit(args.scores, _require_manifest(args),
                                      args.params, cfg)
            print(f"fit: a={params.a:.6g} b={params.b:.6g} -> {args.params}")
            return EXIT_OK
        if args.command == "eval":
            report = pipeline.run_eval(args.scores, _require_manifest(args),
                                       args.params, args.out_dir, cfg)
            _print_report(report)
            return EXIT_OK
        if args.command == "report":
            _print_report(json.loads(Path(args.report).read_text()))
            return EXIT_OK
        print(f"error: unknown command {args.command}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - stable exit-code contract
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def _print_report(report: dict) -> None:
    print(f"level: {report.get('level', '?')}")
    for section in ("trial", "trial_raw", "listener", "system"):
        if section not in report:
            continue
        m = report[section]
        print(f"{section:>10}: RMSE {m['rmse']:.4f}  NCC {m['ncc']:.4f}  KT {m['kt']:.4f}")


if __name__ == "__main__":
    sys.exit(main())
