"""End-to-end pipeline stages: featurize -> forward -> sim -> fit -> eval.

Each stage reads and writes files under a cache directory, keyed by a content
hash of its inputs and config so that reruns are idempotent and config changes
invalidate downstream artifacts. All stages are deterministic; the only
run-dependent output byte is a timestamp comment at the top of scores.csv.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import asr, calib, feats, reps, sim


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    feat: feats.FeatConfig = field(default_factory=feats.FeatConfig)
    asr: asr.ToyAsrConfig = field(default_factory=asr.ToyAsrConfig)
    level: str = "dec"
    dtw_radius: int = sim.DEFAULT_RADIUS
    fit_split: str = "dev"
    wcs_percent: bool = False
    lenient: bool = False

    def __post_init__(self):
        if self.level not in reps.LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        if self.fit_split not in ("dev", "train_all"):
            raise ValueError(f"unknown fit_split {self.fit_split!r}")
        if self.dtw_radius < 0:
            raise ValueError("dtw_radius must be >= 0")


def load_config(path) -> PipelineConfig:
    raw = json.loads(Path(path).read_text())
    kwargs = {}
    if "feat" in raw:
        kwargs["feat"] = feats.FeatConfig(**raw["feat"])
    if "asr" in raw:
        a = dict(raw["asr"])
        if "prenet_channels" in a:
            a["prenet_channels"] = tuple(a["prenet_channels"])
        kwargs["asr"] = asr.ToyAsrConfig(**a)
    for key in ("level", "dtw_radius", "fit_split", "wcs_percent", "lenient"):
        if key in raw:
            kwargs[key] = raw[key]
    return PipelineConfig(**kwargs)


def _hash(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


def _cache_name(signal_id: str, side: str, channel: str, level: str) -> str:
    return f"{signal_id}__{side}__{channel}__{level}.hrep"


def _meta_path(hrep_path: Path) -> Path:
    return hrep_path.with_suffix(".meta.json")


def _is_fresh(hrep_path: Path, input_hash: str) -> bool:
    meta = _meta_path(hrep_path)
    if not hrep_path.exists() or not meta.exists():
        return False
    try:
        return json.loads(meta.read_text()).get("input_hash") == input_hash
    except (OSError, json.JSONDecodeError):
        return False


def _mark_fresh(hrep_path: Path, input_hash: str) -> None:
    _meta_path(hrep_path).write_text(json.dumps({"input_hash": input_hash}))


@dataclass
class StageResult:
    written: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)  # (signal_id, message)


def _unique_sources(records: list[reps.TrialRecord], manifest_path) -> dict:
    """Map (signal_id, side) -> (left_path, right_path); signals referenced by
    multiple trials must agree on their audio paths."""
    sources: dict[tuple, tuple] = {}
    for rec in records:
        for side, left, right in (("ref", rec.ref_left, rec.ref_right),
                                  ("proc", rec.proc_left, rec.proc_right)):
            key = (rec.signal_id, side)
            paths = (str(reps.resolve_path(manifest_path, left)),
                     str(reps.resolve_path(manifest_path, right)))
            if key in sources and sources[key] != paths:
                raise PipelineError(
                    f"signal {rec.signal_id} ({side}) references conflicting audio paths")
            sources[key] = paths
    return sources


def run_featurize(manifest_path, cache_dir, cfg: PipelineConfig) -> StageResult:
    """Compute input-level .hrep files for every (signal, side, channel)."""
    records = reps.load_manifest(manifest_path, wcs_percent=cfg.wcs_percent,
                                 lenient=cfg.lenient)
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    result = StageResult()
    cfg_bytes = repr(cfg.feat).encode()

    for (signal_id, side), (left_path, right_path) in sorted(
            _unique_sources(records, manifest_path).items()):
        try:
            for channel, src in (("left", left_path), ("right", right_path)):
                out = cache / _cache_name(signal_id, side, channel, "input")
                if src.endswith(".hrep"):
                    raw = Path(src).read_bytes()
                    input_hash = _hash(raw, cfg_bytes)
                    if _is_fresh(out, input_hash):
                        result.skipped += 1
                        continue
                    rep = reps.read_reps(src)
                    rep = reps.RepSequence(data=rep.data, level="input",
                                           channel=channel, signal_id=signal_id)
                else:
                    raw = Path(src).read_bytes()
                    input_hash = _hash(raw, cfg_bytes, channel.encode())
                    if _is_fresh(out, input_hash):
                        result.skipped += 1
                        continue
                    signal = feats.read_wav(src)
                    rep = feats.logmel(signal.channel(channel), cfg.feat,
                                       signal.sample_rate_hz,
                                       signal_id=signal_id, channel=channel)
                reps.write_reps(rep, out)
                _mark_fresh(out, input_hash)
                result.written += 1
        except (OSError, feats.AudioError, reps.FormatError, ValueError) as e:
            result.failures.append((signal_id, str(e)))
            if not cfg.lenient:
                raise PipelineError(f"featurize failed for {signal_id}: {e}") from e
    return result


def run_forward(manifest_path, cache_dir, cfg: PipelineConfig,
                levels=("pre", "enc", "dec")) -> StageResult:
    """Run the toy model on every input-level .hrep, writing the requested
    hidden-representation levels."""
    records = reps.load_manifest(manifest_path, wcs_percent=cfg.wcs_percent,
                                 lenient=True)
    cache = Path(cache_dir)
    result = StageResult()
    cfg_bytes = repr(cfg.asr).encode()
    levels = tuple(levels)
    for lv in levels:
        if lv not in ("pre", "enc", "dec"):
            raise PipelineError(f"forward cannot produce level {lv!r}")

    for (signal_id, side) in sorted({(r.signal_id, s) for r in records
                                     for s in ("ref", "proc")}):
        for channel in ("left", "right"):
            src = cache / _cache_name(signal_id, side, channel, "input")
            if not src.exists():
                result.failures.append((signal_id, f"missing input representation {src.name}"))
                if not cfg.lenient:
                    raise PipelineError(f"missing input representation {src}")
                continue
            raw = src.read_bytes()
            input_hash = _hash(raw, cfg_bytes)
            outs = {lv: cache / _cache_name(signal_id, side, channel, lv) for lv in levels}
            if all(_is_fresh(p, input_hash) for p in outs.values()):
                result.skipped += len(outs)
                continue
            hidden = asr.toy_forward(reps.read_reps(src), cfg.asr)
            for lv, out in outs.items():
                reps.write_reps(hidden[lv], out)
                _mark_fresh(out, input_hash)
                result.written += 1
    return result


SCORE_FIELDS = ("signal_id", "listener_id", "system_id", "level",
                "raw_score", "zero_norm_frames")


def run_sim(manifest_path, cache_dir, scores_path, cfg: PipelineConfig) -> StageResult:
    """Score every trial at the configured level and write scores.csv."""
    records = reps.load_manifest(manifest_path, wcs_percent=cfg.wcs_percent,
                                 lenient=True)
    cache = Path(cache_dir)
    result = StageResult()
    rows = []
    for rec in sorted(records, key=lambda r: (r.signal_id, r.listener_id)):
        try:
            pair = {}
            for side in ("ref", "proc"):
                chans = {}
                for channel in ("left", "right"):
                    p = cache / _cache_name(rec.signal_id, side, channel, cfg.level)
                    if not p.exists():
                        raise PipelineError(f"missing representation {p.name}")
                    chans[channel] = reps.read_reps(p)
                pair[side] = reps.BinauralRep(left=chans["left"], right=chans["right"])
            score = sim.binaural_similarity(pair["ref"], pair["proc"], cfg.dtw_radius)
            rows.append({
                "signal_id": rec.signal_id, "listener_id": rec.listener_id,
                "system_id": rec.system_id, "level": cfg.level,
                "raw_score": f"{score.value:.12g}",
                "zero_norm_frames": score.zero_norm_frames,
            })
        except (PipelineError, reps.FormatError, sim.SimilarityError) as e:
            result.failures.append((rec.signal_id, str(e)))
            if not cfg.lenient:
                raise PipelineError(f"sim failed for trial {rec.signal_id}: {e}") from e

    scores_path = Path(scores_path)
    scores_path.parent.mkdir(parents=True, exist_ok=True)
    with scores_path.open("w", newline="") as f:
        f.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        writer = csv.DictWriter(f, fieldnames=SCORE_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    result.written = len(rows)
    return result


def read_scores(scores_path) -> list[dict]:
    with Path(scores_path).open(newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for row in rows:
        row["raw_score"] = float(row["raw_score"])
        row["zero_norm_frames"] = int(row["zero_norm_frames"])
    return rows


def _join_scores(scores: list[dict], records: list[reps.TrialRecord]) -> list[dict]:
    by_key = {(r.signal_id, r.listener_id): r for r in records}
    joined = []
    for row in scores:
        rec = by_key.get((row["signal_id"], row["listener_id"]))
        if rec is None:
            raise PipelineError(
                f"score row ({row['signal_id']}, {row['listener_id']}) not in manifest")
        joined.append({**row, "correctness": rec.correctness, "split": rec.split})
    return joined


def run_fit(scores_path, manifest_path, params_path, cfg: PipelineConfig) -> calib.LogisticParams:
    """Fit the logistic mapping on the configured split; never reads eval WCS."""
    records = reps.load_manifest(manifest_path, wcs_percent=cfg.wcs_percent, lenient=True)
    splits = ("dev",) if cfg.fit_split == "dev" else ("train", "dev")
    rows = [r for r in _join_scores(read_scores(scores_path), records)
            if r["split"] in splits]
    if not rows:
        raise PipelineError(f"no trials in split(s) {splits} to fit on")
    pairs = [(r["raw_score"], r["correctness"]) for r in rows]
    params = calib.fit_logistic(pairs)
    mapped = calib.logistic(np.array([p[0] for p in pairs]), params)
    fit_rmse = calib.rmse(mapped, [p[1] for p in pairs])
    out = Path(params_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(
        {"a": params.a, "b": params.b, "fit_rmse": fit_rmse, "n_dev": len(pairs)},
        indent=2) + "\n")
    return params


def run_eval(scores_path, manifest_path, params_path, out_dir,
             cfg: PipelineConfig) -> dict:
    """Evaluate on the eval split; writes report.json and the listener-wise
    and system-wise CSVs."""
    records = reps.load_manifest(manifest_path, wcs_percent=cfg.wcs_percent, lenient=True)
    params_raw = json.loads(Path(params_path).read_text())
    params = calib.LogisticParams(a=params_raw["a"], b=params_raw["b"])
    rows = [r for r in _join_scores(read_scores(scores_path), records)
            if r["split"] == "eval"]
    if not rows:
        raise PipelineError("eval split is empty")

    raw = np.array([r["raw_score"] for r in rows])
    truth = np.array([r["correctness"] for r in rows])
    mapped = calib.logistic(raw, params)
    trial = calib.trial_report(mapped, truth, kt_scores=raw)
    listener = calib.group_aggregate(
        [(r["listener_id"], m, r["correctness"]) for r, m in zip(rows, mapped)], "listener")
    system = calib.group_aggregate(
        [(r["system_id"], m, r["correctness"]) for r, m in zip(rows, mapped)], "system")

    report = {
        "level": cfg.level,
        "params": {"a": params.a, "b": params.b},
        "trial": trial.to_dict(),
        # raw-score metrics labelled separately: no logistic mapping applied
        "trial_raw": {"rmse": calib.rmse(raw, truth), "ncc": calib.ncc(raw, truth),
                      "kt": calib.kendall_tau(raw, truth)},
        "listener": listener.to_dict(),
        "system": system.to_dict(),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, rep in (("listener", listener), ("system", system)):
        with (out / f"report_{name}.csv").open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow([name, "pred_mean", "truth_mean", "pred_stderr", "truth_stderr"])
            for gid, pm, tm, ps, ts in zip(rep.group_ids, rep.group_pred_means,
                                           rep.group_truth_means, rep.group_pred_stderr,
                                           rep.group_truth_stderr):
                w.writerow([gid, f"{pm:.12g}", f"{tm:.12g}", f"{ps:.12g}", f"{ts:.12g}"])
    return report
