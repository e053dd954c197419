"""Command-line pipeline: synth, track, metrics, dataset, train-eval, render.

All commands read an optional JSON config (defaults reproduce the evaluated
protocol: 70/10/20 splits, 10 runs, history lengths 0..10, the published
tracker constants) with flag overrides on top. Identical inputs, config and
seeds give byte-identical CSV/JSON/PPM outputs.

Exit codes: 0 success, 2 validation error (malformed inputs, bad config),
3 I/O error (missing paths, unreadable or unwritable files).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import synth as synthmod
from .dataset import (
    FeatureMatrix,
    build_timeseries,
    concat_feature_matrices,
    read_dataset_csv,
    write_dataset_csv,
)
from .errors import IoFailure, SegQualityError
from .evaluate import (
    ExperimentConfig,
    run_experiment,
    write_report_csv,
    write_report_json,
)
from .figures import report_figures
from .metrics import feature_names, write_metrics_csv
from .models import GBParams, NNParams, save_model
from .models.base import load_model
from .pipeline import (
    default_threads,
    label_sequence,
    load_gt_dir,
    load_tensor_dir,
    process_sequence,
)
from .render import hstack_panels, render_classes, render_quality, write_ppm
from .targets import frame_targets
from .tensor_io import LabelMap, store_tensor
from .tracking import TrackerConfig, write_track_csv


@dataclasses.dataclass
class PipelineConfig:
    tensors_dir: str | None = None
    gt_dir: str | None = None
    out_dir: str = "out"
    threads: int = 0  # 0 = use SEGQUALITY_THREADS or 1
    tracker: TrackerConfig = dataclasses.field(default_factory=TrackerConfig)
    experiment: ExperimentConfig = dataclasses.field(default_factory=ExperimentConfig)

    @staticmethod
    def load(path: str | None) -> "PipelineConfig":
        cfg = PipelineConfig()
        if path is None:
            return cfg
        with open(path) as f:
            raw = json.load(f)
        cfg.tensors_dir = raw.get("tensors_dir", cfg.tensors_dir)
        cfg.gt_dir = raw.get("gt_dir", cfg.gt_dir)
        cfg.out_dir = raw.get("out_dir", cfg.out_dir)
        cfg.threads = raw.get("threads", cfg.threads)
        if "tracker" in raw:
            cfg.tracker = TrackerConfig(**raw["tracker"])
        exp = raw.get("experiment", {})
        if exp:
            if "gb" in exp:
                exp["gb"] = GBParams(**exp["gb"])
            if "nn" in exp:
                exp["nn"] = NNParams(**exp["nn"])
            for key in ("classify_models", "regress_models", "n_c_values",
                        "compositions", "lambda_grid", "seeds"):
                if key in exp and exp[key] is not None:
                    exp[key] = tuple(exp[key])
            cfg.experiment = ExperimentConfig(**exp)
        return cfg


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    if getattr(args, "tensors", None):
        cfg.tensors_dir = args.tensors
    if getattr(args, "gt", None):
        cfg.gt_dir = args.gt
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "seed", None) is not None:
        cfg.experiment = dataclasses.replace(cfg.experiment, base_seed=args.seed, seeds=None)
    if cfg.threads == 0:
        cfg.threads = default_threads()
    return cfg


def sequence_dirs(root: str | Path) -> list[tuple[str, Path]]:
    """One (name, dir) per sequence: either the root itself or its subdirs."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    if sorted(root.glob("*.sqtf")):
        return [("", root)]
    subs = sorted(p for p in root.iterdir() if p.is_dir() and sorted(p.glob("*.sqtf")))
    if not subs:
        raise FileNotFoundError(f"no .sqtf files under {root}")
    return [(p.name, p) for p in subs]


def _gt_dir_for(cfg: PipelineConfig, seq_name: str) -> Path | None:
    if cfg.gt_dir is None:
        return None
    base = Path(cfg.gt_dir)
    return base / seq_name if seq_name else base


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _apply_overrides(PipelineConfig.load(args.config), args)
    out = Path(cfg.out_dir)
    if args.scene:
        specs = [(Path(args.scene).stem, synthmod.scene_from_json(args.scene))]
    elif args.corpus:
        base = synthmod.quality_corpus_specs(n_sequences=args.corpus,
                                             seed=cfg.experiment.base_seed)
        specs = [(f"seq_{i:03d}", s) for i, s in enumerate(base)]
    else:
        specs = [("linear", synthmod.linear_motion_scene(seed=cfg.experiment.base_seed))]
    multi = len(specs) > 1
    for name, spec in specs:
        probs, gts, truths = synthmod.generate(spec)
        seq_root = out / name if multi else out
        for sub in ("probs", "gt", "truth"):
            (seq_root / sub).mkdir(parents=True, exist_ok=True)
        synthmod.scene_to_json(spec, seq_root / "scene.json")
        for t, (p, g, tr) in enumerate(zip(probs, gts, truths)):
            store_tensor(p, seq_root / "probs" / f"frame_{t:04d}.sqtf")
            store_tensor(g, seq_root / "gt" / f"frame_{t:04d}.sqtf")
            store_tensor(
                LabelMap(tr.astype(np.int32), provenance="real"),
                seq_root / "truth" / f"frame_{t:04d}.sqtf",
            )
        print(f"synth: wrote {len(probs)} frames to {seq_root}")
    return 0


def cmd_track(args) -> int:
    cfg = _apply_overrides(PipelineConfig.load(args.config), args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, seq_dir in sequence_dirs(cfg.tensors_dir):
        tensors = load_tensor_dir(seq_dir)
        tracked, _, _ = process_sequence(tensors, cfg.tracker, threads=cfg.threads)
        prefix = f"{name}_" if name else ""
        write_track_csv(tracked, out / f"{prefix}tracks.csv")
        np.savez_compressed(
            out / f"{prefix}tracks.npz",
            component_maps=np.stack([sf.component_map for sf in tracked.frames]),
            track_ids=_track_id_table(tracked),
        )
        print(f"track: {name or seq_dir}: {len(tracked.track_histories)} tracks "
              f"over {len(tracked.frames)} frames")
    return 0


def _track_id_table(tracked) -> np.ndarray:
    rows = []
    for sf in tracked.frames:
        for seg in sf.segments:
            rows.append((sf.frame_index, seg.id, seg.track_id))
    return np.array(rows, dtype=np.int64)


def cmd_metrics(args) -> int:
    cfg = _apply_overrides(PipelineConfig.load(args.config), args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, seq_dir in sequence_dirs(cfg.tensors_dir):
        tensors = load_tensor_dir(seq_dir)
        tracked, records, _ = process_sequence(tensors, cfg.tracker, threads=cfg.threads)
        gt_dir = _gt_dir_for(cfg, name)
        if gt_dir is not None and gt_dir.is_dir():
            gts = load_gt_dir(gt_dir, seq_dir, tensors[0].num_classes)
            label_sequence(tracked, records, gts)
        prefix = f"{name}_" if name else ""
        write_metrics_csv(records, out / f"{prefix}metrics.csv", tensors[0].num_classes)
        print(f"metrics: {name or seq_dir}: {len(records)} records")
    return 0


def build_dataset(cfg: PipelineConfig, n_c: int, require_target: bool) -> FeatureMatrix:
    """Full chain over all sequences; frame/track ids offset per sequence."""
    parts = []
    base = 0
    for name, seq_dir in sequence_dirs(cfg.tensors_dir):
        tensors = load_tensor_dir(seq_dir)
        tracked, records, _ = process_sequence(tensors, cfg.tracker, threads=cfg.threads)
        gt_dir = _gt_dir_for(cfg, name)
        if gt_dir is not None and gt_dir.is_dir():
            gts = load_gt_dir(gt_dir, seq_dir, tensors[0].num_classes)
            label_sequence(tracked, records, gts)
        fm = build_timeseries(tracked, records, n_c, require_target=require_target)
        fm.frames += base
        fm.track_ids += base
        parts.append(fm)
        base += 100_000
    return concat_feature_matrices(parts)


def cmd_dataset(args) -> int:
    cfg = _apply_overrides(PipelineConfig.load(args.config), args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_c = max(cfg.experiment.n_c_values)
    fm = build_dataset(cfg, n_c, require_target=not args.all_rows)
    write_dataset_csv(fm, out / "dataset.csv")
    n_labeled = int(fm.labeled.sum())
    print(f"dataset: {len(fm)} rows ({n_labeled} labeled), n_c={n_c} -> {out / 'dataset.csv'}")
    return 0


def _slice_fms(fm: FeatureMatrix, n_c_values) -> dict[int, FeatureMatrix]:
    """Lower-history matrices are column prefixes of the widest one."""
    width = len(feature_names(fm.num_classes))
    fms = {}
    for n in n_c_values:
        if n > fm.n_c:
            raise ValueError(f"dataset was built with n_c={fm.n_c}, cannot serve n_c={n}")
        sub = FeatureMatrix(
            X=fm.X[:, : (n + 1) * width],
            y=fm.y,
            provenance=fm.provenance,
            frames=fm.frames,
            track_ids=fm.track_ids,
            seg_ids=fm.seg_ids,
            classes=fm.classes,
            n_c=n,
            num_classes=fm.num_classes,
        )
        fms[n] = sub
    return fms


def cmd_train_eval(args) -> int:
    cfg = _apply_overrides(PipelineConfig.load(args.config), args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset:
        fm = read_dataset_csv(args.dataset)
        fm = fm.rows(np.flatnonzero(fm.labeled))
    else:
        fm = build_dataset(cfg, max(cfg.experiment.n_c_values), require_target=True)
    fms = _slice_fms(fm, cfg.experiment.n_c_values)
    report, extras = run_experiment(fms, cfg.experiment, collect_predictions=True)
    write_report_json(report, out / "report.json")
    write_report_csv(report, out / "report.csv")
    figs = report_figures(report, extras, out)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    saved = _save_best_models(report, extras, models_dir)
    print(f"train-eval: {len(report['cells'])} cells -> {out / 'report.json'}, "
          f"{len(figs)} figures, {len(saved)} models")
    return 0


def _save_best_models(report: dict, extras: dict, models_dir: Path) -> list[Path]:
    primary = {"classify": "auroc", "regress": "r2"}
    best: dict[str, tuple[float, tuple]] = {}
    for cell in report["cells"]:
        key = (cell["task"], cell["model"], cell["composition"], cell["n_c"])
        if key not in extras.get("predictions", {}):
            continue
        metric = cell["mean"].get(primary[cell["task"]])
        if metric is None:
            continue
        if cell["task"] not in best or metric > best[cell["task"]][0]:
            best[cell["task"]] = (metric, key)
    paths = []
    for task, (_, key) in sorted(best.items()):
        model = extras["predictions"][key]["model"]
        p = models_dir / f"{task}_{key[1]}_nc{key[3]}.sqmm"
        save_model(model, p)
        paths.append(p)
    return paths


def cmd_render(args) -> int:
    cfg = _apply_overrides(PipelineConfig.load(args.config), args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    name, seq_dir = sequence_dirs(cfg.tensors_dir)[0]
    tensors = load_tensor_dir(seq_dir)
    tracked, records, _ = process_sequence(tensors, cfg.tracker, threads=cfg.threads)
    num_classes = tensors[0].num_classes
    width = len(feature_names(num_classes))
    n_c = model.feature_dim // width - 1
    gts = {}
    gt_dir = _gt_dir_for(cfg, name)
    if gt_dir is not None and gt_dir.is_dir():
        gts = load_gt_dir(gt_dir, seq_dir, num_classes)
        label_sequence(tracked, records, gts)
    fm = build_timeseries(tracked, records, n_c, require_target=False)
    scores = model.predict_raw(fm.X)
    by_frame_track: dict[tuple[int, int], float] = {
        (int(f), int(tr)): float(s)
        for f, tr, s in zip(fm.frames, fm.track_ids, scores)
    }
    for sf in tracked.frames:
        true_vals: dict[int, float | None] = {}
        pred_vals: dict[int, float | None] = {}
        gt = gts.get(sf.frame_index)
        targets = frame_targets(sf, gt) if gt is not None else {}
        for seg in sf.segments:
            true_vals[seg.id] = targets[seg.id].iou_adj if seg.id in targets else None
            pred_vals[seg.id] = by_frame_track.get((sf.frame_index, seg.track_id))
        panel = hstack_panels(
            [render_classes(sf), render_quality(sf, true_vals), render_quality(sf, pred_vals)]
        )
        write_ppm(panel, out / f"quality_{sf.frame_index:04d}.ppm")
    print(f"render: wrote {len(tracked.frames)} panels to {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="segquality",
        description="Track predicted segments over time and estimate their quality.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="base seed override")
        p.add_argument("--threads", type=int,
                       help="worker threads (default: SEGQUALITY_THREADS env var or 1)")

    p = sub.add_parser("synth", help="generate synthetic scenes in SQTF format")
    common(p)
    p.add_argument("--scene", help="scene spec JSON")
    p.add_argument("--corpus", type=int, help="emit N corpus sequences instead")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("track", help="assign track ids and export the track CSV")
    common(p)
    p.add_argument("--tensors", help="directory of probability tensors")
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("metrics", help="per-segment metrics CSV (with targets if gt given)")
    common(p)
    p.add_argument("--tensors")
    p.add_argument("--gt")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("dataset", help="build the time-series dataset CSV")
    common(p)
    p.add_argument("--tensors")
    p.add_argument("--gt")
    p.add_argument("--all-rows", action="store_true",
                   help="keep rows without targets (default: labeled only)")
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("train-eval", help="train meta-models and write reports/figures")
    common(p)
    p.add_argument("--tensors")
    p.add_argument("--gt")
    p.add_argument("--dataset", help="use a prebuilt dataset CSV instead of raw tensors")
    p.set_defaults(fn=cmd_train_eval)

    p = sub.add_parser("render", help="render prediction/true/predicted quality panels")
    common(p)
    p.add_argument("--tensors")
    p.add_argument("--gt")
    p.add_argument("--model", required=True, help="trained .sqmm model file")
    p.set_defaults(fn=cmd_render)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (IoFailure, FileNotFoundError, NotADirectoryError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 3
    except (SegQualityError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
