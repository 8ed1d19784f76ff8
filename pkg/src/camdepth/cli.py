"""Command-line front end: ``camdepth {synth,eval,gfilter,cloud,traj,validate}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .cloud import backproject, write_ply
from .core import (DEFAULT_DEPTH_SCALE, ManifestError, load_depth, load_intrinsics, load_manifest,
                   load_rgb, save_depth)
from .gfilter import DEFAULT_EPS, DEFAULT_MIN_VALID, GuidedFilterParams, guided_filter_depth
from .metrics import (POLICIES, aggregate_reports, binned_accuracy, depth_metrics, merge_binned,
                      reports_to_csv)
from .noise import NoisePipelineConfig, fill_holes_nearest, synthesize
from .traj import load_traj, smoothness_table, table_to_csv

WORKERS_ENV = "CAMDEPTH_WORKERS"
CONFIG_KEYS = {"manifest", "output", "workers", "seed", "formats", "pipeline",
               "policy", "bins", "max_range", "fill", "source", "depth_scale"}


@dataclass
class RunConfig:
    manifest: Path | None = None
    output: Path | None = None
    workers: int = 1
    seed: int | None = None
    formats: tuple[str, ...] = ("json", "csv")
    pipeline: NoisePipelineConfig = field(default_factory=NoisePipelineConfig)

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        bad = set(self.formats) - {"json", "csv"}
        if bad:
            raise ValueError(f"unknown report formats: {sorted(bad)}")


class RunLog:
    """JSON-lines log; one object per event."""

    def __init__(self, path: Path | None):
        self.path = path
        self._fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w")

    def write(self, event: str, **data):
        if self._fh:
            self._fh.write(json.dumps({"event": event, **data}, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()


def _load_config(path) -> dict:
    if path is None:
        return {}
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def _pick(flag, cfg: dict, key: str, default=None):
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _workers(args, cfg) -> int:
    env = os.environ.get(WORKERS_ENV)
    default = int(env) if env else 1
    return int(_pick(args.workers, cfg, "workers", default))


# --- synth ------------------------------------------------------------------

def _synth_one(job):
    idx, rec, scale, pipeline, out_path = job
    t0 = time.perf_counter()
    try:
        rgb = load_rgb(rec.rgb_path)
        gt = load_depth(rec.gt_depth_path, scale)
        cfg = NoisePipelineConfig.from_dict(pipeline)
        out, tr = synthesize(rgb, gt, cfg, sample_index=idx, trace=True)
        save_depth(out, out_path, scale)
        return {"id": rec.id, "index": idx, "radius": tr.radius,
                "hole_fraction": float(1.0 - out.valid.mean()),
                "seconds": time.perf_counter() - t0}
    except Exception as e:  # reported per sample; the batch continues
        return {"id": rec.id, "index": idx, "error": f"{type(e).__name__}: {e}",
                "seconds": time.perf_counter() - t0}


def cmd_synth(args, cfg: dict) -> int:
    man_path = _pick(args.manifest, cfg, "manifest")
    out_dir = _pick(args.out, cfg, "output")
    if man_path is None or out_dir is None:
        raise SystemExit("synth: --manifest and --out are required (flag or config)")
    pipeline = dict(cfg.get("pipeline") or {})
    seed = _pick(args.seed, cfg, "seed")
    if seed is not None:
        pipeline["seed"] = int(seed)
    run = RunConfig(manifest=Path(man_path), output=Path(out_dir), workers=_workers(args, cfg),
                    seed=seed, pipeline=NoisePipelineConfig.from_dict(pipeline))
    pipe_dict = run.pipeline.to_dict()

    manifest = load_manifest(run.manifest)
    out = run.output
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog(Path(args.log) if args.log else out / "run_log.jsonl")
    log.write("start", command="synth", manifest=str(run.manifest), seed=run.pipeline.seed,
              workers=run.workers, pipeline=pipe_dict, version=__version__)

    jobs = [(i, rec, manifest.depth_scale_for(rec), pipe_dict, out / "depth" / f"{rec.id}.png")
            for i, rec in enumerate(manifest.samples)]
    t0 = time.perf_counter()
    if run.workers == 1:
        results = [_synth_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=run.workers) as ex:
            results = list(ex.map(_synth_one, jobs, chunksize=1))

    errors = []
    for res in results:
        log.write("sample", **res)
        if "error" in res:
            errors.append(res)
            print(f"synth: sample {res['id']}: {res['error']}", file=sys.stderr)

    ok_ids = {r["id"] for r in results if "error" not in r}
    _write_synth_manifest(manifest, out, ok_ids)
    log.write("end", n_samples=len(jobs), n_failed=len(errors),
              seconds=time.perf_counter() - t0)
    log.close()
    print(f"synth: {len(jobs) - len(errors)}/{len(jobs)} samples written to {out}")
    return 1 if errors else 0


def _write_synth_manifest(manifest, out: Path, ok_ids: set[str]) -> None:
    def rel(p):
        return os.path.relpath(p, out)
    doc = {
        "metadata": dict(manifest.metadata, source=rel(manifest.root)),
        "intrinsics": {k: v.to_dict() for k, v in manifest.intrinsics.items()},
        "samples": [],
    }
    for rec in manifest.samples:
        if rec.id not in ok_ids:
            continue
        s = {"id": rec.id, "rgb": rel(rec.rgb_path), "gt_depth": rel(rec.gt_depth_path),
             "camera_depth": f"depth/{rec.id}.png"}
        if rec.intrinsics_ref is not None:
            s["intrinsics"] = rec.intrinsics_ref
        doc["samples"].append(s)
    (out / "manifest.yaml").write_text(yaml.safe_dump(doc, sort_keys=False))


# --- eval -------------------------------------------------------------------

def _eval_pairs(args, cfg):
    """Yield (id, pred_path, gt_path, scale) plus a list of unmatched ids."""
    man_path = _pick(args.manifest, cfg, "manifest")
    default_scale = float(_pick(args.depth_scale, cfg, "depth_scale", DEFAULT_DEPTH_SCALE))
    pairs, unmatched = [], []
    if man_path is not None:
        manifest = load_manifest(man_path)
        source = _pick(args.source, cfg, "source", "pred")
        for rec in manifest.samples:
            pred = rec.pred_depth_path if source == "pred" else rec.camera_depth_path
            if pred is None or not pred.is_file() or not rec.gt_depth_path.is_file():
                unmatched.append(rec.id)
                continue
            pairs.append((rec.id, pred, rec.gt_depth_path, manifest.depth_scale_for(rec)))
        return pairs, unmatched
    if args.pred is None or args.gt is None:
        raise SystemExit("eval: give --manifest, or both --pred and --gt directories")
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.png"))}
    for sid in sorted(set(preds) | set(gts)):
        if sid in preds and sid in gts:
            pairs.append((sid, preds[sid], gts[sid], default_scale))
        else:
            unmatched.append(sid)
    return pairs, unmatched


def cmd_eval(args, cfg: dict) -> int:
    policy = _pick(args.policy, cfg, "policy", "intersection")
    bins = _pick(args.bins, cfg, "bins")
    max_range = float(_pick(args.max_range, cfg, "max_range", 10.0))
    fill = bool(args.fill or cfg.get("fill", False))
    out = Path(_pick(args.out, cfg, "output", "."))
    formats = cfg.get("formats", ("json", "csv"))
    if policy not in POLICIES:
        raise SystemExit(f"eval: unknown policy {policy!r}")

    pairs, unmatched = _eval_pairs(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog(Path(args.log) if args.log else None)
    log.write("start", command="eval", policy=policy, fill=fill, bins=bins)

    rows, binned, errors = [], [], []
    for sid, pred_path, gt_path, scale in pairs:
        try:
            pred = load_depth(pred_path, scale)
            gt = load_depth(gt_path, scale)
            if fill:
                pred = fill_holes_nearest(pred)
            rep = depth_metrics(pred, gt, policy)
            if bins:
                binned.append(binned_accuracy(pred, gt, float(bins), max_range))
        except Exception as e:
            errors.append({"id": sid, "error": f"{type(e).__name__}: {e}"})
            log.write("sample", id=sid, error=errors[-1]["error"])
            continue
        rows.append((sid, rep))
        log.write("sample", id=sid, **rep.to_dict())

    agg = aggregate_reports([r for _, r in rows]) if rows else None
    report = {
        "protocol": "filled" if fill else "holed",
        "policy": policy,
        "samples": [{"id": sid, **r.to_dict()} for sid, r in rows],
        "aggregate": agg.to_dict() if agg else None,
        "unmatched": unmatched,
        "errors": errors,
    }
    if "json" in formats:
        (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
    if "csv" in formats:
        (out / "metrics.csv").write_text(reports_to_csv(rows + ([("aggregate", agg)] if agg else [])))
    if binned:
        (out / "bins.csv").write_text(merge_binned(binned).to_csv())

    for sid in unmatched:
        print(f"eval: unmatched sample {sid}", file=sys.stderr)
    for e in errors:
        print(f"eval: sample {e['id']}: {e['error']}", file=sys.stderr)
    if agg:
        print("  ".join(f"{k}={v:.4f}" for k, v in agg.table_row().items())
              + f"  coverage={agg.coverage:.4f}")
    log.write("end", n_samples=len(rows), n_failed=len(errors) + len(unmatched))
    log.close()
    return 1 if (errors or unmatched or not rows) else 0


# --- small utilities --------------------------------------------------------

def cmd_gfilter(args, cfg: dict) -> int:
    scale = float(_pick(args.depth_scale, cfg, "depth_scale", DEFAULT_DEPTH_SCALE))
    params = GuidedFilterParams(radius=args.radius, epsilon=args.eps, min_valid=args.min_valid)
    guide = load_depth(args.guide, scale)
    inp = load_depth(args.input, scale)
    save_depth(guided_filter_depth(guide, inp, params), args.out, scale)
    return 0


def cmd_cloud(args, cfg: dict) -> int:
    k = load_intrinsics(args.intrinsics)
    d = load_depth(args.depth, k.depth_scale)
    rgb = load_rgb(args.rgb) if args.rgb else None
    pc = backproject(d, k, rgb)
    write_ply(pc, args.out, args.mode)
    print(f"cloud: {len(pc)} points -> {args.out}")
    return 0


def cmd_traj(args, cfg: dict) -> int:
    names = args.names.split(",") if args.names else [Path(p).stem for p in args.csv]
    if len(names) != len(args.csv):
        raise SystemExit("traj: --names must list one name per input file")
    if len(set(names)) != len(names):
        raise SystemExit("traj: method names must be unique")
    trajs = {n: load_traj(p, args.rate) for n, p in zip(names, args.csv)}
    table = smoothness_table(trajs)
    text = table_to_csv(table)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix(".json").write_text(json.dumps(table, indent=2) + "\n")
        out.with_suffix(".csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_validate(args, cfg: dict) -> int:
    path = _pick(args.manifest, cfg, "manifest")
    if path is None:
        raise SystemExit("validate: --manifest is required")
    m = load_manifest(path)
    for p in m.problems:
        print(p)
    print(f"validate: {len(m.samples)} samples, {len(m.problems)} problems")
    return 0 if m.ok else 1


# --- parser -----------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if suppress else {"default": None}
    p.add_argument("--seed", type=int, help="global seed (overrides config)", **kw)
    p.add_argument("--workers", type=int,
                   help=f"parallel workers (default ${WORKERS_ENV} or 1)", **kw)
    p.add_argument("--config", help="YAML run config; flags override its keys", **kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="camdepth", allow_abbrev=False,
                                 description="Camera-style depth synthesis and evaluation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        _global_flags(p, suppress=True)
        return p

    p = add("synth", "synthesize camera-style depth for every manifest sample")
    p.add_argument("--manifest", help="dataset manifest (YAML)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--log", help="run log path (default OUT/run_log.jsonl)")
    p.set_defaults(func=cmd_synth)

    p = add("eval", "score depth predictions against ground truth")
    p.add_argument("--manifest", help="manifest with gt and pred/camera depth")
    p.add_argument("--source", choices=("pred", "camera"), help="which manifest depth to score")
    p.add_argument("--pred", help="directory of predicted depth PNGs")
    p.add_argument("--gt", help="directory of ground-truth depth PNGs (matched by filename)")
    p.add_argument("--policy", choices=POLICIES, help="valid-pixel policy")
    p.add_argument("--bins", type=float, help="also write per-distance bins of this width (m)")
    p.add_argument("--max-range", type=float, help="upper edge for --bins (m, default 10)")
    p.add_argument("--fill", action="store_true", default=None,
                   help="nearest-fill prediction holes first (Filled protocol)")
    p.add_argument("--depth-scale", type=float, help="stored units per meter for --pred/--gt")
    p.add_argument("--out", help="report directory")
    p.add_argument("--log", help="run log path")
    p.set_defaults(func=cmd_eval)

    p = add("gfilter", "guided-filter a depth PNG using another as guide")
    p.add_argument("--guide", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--min-valid", type=int, default=DEFAULT_MIN_VALID)
    p.add_argument("--depth-scale", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gfilter)

    p = add("cloud", "back-project a depth PNG to a PLY point cloud")
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True, help="JSON {fx, fy, cx, cy, width, height, depth_scale}")
    p.add_argument("--rgb", help="color image for per-point colors")
    p.add_argument("--mode", choices=("ascii", "binary"), default="binary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cloud)

    p = add("traj", "trajectory smoothness table (one row group per input file)")
    p.add_argument("csv", nargs="+", help="trajectory CSV files")
    p.add_argument("--rate", type=float, help="sampling rate in Hz for files without a time column")
    p.add_argument("--names", help="comma-separated method names (default: file stems)")
    p.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.csv")
    p.set_defaults(func=cmd_traj)

    p = add("validate", "check that every manifest path resolves")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (ManifestError, ValueError, OSError) as e:
        print(f"camdepth {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
