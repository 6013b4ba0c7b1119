"""Command-line entry point: ``depthfuse {fuse,evaluate,rank,simulate,bench}``.

Exit status is 0 on success, 1 for usage or validation errors, and 2 when a
processing stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .depthprep import ADParams, preprocess
from .dofseg import SegParams, region_stats, save_segmentation, segment_depth
from .fusion import fuse, select_in_focus, weight_map
from .imgcore import Calibration, load_calibration, read_raster, to_gray, write_raster
from .metrics import QcbParams, QgParams, evaluate_all, rank_csv
from .metrics.ranking import bundled_scores_path
from .simulate import SceneSpec, load_scene, random_two_layer_scene, render_stack, degrade_depth, write_bundle

log = logging.getLogger("depthfuse")


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit status 1."""


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    calibration: Path
    depth: Path
    sources: list
    out: Path
    seg: SegParams = field(default_factory=SegParams)
    ad: ADParams = field(default_factory=ADParams)
    threads: int | None = None

    def validate(self) -> None:
        missing = [str(p) for p in (self.calibration, self.depth, *self.sources) if not Path(p).is_file()]
        if missing:
            raise UsageError(f"missing input file(s): {', '.join(missing)}")
        if len(self.sources) < 2:
            raise UsageError("fuse needs at least two source images")
        if self.threads is not None and self.threads < 1:
            raise UsageError("--threads must be >= 1")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def build_run_config(args) -> RunConfig:
    doc: dict = {}
    base = Path.cwd()
    if args.config:
        doc = _load_json(args.config)
        base = Path(args.config).resolve().parent

    def path(value):
        p = Path(value)
        return p if p.is_absolute() else base / p

    calib = args.calibration or doc.get("calibration")
    depth = args.depth or doc.get("depth")
    sources = args.sources or doc.get("sources") or []
    out = args.out or doc.get("out")
    if not calib or not depth or not out:
        raise UsageError("fuse needs a calibration, a depth map, source images and --out")
    try:
        seg = SegParams(**doc.get("seg", {}))
        ad = ADParams(**doc.get("ad", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad parameter block: {exc}") from None
    if args.felz_k is not None or args.min_region_px is not None:
        seg = SegParams(args.felz_k if args.felz_k is not None else seg.felz_k,
                        args.min_region_px if args.min_region_px is not None else seg.min_region_px)
    cfg = RunConfig(
        calibration=Path(args.calibration) if args.calibration else path(calib),
        depth=Path(args.depth) if args.depth else path(depth),
        sources=[Path(s) for s in args.sources] if args.sources else [path(s) for s in sources],
        out=Path(out),
        seg=seg,
        ad=ad,
        threads=args.threads if args.threads is not None else doc.get("threads"),
    )
    cfg.validate()
    return cfg


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # unavailable threading backends are reported noisily
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (UsageError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_pipeline(raw, stack, calib: Calibration, seg_params: SegParams, ad_params: ADParams):
    """Run the four stages and return (results, timings in ms)."""
    h, w = np.asarray(stack[0]).shape[:2]
    clock = time.perf_counter
    t0 = clock()
    depth = _stage("preprocess", preprocess, raw, calib, ad_params, (w, h))
    t1 = clock()
    seg = _stage("segment", segment_depth, depth, calib.optics, seg_params)
    t2 = clock()
    labels = _stage("select", select_in_focus, stack, seg)
    t3 = clock()
    fused = _stage("fuse", fuse, stack, labels)
    t4 = clock()
    timing = {
        "preprocess_ms": (t1 - t0) * 1e3,
        "segment_ms": (t2 - t1) * 1e3,
        "select_ms": (t3 - t2) * 1e3,
        "fuse_ms": (t4 - t3) * 1e3,
        "total_ms": (t4 - t0) * 1e3,
    }
    return {"depth": depth, "seg": seg, "labels": labels, "fused": fused}, timing


def cmd_fuse(args) -> int:
    cfg = build_run_config(args)
    _set_threads(cfg.threads)
    calib = _stage("load", load_calibration, cfg.calibration)
    raw = _stage("load", read_raster, cfg.depth)
    stack = [_stage("load", read_raster, p) for p in cfg.sources]
    if any(np.asarray(s).ndim != 3 for s in stack):
        raise UsageError("source images must be color PNGs")
    res, timing = run_pipeline(raw, stack, calib, cfg.seg, cfg.ad)

    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_raster(out / "depth_preprocessed.pgm", res["depth"])
    stats = region_stats(res["seg"], res["depth"], calib.optics)
    save_segmentation(res["seg"], stats, out / "segmentation.pgm", out / "segmentation.json")
    write_raster(out / "labels.pgm", res["labels"].astype(np.uint8))
    if len(stack) == 2:
        write_raster(out / "weights.pgm", np.rint(weight_map(res["labels"], 1) * 255))
    write_raster(out / "fused.png", res["fused"])
    (out / "timing.json").write_text(json.dumps(timing, indent=2))
    log.info("fused %d sources into %s (%.1f ms)", len(stack), out, timing["total_ms"])
    return 0


def cmd_evaluate(args) -> int:
    for p in (args.a, args.b, args.f):
        if not Path(p).is_file():
            raise UsageError(f"missing input file: {p}")
    imgs = [to_gray(_stage("load", read_raster, p)) for p in (args.a, args.b, args.f)]
    if len({im.shape for im in imgs}) != 1:
        raise UsageError("A, B and F must have the same size")
    report = evaluate_all(*imgs, qg_params=QgParams(), qcb_params=QcbParams(csf=args.csf))
    text = report.to_csv(label=Path(args.f).name)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    for name, err in report.errors.items():
        log.error("%s: %s", name, err)
    return 2 if report.errors else 0


def cmd_rank(args) -> int:
    path = Path(args.csv) if args.csv else bundled_scores_path()
    if not path.is_file():
        raise UsageError(f"missing score table: {path}")
    try:
        table = rank_csv(path)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    text = table.to_markdown() if args.format == "markdown" else table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _scene_from_args(args) -> SceneSpec:
    if args.spec:
        try:
            return load_scene(args.spec)
        except FileNotFoundError:
            raise UsageError(f"scene spec not found: {args.spec}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.spec}: invalid scene spec ({exc})") from None
    return random_two_layer_scene(args.seed if args.seed is not None else 0)


def cmd_simulate(args) -> int:
    if not args.out:
        raise UsageError("simulate needs --out")
    spec = _scene_from_args(args)
    if args.spec and args.seed is not None:
        spec.degradation.seed = args.seed
    manifest = _stage("simulate", write_bundle, spec, args.out)
    print(json.dumps(manifest["files"], indent=2))
    return 0


def cmd_bench(args) -> int:
    if args.repetitions < 1:
        raise UsageError("--repetitions must be >= 1")
    _set_threads(args.threads if args.threads is not None else 1)
    spec = _scene_from_args(args)
    stack, _, true_depth = _stage("simulate", render_stack, spec)
    calib = spec.calibration
    raw = _stage("simulate", degrade_depth, true_depth, spec.degradation, calib)
    seg_params, ad_params = SegParams(), ADParams()
    run_pipeline(raw, stack, calib, seg_params, ad_params)  # JIT warm-up
    runs = [run_pipeline(raw, stack, calib, seg_params, ad_params)[1] for _ in range(args.repetitions)]
    keys = runs[0].keys()
    median = {k: statistics.median(r[k] for r in runs) for k in keys}
    median["core_ms"] = statistics.median(r["preprocess_ms"] + r["segment_ms"] + r["select_ms"] for r in runs)
    result = {"width": spec.width, "height": spec.height, "sources": len(stack),
              "repetitions": args.repetitions, "median": median}
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="depthfuse", description="Depth-assisted multi-focus image fusion.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory or file")
        sp.add_argument("--threads", type=int, help="worker threads for per-pixel stages")
        sp.add_argument("--seed", type=int, help="random seed")

    f = sub.add_parser("fuse", help="fuse a multi-focus stack using a depth map")
    common(f)
    f.add_argument("--calibration")
    f.add_argument("--depth", help="raw 16-bit depth PGM")
    f.add_argument("--sources", nargs="+", help="source PNGs")
    f.add_argument("--felz-k", type=float, dest="felz_k")
    f.add_argument("--min-region-px", type=int, dest="min_region_px")
    f.set_defaults(func=cmd_fuse)

    e = sub.add_parser("evaluate", help="score a fused image against its two sources")
    common(e, config=False)
    e.add_argument("a")
    e.add_argument("b")
    e.add_argument("f")
    e.add_argument("--csf", default="dog", choices=("dog", "mannos-sakrison", "barton"))
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("rank", help="rank methods from a per-metric score table")
    common(r, config=False)
    r.add_argument("csv", nargs="?", help="score CSV (default: the bundled reference table)")
    r.add_argument("--format", choices=("csv", "markdown"), default="csv")
    r.set_defaults(func=cmd_rank)

    s = sub.add_parser("simulate", help="render a synthetic scene bundle")
    common(s, config=False)
    s.add_argument("spec", nargs="?", help="scene JSON (default: random two-layer scene)")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="median stage timings on a synthetic scene")
    common(b, config=False)
    b.add_argument("spec", nargs="?", help="scene JSON (default: random 640x480 two-layer scene)")
    b.add_argument("--repetitions", type=int, default=10)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DEPTHFUSE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"depthfuse {args.command}: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"depthfuse {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"depthfuse {args.command}: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
