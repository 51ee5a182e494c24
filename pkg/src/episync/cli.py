"""Command line interface: ``episync {simulate,pairwise,sync,eval,landscape}``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .energy import EnergyKind
from .errors import DataError, EpisyncError, InfeasibleSpec, UnknownVideo, MissingReference
from .global_sync import solve_irls
from .metrics import evaluate
from .pairwise import (DEFAULT_MAX_MINIMA, DEFAULT_MIN_SUPPORT, DEFAULT_THETA, EnergyLandscape,
                       SearchConfig, default_grid, evaluate_landscape, search_all)
from .pipeline import HUBER_FRAMES
from .synth import ScenarioSpec, generate, perturb_poses
from .tracklets import MIN_INSTANCE_COUNT, filter_correspondences, instance_assignment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

GLOBAL_DEFAULTS = {
    "energy": "sampson", "grid_min": None, "grid_max": None, "grid_step": None,
    "theta_prominence": DEFAULT_THETA, "max_minima": DEFAULT_MAX_MINIMA,
    "huber_delta": None, "min_support": DEFAULT_MIN_SUPPORT, "metric": "auc", "seed": 0,
    "jobs": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global options")
    g.add_argument("--energy", choices=[k.value for k in EnergyKind],
                   help="pairwise energy (default: sampson)")
    g.add_argument("--grid-min", type=float, help="smallest candidate offset, s")
    g.add_argument("--grid-max", type=float, help="largest candidate offset, s")
    g.add_argument("--grid-step", type=float, help="offset grid step, s (default: fastest frame period)")
    g.add_argument("--theta-prominence", type=float,
                   help=f"best/second-best minimum ratio threshold (default: {DEFAULT_THETA})")
    g.add_argument("--max-minima", type=int,
                   help=f"reject landscapes with more minima (default: {DEFAULT_MAX_MINIMA})")
    g.add_argument("--huber-delta", type=float,
                   help=f"Huber knee, s (default: {HUBER_FRAMES} slowest frame periods)")
    g.add_argument("--min-support", type=int,
                   help=f"samples needed per offset (default: {DEFAULT_MIN_SUPPORT})")
    g.add_argument("--metric", choices=["auc", "pct"], help="A@tau definition (default: auc)")
    g.add_argument("--seed", type=int, help="random seed (default: 0)")
    g.add_argument("--jobs", type=int, help="parallel pair evaluations (default: 1)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="episync", parents=[common],
                     description="Synchronize multi-camera videos from epipolar tracklet residuals.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic scene bundle")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--cameras", type=int, default=6)
    p.add_argument("--points", type=int, default=15)
    p.add_argument("--fps", type=float, nargs="+", default=[30.0],
                   help="one value for all cameras or one per camera")
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--offset-range", type=float, default=2.5)
    p.add_argument("--noise", type=float, default=1.0, help="pixel noise sigma")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--contamination", type=float, default=0.0)
    p.add_argument("--preset", choices=["standard", "aliased"], default="standard")
    p.add_argument("--camera-motion", choices=["static", "orbit"], default="static")
    p.add_argument("--perturb-rot", type=float, default=0.0, help="pose rotation error, degrees")
    p.add_argument("--perturb-trans", type=float, default=0.0,
                   help="pose centre error, fraction of mean baseline")

    p = sub.add_parser("pairwise", parents=[common], help="stage 1: per-pair offset search")
    p.add_argument("bundle")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--instance-filter", action="store_true",
                   help="keep only correspondences between matched instances")
    p.add_argument("--min-instance-count", type=float, default=MIN_INSTANCE_COUNT)
    p.add_argument("--ratio-rule", choices=["keep_below", "discard_below"], default="keep_below")
    p.add_argument("--landscape-dir", help="also write one CSV landscape per pair here")

    p = sub.add_parser("sync", parents=[common], help="stage 2: global offsets")
    p.add_argument("results", help="pairwise result file or measurements file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--init", choices=["zero", "spanning_tree"], default="zero")
    p.add_argument("--least-squares", action="store_true", help="disable Huber reweighting")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=100)

    p = sub.add_parser("eval", parents=[common], help="score offsets against ground truth")
    p.add_argument("sync_file")
    p.add_argument("--truth", required=True, help="bundle, truth sidecar or offsets file")
    p.add_argument("-o", "--output")
    p.add_argument("--reference")

    p = sub.add_parser("landscape", parents=[common], help="export one pair's energy landscape")
    p.add_argument("bundle")
    p.add_argument("video_i")
    p.add_argument("video_j")
    p.add_argument("-o", "--output", required=True, help="CSV path")
    p.add_argument("--svg", help="also draw the landscape as SVG")
    return parser


def _opts(ns) -> dict:
    out = dict(GLOBAL_DEFAULTS)
    out.update({k: v for k, v in vars(ns).items() if k in GLOBAL_DEFAULTS})
    if out["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    if not 0 < out["theta_prominence"] <= 1:
        raise UsageError("--theta-prominence must lie in (0, 1]")
    if out["max_minima"] < 1:
        raise UsageError("--max-minima must be at least 1")
    if out["min_support"] < 1:
        raise UsageError("--min-support must be at least 1")
    if out["grid_step"] is not None and not out["grid_step"] > 0:
        raise UsageError("--grid-step must be positive")
    if out["huber_delta"] is not None and not out["huber_delta"] > 0:
        raise UsageError("--huber-delta must be positive")
    return out


def _search_config(o, rule="keep_below") -> SearchConfig:
    return SearchConfig(kind=EnergyKind(o["energy"]), grid_min=o["grid_min"],
                        grid_max=o["grid_max"], grid_step=o["grid_step"],
                        min_support=o["min_support"], theta=o["theta_prominence"],
                        max_minima=o["max_minima"], rule=rule)


def _out(path) -> Path:
    io.ensure_parent(path)
    return Path(path)


def cmd_simulate(ns, o) -> int:
    fps = ns.fps[0] if len(ns.fps) == 1 else tuple(ns.fps)
    try:
        spec = ScenarioSpec(seed=o["seed"], n_cameras=ns.cameras, n_points=ns.points, fps=fps,
                            duration=ns.duration, offset_range=ns.offset_range,
                            noise_px=ns.noise, dropout=ns.dropout,
                            contamination=ns.contamination, preset=ns.preset,
                            camera_motion=ns.camera_motion)
        spec.fps_list
    except ValueError as e:
        raise UsageError(str(e)) from e
    bundle = generate(spec)
    if ns.perturb_rot or ns.perturb_trans:
        bundle = perturb_poses(bundle, ns.perturb_rot, ns.perturb_trans, seed=o["seed"])
    io.save_bundle(bundle, _out(ns.output))
    print(f"wrote {ns.output} ({len(bundle.cameras)} cameras, {len(bundle.tracklets)} tracklets, "
          f"{len(bundle.correspondences)} correspondences)")
    return EXIT_OK


def write_landscape_csv(path, ls: EnergyLandscape) -> None:
    lines = ["offset_s,energy,count"]
    for off, val, cnt in zip(ls.offsets, ls.values, ls.counts):
        lines.append(f"{float(off)!r},{'' if np.isnan(val) else repr(float(val))},{int(cnt)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def landscape_svg(ls: EnergyLandscape, title: str, width=640, height=360) -> str:
    pad = 48
    x, y = ls.offsets, ls.values
    ok = ~np.isnan(y)
    x0, x1 = float(x[0]), float(x[-1])
    if x1 == x0:
        x1 = x0 + 1.0
    ys = y[ok] if ok.any() else np.array([0.0, 1.0])
    y0, y1 = float(ys.min()), float(ys.max())
    if y1 == y0:
        y1 = y0 + 1.0

    def px(a):
        return pad + (a - x0) / (x1 - x0) * (width - 2 * pad)

    def py(b):
        return height - pad - (b - y0) / (y1 - y0) * (height - 2 * pad)

    segs, cur = [], []
    for a, b, k in zip(x, y, ok):
        if k:
            cur.append(f"{px(a):.2f},{py(b):.2f}")
        elif cur:
            segs.append(cur)
            cur = []
    if cur:
        segs.append(cur)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 18}" font-family="sans-serif" font-size="11">{x0:g} s</text>',
        f'<text x="{width - pad}" y="{height - pad + 18}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{x1:g} s</text>',
        f'<text x="{pad - 4}" y="{pad}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{y1:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{y0:.3g}</text>',
    ]
    for s in segs:
        parts.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{" ".join(s)}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_pairwise(ns, o) -> int:
    bundle = io.load_bundle(ns.bundle)
    corr = bundle.correspondences
    if ns.instance_filter:
        corr = filter_correspondences(
            corr, instance_assignment(corr, bundle.tracklets, ns.min_instance_count),
            bundle.tracklets)
    config = _search_config(o, ns.ratio_rule)
    results = search_all(bundle.cameras, bundle.tracklets, corr, config, o["jobs"])
    paths = {}
    if ns.landscape_dir:
        d = Path(ns.landscape_dir)
        d.mkdir(parents=True, exist_ok=True)
        for r in results:
            if r.landscape is not None:
                p = d / f"{r.video_i}__{r.video_j}.csv"
                write_landscape_csv(p, r.landscape)
                paths[(r.video_i, r.video_j)] = str(p)
    cfg_doc = {
        "energy": config.kind.value, "grid_min": o["grid_min"], "grid_max": o["grid_max"],
        "grid_step": o["grid_step"], "theta_prominence": config.theta,
        "max_minima": config.max_minima, "min_support": config.min_support,
        "ratio_rule": config.rule, "instance_filter": bool(ns.instance_filter),
    }
    doc = io.pairwise_to_doc(results, bundle.cameras, cfg_doc, paths)
    io.write_json(_out(ns.output), doc)
    n_ok = sum(r.reliable for r in results)
    print(f"wrote {ns.output} ({n_ok}/{len(results)} pairs reliable)")
    return EXIT_OK


def cmd_sync(ns, o) -> int:
    doc = io.read_json(ns.results)
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "measurements":
        ms = io.load_measurements(ns.results)
        pw, videos, fps = None, sorted({m.video_i for m in ms} | {m.video_j for m in ms}), []
    else:
        pw = io.load_pairwise(ns.results)
        ms = io.measurements_from_doc(pw)
        videos = sorted(v["id"] for v in pw["videos"])
        fps = [v["fps"] for v in pw["videos"]]
    delta = o["huber_delta"]
    if delta is None:
        if not fps:
            raise UsageError("--huber-delta is required when syncing a bare measurements file")
        delta = HUBER_FRAMES / min(fps)
    if ns.tol <= 0 or ns.max_iter < 1:
        raise UsageError("--tol must be positive and --max-iter at least 1")
    try:
        sync = solve_irls(ms, delta, tol=ns.tol, max_iter=ns.max_iter, videos=videos,
                          init=ns.init, robust=not ns.least_squares)
    except ValueError as e:
        raise DataError(str(e)) from e
    io.write_json(_out(ns.output), io.sync_to_doc(sync, pw, len(ms)))
    n_comp = len(sync.references)
    print(f"wrote {ns.output} ({len(sync.offsets)} videos, {n_comp} component(s), "
          f"{sync.iterations} iterations)")
    return EXIT_OK


def cmd_eval(ns, o) -> int:
    sync = io.load_sync(ns.sync_file)
    truth = io.load_truth(ns.truth)
    offsets = {v["id"]: v["offset_s"] for v in sync["videos"]}
    comps = {v["id"]: v["component"] for v in sync["videos"]}
    stage1 = io.pairs_from_doc(sync)
    try:
        report = evaluate(offsets, comps, truth.offsets, o["metric"], stage1 or None, ns.reference)
    except (UnknownVideo, MissingReference) as e:
        raise DataError(f"{type(e).__name__}: {e}") from e
    print(report.table())
    if ns.output:
        io.write_json(_out(ns.output), report.to_dict())
    return EXIT_OK


def cmd_landscape(ns, o) -> int:
    bundle = io.load_bundle(ns.bundle)
    key = tuple(sorted((ns.video_i, ns.video_j)))
    for v in key:
        if v not in bundle.cameras:
            raise DataError(f"unknown camera {v!r}")
    group = bundle.correspondences.groups.get(key)
    if not group:
        raise DataError(f"no correspondences between {key[0]} and {key[1]}")
    cfg = _search_config(o)
    grid = default_grid(bundle.cameras[key[0]], bundle.cameras[key[1]], cfg.grid_min,
                        cfg.grid_max, cfg.grid_step)
    offsets = grid.points()
    sums, counts = evaluate_landscape(group, bundle.cameras, bundle.tracklets, offsets, cfg.kind)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts >= cfg.min_support, sums / np.maximum(counts, 1), np.nan)
    ls = EnergyLandscape(grid, offsets, values, counts)
    write_landscape_csv(_out(ns.output), ls)
    if ns.svg:
        _out(ns.svg).write_text(landscape_svg(ls, f"{key[0]} vs {key[1]} ({cfg.kind.value})"),
                                encoding="utf-8")
    print(f"wrote {ns.output}" + (f" and {ns.svg}" if ns.svg else ""))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "pairwise": cmd_pairwise, "sync": cmd_sync,
            "eval": cmd_eval, "landscape": cmd_landscape}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        o = _opts(ns)
        return COMMANDS[ns.command](ns, o)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"episync: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InfeasibleSpec) as e:
        print(f"episync: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"episync: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (EpisyncError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"episync: numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def run() -> None:
    sys.exit(main())
