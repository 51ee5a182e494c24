"""JSON file formats: scene bundles, ground truth, pairwise and sync results.

Floats are written with Python's shortest round-trip repr, so a save/load
cycle reproduces every double exactly.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from .errors import IntegrityError, InvariantError, ParseError, SchemaError
from .geometry import CameraTrack, Intrinsics, Pose, rotation_error
from .global_sync import GlobalOffsets, OffsetMeasurement
from .pairwise import PairwiseResult
from .synth import GroundTruth, SceneBundle
from .tracklets import CorrespondenceSet, Sample, Tracklet, TrackletPair

FORMAT_VERSION = "1.0"
SUPPORTED_VERSIONS = {"1.0"}
ROTATION_TOL = 1e-6


# ---------------------------------------------------------------- writing

def dumps(doc) -> str:
    """Deterministic JSON text (no NaN/inf, insertion-ordered keys)."""
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def _num(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"refusing to write non-finite number {x}")
    return x


def bundle_to_doc(bundle: SceneBundle, include_truth: bool = True) -> dict:
    cams = []
    for cam in bundle.cameras.values():
        frames = []
        for t, K, P in zip(cam.frame_times, cam.intrinsics_per_frame, cam.poses_per_frame):
            frames.append({
                "t": _num(t),
                "K": [_num(x) for x in K.matrix.reshape(-1)],
                "R": [_num(x) for x in P.rotation.reshape(-1)],
                "t_vec": [_num(x) for x in P.translation],
            })
        cams.append({"id": cam.camera_id, "fps": _num(cam.fps), "frames": frames})
    tracklets = [{
        "id": tr.tracklet_id, "camera_id": tr.camera_id, "instance_id": tr.instance_id,
        "samples": [{"frame": s.frame, "u": _num(s.u), "v": _num(s.v), "visible": s.visible}
                    for s in tr.samples],
    } for tr in bundle.tracklets.values()]
    corr = [{
        "video_i": p.video_i, "video_j": p.video_j,
        "tracklet_i": p.tracklet_i, "tracklet_j": p.tracklet_j,
        "weight": _num(p.weight), "keyframes": [list(k) for k in p.keyframes],
    } for p in bundle.correspondences.pairs]
    doc = {"version": FORMAT_VERSION, "cameras": cams, "tracklets": tracklets,
           "correspondences": corr}
    if include_truth and bundle.ground_truth is not None:
        doc["ground_truth"] = truth_to_doc(bundle.ground_truth)
    return doc


def truth_to_doc(truth: GroundTruth) -> dict:
    return {
        "offsets": {k: _num(v) for k, v in truth.offsets.items()},
        "contaminants": [list(k) for k in sorted(truth.contaminants)],
    }


def truth_sidecar_path(bundle_path) -> Path:
    p = Path(bundle_path)
    return p.with_name(p.stem + ".truth.json")


def save_bundle(bundle: SceneBundle, path, sidecar: bool = True) -> None:
    """Write the bundle (ground truth embedded) and, optionally, a truth sidecar."""
    write_json(path, bundle_to_doc(bundle))
    if sidecar and bundle.ground_truth is not None:
        doc = {"version": FORMAT_VERSION, "ground_truth": truth_to_doc(bundle.ground_truth)}
        write_json(truth_sidecar_path(path), doc)


# ---------------------------------------------------------------- reading

def read_json(path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror or e}") from e
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e


def _reject_constant(name):
    raise ValueError(f"non-finite constant {name} not allowed")


def _get(obj, key, path, kind=None, optional=False):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        if optional:
            return None
        raise SchemaError(f"{path}.{key}", "missing field")
    val = obj[key]
    if kind is not None:
        _check(val, kind, f"{path}.{key}")
    return val


def _check(val, kind, path):
    if kind == "number":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(path, f"expected a number, got {type(val).__name__}")
        if not math.isfinite(val):
            raise SchemaError(path, "number is not finite")
    elif kind == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaError(path, f"expected an integer, got {type(val).__name__}")
    elif kind == "str":
        if not isinstance(val, str):
            raise SchemaError(path, f"expected a string, got {type(val).__name__}")
    elif kind == "bool":
        if not isinstance(val, bool):
            raise SchemaError(path, f"expected a boolean, got {type(val).__name__}")
    elif kind == "list":
        if not isinstance(val, list):
            raise SchemaError(path, f"expected an array, got {type(val).__name__}")
    elif kind == "dict":
        if not isinstance(val, dict):
            raise SchemaError(path, f"expected an object, got {type(val).__name__}")


def _numbers(obj, key, path, n):
    vals = _get(obj, key, path, "list")
    if len(vals) != n:
        raise SchemaError(f"{path}.{key}", f"expected {n} numbers, got {len(vals)}")
    for k, x in enumerate(vals):
        _check(x, "number", f"{path}.{key}[{k}]")
    return [float(x) for x in vals]


def _check_version(doc, where):
    ver = _get(doc, "version", where, "str")
    if ver not in SUPPORTED_VERSIONS:
        raise SchemaError(f"{where}.version", f"unsupported version {ver!r}")


def _parse_camera(doc, path) -> CameraTrack:
    cid = _get(doc, "id", path, "str")
    fps = float(_get(doc, "fps", path, "number"))
    frames = _get(doc, "frames", path, "list")
    times, Ks, Ps = [], [], []
    k_cache: dict[tuple, Intrinsics] = {}
    p_cache: dict[tuple, Pose] = {}
    for n, fr in enumerate(frames):
        fp = f"{path}.frames[{n}]"
        times.append(float(_get(fr, "t", fp, "number")))
        K = tuple(_numbers(fr, "K", fp, 9))
        R = tuple(_numbers(fr, "R", fp, 9))
        t = tuple(_numbers(fr, "t_vec", fp, 3))
        if K not in k_cache:
            if K[3] != 0 or K[6] != 0 or K[7] != 0 or K[8] != 1:
                raise InvariantError(f"{fp}.K: not an upper-triangular intrinsics matrix")
            try:
                k_cache[K] = Intrinsics.from_matrix(K)
            except ValueError as e:
                raise InvariantError(f"{fp}.K: {e}") from e
        if (R, t) not in p_cache:
            orth, det = rotation_error(np.array(R).reshape(3, 3))
            if orth > ROTATION_TOL or det > ROTATION_TOL:
                raise InvariantError(
                    f"{fp}.R: not a rotation (|R^T R - I| = {orth:.3g}, |det R - 1| = {det:.3g})")
            p_cache[(R, t)] = Pose(np.array(R).reshape(3, 3), np.array(t))
        Ks.append(k_cache[K])
        Ps.append(p_cache[(R, t)])
    try:
        return CameraTrack(cid, fps, np.array(times), tuple(Ks), tuple(Ps))
    except ValueError as e:
        raise InvariantError(f"{path}: {e}") from e


def _parse_tracklet(doc, path, cams) -> Tracklet:
    tid = _get(doc, "id", path, "str")
    cid = _get(doc, "camera_id", path, "str")
    if cid not in cams:
        raise IntegrityError(f"{path}.camera_id: unknown camera {cid!r}")
    inst = _get(doc, "instance_id", path, "int")
    n_frames = len(cams[cid])
    samples = []
    for n, s in enumerate(_get(doc, "samples", path, "list")):
        sp = f"{path}.samples[{n}]"
        frame = _get(s, "frame", sp, "int")
        if not 0 <= frame < n_frames:
            raise IntegrityError(f"{sp}.frame: {frame} outside camera {cid!r} ({n_frames} frames)")
        samples.append(Sample(frame, float(_get(s, "u", sp, "number")),
                              float(_get(s, "v", sp, "number")), _get(s, "visible", sp, "bool")))
    try:
        return Tracklet(tid, cid, inst, tuple(samples))
    except ValueError as e:
        raise InvariantError(f"{path}: {e}") from e


def _parse_pair(doc, path, cams, tracklets) -> TrackletPair:
    vi = _get(doc, "video_i", path, "str")
    vj = _get(doc, "video_j", path, "str")
    ti = _get(doc, "tracklet_i", path, "str")
    tj = _get(doc, "tracklet_j", path, "str")
    for key, v in (("video_i", vi), ("video_j", vj)):
        if v not in cams:
            raise IntegrityError(f"{path}.{key}: unknown camera {v!r}")
    for key, t, v in (("tracklet_i", ti, vi), ("tracklet_j", tj, vj)):
        if t not in tracklets:
            raise IntegrityError(f"{path}.{key}: unknown tracklet {t!r}")
        if tracklets[t].camera_id != v:
            raise IntegrityError(f"{path}.{key}: tracklet {t!r} belongs to {tracklets[t].camera_id!r}, not {v!r}")
    weight = _get(doc, "weight", path, "number", optional=True)
    kf_doc = _get(doc, "keyframes", path, "list", optional=True) or []
    keyframes = []
    for n, kf in enumerate(kf_doc):
        kp = f"{path}.keyframes[{n}]"
        _check(kf, "list", kp)
        if len(kf) != 2:
            raise SchemaError(kp, "expected a [frame_i, frame_j] pair")
        _check(kf[0], "int", f"{kp}[0]")
        _check(kf[1], "int", f"{kp}[1]")
        keyframes.append((kf[0], kf[1]))
    try:
        return TrackletPair(vi, vj, ti, tj, 1.0 if weight is None else float(weight), tuple(keyframes))
    except ValueError as e:
        raise InvariantError(f"{path}: {e}") from e


def parse_truth(doc, path="ground_truth") -> GroundTruth:
    offsets_doc = _get(doc, "offsets", path, "dict")
    offsets = {}
    for k, v in offsets_doc.items():
        _check(v, "number", f"{path}.offsets.{k}")
        offsets[k] = float(v)
    cont = set()
    for n, c in enumerate(_get(doc, "contaminants", path, "list", optional=True) or []):
        cp = f"{path}.contaminants[{n}]"
        _check(c, "list", cp)
        if len(c) != 2 or not all(isinstance(x, str) for x in c):
            raise SchemaError(cp, "expected a [tracklet_i, tracklet_j] pair of ids")
        cont.add((c[0], c[1]))
    return GroundTruth(offsets, frozenset(cont))


def doc_to_bundle(doc, where="$") -> SceneBundle:
    _check(doc, "dict", where)
    _check_version(doc, where)
    cams: dict[str, CameraTrack] = {}
    for n, c in enumerate(_get(doc, "cameras", where, "list")):
        cam = _parse_camera(c, f"{where}.cameras[{n}]")
        if cam.camera_id in cams:
            raise IntegrityError(f"{where}.cameras[{n}].id: duplicate camera {cam.camera_id!r}")
        cams[cam.camera_id] = cam
    tracklets: dict[str, Tracklet] = {}
    for n, t in enumerate(_get(doc, "tracklets", where, "list")):
        tr = _parse_tracklet(t, f"{where}.tracklets[{n}]", cams)
        if tr.tracklet_id in tracklets:
            raise IntegrityError(f"{where}.tracklets[{n}].id: duplicate tracklet {tr.tracklet_id!r}")
        tracklets[tr.tracklet_id] = tr
    pairs = [_parse_pair(p, f"{where}.correspondences[{n}]", cams, tracklets)
             for n, p in enumerate(_get(doc, "correspondences", where, "list"))]
    truth = None
    if "ground_truth" in doc:
        truth = parse_truth(doc["ground_truth"], f"{where}.ground_truth")
        for k in truth.offsets:
            if k not in cams:
                raise IntegrityError(f"{where}.ground_truth.offsets.{k}: unknown camera")
    return SceneBundle(cams, tracklets, CorrespondenceSet.from_pairs(pairs), truth)


def load_bundle(path) -> SceneBundle:
    """Read and fully validate a scene bundle file."""
    return doc_to_bundle(read_json(path))


def load_truth(path) -> GroundTruth:
    """Ground truth from a bundle file, a truth sidecar, or a bare offsets file."""
    doc = read_json(path)
    _check(doc, "dict", "$")
    if "ground_truth" in doc:
        return parse_truth(doc["ground_truth"], "$.ground_truth")
    if "offsets" in doc:
        return parse_truth(doc, "$")
    raise SchemaError("$.ground_truth", "missing field")


# ---------------------------------------------------------------- results

def _opt(x):
    return None if x is None else _num(x)


def pairwise_to_doc(results: Iterable[PairwiseResult], cams: Mapping[str, CameraTrack],
                    config: Mapping, landscape_paths: Optional[Mapping] = None) -> dict:
    landscape_paths = landscape_paths or {}
    pairs = []
    for r in results:
        pairs.append({
            "video_i": r.video_i, "video_j": r.video_j,
            "best_offset_s": _opt(r.best_offset),
            "reliable": r.reliable,
            "rejection_reason": None if r.rejection_reason is None else r.rejection_reason.value,
            "n_correspondences": r.n_pairs,
            "local_minima": [[_num(o), _num(v)] for o, v in r.local_minima],
            "landscape_path": landscape_paths.get((r.video_i, r.video_j)),
        })
    return {
        "version": FORMAT_VERSION, "kind": "pairwise",
        "videos": [{"id": c.camera_id, "fps": _num(c.fps)} for c in cams.values()],
        "config": dict(config), "pairs": pairs,
    }


def sync_to_doc(sync: GlobalOffsets, pairwise_doc: Optional[dict], n_measurements: int) -> dict:
    return {
        "version": FORMAT_VERSION, "kind": "sync",
        "videos": [{"id": v, "offset_s": _num(sync.offsets[v]), "component": sync.components[v]}
                   for v in sorted(sync.offsets)],
        "references": {str(c): v for c, v in sorted(sync.references.items())},
        "solver": {
            "huber_delta_s": _num(sync.huber_delta), "iterations": sync.iterations,
            "objective": _num(sync.objective), "n_measurements": n_measurements,
            "objective_history": [_num(x) for x in sync.history],
        },
        "pairs": [] if pairwise_doc is None else pairwise_doc["pairs"],
    }


def _check_kind(doc, kind, path):
    _check(doc, "dict", "$")
    _check_version(doc, "$")
    got = _get(doc, "kind", "$", "str")
    if got != kind:
        raise SchemaError("$.kind", f"expected {kind!r}, got {got!r} in {path}")


def load_pairwise(path) -> dict:
    doc = read_json(path)
    _check_kind(doc, "pairwise", path)
    for n, v in enumerate(_get(doc, "videos", "$", "list")):
        _get(v, "id", f"$.videos[{n}]", "str")
        fps = _get(v, "fps", f"$.videos[{n}]", "number")
        if not fps > 0:
            raise InvariantError(f"$.videos[{n}].fps: must be positive")
    _validate_pairs(doc)
    return doc


def _validate_pairs(doc):
    for n, p in enumerate(_get(doc, "pairs", "$", "list")):
        pp = f"$.pairs[{n}]"
        _get(p, "video_i", pp, "str")
        _get(p, "video_j", pp, "str")
        _get(p, "reliable", pp, "bool")
        off = _get(p, "best_offset_s", pp)
        if off is not None:
            _check(off, "number", f"{pp}.best_offset_s")
        elif p["reliable"]:
            raise InvariantError(f"{pp}: reliable pair without best_offset_s")


def pairs_from_doc(doc) -> dict[tuple[str, str], Optional[float]]:
    """Stage-1 predictions; rejected pairs map to None."""
    return {(p["video_i"], p["video_j"]): (p["best_offset_s"] if p["reliable"] else None)
            for p in doc["pairs"]}


def measurements_from_doc(doc) -> list[OffsetMeasurement]:
    out = []
    for p in doc["pairs"]:
        if p["reliable"] and p["best_offset_s"] is not None:
            out.append(OffsetMeasurement(p["video_i"], p["video_j"], float(p["best_offset_s"]),
                                         float(p.get("weight", 1.0))))
    return out


def load_measurements(path) -> list[OffsetMeasurement]:
    """Plain measurement list: ``{"version", "kind": "measurements", "measurements": [...]}``."""
    doc = read_json(path)
    _check_kind(doc, "measurements", path)
    out = []
    for n, m in enumerate(_get(doc, "measurements", "$", "list")):
        mp = f"$.measurements[{n}]"
        vi, vj = _get(m, "video_i", mp, "str"), _get(m, "video_j", mp, "str")
        d = _get(m, "delta_s", mp, "number")
        w = _get(m, "weight", mp, "number", optional=True)
        try:
            out.append(OffsetMeasurement(vi, vj, float(d), 1.0 if w is None else float(w)))
        except ValueError as e:
            raise InvariantError(f"{mp}: {e}") from e
    return out


def load_sync(path) -> dict:
    doc = read_json(path)
    _check_kind(doc, "sync", path)
    comps: dict[int, list[float]] = {}
    for n, v in enumerate(_get(doc, "videos", "$", "list")):
        vp = f"$.videos[{n}]"
        _get(v, "id", vp, "str")
        off = _get(v, "offset_s", vp, "number")
        comp = _get(v, "component", vp, "int")
        comps.setdefault(comp, []).append(off)
    refs = _get(doc, "references", "$", "dict")
    by_id = {v["id"]: v for v in doc["videos"]}
    for c, ref in refs.items():
        if ref not in by_id:
            raise IntegrityError(f"$.references.{c}: unknown video {ref!r}")
        if by_id[ref]["offset_s"] != 0:
            raise InvariantError(f"$.references.{c}: reference {ref!r} offset is not 0")
    _validate_pairs(doc)
    return doc


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
