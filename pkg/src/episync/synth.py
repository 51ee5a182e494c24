"""Synthetic multi-camera scenes with known offsets, for testing the whole pipeline.

A global clock drives every 3D point. Camera ``c`` records frame ``k`` at local
time ``k / fps_c``, which is global time ``k / fps_c + offset_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InfeasibleSpec
from .geometry import CameraTrack, Intrinsics, Pose
from .tracklets import CorrespondenceSet, Sample, Tracklet, TrackletPair

ALIAS_FREQ_HZ = 0.5


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    n_cameras: int = 6
    camera_motion: str = "static"  # "static" or "orbit"
    orbit_speed: float = 0.05  # rad/s, orbit only
    rig_radius: float = 5.0
    camera_heights: tuple[float, float] = (0.5, 5.0)  # m, uniform per camera
    n_points: int = 15
    n_instances: int = 3
    preset: str = "standard"  # "standard" or "aliased"
    amplitude: float = 1.0  # m, aliased-preset amplitude bound
    wiggle: float = 0.1  # m, amplitude bound of the 0.2-2 Hz harmonics
    freq_range: tuple[float, float] = (0.2, 2.0)
    drift_speed: tuple[float, float] = (0.1, 0.25)  # m/s per instance
    harmonics: int = 3
    walk: float = 0.3  # m/sqrt(s), diffusion of the per-point random walk
    walk_knot: float = 0.1  # s, knot spacing of the walk spline
    duration: float = 10.0
    fps: Union[float, tuple[float, ...]] = 30.0
    offsets: Optional[tuple[float, ...]] = None
    offset_range: float = 2.5
    noise_px: float = 1.0
    dropout: float = 0.0
    contamination: float = 0.0
    focal: float = 1000.0
    image_size: tuple[int, int] = (1280, 960)
    keyframe_step: int = 10

    def __post_init__(self):
        if self.n_cameras < 2:
            raise ValueError("need at least two cameras")
        if self.camera_motion not in ("static", "orbit"):
            raise ValueError(f"unknown camera motion {self.camera_motion!r}")
        if self.preset not in ("standard", "aliased"):
            raise ValueError(f"unknown preset {self.preset!r}")
        if any(f <= 0 for f in self.fps_list):
            raise ValueError("fps must be positive")
        if self.noise_px < 0 or not 0 <= self.dropout < 1 or not 0 <= self.contamination < 1:
            raise ValueError("noise, dropout and contamination must be non-negative (<1)")
        if self.offsets is not None:
            if len(self.offsets) != self.n_cameras:
                raise ValueError("one offset per camera required")
            if any(abs(s) > self.duration / 2 for s in self.offsets):
                raise ValueError("offsets must lie within +-duration/2")

    @property
    def fps_list(self) -> tuple[float, ...]:
        if isinstance(self.fps, (int, float)):
            return (float(self.fps),) * self.n_cameras
        if len(self.fps) != self.n_cameras:
            raise ValueError("one fps per camera required")
        return tuple(float(f) for f in self.fps)

    @property
    def camera_ids(self) -> list[str]:
        return [f"cam{k:02d}" for k in range(self.n_cameras)]


@dataclass(frozen=True)
class GroundTruth:
    offsets: Mapping[str, float]
    contaminants: frozenset = frozenset()  # {(tracklet_i, tracklet_j)} canonical

    def is_contaminant(self, pair: TrackletPair) -> bool:
        return pair.canonical().key in self.contaminants


@dataclass(frozen=True, eq=False)
class Scene:
    """Continuous-time generators behind a bundle (not serialized)."""

    spec: ScenarioSpec
    cam_angles: np.ndarray
    cam_heights: np.ndarray
    target: np.ndarray
    point_base: np.ndarray  # (P, 3)
    amp: np.ndarray  # (P, 3, H)
    freq: np.ndarray  # (P, 3, H)
    phase: np.ndarray  # (P, 3, H)
    drift: np.ndarray  # (P, 3) m/s
    instance: np.ndarray  # (P,)
    walk: Optional[CubicSpline] = None  # global time -> (P, 3) offsets

    def positions(self, t_global) -> np.ndarray:
        """World positions of all points, shape (P, 3) or (T, P, 3)."""
        t = np.asarray(t_global, dtype=float)
        arg = 2 * np.pi * self.freq * t[..., None, None, None] + self.phase
        wiggle = np.sum(self.amp * np.sin(arg), axis=-1)
        centered = (t - self.spec.duration / 2)[..., None, None]
        out = self.point_base + self.drift * centered + wiggle
        if self.walk is not None:
            out = out + self.walk(t)
        return out

    def camera_pose(self, cam: int, t_global: float) -> Pose:
        s = self.spec
        ang = self.cam_angles[cam]
        if s.camera_motion == "orbit":
            ang = ang + s.orbit_speed * t_global
        center = np.array([s.rig_radius * math.cos(ang), s.rig_radius * math.sin(ang),
                           self.cam_heights[cam]])
        return Pose.look_at(center, self.target)

    def intrinsics(self) -> Intrinsics:
        w, h = self.spec.image_size
        return Intrinsics(self.spec.focal, self.spec.focal, w / 2.0, h / 2.0)


@dataclass(frozen=True, eq=False)
class SceneBundle:
    cameras: Mapping[str, CameraTrack]
    tracklets: Mapping[str, Tracklet]
    correspondences: CorrespondenceSet
    ground_truth: Optional[GroundTruth] = None
    scene: Optional[Scene] = None

    def replace(self, **kw) -> "SceneBundle":
        return replace(self, **kw)


def _make_scene(spec: ScenarioSpec, rng: np.random.Generator) -> Scene:
    n = spec.n_cameras
    angles = 2 * np.pi * np.arange(n) / n + rng.uniform(-0.2, 0.2, n)
    heights = rng.uniform(*spec.camera_heights, n)
    target = np.array([0.0, 0.0, 1.0])

    P, H = spec.n_points, spec.harmonics
    instance = np.arange(P) % spec.n_instances
    inst_center = rng.uniform(-0.8, 0.8, (spec.n_instances, 3)) * np.array([1, 1, 0.4]) + target
    base = inst_center[instance] + rng.uniform(-0.3, 0.3, (P, 3))
    if spec.preset == "aliased":
        # every point shares one frequency: the scene repeats every 1/ALIAS_FREQ_HZ s
        freq = np.full((P, 3, 1), ALIAS_FREQ_HZ)
        amp = rng.uniform(0.3, 1.0, (P, 3, 1)) * spec.amplitude
        phase = rng.uniform(0, 2 * np.pi, (P, 3, 1))
    else:
        lo, hi = spec.freq_range
        freq = rng.uniform(lo, hi, (P, 3, H))
        amp = spec.wiggle * rng.uniform(0.5, 1.0, (P, 3, H)) * (lo / freq)
        phase = rng.uniform(0, 2 * np.pi, (P, 3, H))
        # each instance also drifts at constant velocity, so the motion is not
        # stationary and the energy keeps rising away from the true offset
        n_inst = spec.n_instances
        heading = rng.uniform(0, 2 * np.pi, n_inst)
        direction = np.stack([np.cos(heading), np.sin(heading), rng.uniform(-0.5, 0.5, n_inst)], 1)
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        speed = rng.uniform(*spec.drift_speed, n_inst)
        drift = (speed[:, None] * direction)[instance]
    walk = None
    if spec.preset == "aliased":
        drift = np.zeros((P, 3))
    elif spec.walk > 0:
        # covers every global time a camera can see: offsets stay within +-duration/2
        t0, t1 = -spec.duration / 2 - 1.0, 1.5 * spec.duration + 1.0
        knots = np.arange(t0, t1 + spec.walk_knot, spec.walk_knot)
        steps = rng.normal(0.0, spec.walk * math.sqrt(spec.walk_knot), (len(knots), P, 3))
        path = np.cumsum(steps, axis=0)
        path -= path[np.argmin(np.abs(knots - spec.duration / 2))]
        walk = CubicSpline(knots, path, axis=0)
    return Scene(spec, angles, heights, target, base, amp, freq, phase, drift, instance, walk)


def generate(spec: ScenarioSpec) -> SceneBundle:
    """Render a scene bundle; identical specs give bit-identical bundles."""
    rng = np.random.default_rng(spec.seed)
    scene = _make_scene(spec, rng)
    ids = spec.camera_ids
    fps = spec.fps_list
    if spec.offsets is None:
        offsets = tuple(float(x) for x in rng.uniform(-spec.offset_range, spec.offset_range,
                                                      spec.n_cameras))
    else:
        offsets = tuple(float(x) for x in spec.offsets)
    K = scene.intrinsics()
    w, h = spec.image_size

    cameras: dict[str, CameraTrack] = {}
    tracklets: dict[str, Tracklet] = {}
    # per camera: point index -> tracklet id
    by_point: dict[str, dict[int, str]] = {}
    vis_by_point: dict[str, dict[int, np.ndarray]] = {}
    for c, cid in enumerate(ids):
        n_frames = int(round(spec.duration * fps[c]))
        local = np.arange(n_frames) / fps[c]
        glob = local + offsets[c]
        if spec.camera_motion == "static":
            pose = scene.camera_pose(c, 0.0)
            poses = (pose,) * n_frames
        else:
            poses = tuple(scene.camera_pose(c, float(tg)) for tg in glob)
        cameras[cid] = CameraTrack(cid, fps[c], local, (K,) * n_frames, poses)

        X = scene.positions(glob)  # (T, P, 3)
        R = np.stack([p.rotation for p in poses])
        t = np.stack([p.translation for p in poses])
        Xc = np.einsum("tab,tpb->tpa", R, X) + t[:, None, :]
        depth = Xc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = K.fx * Xc[..., 0] / depth + K.cx
            v = K.fy * Xc[..., 1] / depth + K.cy
        visible = (depth > 0.1) & (u >= 0) & (u < w) & (v >= 0) & (v < h)
        noise = rng.normal(0.0, 1.0, u.shape + (2,)) * spec.noise_px
        if spec.dropout > 0:
            visible &= rng.random(u.shape) >= spec.dropout
        u = np.where(visible, u + noise[..., 0], 0.0)
        v = np.where(visible, v + noise[..., 1], 0.0)

        by_point[cid] = {}
        vis_by_point[cid] = {}
        for p in range(spec.n_points):
            if visible[:, p].sum() < 2:
                continue
            tid = f"{cid}/p{p:03d}"
            samples = tuple(Sample(k, float(u[k, p]), float(v[k, p]), bool(visible[k, p]))
                            for k in range(n_frames))
            tracklets[tid] = Tracklet(tid, cid, int(scene.instance[p]), samples)
            by_point[cid][p] = tid
            vis_by_point[cid][p] = visible[:, p]

    pairs: list[TrackletPair] = []
    contaminants = set()
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            ci, cj = ids[a], ids[b]
            common = sorted(set(by_point[ci]) & set(by_point[cj]))
            clean = []
            for p in common:
                kf = _keyframes(vis_by_point[ci][p], vis_by_point[cj][p], fps[a], fps[b],
                                spec.keyframe_step)
                clean.append(TrackletPair(ci, cj, by_point[ci][p], by_point[cj][p], 1.0, kf))
            pairs.extend(clean)
            n_bad = int(round(spec.contamination * len(clean) / (1 - spec.contamination)))
            candidates = [(p, q) for p in by_point[ci] for q in by_point[cj]
                          if scene.instance[p] != scene.instance[q]]
            if n_bad and candidates:
                pick = rng.choice(len(candidates), size=min(n_bad, len(candidates)), replace=False)
                for k in sorted(pick):
                    p, q = candidates[k]
                    kf = _keyframes(vis_by_point[ci][p], vis_by_point[cj][q], fps[a], fps[b],
                                    spec.keyframe_step)
                    bad = TrackletPair(ci, cj, by_point[ci][p], by_point[cj][q], 1.0, kf)
                    pairs.append(bad)
                    contaminants.add(bad.key)
    if not any(not (p.key in contaminants) for p in pairs):
        raise InfeasibleSpec("no point is co-visible in any camera pair")

    truth = GroundTruth(dict(zip(ids, offsets)), frozenset(contaminants))
    return SceneBundle(cameras, tracklets, CorrespondenceSet.from_pairs(pairs), truth, scene)


def _keyframes(vis_i, vis_j, fps_i, fps_j, step) -> tuple[tuple[int, int], ...]:
    out = []
    for k in range(0, len(vis_i), step):
        m = int(round(k * fps_j / fps_i))
        if m < len(vis_j) and vis_i[k] and vis_j[m]:
            out.append((k, m))
    return tuple(out)


def _random_rotation(rng: np.random.Generator, angle_rad: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle_rad) * kx + (1 - math.cos(angle_rad)) * kx @ kx


def perturb_poses(bundle: SceneBundle, rot_err: float, trans_err: float,
                  seed: int = 0) -> SceneBundle:
    """Bias every camera's poses by a random rotation of ``rot_err`` degrees and a
    center shift of ``trans_err`` times the mean inter-camera baseline.

    Tracklets are untouched, so the poses no longer explain the observations exactly.
    """
    if rot_err < 0 or trans_err < 0:
        raise ValueError("perturbation magnitudes must be non-negative")
    if rot_err == 0 and trans_err == 0:
        return bundle
    rng = np.random.default_rng(seed)
    centers = np.stack([cam.centers[0] for cam in bundle.cameras.values()])
    diffs = centers[:, None, :] - centers[None, :, :]
    n = len(centers)
    baseline = np.linalg.norm(diffs, axis=-1).sum() / max(n * (n - 1), 1)
    cams = {}
    for cid, cam in bundle.cameras.items():
        dR = _random_rotation(rng, math.radians(rot_err))
        d = rng.normal(size=3)
        dc = trans_err * baseline * d / np.linalg.norm(d)
        poses = []
        cache: dict[int, Pose] = {}
        for p in cam.poses_per_frame:
            if id(p) not in cache:
                R = dR @ p.rotation
                cache[id(p)] = Pose(R, -R @ (p.center + dc))
            poses.append(cache[id(p)])
        cams[cid] = CameraTrack(cid, cam.fps, cam.frame_times, cam.intrinsics_per_frame, poses)
    return bundle.replace(cameras=cams)
