"""Pinhole cameras, per-frame camera tracks and fundamental matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BehindCamera, DegenerateBaseline, OutOfRange

BASELINE_EPS = 1e-6


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=float
    )


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        # closed form for an upper-triangular K
        fx, fy, s, cx, cy = self.fx, self.fy, self.skew, self.cx, self.cy
        return np.array(
            [
                [1.0 / fx, -s / (fx * fy), (s * cy - cx * fy) / (fx * fy)],
                [0.0, 1.0 / fy, -cy / fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_matrix(cls, K) -> "Intrinsics":
        K = np.asarray(K, dtype=float).reshape(3, 3)
        return cls(fx=float(K[0, 0]), fy=float(K[1, 1]), cx=float(K[0, 2]),
                   cy=float(K[1, 2]), skew=float(K[0, 1]))


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform, ``x_cam = rotation @ X + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None

    @classmethod
    def look_at(cls, center, target, up=(0.0, 0.0, 1.0)) -> "Pose":
        """Camera at ``center`` with +z pointing at ``target`` and image y down."""
        center = np.asarray(center, dtype=float)
        z = np.asarray(target, dtype=float) - center
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=float))
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(z, np.array([1.0, 0.0, 0.0]))
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(R, -R @ center)


def rotation_error(R: np.ndarray) -> tuple[float, float]:
    """Return (max |R^T R - I|, |det R - 1|)."""
    R = np.asarray(R, dtype=float)
    return (
        float(np.max(np.abs(R.T @ R - np.eye(3)))),
        float(abs(np.linalg.det(R) - 1.0)),
    )


@dataclass(frozen=True, eq=False)
class CameraTrack:
    """One video: local frame timestamps plus per-frame intrinsics and pose."""

    camera_id: str
    fps: float
    frame_times: np.ndarray
    intrinsics_per_frame: tuple[Intrinsics, ...]
    poses_per_frame: tuple[Pose, ...]

    def __post_init__(self):
        times = np.asarray(self.frame_times, dtype=float).reshape(-1)
        times.flags.writeable = False
        object.__setattr__(self, "frame_times", times)
        object.__setattr__(self, "intrinsics_per_frame", tuple(self.intrinsics_per_frame))
        object.__setattr__(self, "poses_per_frame", tuple(self.poses_per_frame))
        if not self.fps > 0:
            raise ValueError(f"camera {self.camera_id}: fps must be positive")
        n = len(times)
        if n == 0:
            raise ValueError(f"camera {self.camera_id}: no frames")
        if len(self.intrinsics_per_frame) != n or len(self.poses_per_frame) != n:
            raise ValueError(
                f"camera {self.camera_id}: {n} frame times but "
                f"{len(self.intrinsics_per_frame)} intrinsics and {len(self.poses_per_frame)} poses"
            )
        if n > 1:
            gaps = np.diff(times)
            if np.any(gaps <= 0):
                raise ValueError(f"camera {self.camera_id}: frame times not strictly increasing")
            period = 1.0 / self.fps
            if np.any(np.abs(gaps - period) > 0.1 * period):
                raise ValueError(f"camera {self.camera_id}: frame spacing deviates from 1/fps by >10%")

    def __len__(self):
        return len(self.frame_times)

    @property
    def period(self) -> float:
        return 1.0 / self.fps

    @property
    def span(self) -> tuple[float, float]:
        return float(self.frame_times[0]), float(self.frame_times[-1])

    # Stacked arrays consumed by the landscape kernels.
    @cached_property
    def K_inv(self) -> np.ndarray:
        return np.stack([k.inverse for k in self.intrinsics_per_frame])

    @cached_property
    def rotations(self) -> np.ndarray:
        return np.stack([p.rotation for p in self.poses_per_frame])

    @cached_property
    def translations(self) -> np.ndarray:
        return np.stack([p.translation for p in self.poses_per_frame])

    @cached_property
    def centers(self) -> np.ndarray:
        return np.einsum("nji,nj->ni", self.rotations, -self.translations)

    def frame_index_at(self, t: float) -> int:
        """Nearest frame to local time ``t``; ties go to the lower index."""
        lo_t, hi_t = self.span
        pad = self.period
        if not (lo_t - pad <= t <= hi_t + pad):
            raise OutOfRange(
                f"camera {self.camera_id}: t={t} outside [{lo_t - pad}, {hi_t + pad}]"
            )
        times = self.frame_times
        k = int(np.searchsorted(times, t, side="right")) - 1
        if k < 0:
            return 0
        if k >= len(times) - 1:
            return len(times) - 1
        return k if (t - times[k]) <= (times[k + 1] - t) else k + 1


def pose_at(track: CameraTrack, t: float) -> Pose:
    return track.poses_per_frame[track.frame_index_at(t)]


def intrinsics_at(track: CameraTrack, t: float) -> Intrinsics:
    return track.intrinsics_per_frame[track.frame_index_at(t)]


def normalize_fundamental(F: np.ndarray) -> np.ndarray:
    """Scale to unit Frobenius norm and make the largest-magnitude entry positive."""
    F = F / np.linalg.norm(F)
    if F.flat[np.argmax(np.abs(F))] < 0:
        F = -F
    return F


def fundamental_between(Ki: Intrinsics, Pi: Pose, Kj: Intrinsics, Pj: Pose,
                        eps_baseline: float = BASELINE_EPS) -> np.ndarray:
    """Fundamental matrix F with ``xi^T F xj = 0`` for pixels xi in camera i, xj in camera j."""
    if np.linalg.norm(Pi.center - Pj.center) <= eps_baseline:
        raise DegenerateBaseline("camera centers coincide; F is undefined")
    R_rel = Pi.rotation @ Pj.rotation.T
    t_rel = Pi.translation - R_rel @ Pj.translation
    E = skew(t_rel) @ R_rel
    return normalize_fundamental(Ki.inverse.T @ E @ Kj.inverse)


def project(K: Intrinsics, P: Pose, X) -> np.ndarray:
    """Pinhole projection of a world point; returns ``(u, v, 1)``."""
    Xc = P.rotation @ np.asarray(X, dtype=float) + P.translation
    if Xc[2] <= 0:
        raise BehindCamera(f"point has depth {Xc[2]}")
    x = K.matrix @ (Xc / Xc[2])
    x[2] = 1.0
    return x


def is_rank_two(F: np.ndarray, rtol: float = 1e-6) -> bool:
    """Smallest singular value at most ``rtol`` times the largest."""
    s = np.linalg.svd(F, compute_uv=False)
    return bool(s[2] <= rtol * s[0])


def static_track(camera_id: str, fps: float, n_frames: int, K: Intrinsics, P: Pose,
                 t0: float = 0.0) -> CameraTrack:
    times = t0 + np.arange(n_frames) / fps
    return CameraTrack(camera_id, fps, times, (K,) * n_frames, (P,) * n_frames)

