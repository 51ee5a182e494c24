"""Tracklets, cross-view correspondences and instance-level filtering."""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import CameraTrack

MAX_GAP_FRAMES = 2
MIN_INSTANCE_COUNT = 100
# Offsets on the search grid land on frame times only up to rounding.
TIME_SNAP = 1e-9


@dataclass(frozen=True)
class Sample:
    frame: int
    u: float
    v: float
    visible: bool = True


@dataclass(frozen=True, eq=False)
class Tracklet:
    tracklet_id: str
    camera_id: str
    instance_id: int
    samples: tuple[Sample, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        frames = [s.frame for s in samples]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"tracklet {self.tracklet_id}: frame indices not strictly increasing")
        if sum(s.visible for s in samples) < 2:
            raise ValueError(f"tracklet {self.tracklet_id}: needs at least 2 visible samples")
        if not all(np.isfinite(s.u) and np.isfinite(s.v) for s in samples):
            raise ValueError(f"tracklet {self.tracklet_id}: non-finite pixel coordinates")

    def __eq__(self, other):
        if not isinstance(other, Tracklet):
            return NotImplemented
        return (self.tracklet_id, self.camera_id, self.instance_id, self.samples) == (
            other.tracklet_id, other.camera_id, other.instance_id, other.samples)

    __hash__ = None

    @cached_property
    def _visible(self) -> tuple[list[int], list[Sample]]:
        vis = [s for s in self.samples if s.visible]
        return [s.frame for s in vis], vis

    def dense(self, n_frames: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-frame ``(uv, visible)`` arrays of length ``n_frames``."""
        uv = np.zeros((n_frames, 2))
        vis = np.zeros(n_frames, dtype=np.bool_)
        for s in self.samples:
            if 0 <= s.frame < n_frames:
                uv[s.frame] = (s.u, s.v)
                vis[s.frame] = s.visible
        return uv, vis


def sample_at(tr: Tracklet, cam: CameraTrack, t: float,
              max_gap: int = MAX_GAP_FRAMES) -> Optional[np.ndarray]:
    """Tracklet position at local time ``t`` as ``(u, v, 1)``, or None.

    Linear interpolation between the bracketing visible samples, provided
    they are at most ``max_gap`` frames apart.
    """
    frames, vis = tr._visible
    times = cam.frame_times
    # first visible sample not earlier than t (within snap)
    k = bisect_left([times[f] for f in frames], t - TIME_SNAP)
    if k < len(frames) and abs(times[frames[k]] - t) <= TIME_SNAP:
        s = vis[k]
        return np.array([s.u, s.v, 1.0])
    if k == 0 or k >= len(frames):
        return None
    a, b = vis[k - 1], vis[k]
    if b.frame - a.frame > max_gap:
        return None
    ta, tb = times[a.frame], times[b.frame]
    w = (t - ta) / (tb - ta)
    return np.array([a.u + w * (b.u - a.u), a.v + w * (b.v - a.v), 1.0])


@dataclass(frozen=True)
class TrackletPair:
    video_i: str
    video_j: str
    tracklet_i: str
    tracklet_j: str
    weight: float = 1.0
    keyframes: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.video_i == self.video_j:
            raise ValueError("a correspondence must link two different videos")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        object.__setattr__(self, "keyframes", tuple(tuple(k) for k in self.keyframes))

    def canonical(self) -> "TrackletPair":
        if self.video_i < self.video_j:
            return self
        return TrackletPair(self.video_j, self.video_i, self.tracklet_j, self.tracklet_i,
                            self.weight, tuple((b, a) for a, b in self.keyframes))

    @property
    def key(self) -> tuple[str, str]:
        return (self.tracklet_i, self.tracklet_j)


@dataclass(frozen=True)
class CorrespondenceSet:
    """Tracklet pairs grouped by canonical ``(video_i, video_j)`` with video_i < video_j."""

    groups: Mapping[tuple[str, str], tuple[TrackletPair, ...]] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, pairs: Iterable[TrackletPair]) -> "CorrespondenceSet":
        """Canonicalize and deduplicate; repeated pairs have their weights summed."""
        merged: dict[tuple[str, str], dict[tuple[str, str], TrackletPair]] = {}
        for p in pairs:
            p = p.canonical()
            group = merged.setdefault((p.video_i, p.video_j), {})
            prev = group.get(p.key)
            if prev is not None:
                p = TrackletPair(p.video_i, p.video_j, p.tracklet_i, p.tracklet_j,
                                 prev.weight + p.weight,
                                 tuple(sorted(set(prev.keyframes) | set(p.keyframes))))
            group[p.key] = p
        return cls({k: tuple(merged[k].values()) for k in sorted(merged)})

    @property
    def pairs(self) -> list[TrackletPair]:
        return [p for g in self.groups.values() for p in g]

    def __len__(self):
        return sum(len(g) for g in self.groups.values())


def instance_counts(pairs: Iterable[TrackletPair], tracklets: Mapping[str, Tracklet]):
    """Correspondence-count matrix between instances of two videos.

    Each pair counts once per keyframe that produced it (once if none recorded).
    Returns ``(counts, instances_i, instances_j)``.
    """
    pairs = list(pairs)
    ids_i = sorted({tracklets[p.tracklet_i].instance_id for p in pairs})
    ids_j = sorted({tracklets[p.tracklet_j].instance_id for p in pairs})
    row = {v: k for k, v in enumerate(ids_i)}
    col = {v: k for k, v in enumerate(ids_j)}
    counts = np.zeros((len(ids_i), len(ids_j)))
    for p in pairs:
        counts[row[tracklets[p.tracklet_i].instance_id],
               col[tracklets[p.tracklet_j].instance_id]] += max(len(p.keyframes), 1)
    return counts, ids_i, ids_j


def match_instances(counts, min_count: float = MIN_INSTANCE_COUNT) -> dict[int, int]:
    """Maximum-total-count one-to-one row/column assignment, weak matches dropped."""
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        return {}
    if np.any(counts < 0):
        raise ValueError("correspondence counts must be non-negative")
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return {int(r): int(c) for r, c in zip(rows, cols) if counts[r, c] >= min_count}


def filter_correspondences(corr: CorrespondenceSet,
                           assignment: Mapping[tuple[str, str], set[tuple[int, int]]],
                           tracklets: Mapping[str, Tracklet]) -> CorrespondenceSet:
    """Keep pairs whose (instance_i, instance_j) is in the group's matched set."""
    out = {}
    for key, group in corr.groups.items():
        allowed = assignment.get(key, set())
        kept = tuple(
            p for p in group
            if (tracklets[p.tracklet_i].instance_id, tracklets[p.tracklet_j].instance_id) in allowed
        )
        if kept:
            out[key] = kept
    return CorrespondenceSet(out)


def instance_assignment(corr: CorrespondenceSet, tracklets: Mapping[str, Tracklet],
                        min_count: float = MIN_INSTANCE_COUNT):
    """Run instance matching for every video pair of ``corr``."""
    result = {}
    for key, group in corr.groups.items():
        counts, ids_i, ids_j = instance_counts(group, tracklets)
        match = match_instances(counts, min_count)
        result[key] = {(ids_i[r], ids_j[c]) for r, c in match.items()}
    return result
