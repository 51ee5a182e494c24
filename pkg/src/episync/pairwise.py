"""Per-pair offset search over a discrete grid and landscape reliability checks."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .energy import EnergyKind
from .errors import NoOverlap
from .geometry import BASELINE_EPS, CameraTrack
from .tracklets import MAX_GAP_FRAMES, TIME_SNAP, CorrespondenceSet, Tracklet, TrackletPair

DEFAULT_THETA = 0.1
DEFAULT_MAX_MINIMA = 2
DEFAULT_MIN_SUPPORT = 30


class RejectionReason(str, enum.Enum):
    TOO_MANY_MINIMA = "TooManyMinima"
    WEAK_PROMINENCE = "WeakProminence"
    INSUFFICIENT_SUPPORT = "InsufficientSupport"


@dataclass(frozen=True)
class OffsetGrid:
    min_offset: float
    max_offset: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.min_offset > self.max_offset:
            raise ValueError("grid min_offset exceeds max_offset")

    def points(self) -> np.ndarray:
        n = int(math.floor((self.max_offset - self.min_offset) / self.step + 1e-9)) + 1
        k0 = self.min_offset / self.step
        if abs(k0 - round(k0)) < 1e-9:
            # integer multiples of step: keeps 0 exact and the grid mirror-symmetric
            return (round(k0) + np.arange(n)) * self.step
        return self.min_offset + np.arange(n) * self.step

    def __len__(self):
        return len(self.points())

    def mirrored(self) -> "OffsetGrid":
        return OffsetGrid(-self.max_offset, -self.min_offset, self.step)


@dataclass(frozen=True, eq=False)
class EnergyLandscape:
    grid: OffsetGrid
    offsets: np.ndarray
    values: np.ndarray  # mean energy, NaN where absent
    counts: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def smoothed(self, window: int) -> "EnergyLandscape":
        """Moving average over present cells; ``window`` is an odd cell count."""
        if window <= 1:
            return self
        half = window // 2
        idx = np.flatnonzero(self.present)
        vals = self.values[idx]
        out = self.values.copy()
        for n, k in enumerate(idx):
            out[k] = vals[max(0, n - half): n + half + 1].mean()
        return EnergyLandscape(self.grid, self.offsets, out, self.counts)


@dataclass(frozen=True, eq=False)
class PairwiseResult:
    video_i: str
    video_j: str
    landscape: Optional[EnergyLandscape]
    local_minima: list[tuple[float, float]]
    best_offset: Optional[float]
    reliable: bool
    rejection_reason: Optional[RejectionReason] = None
    n_pairs: int = 0


@dataclass
class PairArrays:
    """Packed kernel inputs for one (video_i, video_j) group."""

    ti: np.ndarray
    tj: np.ndarray
    pad_i: float
    cam_i: tuple
    cam_j: tuple
    uv_i: np.ndarray
    vis_i: np.ndarray
    uv_j: np.ndarray
    vis_j: np.ndarray
    weights: np.ndarray


def _fill_gaps(uv, vis, times, max_gap=MAX_GAP_FRAMES):
    """Interpolate invisible frames bracketed by visible ones at most ``max_gap`` apart."""
    idx = np.flatnonzero(vis)
    if len(idx) < 2:
        return uv, vis
    uv, vis = uv.copy(), vis.copy()
    for a, b in zip(idx[:-1], idx[1:]):
        if 1 < b - a <= max_gap:
            w = (times[a + 1:b] - times[a]) / (times[b] - times[a])
            uv[a + 1:b] = uv[a] + w[:, None] * (uv[b] - uv[a])
            vis[a + 1:b] = True
    return uv, vis


def pack_pairs(pairs: Sequence[TrackletPair], cams: Mapping[str, CameraTrack],
               tracklets: Mapping[str, Tracklet]) -> PairArrays:
    vi, vj = pairs[0].video_i, pairs[0].video_j
    if any(p.video_i != vi or p.video_j != vj for p in pairs):
        raise ValueError("all pairs in a group must link the same two videos")
    ci, cj = cams[vi], cams[vj]
    ni, nj = len(ci), len(cj)
    uv_i = np.zeros((len(pairs), ni, 2))
    vis_i = np.zeros((len(pairs), ni), dtype=np.bool_)
    uv_j = np.zeros((len(pairs), nj, 2))
    vis_j = np.zeros((len(pairs), nj), dtype=np.bool_)
    for n, p in enumerate(pairs):
        uv_i[n], vis_i[n] = tracklets[p.tracklet_i].dense(ni)
        # anchor samples in video j are interpolated across short gaps too
        uv_j[n], vis_j[n] = _fill_gaps(*tracklets[p.tracklet_j].dense(nj), cj.frame_times)
    return PairArrays(
        ti=np.ascontiguousarray(ci.frame_times), tj=np.ascontiguousarray(cj.frame_times),
        pad_i=ci.period,
        cam_i=(ci.K_inv, ci.rotations, ci.translations, ci.centers),
        cam_j=(cj.K_inv, cj.rotations, cj.translations, cj.centers),
        uv_i=uv_i, vis_i=vis_i, uv_j=uv_j, vis_j=vis_j,
        weights=np.array([p.weight for p in pairs], dtype=float),
    )


def evaluate_landscape(pairs: Sequence[TrackletPair], cams, tracklets, offsets,
                       kind: EnergyKind = EnergyKind.SAMPSON,
                       backend: Optional[str] = None) -> tuple[np.ndarray, np.ndarray]:
    """Energy sums and sample counts, summed over ``pairs``, at each offset."""
    a = pack_pairs(pairs, cams, tracklets)
    fn = {"numba": _kernels.landscape_numba, "numpy": _kernels.landscape_numpy,
          None: _kernels.landscape}[backend]
    return fn(np.asarray(offsets, dtype=float), a.ti, a.tj, a.pad_i, *a.cam_i, *a.cam_j,
              a.uv_i, a.vis_i, a.uv_j, a.vis_j, a.weights, kind.code, MAX_GAP_FRAMES,
              TIME_SNAP, BASELINE_EPS)


def find_local_minima(ls: EnergyLandscape) -> list[tuple[float, float]]:
    """Strict local minima among present cells, sorted by ascending value."""
    idx = np.flatnonzero(ls.present)
    vals = ls.values[idx]
    out = []
    for n, k in enumerate(idx):
        left = vals[n - 1] if n > 0 else np.inf
        right = vals[n + 1] if n + 1 < len(idx) else np.inf
        if vals[n] < left and vals[n] < right:
            out.append((float(ls.offsets[k]), float(vals[n])))
    out.sort(key=lambda m: (m[1], abs(m[0]), m[0]))
    return out


def assess_reliability(minima: Sequence[tuple[float, float]],
                       theta: float = DEFAULT_THETA,
                       max_minima: int = DEFAULT_MAX_MINIMA,
                       rule: str = "keep_below") -> tuple[bool, Optional[RejectionReason]]:
    """Reliability verdict from the landscape's local minima.

    ``rule="keep_below"`` keeps a pair when best/second-best <= theta;
    ``"discard_below"`` applies the opposite direction.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if len(minima) == 0:
        return False, RejectionReason.INSUFFICIENT_SUPPORT
    if len(minima) > max_minima:
        return False, RejectionReason.TOO_MANY_MINIMA
    if len(minima) == 1:
        return True, None
    best, second = minima[0][1], minima[1][1]
    ratio = best / second if second > 0 else 1.0
    keep = ratio <= theta if rule == "keep_below" else ratio >= theta
    return (True, None) if keep else (False, RejectionReason.WEAK_PROMINENCE)


def _argmin_small_abs(offsets: np.ndarray, values: np.ndarray) -> int:
    present = np.flatnonzero(~np.isnan(values))
    best = values[present].min()
    ties = present[values[present] == best]
    return int(min(ties, key=lambda k: (abs(offsets[k]), offsets[k])))


def search_pair(pairs: Sequence[TrackletPair], cams, tracklets, grid: OffsetGrid,
                kind: EnergyKind = EnergyKind.SAMPSON,
                min_support: int = DEFAULT_MIN_SUPPORT,
                theta: float = DEFAULT_THETA, max_minima: int = DEFAULT_MAX_MINIMA,
                smoothing: int = 1, rule: str = "keep_below",
                backend: Optional[str] = None) -> PairwiseResult:
    offsets = grid.points()
    if len(offsets) == 0:
        raise ValueError("empty offset grid")
    sums, counts = evaluate_landscape(pairs, cams, tracklets, offsets, kind, backend)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts >= min_support, sums / np.maximum(counts, 1), np.nan)
    vi, vj = pairs[0].video_i, pairs[0].video_j
    if np.all(np.isnan(values)):
        raise NoOverlap(f"{vi}-{vj}: no offset reaches {min_support} samples")
    ls = EnergyLandscape(grid, offsets, values, counts)
    minima = find_local_minima(ls.smoothed(smoothing))
    reliable, reason = assess_reliability(minima, theta, max_minima, rule)
    best = float(offsets[_argmin_small_abs(offsets, values)])
    return PairwiseResult(vi, vj, ls, minima, best, reliable, reason, len(pairs))


def default_grid(cam_i: CameraTrack, cam_j: CameraTrack, grid_min=None, grid_max=None,
                 step=None) -> OffsetGrid:
    """Step = faster camera's frame period; range = +-ceil(overlap / 2) s."""
    if step is None:
        step = min(cam_i.period, cam_j.period)
    if grid_min is None or grid_max is None:
        a0, a1 = cam_i.span
        b0, b1 = cam_j.span
        overlap = max(0.0, min(a1, b1) - max(a0, b0))
        r = float(math.ceil(overlap / 2.0 - 1e-9))
        grid_min = -r if grid_min is None else grid_min
        grid_max = r if grid_max is None else grid_max
    return OffsetGrid(float(grid_min), float(grid_max), float(step))


@dataclass
class SearchConfig:
    kind: EnergyKind = EnergyKind.SAMPSON
    grid_min: Optional[float] = None
    grid_max: Optional[float] = None
    grid_step: Optional[float] = None
    min_support: int = DEFAULT_MIN_SUPPORT
    theta: float = DEFAULT_THETA
    max_minima: int = DEFAULT_MAX_MINIMA
    smoothing: int = 1
    rule: str = "keep_below"
    backend: Optional[str] = None


def search_all(cams: Mapping[str, CameraTrack], tracklets: Mapping[str, Tracklet],
               corr: CorrespondenceSet, config: SearchConfig = SearchConfig(),
               jobs: int = 1) -> list[PairwiseResult]:
    """Run ``search_pair`` for every video pair that has correspondences."""
    keys = [k for k in sorted(corr.groups) if corr.groups[k]]

    def run(key):
        group = corr.groups[key]
        grid = default_grid(cams[key[0]], cams[key[1]], config.grid_min, config.grid_max,
                            config.grid_step)
        try:
            return search_pair(group, cams, tracklets, grid, config.kind, config.min_support,
                               config.theta, config.max_minima, config.smoothing, config.rule,
                               config.backend)
        except NoOverlap:
            return PairwiseResult(key[0], key[1], None, [], None, False,
                                  RejectionReason.INSUFFICIENT_SUPPORT, len(group))

    if jobs <= 1 or len(keys) <= 1:
        return [run(k) for k in keys]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, keys))
