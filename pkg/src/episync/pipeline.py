"""Glue between pairwise search and global sync, shared by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .geometry import CameraTrack
from .global_sync import GlobalOffsets, OffsetMeasurement, solve_irls
from .pairwise import PairwiseResult, SearchConfig, search_all
from .tracklets import MIN_INSTANCE_COUNT, filter_correspondences, instance_assignment

HUBER_FRAMES = 1.5


def default_huber_delta(cams: Mapping[str, CameraTrack]) -> float:
    """1.5 frame periods of the slowest camera."""
    return HUBER_FRAMES * max(c.period for c in cams.values())


def measurements_from(results) -> list[OffsetMeasurement]:
    return [OffsetMeasurement(r.video_i, r.video_j, r.best_offset)
            for r in results if r.reliable and r.best_offset is not None]


@dataclass
class PipelineResult:
    pairwise: list[PairwiseResult]
    sync: GlobalOffsets


def run_pipeline(bundle, config: SearchConfig = SearchConfig(), jobs: int = 1,
                 instance_filter: bool = False, huber_delta: Optional[float] = None,
                 min_instance_count: float = MIN_INSTANCE_COUNT) -> PipelineResult:
    corr = bundle.correspondences
    if instance_filter:
        corr = filter_correspondences(
            corr, instance_assignment(corr, bundle.tracklets, min_instance_count),
            bundle.tracklets)
    results = search_all(bundle.cameras, bundle.tracklets, corr, config, jobs)
    delta = huber_delta if huber_delta is not None else default_huber_delta(bundle.cameras)
    sync = solve_irls(measurements_from(results), delta, videos=sorted(bundle.cameras))
    return PipelineResult(results, sync)
