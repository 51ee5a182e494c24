"""Offset accuracy metrics: pairwise errors, A@tau and per-video errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyInput, MissingReference, UnknownVideo

FAILED = math.inf


@dataclass(frozen=True)
class PairError:
    video_i: str
    video_j: str
    predicted: Optional[float]  # seconds, None if the pair was rejected
    truth: float
    error_ms: float  # inf for failures

    @property
    def failed(self) -> bool:
        return math.isinf(self.error_ms)


def pairwise_errors(predicted: Mapping[tuple[str, str], Optional[float]],
                    truth: Mapping[str, float]) -> list[PairError]:
    """|Delta_ij - (s_j - s_i)| in ms per pair; ``None`` predictions are failures."""
    out = []
    for (vi, vj), d in sorted(predicted.items()):
        for v in (vi, vj):
            if v not in truth:
                raise UnknownVideo(v)
        true_d = truth[vj] - truth[vi]
        if d is None or not math.isfinite(d):
            out.append(PairError(vi, vj, None, true_d, FAILED))
        else:
            out.append(PairError(vi, vj, float(d), true_d, abs(d - true_d) * 1000.0))
    return out


def global_pair_predictions(offsets: Mapping[str, float], components: Mapping[str, int],
                            videos: Sequence[str]) -> dict[tuple[str, str], Optional[float]]:
    """Pairwise offsets implied by global offsets for every pair of ``videos``.

    Pairs split across components have no prediction.
    """
    out: dict[tuple[str, str], Optional[float]] = {}
    for vi, vj in combinations(sorted(videos), 2):
        linked = vi in offsets and vj in offsets and components.get(vi) == components.get(vj)
        out[(vi, vj)] = offsets[vj] - offsets[vi] if linked else None
    return out


def _errors_array(errors) -> np.ndarray:
    e = np.asarray(list(errors), dtype=float)
    if e.size == 0:
        raise EmptyInput("no errors to score")
    if np.any(np.isnan(e)) or np.any(e < 0):
        raise ValueError("errors must be non-negative or inf")
    return e


def auc_at(errors, tau: float) -> float:
    """Normalized area under the cumulative accuracy curve on [0, tau], in percent.

    The integral of acc(e) over [0, tau] divided by tau equals the mean of
    max(0, 1 - err/tau); failures (inf) contribute zero.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    e = _errors_array(errors)
    return float(100.0 * np.mean(np.maximum(0.0, 1.0 - e / tau)))


def pct_at(errors, tau: float) -> float:
    """Plain percentage of errors at or under ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    e = _errors_array(errors)
    return float(100.0 * np.mean(e <= tau))


METRICS = {"auc": auc_at, "pct": pct_at}


@dataclass
class VideoErrors:
    errors_ms: dict[str, float]
    delta_mean: float
    delta_med: float
    flagged: list[str] = field(default_factory=list)  # videos not linked to the reference


def video_errors(predicted: Mapping[str, float], truth: Mapping[str, float],
                 reference: Optional[str] = None,
                 components: Optional[Mapping[str, int]] = None) -> VideoErrors:
    """Per-video absolute error (ms) after pinning the reference in both sets.

    With ``components`` given, each component is aligned on its own smallest
    id; videos outside the reference's component are listed in ``flagged``.
    Mean and median run over all videos that are not a component reference.
    """
    if not predicted:
        raise EmptyInput("no predicted offsets")
    if reference is None:
        reference = min(predicted)
    if reference not in predicted or reference not in truth:
        raise MissingReference(reference)
    for v in predicted:
        if v not in truth:
            raise UnknownVideo(v)
    comp = components or {v: 0 for v in predicted}
    anchors: dict[int, str] = {}
    for v in sorted(predicted):
        anchors.setdefault(comp[v], v)
    anchors[comp[reference]] = reference

    errs: dict[str, float] = {}
    flagged = []
    for v in sorted(predicted):
        a = anchors[comp[v]]
        e = abs((predicted[v] - predicted[a]) - (truth[v] - truth[a])) * 1000.0
        errs[v] = e
        if comp[v] != comp[reference]:
            flagged.append(v)
    scored = [errs[v] for v in errs if v not in anchors.values()]
    if scored:
        mean, med = float(np.mean(scored)), float(np.median(scored))
    else:
        mean = med = 0.0
    return VideoErrors(errs, mean, med, flagged)


@dataclass
class EvalReport:
    pair_errors: list[PairError]
    a_at_100: float
    a_at_500: float
    video: VideoErrors
    metric: str = "auc"
    stage1_pair_errors: list[PairError] = field(default_factory=list)

    def to_dict(self) -> dict:
        def row(p: PairError):
            return {"video_i": p.video_i, "video_j": p.video_j,
                    "predicted_s": p.predicted, "truth_s": p.truth,
                    "error_ms": None if p.failed else p.error_ms, "failed": p.failed}
        out = {
            "metric": self.metric,
            "a_at_100": self.a_at_100,
            "a_at_500": self.a_at_500,
            "delta_mean_ms": self.video.delta_mean,
            "delta_med_ms": self.video.delta_med,
            "video_errors_ms": self.video.errors_ms,
            "unlinked_videos": self.video.flagged,
            "pairs": [row(p) for p in self.pair_errors],
        }
        if self.stage1_pair_errors:
            out["stage1_pairs"] = [row(p) for p in self.stage1_pair_errors]
        return out

    def table(self) -> str:
        name = "A" if self.metric == "auc" else "P"
        lines = [f"{name}@100 = {self.a_at_100:.2f}  {name}@500 = {self.a_at_500:.2f}  "
                 f"delta_mean = {self.video.delta_mean:.2f} ms  "
                 f"delta_med = {self.video.delta_med:.2f} ms",
                 f"{'video':<12}{'error_ms':>12}"]
        for v, e in self.video.errors_ms.items():
            flag = "  (unlinked)" if v in self.video.flagged else ""
            lines.append(f"{v:<12}{e:>12.3f}{flag}")
        return "\n".join(lines)


def evaluate(offsets: Mapping[str, float], components: Mapping[str, int],
             truth: Mapping[str, float], metric: str = "auc",
             stage1: Optional[Mapping[tuple[str, str], Optional[float]]] = None,
             reference: Optional[str] = None) -> EvalReport:
    """Score global offsets against truth over every pair of known videos."""
    fn = METRICS[metric]
    videos = sorted(set(offsets) | set(components))
    preds = global_pair_predictions(offsets, components, videos)
    pe = pairwise_errors(preds, truth)
    errs = [p.error_ms for p in pe]
    ve = video_errors({v: offsets[v] for v in videos}, truth, reference, components)
    s1 = pairwise_errors(stage1, truth) if stage1 else []
    return EvalReport(pe, fn(errs, 100.0), fn(errs, 500.0), ve, metric, s1)
