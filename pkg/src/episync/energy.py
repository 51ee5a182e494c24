"""Epipolar residual measures and the per-correspondence energy at one offset.

The scalar functions here are the reference definitions. Landscape search
evaluates the same formulas through the vectorized kernels in ``_kernels``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import DegenerateBaseline, DegenerateResidual, OutOfRange
from .geometry import CameraTrack, fundamental_between, intrinsics_at, pose_at
from .tracklets import Tracklet, TrackletPair, sample_at

DENOM_EPS = 1e-18


class EnergyKind(enum.Enum):
    SAMPSON = "sampson"
    EPIPOLAR = "epipolar"
    COSINE = "cosine"
    ALGEBRAIC = "algebraic"

    @property
    def code(self) -> int:
        # integer tag understood by the compiled kernels
        return _CODES[self]


_CODES = {EnergyKind.SAMPSON: 0, EnergyKind.EPIPOLAR: 1, EnergyKind.COSINE: 2,
          EnergyKind.ALGEBRAIC: 3}


def _terms(xi, xj, F):
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    Fxj = F @ xj
    Ftxi = F.T @ xi
    return xi, xj, float(xi @ Fxj), Fxj, Ftxi


def _eps(F) -> float:
    # DENOM_EPS for a unit-norm F; scaled so the test does not depend on F's scale
    return max(DENOM_EPS * float(np.sum(np.square(F))), np.finfo(float).tiny)


def sampson(xi, xj, F) -> float:
    """First-order squared distance of (xi, xj) to the epipolar manifold, px^2."""
    _, _, a, Fxj, Ftxi = _terms(xi, xj, F)
    den = Fxj[0] ** 2 + Fxj[1] ** 2 + Ftxi[0] ** 2 + Ftxi[1] ** 2
    if den < _eps(F):
        raise DegenerateResidual("both points sit at their epipoles")
    return a * a / den


def symmetric_epipolar(xi, xj, F) -> float:
    _, _, a, Fxj, Ftxi = _terms(xi, xj, F)
    p = Fxj[0] ** 2 + Fxj[1] ** 2
    q = Ftxi[0] ** 2 + Ftxi[1] ** 2
    eps = _eps(F)
    if p < eps or q < eps:
        raise DegenerateResidual("epipolar line normal vanishes")
    return a * a / p + a * a / q


def cosine(xi, xj, F) -> float:
    xi, xj, a, Fxj, Ftxi = _terms(xi, xj, F)
    p = (xi @ xi) * (Fxj @ Fxj)
    q = (Ftxi @ Ftxi) * (xj @ xj)
    eps = _eps(F)
    if p < eps or q < eps:
        raise DegenerateResidual("vanishing cosine denominator")
    return a * a / p + a * a / q


def algebraic(xi, xj, F) -> float:
    return abs(_terms(xi, xj, F)[2])


ENERGY_FUNCTIONS = {
    EnergyKind.SAMPSON: sampson,
    EnergyKind.EPIPOLAR: symmetric_epipolar,
    EnergyKind.COSINE: cosine,
    EnergyKind.ALGEBRAIC: algebraic,
}


@dataclass(frozen=True, eq=False)
class ResidualSample:
    t: float
    xi: np.ndarray
    xj: np.ndarray
    F: np.ndarray
    value: float


def pair_residuals(pair: TrackletPair, cams: Mapping[str, CameraTrack],
                   tracklets: Mapping[str, Tracklet], delta: float,
                   kind: EnergyKind = EnergyKind.SAMPSON) -> Iterator[ResidualSample]:
    """Yield one residual per video-j frame time where both tracklets and F exist.

    Video j is sampled at its own frames ``t``; video i at ``t + delta``.
    """
    fn = ENERGY_FUNCTIONS[kind]
    cam_i, cam_j = cams[pair.video_i], cams[pair.video_j]
    tr_i, tr_j = tracklets[pair.tracklet_i], tracklets[pair.tracklet_j]
    for t in cam_j.frame_times:
        t = float(t)
        xj = sample_at(tr_j, cam_j, t)
        if xj is None:
            continue
        xi = sample_at(tr_i, cam_i, t + delta)
        if xi is None:
            continue
        try:
            F = fundamental_between(intrinsics_at(cam_i, t + delta), pose_at(cam_i, t + delta),
                                    intrinsics_at(cam_j, t), pose_at(cam_j, t))
            value = fn(xi, xj, F)
        except (OutOfRange, DegenerateBaseline, DegenerateResidual):
            continue
        yield ResidualSample(t, xi, xj, F, value)


def pair_energy(pair: TrackletPair, cams: Mapping[str, CameraTrack],
                tracklets: Mapping[str, Tracklet], delta: float,
                kind: EnergyKind = EnergyKind.SAMPSON) -> tuple[float, int]:
    """Weighted energy sum and number of contributing samples at offset ``delta``."""
    total, count = 0.0, 0
    for r in pair_residuals(pair, cams, tracklets, delta, kind):
        total += pair.weight * r.value
        count += 1
    return total, count
