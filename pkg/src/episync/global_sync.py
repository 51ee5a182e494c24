"""Global per-video offsets from pairwise offset measurements (Huber IRLS)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SingularSystem


@dataclass(frozen=True)
class OffsetMeasurement:
    """Measured ``s_j - s_i`` between two videos."""

    video_i: str
    video_j: str
    delta: float
    weight: float = 1.0

    def __post_init__(self):
        if self.video_i == self.video_j:
            raise ValueError("measurement must link two different videos")
        if not np.isfinite(self.delta):
            raise ValueError("measurement delta must be finite")
        if not self.weight > 0:
            raise ValueError("measurement weight must be positive")

    def canonical(self) -> "OffsetMeasurement":
        if self.video_i < self.video_j:
            return self
        return OffsetMeasurement(self.video_j, self.video_i, -self.delta, self.weight)


@dataclass
class GlobalOffsets:
    offsets: dict[str, float]
    components: dict[str, int]
    references: dict[int, str]
    iterations: int
    objective: float
    history: list[float] = field(default_factory=list)
    huber_delta: float = 0.0


def huber(r, delta: float):
    """Huber loss: quadratic for ``|r| <= delta``, linear beyond."""
    if not delta > 0:
        raise ValueError("huber delta must be positive")
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))
    return float(out) if np.ndim(out) == 0 else out


def connected_components(measurements: Iterable[OffsetMeasurement],
                         videos: Iterable[str] = ()) -> dict[str, int]:
    """Label videos by connected component; labels follow the smallest member id."""
    adj: dict[str, set[str]] = {v: set() for v in videos}
    for m in measurements:
        adj.setdefault(m.video_i, set()).add(m.video_j)
        adj.setdefault(m.video_j, set()).add(m.video_i)
    labels: dict[str, int] = {}
    for root in sorted(adj):
        if root in labels:
            continue
        comp = len(set(labels.values()))
        queue = deque([root])
        labels[root] = comp
        while queue:
            v = queue.popleft()
            for u in sorted(adj[v]):
                if u not in labels:
                    labels[u] = comp
                    queue.append(u)
    return labels


def _spanning_tree_init(n, rows):
    s = np.zeros(n)
    seen = {0}
    adj: dict[int, list[tuple[int, float]]] = {k: [] for k in range(n)}
    for i, j, d, _ in rows:
        adj[i].append((j, d))
        adj[j].append((i, -d))
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u, d in adj[v]:
            if u not in seen:
                seen.add(u)
                s[u] = s[v] + d
                queue.append(u)
    return s


def _solve_component(names: list[str], rows, delta_h, tol, max_iter, init, robust):
    n = len(names)
    if n == 1:
        return np.zeros(1), 0, 0.0, [0.0]
    ii = np.array([r[0] for r in rows])
    jj = np.array([r[1] for r in rows])
    meas = np.array([r[2] for r in rows])
    w0 = np.array([r[3] for r in rows])
    A = np.zeros((len(rows), n))
    A[np.arange(len(rows)), jj] = 1.0
    A[np.arange(len(rows)), ii] -= 1.0
    A_free = A[:, 1:]  # reference (index 0) pinned to zero

    def objective(s):
        return float(np.sum(w0 * huber(A @ s - meas, delta_h)))

    s = _spanning_tree_init(n, rows) if init == "spanning_tree" else np.zeros(n)
    history = [objective(s)]
    it = 0
    for it in range(1, max_iter + 1):
        r = A @ s - meas
        if robust:
            a = np.abs(r)
            w = w0 * np.where(a <= delta_h, 1.0, delta_h / np.maximum(a, delta_h))
        else:
            w = w0
        N = A_free.T @ (w[:, None] * A_free)
        if np.linalg.matrix_rank(N) < n - 1:
            raise SingularSystem("pinned Laplacian is rank deficient")
        s_new = np.zeros(n)
        s_new[1:] = np.linalg.solve(N, A_free.T @ (w * meas))
        history.append(objective(s_new))
        change = float(np.max(np.abs(s_new - s)))
        s = s_new
        if change < tol:
            break
    return s, it, history[-1], history


def solve_irls(measurements: Sequence[OffsetMeasurement], delta_huber: float,
               tol: float = 1e-6, max_iter: int = 100, videos: Iterable[str] = (),
               init: str = "zero", robust: bool = True) -> GlobalOffsets:
    """Minimize the summed Huber loss of ``s_j - s_i - delta`` per connected component.

    The smallest video id of each component is the reference with offset 0.
    ``robust=False`` gives the plain weighted least-squares solution.
    """
    if not delta_huber > 0:
        raise ValueError("huber delta must be positive")
    if init not in ("zero", "spanning_tree"):
        raise ValueError(f"unknown init {init!r}")
    ms = [m.canonical() for m in measurements]
    labels = connected_components(ms, videos)
    members: dict[int, list[str]] = {}
    for v in sorted(labels):
        members.setdefault(labels[v], []).append(v)

    offsets: dict[str, float] = {}
    refs: dict[int, str] = {}
    total_obj, max_it = 0.0, 0
    history = None
    for comp in sorted(members):
        names = members[comp]
        index = {v: k for k, v in enumerate(names)}
        rows = [(index[m.video_i], index[m.video_j], m.delta, m.weight)
                for m in ms if labels[m.video_i] == comp]
        s, it, obj, hist = _solve_component(names, rows, delta_huber, tol, max_iter, init, robust)
        refs[comp] = names[0]
        for v, val in zip(names, s):
            offsets[v] = float(val)
        offsets[names[0]] = 0.0
        total_obj += obj
        max_it = max(max_it, it)
        if len(names) > 1 and (history is None or len(hist) > len(history)):
            history = hist
    return GlobalOffsets(offsets, labels, refs, max_it, total_obj, history or [0.0], delta_huber)
