"""Hot loop: energy landscape of one video pair over a grid of offsets.

Two interchangeable implementations share one signature:

* ``landscape_numba`` -- explicit loops compiled with ``numba.njit``;
* ``landscape_numpy`` -- the same computation vectorized over the
  (offset, frame) grid in plain numpy.

``landscape`` dispatches to numba unless ``EPISYNC_DISABLE_NUMBA`` is set to a
non-empty value other than ``0`` or numba cannot be imported.

Array arguments (i = shifted video, j = anchor video, P tracklet pairs):

    offsets (G,), ti (ni,), tj (nj,)
    kinv_i, rot_i (ni, 3, 3); tr_i, ctr_i (ni, 3); likewise for j
    uv_i (P, ni, 2), vis_i (P, ni); uv_j (P, nj, 2), vis_j (P, nj); weights (P,)

Returns ``(sums, counts)`` of shape (G,).
"""

from __future__ import annotations

import os

import numpy as np

DENOM_EPS = 1e-18

_flag = os.environ.get("EPISYNC_DISABLE_NUMBA", "")
NUMBA_REQUESTED = _flag in ("", "0")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKEND = "numba" if (HAVE_NUMBA and NUMBA_REQUESTED) else "numpy"


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------

def _fundamentals_np(kinv_i, rot_i, tr_i, kinv_j, rot_j, tr_j):
    """Batched unit-Frobenius F for matching leading dims (sign left free)."""
    R_rel = rot_i @ np.swapaxes(rot_j, -1, -2)
    t_rel = tr_i - np.einsum("...ab,...b->...a", R_rel, tr_j)
    tx = np.zeros(t_rel.shape[:-1] + (3, 3))
    tx[..., 0, 1] = -t_rel[..., 2]
    tx[..., 0, 2] = t_rel[..., 1]
    tx[..., 1, 0] = t_rel[..., 2]
    tx[..., 1, 2] = -t_rel[..., 0]
    tx[..., 2, 0] = -t_rel[..., 1]
    tx[..., 2, 1] = t_rel[..., 0]
    F = np.swapaxes(kinv_i, -1, -2) @ tx @ R_rel @ kinv_j
    norm = np.sqrt(np.sum(F * F, axis=(-1, -2)))
    return F / np.where(norm > 0, norm, 1.0)[..., None, None]


def _energy_np(kind, ui, vi, uj, vj, F):
    """Vectorized residuals; returns ``(values, valid)``."""
    f = [[F[..., r, c] for c in range(3)] for r in range(3)]
    # F xj and F^T xi with w = 1
    l0 = f[0][0] * uj + f[0][1] * vj + f[0][2]
    l1 = f[1][0] * uj + f[1][1] * vj + f[1][2]
    l2 = f[2][0] * uj + f[2][1] * vj + f[2][2]
    m0 = f[0][0] * ui + f[1][0] * vi + f[2][0]
    m1 = f[0][1] * ui + f[1][1] * vi + f[2][1]
    m2 = f[0][2] * ui + f[1][2] * vi + f[2][2]
    a = ui * l0 + vi * l1 + l2
    a2 = a * a
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == 0:
            den = l0 * l0 + l1 * l1 + m0 * m0 + m1 * m1
            valid = den >= DENOM_EPS
            val = a2 / den
        elif kind == 1:
            p = l0 * l0 + l1 * l1
            q = m0 * m0 + m1 * m1
            valid = (p >= DENOM_EPS) & (q >= DENOM_EPS)
            val = a2 / p + a2 / q
        elif kind == 2:
            p = (ui * ui + vi * vi + 1.0) * (l0 * l0 + l1 * l1 + l2 * l2)
            q = (m0 * m0 + m1 * m1 + m2 * m2) * (uj * uj + vj * vj + 1.0)
            valid = (p >= DENOM_EPS) & (q >= DENOM_EPS)
            val = a2 / p + a2 / q
        else:
            valid = np.ones(a.shape, dtype=bool)
            val = np.abs(a)
    return val, valid


def landscape_numpy(offsets, ti, tj, pad_i, kinv_i, rot_i, tr_i, ctr_i,
                    kinv_j, rot_j, tr_j, ctr_j, uv_i, vis_i, uv_j, vis_j, weights,
                    kind, max_gap, snap, eps_baseline):
    offsets = np.asarray(offsets, dtype=float)
    G, ni, nj = len(offsets), len(ti), len(tj)
    TT = tj[None, :] + offsets[:, None]
    in_span = (TT >= ti[0] - pad_i) & (TT <= ti[-1] + pad_i)

    # nearest frame of video i for the pose, ties to the lower index
    lo = np.clip(np.searchsorted(ti, TT, side="right") - 1, 0, ni - 1)
    hi = np.minimum(lo + 1, ni - 1)
    m = np.where((TT - ti[lo]) <= (ti[hi] - TT), lo, hi)
    m = np.where(TT < ti[0], 0, m)
    kk = np.broadcast_to(np.arange(nj)[None, :], (G, nj))

    base_ok = np.linalg.norm(ctr_i[m] - ctr_j[kk], axis=-1) > eps_baseline
    F = _fundamentals_np(kinv_i[m], rot_i[m], tr_i[m], kinv_j[kk], rot_j[kk], tr_j[kk])
    frame_ok = in_span & base_ok

    b0 = np.searchsorted(ti, TT - snap, side="left")
    exact = (b0 < ni) & (np.abs(ti[np.minimum(b0, ni - 1)] - TT) <= snap)

    sums = np.zeros(G)
    counts = np.zeros(G, dtype=np.int64)
    for p in range(len(weights)):
        vi_p = vis_i[p]
        # first visible frame in [b0, b0 + max_gap)
        b = np.full(TT.shape, -1)
        for q in range(max_gap - 1, -1, -1):
            idx = b0 + q
            ok = (idx < ni) & vi_p[np.minimum(idx, ni - 1)]
            b = np.where(ok, idx, b)
        # last visible frame in [b0 - max_gap, b0)
        a = np.full(TT.shape, -1)
        for q in range(max_gap, 0, -1):
            idx = b0 - q
            ok = (idx >= 0) & vi_p[np.maximum(idx, 0)]
            a = np.where(ok, idx, a)
        exact_hit = exact & vi_p[np.minimum(b0, ni - 1)]
        bracket = (a >= 0) & (b >= 0) & (b - a <= max_gap)
        have_i = exact_hit | bracket

        ac = np.maximum(a, 0)
        bc = np.maximum(b, 0)
        ta, tb = ti[ac], ti[bc]
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(bracket, (TT - ta) / np.where(tb > ta, tb - ta, 1.0), 0.0)
        ui = uv_i[p, ac, 0] + w * (uv_i[p, bc, 0] - uv_i[p, ac, 0])
        vi = uv_i[p, ac, 1] + w * (uv_i[p, bc, 1] - uv_i[p, ac, 1])
        e0 = np.minimum(b0, ni - 1)
        ui = np.where(exact_hit, uv_i[p, e0, 0], ui)
        vi = np.where(exact_hit, uv_i[p, e0, 1], vi)

        uj = np.broadcast_to(uv_j[p, :, 0][None, :], (G, nj))
        vj = np.broadcast_to(uv_j[p, :, 1][None, :], (G, nj))
        val, valid = _energy_np(kind, ui, vi, uj, vj, F)
        mask = frame_ok & have_i & vis_j[p][None, :] & valid
        sums += np.sum(np.where(mask, weights[p] * val, 0.0), axis=1)
        counts += np.sum(mask, axis=1)
    return sums, counts


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

def _landscape_loops(offsets, ti, tj, pad_i, kinv_i, rot_i, tr_i, ctr_i,
                     kinv_j, rot_j, tr_j, ctr_j, uv_i, vis_i, uv_j, vis_j, weights,
                     kind, max_gap, snap, eps_baseline):
    G = offsets.shape[0]
    ni = ti.shape[0]
    nj = tj.shape[0]
    P = weights.shape[0]
    sums = np.zeros(G)
    counts = np.zeros(G, dtype=np.int64)
    R_rel = np.empty((3, 3))
    E = np.empty((3, 3))
    F = np.empty((3, 3))
    tx = np.zeros((3, 3))
    t_rel = np.empty(3)
    for g in range(G):
        for k in range(nj):
            tt = tj[k] + offsets[g]
            if tt < ti[0] - pad_i or tt > ti[ni - 1] + pad_i:
                continue
            lo = np.searchsorted(ti, tt, side="right") - 1
            if lo < 0:
                m = 0
            elif lo >= ni - 1:
                m = ni - 1
            elif (tt - ti[lo]) <= (ti[lo + 1] - tt):
                m = lo
            else:
                m = lo + 1
            d0 = ctr_i[m, 0] - ctr_j[k, 0]
            d1 = ctr_i[m, 1] - ctr_j[k, 1]
            d2 = ctr_i[m, 2] - ctr_j[k, 2]
            if np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) <= eps_baseline:
                continue

            # F = Kinv_i^T [t_rel]x R_rel Kinv_j, R_rel = R_i R_j^T
            for r in range(3):
                for c in range(3):
                    s = 0.0
                    for q in range(3):
                        s += rot_i[m, r, q] * rot_j[k, c, q]
                    R_rel[r, c] = s
            for r in range(3):
                s = 0.0
                for q in range(3):
                    s += R_rel[r, q] * tr_j[k, q]
                t_rel[r] = tr_i[m, r] - s
            tx[0, 1] = -t_rel[2]
            tx[0, 2] = t_rel[1]
            tx[1, 0] = t_rel[2]
            tx[1, 2] = -t_rel[0]
            tx[2, 0] = -t_rel[1]
            tx[2, 1] = t_rel[0]
            for r in range(3):
                for c in range(3):
                    s = 0.0
                    for q in range(3):
                        s += tx[r, q] * R_rel[q, c]
                    E[r, c] = s
            # F = Kinv_i^T (E Kinv_j)
            for r in range(3):
                for c in range(3):
                    s = 0.0
                    for q in range(3):
                        s += E[r, q] * kinv_j[k, q, c]
                    F[r, c] = s
            fro = 0.0
            for r in range(3):
                for c in range(3):
                    s = 0.0
                    for q in range(3):
                        s += kinv_i[m, q, r] * F[q, c]
                    E[r, c] = s
                    fro += s * s
            fro = np.sqrt(fro)
            if fro <= 0.0:
                continue
            f00 = E[0, 0] / fro
            f01 = E[0, 1] / fro
            f02 = E[0, 2] / fro
            f10 = E[1, 0] / fro
            f11 = E[1, 1] / fro
            f12 = E[1, 2] / fro
            f20 = E[2, 0] / fro
            f21 = E[2, 1] / fro
            f22 = E[2, 2] / fro

            b0 = np.searchsorted(ti, tt - snap, side="left")
            exact = b0 < ni and abs(ti[b0] - tt) <= snap

            for p in range(P):
                if not vis_j[p, k]:
                    continue
                if exact and vis_i[p, b0]:
                    ui = uv_i[p, b0, 0]
                    vi = uv_i[p, b0, 1]
                else:
                    b = -1
                    for q in range(b0, min(ni, b0 + max_gap)):
                        if vis_i[p, q]:
                            b = q
                            break
                    if b < 0:
                        continue
                    a = -1
                    for q in range(b0 - 1, max(-1, b - max_gap - 1), -1):
                        if vis_i[p, q]:
                            a = q
                            break
                    if a < 0:
                        continue
                    w = (tt - ti[a]) / (ti[b] - ti[a])
                    ui = uv_i[p, a, 0] + w * (uv_i[p, b, 0] - uv_i[p, a, 0])
                    vi = uv_i[p, a, 1] + w * (uv_i[p, b, 1] - uv_i[p, a, 1])
                uj = uv_j[p, k, 0]
                vj = uv_j[p, k, 1]
                l0 = f00 * uj + f01 * vj + f02
                l1 = f10 * uj + f11 * vj + f12
                l2 = f20 * uj + f21 * vj + f22
                m0 = f00 * ui + f10 * vi + f20
                m1 = f01 * ui + f11 * vi + f21
                m2 = f02 * ui + f12 * vi + f22
                av = ui * l0 + vi * l1 + l2
                a2 = av * av
                if kind == 0:
                    den = l0 * l0 + l1 * l1 + m0 * m0 + m1 * m1
                    if den < DENOM_EPS:
                        continue
                    val = a2 / den
                elif kind == 1:
                    pp = l0 * l0 + l1 * l1
                    qq = m0 * m0 + m1 * m1
                    if pp < DENOM_EPS or qq < DENOM_EPS:
                        continue
                    val = a2 / pp + a2 / qq
                elif kind == 2:
                    pp = (ui * ui + vi * vi + 1.0) * (l0 * l0 + l1 * l1 + l2 * l2)
                    qq = (m0 * m0 + m1 * m1 + m2 * m2) * (uj * uj + vj * vj + 1.0)
                    if pp < DENOM_EPS or qq < DENOM_EPS:
                        continue
                    val = a2 / pp + a2 / qq
                else:
                    val = abs(av)
                sums[g] += weights[p] * val
                counts[g] += 1
    return sums, counts


if HAVE_NUMBA:
    landscape_numba = numba.njit(cache=True, nogil=True)(_landscape_loops)
else:  # pragma: no cover
    landscape_numba = None


def landscape(*args):
    if BACKEND == "numba":
        return landscape_numba(*args)
    return landscape_numpy(*args)
