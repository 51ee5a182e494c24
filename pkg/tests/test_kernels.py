import os
import subprocess
import sys

import numpy as np
import pytest

from episync import _kernels
from episync.energy import EnergyKind, pair_energy
from episync.pairwise import evaluate_landscape

from conftest import cached_bundle

SCENARIOS = [
    dict(seed=4, n_cameras=2),
    dict(seed=5, n_cameras=2, fps=(15.0, 30.0), dropout=0.2),
    dict(seed=6, n_cameras=2, camera_motion="orbit", orbit_speed=0.2, fps=(24.0, 30.0)),
]
OFFSETS = np.array([-0.51, -1 / 30, 0.0, 0.0123, 0.25, 1.0 / 7])


def reference_landscape(group, b, offsets, kind):
    sums, counts = np.zeros(len(offsets)), np.zeros(len(offsets), dtype=np.int64)
    for g, d in enumerate(offsets):
        for p in group:
            s, c = pair_energy(p, b.cameras, b.tracklets, float(d), kind)
            sums[g] += s
            counts[g] += c
    return sums, counts


@pytest.mark.parametrize("scenario", range(len(SCENARIOS)))
@pytest.mark.parametrize("kind", list(EnergyKind))
def test_kernels_match_scalar_reference(scenario, kind):
    b = cached_bundle(**SCENARIOS[scenario])
    group = b.correspondences.pairs[:3]
    ref_s, ref_c = reference_landscape(group, b, OFFSETS, kind)
    for backend in ("numpy", "numba"):
        s, c = evaluate_landscape(group, b.cameras, b.tracklets, OFFSETS, kind, backend)
        np.testing.assert_array_equal(c, ref_c)
        np.testing.assert_allclose(s, ref_s, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("kind", list(EnergyKind))
def test_numba_and_numpy_backends_agree(kind):
    b = cached_bundle(seed=7, n_cameras=3, dropout=0.1)
    offsets = np.arange(-60, 61) / 30.0
    for key, group in b.correspondences.groups.items():
        s1, c1 = evaluate_landscape(group, b.cameras, b.tracklets, offsets, kind, "numba")
        s2, c2 = evaluate_landscape(group, b.cameras, b.tracklets, offsets, kind, "numpy")
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_allclose(s1, s2, rtol=1e-10, atol=1e-12)


def test_env_flag_selects_numpy_backend():
    code = "from episync import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, EPISYNC_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"
    env["EPISYNC_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "numba"


def test_default_backend_is_numba_here():
    assert _kernels.BACKEND in ("numba", "numpy")
    if not os.environ.get("EPISYNC_DISABLE_NUMBA"):
        assert _kernels.BACKEND == "numba"
