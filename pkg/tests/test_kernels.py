import numpy as np
import pytest

from aftmc import _kernels

pytestmark = pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba not installed")


def test_chirp_sum_backends_agree():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    t = rng.uniform(-0.25, 1.0, 200)
    a = _kernels.chirp_sum_numpy(x, t, 64.0, 0.03, 0.21)
    b = _kernels.chirp_sum_numba(x, t, 64.0, 0.03, 0.21)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_aml_point_backends_agree():
    rng = np.random.default_rng(1)
    xp = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    for tau_norm, omega in [(0.0, 0.0), (0.013, 0.21), (0.2, -0.4)]:
        a = _kernels.aml_point_numpy(xp, v, tau_norm, omega)
        b = _kernels.aml_point_numba(xp, v, tau_norm, omega)
        assert abs(a - b) < 1e-9 * max(1.0, abs(a))


def test_music_scan_backends_agree():
    rng = np.random.default_rng(2)
    U, _ = np.linalg.qr(rng.standard_normal((13, 11)) + 1j * rng.standard_normal((13, 11)))
    angles = np.deg2rad(np.linspace(-90, 90, 1801))
    a = _kernels.music_scan_numpy(angles, U, np.pi)
    b = _kernels.music_scan_numba(angles, np.ascontiguousarray(U), np.pi)
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_backend_name():
    assert _kernels.backend() in ("numba", "numpy")
