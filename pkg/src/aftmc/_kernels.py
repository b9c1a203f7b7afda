"""Inner-loop kernels with a numba path and a pure-numpy path.

Set ``AFTMC_DISABLE_NUMBA=1`` before import to force the numpy versions. Both
implementations are always importable under ``*_numba`` / ``*_numpy`` names so
tests and benchmarks can compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("AFTMC_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


# --- direct chirp summation (continuous-time oracle) -------------------------

def chirp_sum_numpy(x, t_norm, M, c1, c2):
    """``sum_m x[m] exp(j 2 pi (c2 m^2 + m t + M^2 c1 t^2)) / sqrt(M)`` for each t."""
    m = np.arange(x.shape[0], dtype=float)
    phase = c2 * m[None, :] ** 2 + m[None, :] * t_norm[:, None]
    terms = x[None, :] * np.exp(2j * np.pi * phase)
    return terms.sum(axis=1) * np.exp(2j * np.pi * M**2 * c1 * t_norm**2) / math.sqrt(M)


def _chirp_sum_loop(x, t_norm, M, c1, c2):
    n_sub = x.shape[0]
    # the c2 term does not depend on t; fold it into the symbols once
    xc = np.empty(n_sub, dtype=np.complex128)
    for m in range(n_sub):
        ph = 2.0 * math.pi * c2 * m * m
        xc[m] = x[m] * complex(math.cos(ph), math.sin(ph))
    out = np.empty(t_norm.shape[0], dtype=np.complex128)
    for i in range(t_norm.shape[0]):
        t = t_norm[i]
        ph = 2.0 * math.pi * t
        step = complex(math.cos(ph), math.sin(ph))
        rot = 1.0 + 0.0j
        acc = 0.0 + 0.0j
        for m in range(n_sub):
            acc += xc[m] * rot
            rot *= step
        ph = 2.0 * math.pi * M * M * c1 * t * t
        out[i] = acc * complex(math.cos(ph), math.sin(ph)) / math.sqrt(M)
    return out


# --- delay/Doppler matched-filter correlation at one point -------------------

def aml_point_numpy(xp, v, tau_norm, omega):
    """Correlation ``sum_n conj(u[n]) exp(-j 2 pi omega n) v[n]``.

    ``u = F^H d(tau) xp`` is the delayed time-domain symbol, ``tau_norm = tau / T``
    and ``omega`` is the net time-domain phase slope in cycles per sample.
    """
    M = xp.shape[0]
    k = np.arange(M)
    u = np.fft.ifft(np.exp(-2j * np.pi * k * tau_norm) * xp) * math.sqrt(M)
    return np.sum(np.conj(u) * np.exp(-2j * np.pi * omega * k) * v)


def _aml_point_loop(xp, v, tau_norm, omega):
    M = xp.shape[0]
    acc = 0.0 + 0.0j
    for n in range(M):
        ph = 2.0 * math.pi * (n / M - tau_norm)
        step = complex(math.cos(ph), math.sin(ph))
        rot = 1.0 + 0.0j
        u = 0.0 + 0.0j
        for m in range(M):
            u += xp[m] * rot
            rot *= step
        u /= math.sqrt(M)
        ph = -2.0 * math.pi * omega * n
        acc += u.conjugate() * complex(math.cos(ph), math.sin(ph)) * v[n]
    return acc


# --- MUSIC pseudo-spectrum scan ----------------------------------------------

def music_scan_numpy(angles, noise_basis, kd):
    """``1 / ||U_n^H conj(b(theta))||^2`` for each angle; ``kd = 2 pi d / lambda``."""
    L = noise_basis.shape[0]
    B = np.exp(-1j * kd * np.outer(np.sin(angles), np.arange(L)))
    return 1.0 / np.sum(np.abs(B @ noise_basis) ** 2, axis=1)


def _music_scan_loop(angles, noise_basis, kd):
    L, K = noise_basis.shape
    out = np.empty(angles.shape[0])
    b = np.empty(L, dtype=np.complex128)
    for g in range(angles.shape[0]):
        s = kd * math.sin(angles[g])
        for k in range(L):
            b[k] = complex(math.cos(s * k), -math.sin(s * k))
        denom = 0.0
        for j in range(K):
            acc = 0.0 + 0.0j
            for k in range(L):
                acc += b[k] * noise_basis[k, j]
            denom += acc.real * acc.real + acc.imag * acc.imag
        out[g] = 1.0 / denom
    return out


if NUMBA_AVAILABLE:
    chirp_sum_numba = numba.njit(cache=True, nogil=True)(_chirp_sum_loop)
    aml_point_numba = numba.njit(cache=True, nogil=True)(_aml_point_loop)
    music_scan_numba = numba.njit(cache=True, nogil=True)(_music_scan_loop)
else:  # pragma: no cover
    chirp_sum_numba = _chirp_sum_loop
    aml_point_numba = _aml_point_loop
    music_scan_numba = _music_scan_loop


def chirp_sum(x, t_norm, M, c1, c2):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    t_norm = np.ascontiguousarray(t_norm, dtype=np.float64)
    if USE_NUMBA:
        return chirp_sum_numba(x, t_norm, float(M), float(c1), float(c2))
    return chirp_sum_numpy(x, t_norm, M, c1, c2)


def aml_point(xp, v, tau_norm, omega):
    if USE_NUMBA:
        return aml_point_numba(xp, v, float(tau_norm), float(omega))
    return aml_point_numpy(xp, v, tau_norm, omega)


def music_scan(angles, noise_basis, kd):
    angles = np.ascontiguousarray(angles, dtype=np.float64)
    noise_basis = np.ascontiguousarray(noise_basis, dtype=np.complex128)
    if USE_NUMBA:
        return music_scan_numba(angles, noise_basis, float(kd))
    return music_scan_numpy(angles, noise_basis, kd)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
