"""AFT-MC (chirp multicarrier) modulation built on the discrete affine Fourier transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aftmc import _kernels


@dataclass(frozen=True)
class WaveformParams:
    """One AFT-MC symbol.

    ``c1`` sets the chirp slope, ``c2`` the per-subcarrier phase. ``c1 = c2 = 0``
    is plain OFDM. ``L`` is the chirp-periodic prefix length in samples.
    """

    M: int = 64
    c1: float = 0.0
    c2: float = 0.0
    T: float = 1.0 / 15e3
    L: int = 16
    qam_order: int = 16

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not 0 <= self.L < self.M:
            raise ValueError(f"CPP length must satisfy 0 <= L < M, got L={self.L}, M={self.M}")
        if self.qam_order not in QAM_ORDERS:
            raise ValueError(f"unsupported QAM order {self.qam_order}")

    @property
    def delta_f(self) -> float:
        return 1.0 / self.T

    @property
    def t_cpp(self) -> float:
        return self.L * self.T / self.M

    @property
    def sample_period(self) -> float:
        return self.T / self.M

    def replace(self, **changes) -> "WaveformParams":
        fields = {k: getattr(self, k) for k in ("M", "c1", "c2", "T", "L", "qam_order")}
        fields.update(changes)
        return WaveformParams(**fields)


QAM_ORDERS = (4, 16, 64)


def chirp_phases(c: float, M: int) -> np.ndarray:
    """Diagonal of ``Lambda_c = diag(exp(-j 2 pi c m^2))``."""
    m = np.arange(M, dtype=float)
    return np.exp(-2j * np.pi * c * m**2)


def dft_matrix(M: int) -> np.ndarray:
    """Unitary DFT matrix with ``F[m, n] = exp(-j 2 pi m n / M) / sqrt(M)``."""
    k = np.arange(M)
    return np.exp(-2j * np.pi * np.outer(k, k) / M) / np.sqrt(M)


def daft_matrix(params: WaveformParams) -> np.ndarray:
    """M x M DAFT matrix ``A = Lambda_c2 F Lambda_c1`` (unitary)."""
    lam1 = chirp_phases(params.c1, params.M)
    lam2 = chirp_phases(params.c2, params.M)
    return lam2[:, None] * dft_matrix(params.M) * lam1[None, :]


def modulate(x: np.ndarray, params: WaveformParams) -> np.ndarray:
    """Time-domain samples ``s = A^H x``, computed with an inverse FFT."""
    x = np.asarray(x, dtype=complex)
    if x.shape[0] != params.M:
        raise ValueError(f"symbol vector has length {x.shape[0]}, expected M={params.M}")
    lam1 = chirp_phases(params.c1, params.M)
    lam2 = chirp_phases(params.c2, params.M)
    s = np.fft.ifft(np.conj(lam2) * x) * np.sqrt(params.M)
    return np.conj(lam1) * s


def demodulate(R: np.ndarray, params: WaveformParams) -> np.ndarray:
    """Apply ``A`` columnwise: ``Y = Lambda_c2 F Lambda_c1 R``.

    ``R`` is M x N_r (CPP already removed) or a length-M vector.
    """
    R = np.asarray(R, dtype=complex)
    if R.shape[0] != params.M:
        raise ValueError(f"input has {R.shape[0]} rows, expected M={params.M}")
    lam1 = chirp_phases(params.c1, params.M)
    lam2 = chirp_phases(params.c2, params.M)
    if R.ndim == 1:
        return lam2 * np.fft.fft(lam1 * R) / np.sqrt(params.M)
    Y = np.fft.fft(lam1[:, None] * R, axis=0) / np.sqrt(params.M)
    return lam2[:, None] * Y


def demodulate_vector(s: np.ndarray, params: WaveformParams) -> np.ndarray:
    return demodulate(np.asarray(s).reshape(-1), params)


def cpp_phases(params: WaveformParams) -> np.ndarray:
    """Diagonal of the prefix correction ``exp(-j 2 pi c1 (M^2 + 2 M l))``, l = -L..-1."""
    M = params.M
    l = np.arange(-params.L, 0, dtype=float)
    return np.exp(-2j * np.pi * params.c1 * (M**2 + 2 * M * l))


def add_cpp(s: np.ndarray, params: WaveformParams) -> np.ndarray:
    """Prepend the chirp-periodic prefix; returns M + L samples."""
    s = np.asarray(s, dtype=complex)
    if s.shape[0] != params.M:
        raise ValueError(f"signal has length {s.shape[0]}, expected M={params.M}")
    if params.L == 0:
        return s.copy()
    prefix = s[params.M - params.L:] * cpp_phases(params)
    return np.concatenate([prefix, s])


def remove_cpp(s_cpp: np.ndarray, params: WaveformParams) -> np.ndarray:
    return np.asarray(s_cpp)[params.L:params.L + params.M]


def continuous_signal(x: np.ndarray, params: WaveformParams, t) -> np.ndarray:
    """Evaluate the CPP-extended analog AFT-MC signal at times ``t`` (seconds).

    Direct summation over subcarriers; no FFT. For ``-T_cpp <= t < 0`` the
    prefix branch ``s(t + T) exp(-j 2 pi c1 (M^2 + 2 M^2 t / T))`` is used, the
    continuous counterpart of the discrete prefix correction in sample units.
    """
    x = np.asarray(x, dtype=complex)
    if x.shape[0] != params.M:
        raise ValueError(f"symbol vector has length {x.shape[0]}, expected M={params.M}")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    # tolerance keeps t = -T_cpp and t = T valid after float round-off
    eps = 1e-9 * params.T
    if np.any(t_arr < -params.t_cpp - eps) or np.any(t_arr > params.T + eps):
        raise ValueError("t outside [-T_cpp, T]")
    M, T = params.M, params.T
    prefix = t_arr < 0
    t_eval = np.where(prefix, t_arr + T, t_arr)
    out = _kernels.chirp_sum(x, t_eval / T, float(M), params.c1, params.c2)
    phase = np.where(prefix, params.c1 * (M**2 + 2 * M**2 * t_arr / T), 0.0)
    out = out * np.exp(-2j * np.pi * phase)
    if np.ndim(t) == 0:
        return out[0]
    return out


def qam_constellation(order: int) -> np.ndarray:
    """Square QAM alphabet normalized to unit average energy."""
    if order not in QAM_ORDERS:
        raise ValueError(f"unsupported QAM order {order}; choose from {QAM_ORDERS}")
    side = int(round(np.sqrt(order)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def qam_symbols(order: int, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` symbols uniformly from the normalized ``order``-QAM alphabet.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    alphabet = qam_constellation(order)
    rng = np.random.default_rng(seed)
    return alphabet[rng.integers(0, order, size=count)]
