"""Received-signal synthesis for the mono-static MIMO delay/Doppler channel.

Two independent routes produce the demodulated signal ``Y`` (M x N_r):

* ``synthesize_matrix_model`` uses the closed-form per-path subcarrier channel
  ``H = Lambda_c2 F Delta(nu) c(tau) F^H d(tau) Lambda_c2^H``.
* ``synthesize_oracle`` samples the continuous-time echo directly and then
  demodulates, using nothing but ``continuous_signal`` and scalar phases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aftmc.geometry import ArrayParams, PathParams, Scene, steering_rx, target_kinematics, scene_paths
from aftmc.waveform import WaveformParams, chirp_phases, continuous_signal, daft_matrix, dft_matrix


@dataclass
class ReceivedSignal:
    Y: np.ndarray
    R: np.ndarray | None = None
    sigma2: float = 0.0


def _check_delay(tau: float, waveform: WaveformParams):
    if tau < 0 or (tau > 0 and tau >= waveform.t_cpp):
        raise ValueError(f"delay {tau:.4g} s outside [0, T_cpp={waveform.t_cpp:.4g} s)")


def delay_operators(tau: float, waveform: WaveformParams):
    """Diagonals of ``c(tau)``, ``d(tau)`` and the scalar ``gamma``.

    ``c[n] = exp(-j 2 pi 2 M c1 tau n / T)`` (time-domain chirp shift),
    ``d[m] = exp(-j 2 pi m tau / T)`` (subcarrier phase ramp).
    """
    _check_delay(tau, waveform)
    M, T, c1 = waveform.M, waveform.T, waveform.c1
    k = np.arange(M)
    c_diag = np.exp(-2j * np.pi * 2 * M * c1 * tau * k / T)
    d_diag = np.exp(-2j * np.pi * k * tau / T)
    gamma = complex(np.exp(2j * np.pi * c1 * M**2 * tau**2 / T**2))
    return c_diag, d_diag, gamma


def doppler_matrix(nu: float, waveform: WaveformParams) -> np.ndarray:
    """Diagonal of ``Delta(nu)``: ``exp(j 2 pi nu n T / M)``, frame start at t = 0."""
    n = np.arange(waveform.M)
    return np.exp(2j * np.pi * nu * n * waveform.sample_period)


def time_ramp(tau: float, nu: float, waveform: WaveformParams) -> float:
    """Net time-domain phase slope of ``Delta(nu) c(tau)`` in cycles per sample."""
    M, T = waveform.M, waveform.T
    return nu * T / M - 2 * M * waveform.c1 * tau / T


def subcarrier_channel(tau: float, nu: float, waveform: WaveformParams) -> np.ndarray:
    c_diag, d_diag, _ = delay_operators(tau, waveform)
    lam2 = chirp_phases(waveform.c2, waveform.M)
    F = dft_matrix(waveform.M)
    inner = (F * (doppler_matrix(nu, waveform) * c_diag)[None, :]) @ F.conj().T
    return lam2[:, None] * inner * (d_diag * np.conj(lam2))[None, :]


def apply_channel(tau: float, nu: float, x: np.ndarray, waveform: WaveformParams) -> np.ndarray:
    """``H(tau, nu) x`` via FFTs."""
    _check_delay(tau, waveform)
    return channel_response(tau, nu, x, waveform)


def channel_response(tau: float, nu: float, x: np.ndarray, waveform: WaveformParams) -> np.ndarray:
    """``H(tau, nu) x`` without the delay-range check (the model is analytic in tau)."""
    M = waveform.M
    d_diag = np.exp(-2j * np.pi * np.arange(M) * tau / waveform.T)
    lam2 = chirp_phases(waveform.c2, M)
    u = np.fft.ifft(d_diag * np.conj(lam2) * x)
    ramp = np.exp(2j * np.pi * time_ramp(tau, nu, waveform) * np.arange(M))
    return lam2 * np.fft.fft(ramp * u)


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian, variance ``sigma2`` per element."""
    scale = np.sqrt(sigma2 / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def noiseless_matrix_model(x, paths, waveform: WaveformParams, array: ArrayParams) -> np.ndarray:
    Y = np.zeros((waveform.M, array.N_r), dtype=complex)
    for p in paths:
        Y += p.h * np.outer(apply_channel(p.tau, p.nu, x, waveform), steering_rx(p.theta, array))
    return Y


def synthesize_matrix_model(x, paths: list[PathParams], waveform: WaveformParams, array: ArrayParams,
                            sigma2: float = 0.0, seed=None, keep_time_domain: bool = False) -> ReceivedSignal:
    """``Y = sum_i h_i H_i x b^T(theta_i) + W``; noise drawn in the demodulated domain."""
    if not paths:
        raise ValueError("need at least one path")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    x = np.asarray(x, dtype=complex)
    Y = noiseless_matrix_model(x, paths, waveform, array)
    if sigma2 > 0:
        Y = Y + complex_noise(Y.shape, sigma2, np.random.default_rng(seed))
    R = daft_matrix(waveform).conj().T @ Y if keep_time_domain else None
    return ReceivedSignal(Y=Y, R=R, sigma2=sigma2)


def synthesize_oracle(x, scene: Scene, waveform: WaveformParams, array: ArrayParams,
                      sigma2: float = 0.0, seed=None) -> ReceivedSignal:
    """Sample ``r(t) = sum_i alpha_i b(theta_i) s_cpp(t - tau_i) exp(j 2 pi nu_i t)``
    at ``t = n T / M`` and demodulate with the explicit DAFT matrix.
    """
    x = np.asarray(x, dtype=complex)
    t = np.arange(waveform.M) * waveform.sample_period
    R = np.zeros((waveform.M, array.N_r), dtype=complex)
    for target in scene.targets:
        alpha, theta, tau, nu = target_kinematics(target, scene, array)
        _check_delay(tau, waveform)
        echo = alpha * continuous_signal(x, waveform, t - tau) * np.exp(2j * np.pi * nu * t)
        R += np.outer(echo, steering_rx(theta, array))
    if sigma2 > 0:
        R = R + complex_noise(R.shape, sigma2, np.random.default_rng(seed))
    Y = daft_matrix(waveform) @ R
    return ReceivedSignal(Y=Y, R=R, sigma2=sigma2)


def snr_to_sigma2(snr_db: float, noiseless_Y: np.ndarray) -> float:
    """Per-sample noise variance giving ``snr_db`` against the mean received power."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    Y = np.asarray(noiseless_Y)
    if Y.size == 0:
        raise ValueError("empty signal")
    return float(np.mean(np.abs(Y) ** 2) / 10 ** (snr_db / 10))


def scene_signal(x, scene: Scene, waveform: WaveformParams, array: ArrayParams, snr_db: float | None, seed=None):
    """Convenience: paths from the scene, noise set by SNR. Returns (ReceivedSignal, paths)."""
    paths = scene_paths(scene, array, waveform)
    clean = noiseless_matrix_model(x, paths, waveform, array)
    if snr_db is None:
        return ReceivedSignal(Y=clean), paths
    sigma2 = snr_to_sigma2(snr_db, clean)
    Y = clean + complex_noise(clean.shape, sigma2, np.random.default_rng(seed))
    return ReceivedSignal(Y=Y, sigma2=sigma2), paths
