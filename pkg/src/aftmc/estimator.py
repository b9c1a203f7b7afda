"""Two-step channel-parameter estimation.

Step 1 finds the angles with spatially smoothed MUSIC. Step 2 runs, per target
and with the other targets' reconstructed echoes subtracted, a delay/Doppler
matched-filter search followed by a least-squares gain. Step 2 is repeated for
a fixed number of outer passes so each target sees a cleaner residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from aftmc import _kernels
from aftmc.channel import channel_response
from aftmc.geometry import ArrayParams, PathParams, steering_rx
from aftmc.waveform import WaveformParams, chirp_phases

log = logging.getLogger(__name__)


class DegenerateSpectrumError(RuntimeError):
    """MUSIC spectrum has fewer local maxima than targets."""


@dataclass(frozen=True)
class MusicConfig:
    K: int = 4
    grid_deg: float = 0.1
    fb_averaging: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.grid_deg > 0:
            raise ValueError("grid_deg must be positive")


@dataclass(frozen=True)
class DdSearchConfig:
    """Delay/Doppler search settings.

    ``nu_max=None`` means three subcarrier spacings. ``refine_tol`` is measured
    in samples for delay and in DFT bins for the time-domain phase slope.
    """

    tau_oversample: int = 4
    nu_oversample: int = 4
    nu_max: float | None = None
    outer_iterations: int = 3
    refine_tol: float = 1e-6
    refine_max_steps: int = 30
    residual_tol: float = 1e-6

    def __post_init__(self):
        if self.tau_oversample < 1 or self.nu_oversample < 1:
            raise ValueError("oversample factors must be >= 1")
        if self.nu_max is not None and not self.nu_max > 0:
            raise ValueError("nu_max must be positive")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")

    def doppler_limit(self, waveform: WaveformParams) -> float:
        return 3.0 * waveform.delta_f if self.nu_max is None else self.nu_max


@dataclass
class EstimationResult:
    paths_hat: list[PathParams]
    angles: np.ndarray
    spectrum: np.ndarray
    residual_energy: float
    residual_history: list[float] = field(default_factory=list)


# --- angle of arrival ---------------------------------------------------------

def spatial_smooth_covariance(Y: np.ndarray, K: int, P: int | None = None, fb_averaging: bool = False) -> np.ndarray:
    """Average of the K overlapping subarray covariances ``Y_k^H Y_k / M``.

    Subarray k covers antenna columns ``[k, k + N_r - K + 1)``.
    """
    Y = np.asarray(Y)
    M, n_r = Y.shape
    L_sub = n_r - K + 1
    if K < 1 or L_sub < 1:
        raise ValueError(f"K={K} invalid for {n_r} antennas")
    if P is not None and L_sub <= P:
        raise ValueError(f"subarray length {L_sub} must exceed the number of targets {P}")
    R = np.zeros((L_sub, L_sub), dtype=complex)
    for k in range(K):
        Yk = Y[:, k:k + L_sub]
        R += Yk.conj().T @ Yk
    R /= K * M
    if fb_averaging:
        J = np.eye(L_sub)[::-1]
        R = 0.5 * (R + J @ R.conj() @ J)
    return 0.5 * (R + R.conj().T)


def angle_grid(grid_deg: float) -> np.ndarray:
    n = int(round(180.0 / grid_deg))
    return np.deg2rad(np.linspace(-90.0, 90.0, n + 1))


def noise_subspace(R_ss: np.ndarray, P: int) -> np.ndarray:
    if not np.all(np.isfinite(R_ss)):
        raise np.linalg.LinAlgError("covariance has non-finite entries")
    _, vecs = np.linalg.eigh(R_ss)
    return vecs[:, : R_ss.shape[0] - P]


def music_spectrum(R_ss: np.ndarray, P: int, config: MusicConfig, array: ArrayParams):
    """MUSIC pseudo-spectrum ``1 / (b^T U_n U_n^H b*)`` over [-90, 90] degrees.

    Returns ``(angles_rad, values)``.
    """
    angles = angle_grid(config.grid_deg)
    Un = noise_subspace(R_ss, P)
    return angles, _kernels.music_scan(angles, Un, array.kd)


def _local_maxima(values: np.ndarray) -> list[int]:
    # leftmost index of a plateau counts; plateaus that rise again do not
    peaks = []
    n = len(values)
    i = 1
    while i < n - 1:
        if values[i] > values[i - 1]:
            j = i + 1
            while j < n and values[j] == values[i]:
                j += 1
            if j < n and values[j] < values[i]:
                peaks.append(i)
            i = j
        else:
            i += 1
    return peaks


def parabolic_offset(y_left: float, y_mid: float, y_right: float) -> float:
    """Vertex offset, in grid steps, of the parabola through three samples."""
    denom = y_left - 2 * y_mid + y_right
    if denom == 0:
        return 0.0
    return float(np.clip(0.5 * (y_left - y_right) / denom, -0.5, 0.5))


def pick_peaks(angles: np.ndarray, values: np.ndarray, P: int):
    """The P largest local maxima, parabolically refined, sorted ascending.

    Returns ``(peaks, degenerate)``; ``degenerate`` is True when fewer than P
    maxima exist, in which case all available peaks are returned.
    """
    angles = np.asarray(angles, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = _local_maxima(values)
    idx = sorted(idx, key=lambda i: (-values[i], i))[:P]
    step = angles[1] - angles[0]
    peaks = [angles[i] + step * parabolic_offset(values[i - 1], values[i], values[i + 1]) for i in idx]
    return np.sort(np.array(peaks, dtype=float)), len(idx) < P


# --- delay / Doppler ----------------------------------------------------------

def _as_matrix(y, waveform: WaveformParams, array: ArrayParams) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2:
        return y
    if y.shape[0] != waveform.M * array.N_r:
        raise ValueError(f"stacked vector has length {y.shape[0]}, expected {waveform.M * array.N_r}")
    # vec() stacks columns
    return y.reshape(array.N_r, waveform.M).T


def aml_objective(tau: float, nu: float, theta_hat: float, y, x, waveform: WaveformParams, array: ArrayParams) -> float:
    """``|D^H y|^2 / ||D||^2`` with ``D = b(theta_hat) kron H(tau, nu) x``."""
    Y = _as_matrix(y, waveform, array)
    D = np.kron(steering_rx(theta_hat, array), channel_response(tau, nu, x, waveform))
    y_vec = Y.T.reshape(-1)
    return float(np.abs(np.vdot(D, y_vec)) ** 2 / np.vdot(D, D).real)


class DelayDopplerSearch:
    """Matched-filter search for one target at a fixed angle.

    The correlation ``D^H y`` collapses to ``(H x)^H z`` with ``z = Y conj(b)``,
    and ``H`` depends on (tau, nu) only through the subcarrier ramp ``tau / T``
    and the net time-domain slope ``omega = nu T / M - 2 M c1 tau / T``.
    Refinement runs in (tau, omega), where the two coordinates are nearly
    decoupled even for steep chirps.
    """

    def __init__(self, Y: np.ndarray, theta_hat: float, x, waveform: WaveformParams, array: ArrayParams):
        self.waveform = waveform
        M = waveform.M
        b = steering_rx(theta_hat, array)
        self.b = b
        z = np.asarray(Y) @ np.conj(b)
        lam2c = np.conj(chirp_phases(waveform.c2, M))
        x = np.asarray(x, dtype=complex)
        self.xp = np.ascontiguousarray(lam2c * x)
        self.v = np.ascontiguousarray(np.fft.ifft(lam2c * z) * np.sqrt(M))
        self.norm2 = float(np.vdot(b, b).real * np.vdot(x, x).real)

    def omega(self, tau: float, nu: float) -> float:
        M, T = self.waveform.M, self.waveform.T
        return nu * T / M - 2 * M * self.waveform.c1 * tau / T

    def nu_from(self, tau: float, omega: float) -> float:
        M, T = self.waveform.M, self.waveform.T
        return (omega + 2 * M * self.waveform.c1 * tau / T) * M / T

    def correlation(self, tau: float, nu: float) -> complex:
        return complex(_kernels.aml_point(self.xp, self.v, tau / self.waveform.T, self.omega(tau, nu)))

    def objective(self, tau: float, nu: float) -> float:
        return abs(self.correlation(tau, nu)) ** 2 / self.norm2

    def gain(self, tau: float, nu: float) -> complex:
        return self.correlation(tau, nu) / self.norm2

    def grid(self, config: DdSearchConfig):
        """Objective on the (tau, nu) grid. Returns ``(taus, nus, values)``."""
        wf = self.waveform
        M, T = wf.M, wf.T
        taus = np.arange(wf.L * config.tau_oversample) * T / (M * config.tau_oversample)
        n_fft = M * config.nu_oversample
        k_max = int(np.floor(config.doppler_limit(wf) * T * config.nu_oversample))
        if k_max >= n_fft // 2:
            raise ValueError("Doppler range exceeds the unambiguous span of the grid")
        ks = np.arange(-k_max, k_max + 1)
        nus = ks / (T * config.nu_oversample)
        if taus.size == 0 or nus.size == 0:
            raise ValueError("empty delay/Doppler grid")
        n = np.arange(M)
        m = np.arange(M)
        d = np.exp(-2j * np.pi * np.outer(taus / T, m))
        u = np.fft.ifft(d * self.xp[None, :], axis=1) * np.sqrt(M)
        chirp = np.exp(2j * np.pi * 2 * M * wf.c1 * np.outer(taus / T, n))
        g = np.conj(u) * self.v[None, :] * chirp
        spec = np.fft.fft(g, n=n_fft, axis=1)[:, ks % n_fft]
        return taus, nus, np.abs(spec) ** 2 / self.norm2

    def refine(self, tau0: float, nu0: float, config: DdSearchConfig):
        wf = self.waveform
        Ts = wf.sample_period
        a = tau0 / Ts
        w = self.omega(tau0, nu0) * wf.M
        half = [1.0 / config.tau_oversample, 1.0 / config.nu_oversample]
        a_max = wf.L

        def f(a_, w_):
            tau = a_ * Ts
            return -abs(_kernels.aml_point(self.xp, self.v, tau / wf.T, w_ / wf.M)) ** 2

        for _ in range(config.refine_max_steps):
            lo, hi = max(a - half[0], 0.0), min(a + half[0], a_max)
            a_new = minimize_scalar(lambda s: f(s, w), bounds=(lo, hi), method="bounded",
                                    options={"xatol": config.refine_tol * 0.1}).x
            w_new = minimize_scalar(lambda s: f(a_new, s), bounds=(w - half[1], w + half[1]), method="bounded",
                                    options={"xatol": config.refine_tol * 0.1}).x
            da, dw = abs(a_new - a), abs(w_new - w)
            a, w = a_new, w_new
            if max(da, dw) < config.refine_tol:
                break
            half = [min(half[0], max(4 * da, 1e-4)), min(half[1], max(4 * dw, 1e-4))]
        tau = a * Ts
        return tau, self.nu_from(tau, w / wf.M)


def estimate_delay_doppler(theta_hat: float, y, x, waveform: WaveformParams, array: ArrayParams,
                           config: DdSearchConfig = DdSearchConfig()):
    """Maximize the matched-filter objective: coarse grid, then local refinement."""
    search = DelayDopplerSearch(_as_matrix(y, waveform, array), theta_hat, x, waveform, array)
    return _search(search, config)


def _search(search: DelayDopplerSearch, config: DdSearchConfig):
    taus, nus, values = search.grid(config)
    i, k = np.unravel_index(np.argmax(values), values.shape)
    return search.refine(taus[i], nus[k], config)


def estimate_gain(theta_hat: float, tau_hat: float, nu_hat: float, y, x, waveform: WaveformParams,
                  array: ArrayParams) -> complex:
    """Least-squares gain ``(D^H D)^{-1} D^H y`` for a single column D."""
    Y = _as_matrix(y, waveform, array)
    D = np.kron(steering_rx(theta_hat, array), channel_response(tau_hat, nu_hat, x, waveform))
    dd = np.vdot(D, D).real
    if dd == 0:
        raise ValueError("D is identically zero")
    return complex(np.vdot(D, Y.T.reshape(-1)) / dd)


# --- full algorithm -----------------------------------------------------------

def estimate_all(Y: np.ndarray, x, P: int, waveform: WaveformParams, array: ArrayParams,
                 music: MusicConfig = MusicConfig(), ddsearch: DdSearchConfig = DdSearchConfig()) -> EstimationResult:
    """Angles by smoothed MUSIC, then iterative interference-cancelling
    delay/Doppler/gain estimation.

    Targets are processed strongest first (beamformed energy at the MUSIC
    angle); results are reported in ascending angle order.
    """
    Y = np.asarray(Y)
    x = np.asarray(x, dtype=complex)
    R_ss = spatial_smooth_covariance(Y, music.K, P, music.fb_averaging)
    angles, spectrum = music_spectrum(R_ss, P, music, array)
    with np.errstate(divide="ignore"):
        theta_hat, degenerate = pick_peaks(angles, 10 * np.log10(spectrum), P)
    if degenerate:
        raise DegenerateSpectrumError(f"found {len(theta_hat)} spectrum peaks for {P} targets")

    b_hat = [steering_rx(th, array) for th in theta_hat]
    order = np.argsort([-np.linalg.norm(Y @ np.conj(b)) for b in b_hat], kind="stable")
    h = np.zeros(P, dtype=complex)
    tau = np.zeros(P)
    nu = np.zeros(P)
    echoes = np.zeros((P,) + Y.shape, dtype=complex)
    history = []
    for it in range(ddsearch.outer_iterations):
        for i in order:
            residual = Y - (echoes.sum(axis=0) - echoes[i])
            search = DelayDopplerSearch(residual, theta_hat[i], x, waveform, array)
            tau[i], nu[i] = _search(search, ddsearch)
            h[i] = search.gain(tau[i], nu[i])
            echoes[i] = h[i] * np.outer(channel_response(tau[i], nu[i], x, waveform), b_hat[i])
        history.append(float(np.linalg.norm(Y - echoes.sum(axis=0)) ** 2))
        if it > 0 and abs(history[-2] - history[-1]) <= ddsearch.residual_tol * history[-2]:
            break
    paths = [PathParams(h=h[i], theta=float(theta_hat[i]), tau=float(tau[i]), nu=float(nu[i])) for i in range(P)]
    return EstimationResult(paths_hat=paths, angles=angles, spectrum=spectrum,
                            residual_energy=history[-1], residual_history=history)
