"""Fisher information and Cramer-Rao bounds for target positions.

The channel-parameter FIM is taken over ``rho = [theta; tau; nu]`` with the
complex gains concentrated out by projecting onto the orthogonal complement of
``D = [b(theta_i) kron H_i x]``. Position information follows from the chain
rule through the geometry Jacobian ``T = d rho^T / d eta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from aftmc.channel import channel_response
from aftmc.geometry import C0, ArrayParams, PathParams, Scene, scene_paths, steering_rx, steering_rx_derivative
from aftmc.waveform import WaveformParams, chirp_phases

DOPPLER_MODES = ("geometric", "ignore", "nuisance")
MAX_CONDITION = 1e12


@dataclass
class FimReport:
    J_rho: np.ndarray
    J_eta: np.ndarray
    crlb: np.ndarray | None
    T_jac: np.ndarray
    condition: float

    @property
    def observable(self) -> bool:
        return self.crlb is not None

    @property
    def trace(self) -> float:
        return float(np.trace(self.crlb)) if self.crlb is not None else np.inf

    def position_bounds(self) -> np.ndarray:
        """Per-target RMS position error bound in meters."""
        if self.crlb is None:
            return np.full(self.J_eta.shape[0] // 2, np.inf)
        diag = np.diag(self.crlb)
        return np.sqrt(diag[0::2] + diag[1::2])


def channel_response_derivatives(tau: float, nu: float, x, waveform: WaveformParams):
    """``H x`` and its derivatives with respect to tau and nu."""
    M, T, c1 = waveform.M, waveform.T, waveform.c1
    k = np.arange(M)
    lam2 = chirp_phases(waveform.c2, M)
    xp = np.conj(lam2) * np.asarray(x, dtype=complex)
    dd = np.exp(-2j * np.pi * k * tau / T)
    ramp = np.exp(2j * np.pi * (nu * T / M - 2 * M * c1 * tau / T) * k)
    u = np.fft.ifft(dd * xp) * np.sqrt(M)
    u_tau = np.fft.ifft(-2j * np.pi * k / T * dd * xp) * np.sqrt(M)

    def to_freq(time_samples):
        return lam2 * np.fft.fft(time_samples) / np.sqrt(M)

    g = to_freq(ramp * u)
    g_nu = to_freq(2j * np.pi * k * T / M * ramp * u)
    g_tau = to_freq(-2j * np.pi * 2 * M * c1 * k / T * ramp * u + ramp * u_tau)
    return g, g_tau, g_nu


def build_D(paths: list[PathParams], x, waveform: WaveformParams, array: ArrayParams) -> np.ndarray:
    """Columns ``b(theta_i) kron H_i x`` (M N_r x P)."""
    cols = [np.kron(steering_rx(p.theta, array), channel_response(p.tau, p.nu, x, waveform)) for p in paths]
    return np.stack(cols, axis=1)


def jacobian_E(paths: list[PathParams], x, waveform: WaveformParams, array: ArrayParams) -> np.ndarray:
    """``[dD_i/dtheta_i ..., dD_i/dtau_i ..., dD_i/dnu_i ...]`` (M N_r x 3P)."""
    d_theta, d_tau, d_nu = [], [], []
    for p in paths:
        b = steering_rx(p.theta, array)
        g, g_tau, g_nu = channel_response_derivatives(p.tau, p.nu, x, waveform)
        d_theta.append(np.kron(steering_rx_derivative(p.theta, array), g))
        d_tau.append(np.kron(b, g_tau))
        d_nu.append(np.kron(b, g_nu))
    return np.stack(d_theta + d_tau + d_nu, axis=1)


def projected_gram(E: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``E^H P_D^perp E`` without forming the projector."""
    DhD = D.conj().T @ D
    if np.linalg.cond(DhD) > MAX_CONDITION:
        raise ValueError("D is rank deficient (coincident targets)")
    DhE = D.conj().T @ E
    return E.conj().T @ E - DhE.conj().T @ np.linalg.solve(DhD, DhE)


def fim_channel(E: np.ndarray, D: np.ndarray, h, sigma2: float) -> np.ndarray:
    """``(2 / sigma2) Re{(E^H P_D^perp E) .* (h~^* h~^T)}`` with ``h~ = [h; h; h]``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    h_rep = np.tile(np.asarray(h, dtype=complex), 3)
    J = 2.0 / sigma2 * np.real(projected_gram(E, D) * np.outer(h_rep.conj(), h_rep))
    return 0.5 * (J + J.T)


def jacobian_T(scene: Scene, array: ArrayParams, doppler: str = "geometric") -> np.ndarray:
    """``d rho^T / d eta`` (2P x 3P); row pair 2i, 2i+1 holds d/dq_i.

    ``doppler="ignore"`` zeroes the Doppler block.
    """
    if doppler not in DOPPLER_MODES:
        raise ValueError(f"doppler mode must be one of {DOPPLER_MODES}")
    P = scene.P
    Tm = np.zeros((2 * P, 3 * P))
    for i, tgt in enumerate(scene.targets):
        diff = tgt.q - scene.q_bs
        R = float(np.hypot(*diff))
        if R == 0:
            raise ValueError("target at the base station")
        th = np.arctan2(diff[0], diff[1])
        u = np.array([np.sin(th), np.cos(th)])
        u_perp = np.array([np.cos(th), -np.sin(th)])
        rows = slice(2 * i, 2 * i + 2)
        Tm[rows, i] = u_perp / R
        Tm[rows, P + i] = 2.0 / C0 * u
        if doppler == "geometric":
            Tm[rows, 2 * P + i] = 2 * array.f_c / C0 * np.dot(tgt.v, u_perp) * u_perp / R
    return Tm


def _invert(J: np.ndarray):
    cond = float(np.linalg.cond(J))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        return None, cond
    inv = scipy.linalg.solve(J, np.eye(J.shape[0]), assume_a="sym")
    return 0.5 * (inv + inv.T), cond


def position_fim(J_rho: np.ndarray, T_jac: np.ndarray, doppler: str):
    """Position FIM and CRLB from the channel FIM.

    With ``doppler="nuisance"`` the Doppler shifts are kept as free parameters
    and marginalized (Schur complement) instead of being tied to position.
    """
    if doppler != "nuisance":
        J_eta = T_jac @ J_rho @ T_jac.T
        crlb, cond = _invert(J_eta)
        return J_eta, crlb, cond
    P = J_rho.shape[0] // 3
    T_ext = np.zeros((3 * P, 3 * P))
    T_ext[: 2 * P, : 2 * P] = T_jac[:, : 2 * P]
    T_ext[2 * P:, 2 * P:] = np.eye(P)
    inv_ext, cond = _invert(T_ext @ J_rho @ T_ext.T)
    if inv_ext is None:
        return T_jac @ J_rho @ T_jac.T, None, cond
    crlb = inv_ext[: 2 * P, : 2 * P]
    J_eta = np.linalg.inv(crlb)
    return 0.5 * (J_eta + J_eta.T), crlb, cond


def crlb_position(scene: Scene, x, waveform: WaveformParams, array: ArrayParams, sigma2: float,
                  doppler: str = "geometric", paths: list[PathParams] | None = None) -> FimReport:
    """Position CRLB ``[T J(rho) T^T]^{-1}`` for all targets of ``scene``.

    An ill-conditioned position FIM (condition number above 1e12) yields a
    report with ``crlb=None`` rather than an exception.
    """
    if paths is None:
        paths = scene_paths(scene, array, waveform)
    D = build_D(paths, x, waveform, array)
    E = jacobian_E(paths, x, waveform, array)
    J_rho = fim_channel(E, D, [p.h for p in paths], sigma2)
    T_jac = jacobian_T(scene, array, doppler)
    J_eta, crlb, cond = position_fim(J_rho, T_jac, doppler)
    return FimReport(J_rho=J_rho, J_eta=J_eta, crlb=crlb, T_jac=T_jac, condition=cond)


class C2Objective:
    """Batched ``trace CRLB(c2)`` for a fixed scene and symbol vector.

    The outer ``Lambda_c2`` of every ``H_i`` is a common unitary factor and drops
    out of all inner products, so only ``x' = Lambda_c2^H x`` varies with c2.
    Inner products of Kronecker columns factor into an array part and a
    subcarrier part, which keeps each evaluation at O(P^2 M).

    With ``relative_noise=True`` the noise variance at each c2 is
    ``sigma2 * mean |Y_noiseless(c2)|^2``, i.e. ``sigma2`` plays the role of
    ``10^(-snr/10)``. Received power moves with c2 when echoes overlap, so this
    is the form that matches a fixed-SNR experiment.
    """

    def __init__(self, scene: Scene, x, waveform: WaveformParams, array: ArrayParams, sigma2: float,
                 doppler: str = "geometric", relative_noise: bool = False):
        self.waveform = waveform
        self.sigma2 = sigma2
        self.doppler = doppler
        self.relative_noise = relative_noise
        self.n_samples = waveform.M * array.N_r
        self.x = np.asarray(x, dtype=complex)
        paths = scene_paths(scene, array, waveform)
        P = len(paths)
        self.P = P
        self.h = np.array([p.h for p in paths])
        self.T_jac = jacobian_T(scene, array, doppler)
        M = waveform.M
        eye = np.eye(M)
        flat = waveform.replace(c2=0.0)
        ops = np.zeros((3 * P, M, M), dtype=complex)
        for i, p in enumerate(paths):
            # columns are responses to unit vectors: the operators G, G_tau, G_nu
            g, g_tau, g_nu = zip(*(channel_response_derivatives(p.tau, p.nu, e, flat) for e in eye))
            ops[i] = np.array(g).T
            ops[P + i] = np.array(g_tau).T
            ops[2 * P + i] = np.array(g_nu).T
        self.ops = ops.reshape(3 * P * M, M)
        arr = [steering_rx(p.theta, array) for p in paths] + [steering_rx_derivative(p.theta, array) for p in paths]
        arr = np.array(arr)
        self.arr_gram = arr.conj() @ arr.T
        # full column list: D_i, E_theta_i, E_tau_i, E_nu_i -> (array index, operator index)
        idx = np.arange(P)
        self.arr_idx = np.concatenate([idx, P + idx, idx, idx])
        self.vec_idx = np.concatenate([idx, idx, P + idx, 2 * P + idx])

    def __call__(self, c2_values, chunk: int = 1024) -> np.ndarray:
        c2_values = np.atleast_1d(np.asarray(c2_values, dtype=float))
        out = np.empty(c2_values.shape[0])
        for start in range(0, c2_values.shape[0], chunk):
            sl = slice(start, start + chunk)
            out[sl] = self._traces(c2_values[sl])
        return out

    def _traces(self, c2s: np.ndarray) -> np.ndarray:
        M, P = self.waveform.M, self.P
        m = np.arange(M)
        Xp = np.exp(2j * np.pi * np.outer(m**2, c2s)) * self.x[:, None]
        V = (self.ops @ Xp).reshape(3 * P, M, -1)
        vec_gram = np.einsum("kmb,lmb->bkl", V.conj(), V)
        ai, vi = self.arr_idx, self.vec_idx
        G = self.arr_gram[np.ix_(ai, ai)][None] * vec_gram[:, vi][:, :, vi]
        G_DD, G_DE, G_EE = G[:, :P, :P], G[:, :P, P:], G[:, P:, P:]
        S = G_EE - np.conj(np.swapaxes(G_DE, 1, 2)) @ np.linalg.solve(G_DD, G_DE)
        sigma2 = np.full(len(c2s), self.sigma2)
        if self.relative_noise:
            power = np.real(np.einsum("k,bkl,l->b", self.h.conj(), G_DD, self.h)) / self.n_samples
            sigma2 = sigma2 * power
        h_rep = np.tile(self.h, 3)
        J = 2.0 / sigma2[:, None, None] * np.real(S * np.outer(h_rep.conj(), h_rep)[None])
        traces = np.empty(len(c2s))
        for b in range(len(c2s)):
            _, crlb, _ = position_fim(J[b], self.T_jac, self.doppler)
            traces[b] = np.inf if crlb is None else np.trace(crlb)
        return traces


@dataclass
class C2Result:
    c2: float
    trace: float
    trace_at_zero: float
    evaluations: int
    budget_exhausted: bool


def optimize_c2(scene: Scene, x, waveform: WaveformParams, array: ArrayParams, sigma2: float,
                budget: int | None = None, c2_range=(0.0, 1.0), resolution: float | None = None,
                doppler: str = "geometric", relative_noise: bool = False) -> C2Result:
    """Minimize trace CRLB over c2 with a coarse grid plus a bounded Brent polish.

    The grid starts at ``c2_range[0]`` so the baseline is always evaluated.
    ``budget`` caps objective evaluations; when it runs out the best point so
    far is returned with ``budget_exhausted=True``. ``relative_noise`` is
    passed to :class:`C2Objective`.
    """
    lo, hi = c2_range
    if resolution is None:
        resolution = 1.0 / (2 * waveform.M**2)
    grid = lo + resolution * np.arange(int(np.ceil((hi - lo) / resolution)))
    if budget is None:
        budget = grid.size + 200
    objective = C2Objective(scene, x, waveform, array, sigma2, doppler, relative_noise)
    exhausted = grid.size > budget
    grid = grid[:budget]
    values = objective(grid)
    evals = grid.size
    baseline = float(objective(np.array([0.0]))[0]) if lo != 0.0 else float(values[0])
    best = int(np.argmin(values))
    c2_best, f_best = float(grid[best]), float(values[best])
    remaining = budget - evals
    if remaining > 0 and np.isfinite(f_best):
        res = minimize_scalar(lambda c: float(objective(np.array([c]))[0]),
                              bounds=(c2_best - resolution, c2_best + resolution), method="bounded",
                              options={"maxiter": remaining, "xatol": 1e-12})
        evals += int(res.nfev)
        if res.fun < f_best:
            c2_best, f_best = float(res.x), float(res.fun)
        if not res.success:
            exhausted = True
    elif remaining <= 0:
        exhausted = True
    return C2Result(c2=c2_best, trace=f_best, trace_at_zero=baseline, evaluations=evals, budget_exhausted=exhausted)
