"""Scene geometry, array steering, and target <-> channel-parameter mapping.

Angles are measured from array boresight (+y axis), so a target at angle
``theta`` and range ``r`` sits at ``q_bs + r (sin theta, cos theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aftmc.waveform import WaveformParams

C0 = 299_792_458.0


@dataclass(frozen=True)
class ArrayParams:
    N_t: int = 16
    N_r: int = 16
    f_c: float = 60e9
    d: float | None = None
    p: float = 1.0

    def __post_init__(self):
        if self.N_t < 1 or self.N_r < 1:
            raise ValueError("antenna counts must be positive")
        if not self.f_c > 0:
            raise ValueError("carrier frequency must be positive")
        if self.d is None:
            object.__setattr__(self, "d", self.wavelength / 2)

    @property
    def wavelength(self) -> float:
        return C0 / self.f_c

    @property
    def kd(self) -> float:
        """Phase step per element per unit sin(theta)."""
        return 2 * np.pi * self.d / self.wavelength


@dataclass
class Target:
    q: np.ndarray
    v: np.ndarray
    beta: complex = 1.0 + 0.0j

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)


@dataclass(frozen=True)
class PathParams:
    h: complex
    theta: float
    tau: float
    nu: float


@dataclass
class Scene:
    targets: list[Target]
    q_bs: np.ndarray = field(default_factory=lambda: np.zeros(2))
    beam_direction: float | None = None

    def __post_init__(self):
        self.q_bs = np.asarray(self.q_bs, dtype=float)
        if not self.targets:
            raise ValueError("scene needs at least one target")
        for tgt in self.targets:
            if np.allclose(tgt.q, self.q_bs):
                raise ValueError("target coincides with the base station")
        if self.beam_direction is None:
            self.beam_direction = default_beam_direction(self.true_angles())

    @property
    def P(self) -> int:
        return len(self.targets)

    def true_angles(self) -> np.ndarray:
        return np.array([target_angle(t.q, self.q_bs) for t in self.targets])

    def with_betas(self, betas) -> "Scene":
        targets = [Target(t.q, t.v, complex(b)) for t, b in zip(self.targets, betas)]
        return Scene(targets, self.q_bs, self.beam_direction)


def default_beam_direction(angles) -> float:
    """Beam pointed at the midpoint of the targets in sin(theta).

    A ULA's array factor depends on ``sin(theta_tilde) - sin(theta)``, so this
    direction gives every target of a two-target scene the same TX gain.
    """
    return float(np.arcsin(np.mean(np.sin(np.asarray(angles, dtype=float)))))


def target_angle(q, q_bs) -> float:
    dx, dy = np.asarray(q, dtype=float) - np.asarray(q_bs, dtype=float)
    return float(np.arctan2(dx, dy))


def steering_vector(theta: float, n: int, kd: float) -> np.ndarray:
    return np.exp(-1j * kd * np.arange(n) * np.sin(theta))


def steering_rx(theta: float, params: ArrayParams) -> np.ndarray:
    """RX steering ``b(theta)`` with ``b[k] = exp(-j 2 pi d k sin(theta) / lambda)``."""
    return steering_vector(theta, params.N_r, params.kd)


def steering_tx(theta: float, params: ArrayParams) -> np.ndarray:
    return steering_vector(theta, params.N_t, params.kd)


def steering_rx_derivative(theta: float, params: ArrayParams) -> np.ndarray:
    k = np.arange(params.N_r)
    return -1j * params.kd * k * np.cos(theta) * steering_rx(theta, params)


def beamformer(theta_tilde: float, params: ArrayParams) -> np.ndarray:
    """``f_T = sqrt(p / N_t) a(theta_tilde)``; ``||f_T||^2 = p``."""
    return np.sqrt(params.p / params.N_t) * steering_tx(theta_tilde, params)


def tx_gain(theta: float, theta_tilde: float, params: ArrayParams) -> complex:
    """``a^H(theta) f_T``: the TX array gain seen by a target at ``theta``."""
    return complex(np.vdot(steering_tx(theta, params), beamformer(theta_tilde, params)))


def radial_doppler(v, theta: float, f_c: float) -> float:
    """Round-trip Doppler; positive for a receding target."""
    u = np.array([np.sin(theta), np.cos(theta)])
    return float(2 * f_c / C0 * np.dot(np.asarray(v, dtype=float), u))


def target_kinematics(target: Target, scene: Scene, array: ArrayParams):
    """Physical echo parameters ``(alpha, theta, tau, nu)`` of one target.

    ``alpha = beta a^H(theta) f_T`` excludes the chirp delay phase.
    """
    diff = target.q - scene.q_bs
    rng = float(np.hypot(*diff))
    theta = float(np.arctan2(diff[0], diff[1]))
    tau = 2 * rng / C0
    nu = radial_doppler(target.v, theta, array.f_c)
    alpha = complex(target.beta) * tx_gain(theta, scene.beam_direction, array)
    return alpha, theta, tau, nu


def chirp_delay_gain(tau: float, waveform: WaveformParams) -> complex:
    """``gamma = exp(j 2 pi c1 M^2 tau^2 / T^2)``."""
    return complex(np.exp(2j * np.pi * waveform.c1 * waveform.M**2 * tau**2 / waveform.T**2))


def target_to_path(target: Target, scene: Scene, array: ArrayParams, waveform: WaveformParams) -> PathParams:
    alpha, theta, tau, nu = target_kinematics(target, scene, array)
    if tau >= waveform.t_cpp:
        max_range = C0 * waveform.t_cpp / 2
        raise ValueError(f"target at {C0 * tau / 2:.1f} m is beyond the unambiguous range {max_range:.1f} m")
    return PathParams(h=alpha * chirp_delay_gain(tau, waveform), theta=theta, tau=tau, nu=nu)


def scene_paths(scene: Scene, array: ArrayParams, waveform: WaveformParams) -> list[PathParams]:
    return [target_to_path(t, scene, array, waveform) for t in scene.targets]


def path_to_position(theta: float, tau: float, q_bs=(0.0, 0.0)) -> np.ndarray:
    r = C0 * tau / 2
    return np.asarray(q_bs, dtype=float) + r * np.array([np.sin(theta), np.cos(theta)])


def polar_target(range_m: float, angle_deg: float, radial_speed: float = 0.0,
                 beta: complex = 1.0, q_bs=(0.0, 0.0)) -> Target:
    """Target at (range, angle) moving purely radially (positive speed recedes)."""
    th = np.deg2rad(angle_deg)
    u = np.array([np.sin(th), np.cos(th)])
    return Target(q=np.asarray(q_bs, dtype=float) + range_m * u, v=radial_speed * u, beta=beta)


def reference_scene(beam_direction: float | None = None) -> Scene:
    """Two reference targets: (50 m, 50 m/s, 30 deg) and (100 m, 100 m/s, 50 deg)."""
    targets = [polar_target(50.0, 30.0, 50.0), polar_target(100.0, 50.0, 100.0)]
    return Scene(targets, beam_direction=beam_direction)
