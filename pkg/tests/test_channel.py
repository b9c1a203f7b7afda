import numpy as np
import pytest

from aftmc.channel import (
    apply_channel,
    complex_noise,
    delay_operators,
    doppler_matrix,
    noiseless_matrix_model,
    snr_to_sigma2,
    subcarrier_channel,
    synthesize_matrix_model,
    synthesize_oracle,
)
from aftmc.geometry import C0, ArrayParams, Scene, polar_target, scene_paths
from aftmc.waveform import WaveformParams, chirp_phases, continuous_signal, daft_matrix, demodulate, qam_symbols

ARRAY = ArrayParams()


def target_for(tau, nu, angle_deg, array=ARRAY):
    return polar_target(C0 * tau / 2, angle_deg, nu * C0 / (2 * array.f_c))


def random_scene(rng, wf, n_targets):
    targets = []
    for _ in range(n_targets):
        tau = rng.uniform(0.02, 0.95) * wf.t_cpp
        nu = rng.uniform(-2, 2) * wf.delta_f
        targets.append(target_for(tau, nu, rng.uniform(-60, 60)))
    return Scene(targets)


def relative_error(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_subcarrier_channel_identity_at_zero():
    wf = WaveformParams(M=64, c1=0.03, c2=0.2)
    np.testing.assert_allclose(subcarrier_channel(0.0, 0.0, wf), np.eye(64), atol=1e-12)


def test_subcarrier_channel_integer_delay_ofdm_is_diagonal():
    wf = WaveformParams(M=64)
    tau = 3 * wf.sample_period
    H = subcarrier_channel(tau, 0.0, wf)
    np.testing.assert_allclose(H, np.diag(np.exp(-2j * np.pi * np.arange(64) * 3 / 64)), atol=1e-12)


def test_subcarrier_channel_is_unitary():
    wf = WaveformParams(M=32, c1=0.05, c2=0.3, L=8)
    H = subcarrier_channel(0.37 * wf.sample_period, 7e3, wf)
    np.testing.assert_allclose(H.conj().T @ H, np.eye(32), atol=1e-12)


def test_apply_channel_matches_explicit_matrix():
    wf = WaveformParams(M=64, c1=0.08, c2=0.41)
    x = qam_symbols(16, 64, seed=9)
    tau, nu = 5.3 * wf.sample_period, 26e3
    np.testing.assert_allclose(apply_channel(tau, nu, x, wf), subcarrier_channel(tau, nu, wf) @ x, atol=1e-12)


def test_delay_outside_prefix_rejected():
    wf = WaveformParams(M=64, L=16)
    with pytest.raises(ValueError):
        delay_operators(wf.t_cpp, wf)
    with pytest.raises(ValueError):
        delay_operators(-1e-9, wf)


def test_delay_operators_reproduce_shifted_signal():
    # gamma c(tau) F^H d(tau) x' with the chirp phases applied is s(nT/M - tau)
    wf = WaveformParams(M=64, L=16, c1=0.03, c2=0.17)
    x = qam_symbols(16, 64, seed=4)
    tau = 2.6 * wf.sample_period
    c_diag, d_diag, gamma = delay_operators(tau, wf)
    lam1 = chirp_phases(wf.c1, 64)
    lam2 = chirp_phases(wf.c2, 64)
    u = np.fft.ifft(d_diag * np.conj(lam2) * x) * np.sqrt(64)
    shifted = gamma * np.conj(lam1) * c_diag * u
    t = np.arange(64) * wf.sample_period
    np.testing.assert_allclose(shifted, continuous_signal(x, wf, t - tau), atol=1e-10)


def test_doppler_matrix_reference_phase():
    wf = WaveformParams()
    delta = doppler_matrix(20.0138e3, wf)
    assert delta[0] == 1
    assert np.angle(delta[1]) == pytest.approx(0.1310, abs=1e-4)
    np.testing.assert_allclose(np.abs(delta), 1.0)


def test_oracle_fractional_delay_and_doppler():
    wf = WaveformParams(M=64, L=16, c1=0.03, c2=0.21)
    scene = Scene([target_for(0.37 * wf.sample_period, 1.3 * wf.delta_f, 12.0)])
    x = qam_symbols(16, 64, seed=21)
    Ym = synthesize_matrix_model(x, scene_paths(scene, ARRAY, wf), wf, ARRAY).Y
    Yo = synthesize_oracle(x, scene, wf, ARRAY).Y
    assert relative_error(Ym, Yo) < 1e-8


@pytest.mark.parametrize("c1", [0.0, 0.03, 0.08])
def test_oracle_random_scenes(c1):
    rng = np.random.default_rng(int(c1 * 1000) + 1)
    for _ in range(20):
        wf = WaveformParams(M=64, L=16, c1=c1, c2=float(rng.uniform(0, 1)))
        scene = random_scene(rng, wf, int(rng.integers(1, 4)))
        x = qam_symbols(16, 64, rng)
        Ym = synthesize_matrix_model(x, scene_paths(scene, ARRAY, wf), wf, ARRAY).Y
        Yo = synthesize_oracle(x, scene, wf, ARRAY).Y
        assert relative_error(Ym, Yo) < 1e-8


def test_keep_time_domain_inverts_demodulation():
    wf = WaveformParams(M=16, L=4, c1=0.1, c2=0.2)
    arr = ArrayParams(N_t=4, N_r=4)
    scene = Scene([target_for(1.5 * wf.sample_period, 2e3, 5.0, arr)])
    x = qam_symbols(4, 16, seed=0)
    sig = synthesize_matrix_model(x, scene_paths(scene, arr, wf), wf, arr, keep_time_domain=True)
    np.testing.assert_allclose(daft_matrix(wf) @ sig.R, sig.Y, atol=1e-12)


def test_noise_whiteness_after_demodulation():
    wf = WaveformParams(M=64, c1=0.08, c2=0.3)
    rng = np.random.default_rng(5)
    W = complex_noise((64, 4000), 2.0, rng)
    Wt = demodulate(W, wf)
    cov = Wt @ Wt.conj().T / Wt.shape[1]
    assert np.mean(np.abs(Wt) ** 2) == pytest.approx(2.0, rel=0.01)
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) < 0.1


def test_noise_is_deterministic_per_seed():
    wf = WaveformParams()
    scene = Scene([target_for(wf.sample_period, 1e3, 0.0)])
    x = qam_symbols(16, 64, seed=1)
    paths = scene_paths(scene, ARRAY, wf)
    a = synthesize_matrix_model(x, paths, wf, ARRAY, sigma2=0.3, seed=77).Y
    b = synthesize_matrix_model(x, paths, wf, ARRAY, sigma2=0.3, seed=77).Y
    np.testing.assert_array_equal(a, b)


def test_snr_definition():
    Y = np.full((4, 4), 2.0 + 0j)
    assert snr_to_sigma2(10.0, Y) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        snr_to_sigma2(np.inf, Y)


def test_superposition_of_paths():
    wf = WaveformParams(c1=0.03)
    x = qam_symbols(16, 64, seed=2)
    scene = Scene([target_for(wf.sample_period, 1e3, -20.0), target_for(4 * wf.sample_period, -5e3, 25.0)])
    paths = scene_paths(scene, ARRAY, wf)
    total = noiseless_matrix_model(x, paths, wf, ARRAY)
    parts = sum(noiseless_matrix_model(x, [p], wf, ARRAY) for p in paths)
    np.testing.assert_allclose(total, parts, atol=1e-12)
