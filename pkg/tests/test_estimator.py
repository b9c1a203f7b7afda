import numpy as np
import pytest

from aftmc import estimator
from aftmc.channel import channel_response, complex_noise, noiseless_matrix_model, snr_to_sigma2
from aftmc.crlb import build_D, fim_channel, jacobian_E
from aftmc.estimator import (
    DdSearchConfig,
    DegenerateSpectrumError,
    DelayDopplerSearch,
    MusicConfig,
    aml_objective,
    estimate_all,
    estimate_delay_doppler,
    estimate_gain,
    music_spectrum,
    parabolic_offset,
    pick_peaks,
    spatial_smooth_covariance,
)
from aftmc.geometry import ArrayParams, PathParams, reference_scene, scene_paths, steering_rx
from aftmc.waveform import WaveformParams, qam_symbols

ARRAY = ArrayParams()
WF = WaveformParams(c1=0.03)


def single_path_Y(path, x, wf=WF, array=ARRAY):
    return noiseless_matrix_model(x, [path], wf, array)


def test_smoothing_restores_rank_for_coherent_paths():
    wf = WaveformParams()
    x = qam_symbols(16, 64, seed=0)
    g = channel_response(wf.sample_period, 2e3, x, wf)
    b = steering_rx(np.deg2rad(-20), ARRAY) + np.exp(0.7j) * steering_rx(np.deg2rad(25), ARRAY)
    Y = np.outer(g, b)
    unsmoothed = np.linalg.eigvalsh(spatial_smooth_covariance(Y, 1))[::-1]
    assert unsmoothed[1] < 1e-10 * unsmoothed[0]
    ev = np.linalg.eigvalsh(spatial_smooth_covariance(Y, 4))[::-1]
    assert ev[1] > 1e-3 * ev[0]
    assert ev[1] > 100 * max(ev[2], 1e-300)


def test_smoothing_shape_and_hermitian():
    Y = complex_noise((64, 16), 1.0, np.random.default_rng(0))
    R = spatial_smooth_covariance(Y, 4, fb_averaging=True)
    assert R.shape == (13, 13)
    np.testing.assert_allclose(R, R.conj().T)
    with pytest.raises(ValueError):
        spatial_smooth_covariance(Y, 4, P=13)


def test_music_spectrum_scale_invariant():
    Y = complex_noise((64, 16), 1.0, np.random.default_rng(1))
    R = spatial_smooth_covariance(Y, 4)
    _, a = music_spectrum(R, 2, MusicConfig(), ARRAY)
    _, b = music_spectrum(7.5 * R, 2, MusicConfig(), ARRAY)
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_music_single_broadside_target():
    x = qam_symbols(16, 64, seed=3)
    path = PathParams(h=1.0, theta=0.0, tau=WF.sample_period, nu=1e3)
    Y = single_path_Y(path, x)
    Y = Y + complex_noise(Y.shape, snr_to_sigma2(20, Y), np.random.default_rng(2))
    angles, spec = music_spectrum(spatial_smooth_covariance(Y, 4), 1, MusicConfig(), ARRAY)
    peaks, degenerate = pick_peaks(angles, 10 * np.log10(spec), 1)
    assert not degenerate
    assert abs(np.rad2deg(peaks[0])) < 0.05
    assert len(angles) == 1801


def test_pick_peaks_sorted_and_degenerate():
    ang = np.linspace(-1, 1, 11)
    vals = np.array([0, 1, 0, 0, 5, 0, 0, 3, 3, 0, 0], dtype=float)
    peaks, deg = pick_peaks(ang, vals, 2)
    assert not deg
    assert peaks[0] < peaks[1]
    assert peaks[0] == pytest.approx(ang[4])
    assert peaks[1] == pytest.approx(ang[7] + 0.2 * parabolic_offset(0, 3, 3))
    _, deg = pick_peaks(ang, np.arange(11.0), 1)
    assert deg


def test_parabolic_offset():
    # samples of -(k - 0.3)^2 at k = -1, 0, 1
    f = lambda k: -(k - 0.3) ** 2
    assert parabolic_offset(f(-1), f(0), f(1)) == pytest.approx(0.3)
    assert parabolic_offset(1.0, 1.0, 1.0) == 0.0


def test_degenerate_spectrum_raises(monkeypatch):
    def flat(R, P, config, array):
        angles = np.deg2rad(np.linspace(-90, 90, 1801))
        return angles, np.exp(angles)

    monkeypatch.setattr(estimator, "music_spectrum", flat)
    Y = complex_noise((64, 16), 1.0, np.random.default_rng(0))
    with pytest.raises(DegenerateSpectrumError):
        estimate_all(Y, qam_symbols(16, 64, seed=0), 2, WF, ARRAY)


def test_aml_objective_agrees_with_fast_search():
    x = qam_symbols(16, 64, seed=5)
    path = PathParams(h=0.6 - 0.2j, theta=0.3, tau=3.4 * WF.sample_period, nu=12e3)
    Y = single_path_Y(path, x) + complex_noise((64, 16), 0.01, np.random.default_rng(0))
    search = DelayDopplerSearch(Y, 0.3, x, WF, ARRAY)
    for tau, nu in [(path.tau, path.nu), (2.0 * WF.sample_period, -4e3), (0.0, 0.0)]:
        assert search.objective(tau, nu) == pytest.approx(aml_objective(tau, nu, 0.3, Y, x, WF, ARRAY), rel=1e-9)
    y_vec = Y.T.reshape(-1)
    assert aml_objective(path.tau, path.nu, 0.3, y_vec, x, WF, ARRAY) == pytest.approx(
        aml_objective(path.tau, path.nu, 0.3, Y, x, WF, ARRAY))


def test_aml_grid_matches_pointwise():
    x = qam_symbols(16, 64, seed=6)
    path = PathParams(h=1.0, theta=-0.2, tau=2.0 * WF.sample_period, nu=15e3)
    search = DelayDopplerSearch(single_path_Y(path, x), -0.2, x, WF, ARRAY)
    taus, nus, values = search.grid(DdSearchConfig())
    for i, k in [(0, 0), (8, 12), (33, 24), (63, 19)]:
        assert values[i, k] == pytest.approx(search.objective(taus[i], nus[k]), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("tau_samples, nu", [(3.0, 15e3), (3.37, 13.1e3), (0.6, -21.7e3), (12.9, 40.03e3)])
def test_delay_doppler_recovery_noiseless(tau_samples, nu):
    x = qam_symbols(16, 64, seed=7)
    path = PathParams(h=0.8 * np.exp(1j), theta=0.4, tau=tau_samples * WF.sample_period, nu=nu)
    Y = single_path_Y(path, x)
    tau_hat, nu_hat = estimate_delay_doppler(0.4, Y, x, WF, ARRAY)
    assert abs(tau_hat - path.tau) < 1e-3 * WF.sample_period
    assert abs(nu_hat - nu) < 1e-3 * WF.delta_f
    assert estimate_gain(0.4, tau_hat, nu_hat, Y, x, WF, ARRAY) == pytest.approx(path.h, abs=1e-6)


def test_delay_doppler_recovery_ofdm():
    wf = WaveformParams()
    x = qam_symbols(16, 64, seed=8)
    path = PathParams(h=1.0, theta=0.1, tau=5.25 * wf.sample_period, nu=-7e3)
    tau_hat, nu_hat = estimate_delay_doppler(0.1, single_path_Y(path, x, wf), x, wf, ARRAY)
    assert abs(tau_hat - path.tau) < 1e-3 * wf.sample_period
    assert abs(nu_hat - path.nu) < 1e-3 * wf.delta_f


def test_estimate_all_single_target_noiseless():
    x = qam_symbols(16, 64, seed=9)
    path = PathParams(h=0.5j, theta=np.deg2rad(-35.0), tau=7.2 * WF.sample_period, nu=9e3)
    res = estimate_all(single_path_Y(path, x), x, 1, WF, ARRAY)
    (p,) = res.paths_hat
    assert np.rad2deg(abs(p.theta - path.theta)) < 0.01
    assert abs(p.tau - path.tau) < 1e-3 * WF.sample_period
    assert abs(p.h - path.h) < 1e-2


def test_estimate_all_two_targets_within_three_sigma():
    scene = reference_scene()
    x = qam_symbols(16, 64, seed=10)
    paths = scene_paths(scene, ARRAY, WF)
    clean = noiseless_matrix_model(x, paths, WF, ARRAY)
    sigma2 = snr_to_sigma2(20.0, clean)
    Y = clean + complex_noise(clean.shape, sigma2, np.random.default_rng(10))
    res = estimate_all(Y, x, 2, WF, ARRAY)
    J = fim_channel(jacobian_E(paths, x, WF, ARRAY), build_D(paths, x, WF, ARRAY), [p.h for p in paths], sigma2)
    sd = np.sqrt(np.diag(np.linalg.inv(J)))
    for i, (true, hat) in enumerate(zip(paths, res.paths_hat)):
        assert abs(hat.theta - true.theta) < 3 * sd[i]
        assert abs(hat.tau - true.tau) < 3 * sd[2 + i]
        assert abs(hat.nu - true.nu) < 3 * sd[4 + i]


def test_residual_non_increasing():
    scene = reference_scene()
    paths = scene_paths(scene, ARRAY, WF)
    good = 0
    trials = 40
    for t in range(trials):
        x = qam_symbols(16, 64, seed=100 + t)
        clean = noiseless_matrix_model(x, paths, WF, ARRAY)
        Y = clean + complex_noise(clean.shape, snr_to_sigma2(10.0, clean), np.random.default_rng(t))
        hist = estimate_all(Y, x, 2, WF, ARRAY, ddsearch=DdSearchConfig(residual_tol=0.0)).residual_history
        good += all(b <= a * (1 + 1e-9) for a, b in zip(hist, hist[1:]))
    assert good >= 0.95 * trials


def test_search_config_validation():
    with pytest.raises(ValueError):
        DdSearchConfig(tau_oversample=0)
    with pytest.raises(ValueError):
        MusicConfig(K=0)
    assert DdSearchConfig().doppler_limit(WF) == pytest.approx(3 * WF.delta_f)
