"""Monte Carlo experiments: per-trial pipeline, sweeps, metrics, and emission."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from aftmc import __version__, _kernels
from aftmc.channel import complex_noise, noiseless_matrix_model, snr_to_sigma2
from aftmc.config import OPTIMAL_C2, ExperimentConfig, config_to_dict
from aftmc.crlb import crlb_position, optimize_c2
from aftmc.estimator import DegenerateSpectrumError, estimate_all
from aftmc.geometry import path_to_position, scene_paths
from aftmc.waveform import WaveformParams, qam_symbols

log = logging.getLogger(__name__)

CSV_COLUMNS = ("snr_db", "c1", "c2", "rmse_position_m", "rmse_per_target_m", "rmse_theta_deg", "rmse_tau_s",
               "rmse_nu_hz", "crlb_rms_position_m", "trials_used", "failures")
SNR_DEFINITION = "sigma2 = mean |Y_noiseless|^2 / 10^(snr_db/10), per complex sample of the demodulated M x N_r signal"


@dataclass
class TrialRecord:
    trial: int
    snr_db: float
    c1: float
    c2: float
    sigma2: float
    failed: bool = False
    error: str = ""
    position_error: np.ndarray | None = None
    theta_error: np.ndarray | None = None
    tau_error: np.ndarray | None = None
    nu_error: np.ndarray | None = None
    crlb_trace: float = np.nan
    truth: list = field(default_factory=list)
    estimate: list = field(default_factory=list)


@dataclass
class SweepResult:
    rows: list[dict]
    records: list[TrialRecord] = field(default_factory=list)

    def row(self, **match) -> dict:
        for r in self.rows:
            if all(r[k] == v for k, v in match.items()):
                return r
        raise KeyError(match)


# --- seeding ------------------------------------------------------------------

def _snr_key(snr_db: float) -> int:
    return int(round(snr_db * 1000)) + 10**6


def draw_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    """Symbols and reflection phases; shared by every sweep point and SNR."""
    return np.random.SeedSequence([master_seed, trial])


def noise_seed(master_seed: int, trial: int, snr_db: float) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, trial, _snr_key(snr_db)])


def trial_draws(config: ExperimentConfig, trial: int):
    """Symbol vector and per-target reflection coefficients for one trial."""
    rng = np.random.default_rng(draw_seed(config.master_seed, trial))
    x = qam_symbols(config.waveform.qam_order, config.waveform.M, rng)
    phases = rng.uniform(0.0, 2 * np.pi, size=config.P)
    betas = [np.exp(1j * ph) if t.beta is None else t.beta for t, ph in zip(config.targets, phases)]
    return x, betas


# --- association & metrics ----------------------------------------------------

def associate(true_angles, est_angles) -> list[int]:
    """Greedy unique nearest-angle matching; returns estimate index per truth."""
    true_angles = np.asarray(true_angles, dtype=float)
    est_angles = np.asarray(est_angles, dtype=float)
    dist = np.abs(true_angles[:, None] - est_angles[None, :])
    assignment = [-1] * len(true_angles)
    used_t, used_e = set(), set()
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = np.unravel_index(flat, dist.shape)
        if i in used_t or j in used_e:
            continue
        assignment[i] = int(j)
        used_t.add(i)
        used_e.add(j)
    return assignment


def rmse(errors) -> float:
    """sqrt(mean of squared errors) over every trial and target supplied."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(errors**2)))


# --- trials -------------------------------------------------------------------

def optimal_c2_for_trial(config: ExperimentConfig, trial: int, waveform: WaveformParams) -> float:
    """c2 minimizing trace CRLB for this trial's symbols and true channel.

    Noise is tied to received power as in ``run_trial``; the bound then scales
    with 10^(-snr/10) as a whole, so the minimizer does not depend on the SNR.
    """
    x, betas = trial_draws(config, trial)
    result = optimize_c2(config.scene(betas), x, waveform, config.array, 1.0, budget=config.c2_budget,
                         doppler=config.crlb_doppler, relative_noise=True)
    return result.c2


def run_trial(config: ExperimentConfig, trial: int, snr_db: float, waveform: WaveformParams | None = None,
              with_crlb: bool = True) -> TrialRecord:
    """QAM draw, synthesis, estimation, localization for one trial at one SNR."""
    wf = config.waveform if waveform is None else waveform
    x, betas = trial_draws(config, trial)
    scene = config.scene(betas)
    paths = scene_paths(scene, config.array, wf)
    clean = noiseless_matrix_model(x, paths, wf, config.array)
    sigma2 = snr_to_sigma2(snr_db, clean)
    Y = clean + complex_noise(clean.shape, sigma2, np.random.default_rng(noise_seed(config.master_seed, trial, snr_db)))
    rec = TrialRecord(trial=trial, snr_db=snr_db, c1=wf.c1, c2=wf.c2, sigma2=sigma2)
    rec.truth = [(p.theta, p.tau, p.nu) for p in paths]
    if with_crlb:
        rec.crlb_trace = crlb_position(scene, x, wf, config.array, sigma2, doppler=config.crlb_doppler,
                                       paths=paths).trace
    try:
        est = estimate_all(Y, x, scene.P, wf, config.array, config.music, config.ddsearch)
    except (DegenerateSpectrumError, np.linalg.LinAlgError) as exc:
        rec.failed = True
        rec.error = str(exc)
        return rec
    hat = est.paths_hat
    rec.estimate = [(p.theta, p.tau, p.nu) for p in hat]
    match = associate([p.theta for p in paths], [p.theta for p in hat])
    pos_err, th_err, tau_err, nu_err = [], [], [], []
    for tgt, true_path, j in zip(scene.targets, paths, match):
        q_hat = path_to_position(hat[j].theta, hat[j].tau, scene.q_bs)
        pos_err.append(np.linalg.norm(q_hat - tgt.q))
        th_err.append(hat[j].theta - true_path.theta)
        tau_err.append(hat[j].tau - true_path.tau)
        nu_err.append(hat[j].nu - true_path.nu)
    rec.position_error = np.array(pos_err)
    rec.theta_error = np.array(th_err)
    rec.tau_error = np.array(tau_err)
    rec.nu_error = np.array(nu_err)
    return rec


def _trial_block(config: ExperimentConfig, waveform: WaveformParams, optimal_c2: bool, trial: int,
                 snrs) -> list[TrialRecord]:
    wf = waveform
    if optimal_c2:
        wf = waveform.replace(c2=optimal_c2_for_trial(config, trial, waveform))
    return [run_trial(config, trial, snr, wf) for snr in snrs]


# --- sweeps -------------------------------------------------------------------

def sweep_points(config: ExperimentConfig):
    """Yield ``(waveform, c2_label, snr_grid)`` for each sweep point."""
    base = config.waveform
    base_label = OPTIMAL_C2 if config.c2_mode == OPTIMAL_C2 else base.c2
    sw = config.sweep
    if sw is None:
        yield base, base_label, config.snr_grid_db
    elif sw.parameter == "snr":
        yield base, base_label, tuple(float(v) for v in sw.values)
    elif sw.parameter == "c1":
        for v in sw.values:
            yield base.replace(c1=float(v)), base_label, config.snr_grid_db
    else:
        for v in sw.values:
            if v == OPTIMAL_C2:
                yield base.replace(c2=0.0), OPTIMAL_C2, config.snr_grid_db
            else:
                yield base.replace(c2=float(v)), float(v), config.snr_grid_db


def aggregate(records: list[TrialRecord], snr_db: float, c1: float, c2_label) -> dict:
    records = sorted(records, key=lambda r: r.trial)
    ok = [r for r in records if not r.failed]
    P = len(ok[0].position_error) if ok else 0
    per_target = [rmse([r.position_error[i] for r in ok]) for i in range(P)]
    crlb = [r.crlb_trace / len(r.truth) for r in records if np.isfinite(r.crlb_trace)]
    return {
        "snr_db": snr_db,
        "c1": c1,
        "c2": c2_label,
        "rmse_position_m": rmse(np.concatenate([r.position_error for r in ok])) if ok else float("nan"),
        "rmse_per_target_m": per_target,
        "rmse_theta_deg": rmse(np.rad2deg(np.concatenate([r.theta_error for r in ok]))) if ok else float("nan"),
        "rmse_tau_s": rmse(np.concatenate([r.tau_error for r in ok])) if ok else float("nan"),
        "rmse_nu_hz": rmse(np.concatenate([r.nu_error for r in ok])) if ok else float("nan"),
        "crlb_rms_position_m": float(np.sqrt(np.mean(crlb))) if crlb else float("nan"),
        "trials_used": len(ok),
        "failures": len(records) - len(ok),
    }


def run_sweep(config: ExperimentConfig, threads: int = 1, keep_records: bool = False) -> SweepResult:
    """Monte Carlo over every sweep point and SNR.

    Trials are independent and seeded from ``(master_seed, trial)`` (plus the
    SNR for noise), so rows do not depend on grid order and ``threads`` only
    changes wall-clock time.
    """
    rows, all_records = [], []
    for wf, c2_label, snrs in sweep_points(config):
        opt = c2_label == OPTIMAL_C2
        trials = range(config.trials)
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                blocks = list(pool.map(_trial_block, *zip(*[(config, wf, opt, t, snrs) for t in trials]),
                                       chunksize=max(1, config.trials // (4 * threads))))
        else:
            blocks = [_trial_block(config, wf, opt, t, snrs) for t in trials]
        for k, snr in enumerate(snrs):
            recs = [b[k] for b in blocks]
            rows.append(aggregate(recs, snr, wf.c1, c2_label))
            if keep_records:
                all_records.extend(recs)
        log.info("sweep point c1=%g c2=%s done", wf.c1, c2_label)
    return SweepResult(rows=rows, records=all_records)


# --- emission -----------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(_fmt(v) for v in value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def write_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in result.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return path


def write_metadata(config: ExperimentConfig, path, wall_clock_s: float, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": __version__,
        "master_seed": config.master_seed,
        "config": config_to_dict(config),
        "snr_definition": SNR_DEFINITION,
        "kernel_backend": _kernels.backend(),
        "python": platform.python_version(),
        "wall_clock_s": wall_clock_s,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=2, default=str), encoding="utf-8")
    return path
