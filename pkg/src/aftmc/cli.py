"""Command-line entry point: ``aftmc {simulate,sweep,crlb,spectrum,optimize-c2}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from aftmc.channel import complex_noise, noiseless_matrix_model, snr_to_sigma2
from aftmc.config import OPTIMAL_C2, ConfigError, ExperimentConfig, SweepSpec, load_config
from aftmc.crlb import crlb_position, optimize_c2
from aftmc.estimator import music_spectrum, spatial_smooth_covariance
from aftmc.geometry import scene_paths
from aftmc.harness import noise_seed, run_sweep, run_trial, trial_draws, write_csv, write_metadata

log = logging.getLogger("aftmc")


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["output_dir"] = args.out
    return config.replace(**changes) if changes else config


def _floats(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _write_rows(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, (str, int)) else format(float(v), ".12g") for v in r])


def cmd_simulate(config: ExperimentConfig, args) -> int:
    snr = args.snr if args.snr is not None else max(config.snr_grid_db)
    rec = run_trial(config, 0, snr)
    out = {
        "snr_db": snr,
        "sigma2": rec.sigma2,
        "failed": rec.failed,
        "error": rec.error,
        "truth": [{"theta_deg": float(np.rad2deg(t)), "tau_s": tau, "nu_hz": nu} for t, tau, nu in rec.truth],
        "estimate": [{"theta_deg": float(np.rad2deg(t)), "tau_s": tau, "nu_hz": nu} for t, tau, nu in rec.estimate],
        "position_error_m": [] if rec.position_error is None else rec.position_error.tolist(),
        "crlb_position_bound_m": float(np.sqrt(rec.crlb_trace)),
    }
    text = json.dumps(out, indent=2)
    print(text)
    path = Path(config.output_dir) / "simulate.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_sweep(config: ExperimentConfig, args) -> int:
    t0 = time.perf_counter()
    result = run_sweep(config, threads=args.threads)
    wall = time.perf_counter() - t0
    out = Path(config.output_dir)
    write_csv(result, out / "sweep.csv")
    write_metadata(config, out / "sweep.json", wall)
    for row in result.rows:
        log.info("snr=%5.1f c1=%-5g c2=%-5s rmse=%.4g m crlb=%.4g m failures=%d", row["snr_db"], row["c1"],
                 row["c2"], row["rmse_position_m"], row["crlb_rms_position_m"], row["failures"])
    print(out / "sweep.csv")
    return 0


def cmd_crlb(config: ExperimentConfig, args) -> int:
    c1_values = _floats(args.c1) if args.c1 else [0.0, 0.03, 0.08]
    c2_values = _floats(args.c2) if args.c2 else [config.waveform.c2]
    x, betas = trial_draws(config, 0)
    scene = config.scene(betas)
    rows = []
    for c1 in c1_values:
        for c2 in c2_values:
            wf = config.waveform.replace(c1=c1, c2=c2)
            clean = noiseless_matrix_model(x, scene_paths(scene, config.array, wf), wf, config.array)
            for snr in config.snr_grid_db:
                rep = crlb_position(scene, x, wf, config.array, snr_to_sigma2(snr, clean), doppler=config.crlb_doppler)
                rows.append([snr, c1, c2, rep.trace, np.sqrt(rep.trace / scene.P)] + list(rep.position_bounds()))
    header = ["snr_db", "c1", "c2", "crlb_trace_m2", "crlb_rms_position_m"] + [
        f"bound_target{i + 1}_m" for i in range(scene.P)]
    path = Path(config.output_dir) / "crlb.csv"
    _write_rows(path, header, rows)
    print(path)
    return 0


def cmd_spectrum(config: ExperimentConfig, args) -> int:
    snr = args.snr if args.snr is not None else 10.0
    x, betas = trial_draws(config, 0)
    scene = config.scene(betas)
    wf = config.waveform
    clean = noiseless_matrix_model(x, scene_paths(scene, config.array, wf), wf, config.array)
    sigma2 = snr_to_sigma2(snr, clean)
    Y = clean + complex_noise(clean.shape, sigma2, np.random.default_rng(noise_seed(config.master_seed, 0, snr)))
    R_ss = spatial_smooth_covariance(Y, config.music.K, scene.P, config.music.fb_averaging)
    angles, values = music_spectrum(R_ss, scene.P, config.music, config.array)
    db = 10 * np.log10(values / values.max())
    path = Path(config.output_dir) / "spectrum.csv"
    _write_rows(path, ["angle_deg", "spectrum_db"], zip(np.rad2deg(angles), db))
    print(path)
    return 0


def cmd_optimize_c2(config: ExperimentConfig, args) -> int:
    wf = config.waveform.replace(c1=args.c1 if args.c1 is not None else config.waveform.c1, c2=0.0)
    rows = []
    for draw in range(args.draws):
        x, betas = trial_draws(config, draw)
        res = optimize_c2(config.scene(betas), x, wf, config.array, 1.0, budget=config.c2_budget,
                          doppler=config.crlb_doppler, relative_noise=True)
        rows.append([draw, res.c2, res.trace_at_zero, res.trace, res.trace_at_zero / res.trace,
                     int(res.budget_exhausted)])
    out = Path(config.output_dir)
    _write_rows(out / "c2_draws.csv", ["draw", "c2_opt", "trace_c2_zero", "trace_c2_opt", "gain", "budget_exhausted"],
                rows)
    print(out / "c2_draws.csv")
    if args.sweep:
        sweep_cfg = config.replace(waveform=wf, c2_mode=None, sweep=SweepSpec("c2", (0.0, OPTIMAL_C2)))
        t0 = time.perf_counter()
        result = run_sweep(sweep_cfg, threads=args.threads)
        write_csv(result, out / "sweep_c2.csv")
        write_metadata(sweep_cfg, out / "sweep_c2.json", time.perf_counter() - t0)
        print(out / "sweep_c2.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (built-in defaults when omitted)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    common.add_argument("--threads", type=int, default=1, help="worker processes; 1 runs serially")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aftmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="one trial, estimates vs truth")
    p.add_argument("--snr", type=float)
    sub.add_parser("sweep", parents=[common], help="Monte Carlo RMSE/CRLB sweep (CSV + JSON)")
    p = sub.add_parser("crlb", parents=[common], help="CRLB over a c1/c2 grid")
    p.add_argument("--c1", help="comma-separated c1 values")
    p.add_argument("--c2", help="comma-separated c2 values")
    p = sub.add_parser("spectrum", parents=[common], help="MUSIC pseudo-spectrum dump")
    p.add_argument("--snr", type=float)
    p = sub.add_parser("optimize-c2", parents=[common], help="c2 search per symbol draw")
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--c1", type=float)
    p.add_argument("--sweep", action="store_true", help="also run the c2 = 0 vs optimal RMSE sweep")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "crlb": cmd_crlb,
    "spectrum": cmd_spectrum,
    "optimize-c2": cmd_optimize_c2,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load(args)
    except ConfigError as exc:
        print(f"aftmc: config error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](config, args)
    except Exception as exc:  # noqa: BLE001
        print(f"aftmc: {args.command} failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
