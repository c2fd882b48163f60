"""Monte-Carlo experiment harness.

A sweep crosses (receiver, oversampling factor, SNR); every cell runs the
same per-trial realizations, because trial seeds depend only on the master
seed and the trial index.  That makes cross-receiver and cross-SNR
comparisons paired and cell order irrelevant.  Results stream to CSV one
row per cell (flushed immediately, so interrupted runs keep finished
cells), and a JSON manifest records the resolved configuration with a
content hash.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import uad_dc_baseline
from .calibration import Thresholds, calibrate_thresholds
from .config import ExperimentConfig, SimScenario, db_to_linear
from .em import ReceiverOutput, run_em
from .metrics import TrialMetrics, compute_metrics
from .preamble import build_zc_pool
from .pulse import PulseBank
from .signal_model import build_symbol_matrix, generate_realization, synthesize_window

CSV_COLUMNS = [
    "receiver", "mosf", "snr_db", "nmse_g", "nmse_x", "p_md", "p_fa",
    "delay_rmse", "trials", "ci95_nmse_g", "ci95_nmse_x", "ci95_p_md",
    "ci95_p_fa", "ci95_delay_rmse",
]


def sigma_for_snr(
    scenario: SimScenario, pulse: PulseBank, pool, snr_db: float,
    seed: int, batch: int = 16,
) -> float:
    """Noise variance realizing a per-sample received SNR.

    Mean signal power per window sample is measured on a pilot batch of
    noiseless realizations; the filtered-noise power per sample is
    sigma_w2 times the mean diagonal of F F^T.
    """
    acc = 0.0
    for t in range(batch):
        real = generate_realization(scenario, np.random.SeedSequence((seed, 777, t)))
        X = build_symbol_matrix(real, scenario, pool)
        S = pulse.Z @ X @ real.G
        acc += float(np.mean(np.abs(S) ** 2))
    p_sig = acc / batch
    if p_sig <= 0.0:
        raise ValueError("pilot batch produced no signal energy; raise rho or batch")
    noise_gain = float(np.mean(np.einsum("ij,ij->i", pulse.F, pulse.F)))
    return p_sig / (db_to_linear(snr_db) * noise_gain)


def trial_seeds(master_seed: int, trial: int):
    """Realization/noise seeds for one trial, independent of the cell."""
    ss = np.random.SeedSequence((master_seed, trial))
    return ss.spawn(2)


def run_single_trial(
    receiver: str,
    scenario: SimScenario,
    pulse: PulseBank,
    pool,
    cfg: ExperimentConfig,
    thresholds: Thresholds,
    trial: int,
) -> TrialMetrics:
    """Synthesize one window, run one receiver, score it."""
    real_seed, noise_seed = trial_seeds(cfg.seed, trial)
    real = generate_realization(scenario, real_seed)
    obs = synthesize_window(real, pulse, scenario, noise_seed, pool)
    jcfg = replace(cfg.juced, eta_th=thresholds.eta_th)
    t0 = time.perf_counter()
    if receiver == "juced":
        result = run_em(obs.Y, pulse, pool, scenario, jcfg, cfg.em,
                        thresholds.peak_threshold)
        out = ReceiverOutput.from_em_result(result, scenario)
    elif receiver == "baseline":
        out = uad_dc_baseline(obs.Y, pulse, pool, scenario, jcfg, cfg.em,
                              thresholds.peak_threshold)
    else:
        raise ValueError(f"unknown receiver {receiver!r}")
    metrics = compute_metrics(real, out, scenario)
    metrics.wall_time = time.perf_counter() - t0
    return metrics


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    """Mean and half-width of the 95% normal CI, NaN-tolerant."""
    vals = values[np.isfinite(values)]
    if vals.size == 0:
        return float("nan"), float("nan")
    if vals.size == 1:
        return float(vals[0]), float("nan")
    return float(vals.mean()), float(1.96 * vals.std(ddof=1) / np.sqrt(vals.size))


def aggregate_cell(metrics: list[TrialMetrics], receiver, mosf, snr_db) -> dict:
    row = {"receiver": receiver, "mosf": mosf, "snr_db": snr_db,
           "trials": len(metrics)}
    for name in ("nmse_g", "nmse_x", "p_md", "p_fa", "delay_rmse"):
        vals = np.array([getattr(m, name) for m in metrics], dtype=float)
        mean, ci = _mean_ci(vals)
        row[name] = mean
        row[f"ci95_{name}"] = ci
    return row


def run_cells(
    cfg: ExperimentConfig,
    cells: list[tuple[str, int, float]],
    log=None,
) -> list[dict]:
    """Run explicit (receiver, mosf, snr_db) cells and aggregate each one.

    Calibration is shared across receivers within one (mosf, snr) pair.
    """
    log = log or (lambda msg: print(msg, file=sys.stderr))
    pool = build_zc_pool(cfg.scenario.n_pre, cfg.scenario.pool_size)
    rows = []
    cal_cache: dict[tuple[int, float], tuple[SimScenario, PulseBank, Thresholds]] = {}
    for receiver, mosf, snr_db in cells:
        key = (mosf, snr_db)
        if key not in cal_cache:
            scen_m = replace(cfg.scenario, m_osf=mosf)
            pulse = PulseBank.for_scenario(scen_m)
            sigma = sigma_for_snr(scen_m, pulse, pool, snr_db, cfg.seed)
            scen_run = replace(scen_m, sigma_w2=sigma)
            cal_seed = int(np.random.SeedSequence(
                (cfg.seed, mosf, int(round(snr_db * 1000)), 99)
            ).generate_state(1)[0])
            thr = calibrate_thresholds(
                scen_run, pulse, pool, cfg.juced, cfg.em,
                cfg.pfa_target, cfg.cal_trials, cal_seed,
            )
            cal_cache[key] = (scen_run, pulse, thr)
            log(f"calibrated mosf={mosf} snr={snr_db}: peak={thr.peak_threshold:.4g} "
                f"eta={thr.eta_th:.4g} sigma_w2={sigma:.4g}")
        scen_run, pulse, thr = cal_cache[key]
        try:
            t0 = time.perf_counter()
            metrics = [
                run_single_trial(receiver, scen_run, pulse, pool, cfg, thr, t)
                for t in range(cfg.trials)
            ]
            row = aggregate_cell(metrics, receiver, mosf, snr_db)
            log(f"cell {receiver} mosf={mosf} snr={snr_db}: "
                f"nmse_x={row['nmse_x']:.4f} p_md={row['p_md']:.4f} "
                f"p_fa={row['p_fa']:.2e} ({time.perf_counter() - t0:.1f}s)")
        except Exception as err:  # keep sweeping, mark the cell invalid
            log(f"cell {receiver} mosf={mosf} snr={snr_db} FAILED: {err!r}")
            row = {c: float("nan") for c in CSV_COLUMNS}
            row.update(receiver=receiver, mosf=mosf, snr_db=snr_db, trials=0)
        rows.append(row)
    return rows


def config_digest(cfg: ExperimentConfig) -> str:
    """Content hash of the resolved configuration."""
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(cfg: ExperimentConfig, out_dir: Path) -> Path:
    manifest = {
        "config": dataclasses.asdict(cfg),
        "config_hash": config_digest(cfg),
        "package_version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "results_csv": "results.csv",
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


def run_sweep(cfg: ExperimentConfig, log=None) -> list[dict]:
    """Full cross-product sweep with streamed CSV output and plot data."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out_dir)
    cells = [
        (receiver, mosf, snr)
        for mosf in cfg.mosf_grid
        for snr in cfg.snr_grid_db
        for receiver in cfg.receivers
    ]
    rows: list[dict] = []
    csv_path = out_dir / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        fh.flush()
        for cell in cells:
            row = run_cells(cfg, [cell], log=log)[0]
            rows.append(row)
            writer.writerow(row)
            fh.flush()
    emit_plotdata(rows, out_dir)
    return rows


def emit_plotdata(rows: list[dict], out_dir) -> list[Path]:
    """Write per-metric plot files: long CSV plus a gnuplot column block.

    Series are one line per (receiver, mosf); with two receivers and three
    oversampling factors that is six curves per panel.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label = {"juced": "juced", "baseline": "baseline (UAD-DC-like)"}
    written = []
    for metric in ("nmse_x", "p_md"):
        series: dict[tuple[str, int], dict[float, tuple[float, float]]] = {}
        snrs: set[float] = set()
        for row in rows:
            key = (row["receiver"], row["mosf"])
            series.setdefault(key, {})[row["snr_db"]] = (
                row[metric], row.get(f"ci95_{metric}", float("nan"))
            )
            snrs.add(row["snr_db"])
        snr_grid = sorted(snrs)
        keys = sorted(series.keys(), key=lambda t: (t[0], t[1]))

        csv_path = out_dir / f"plotdata_{metric}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series", "receiver", "mosf", "snr_db", metric,
                        f"ci95_{metric}"])
            for rec, mosf in keys:
                for snr in snr_grid:
                    if snr in series[(rec, mosf)]:
                        val, ci = series[(rec, mosf)][snr]
                        w.writerow([f"{rec}-m{mosf}", label[rec], mosf, snr,
                                    val, ci])
        dat_path = out_dir / f"plotdata_{metric}.dat"
        with open(dat_path, "w") as fh:
            names = " ".join(f"{rec}-m{mosf}" for rec, mosf in keys)
            fh.write(f"# {metric} vs snr_db; series: {names}\n")
            fh.write("# snr_db " + names + "\n")
            for snr in snr_grid:
                vals = [
                    series[key].get(snr, (float("nan"), 0.0))[0] for key in keys
                ]
                fh.write(" ".join([f"{snr:g}"] + [f"{v:.6g}" for v in vals]) + "\n")
        written.extend([csv_path, dat_path])
    return written
