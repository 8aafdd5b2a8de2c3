"""MRA Monte Carlo harness.

A sweep runs every (K, sigma, N, method) cell of a SweepConfig for a number
of replicates. Each replicate is one independent trial: draw a signal, sample
a batch, run the estimator, measure the orbit loss. Trials are seeded by a
hash of their coordinates, so a sweep reproduces bit for bit regardless of
worker count or completion order.
"""
import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from alive_progress import alive_bar

# ensure project root is importable when run as a script
sys.path.insert(0, str(Path(__file__).parent.parent))
from core.config import load_config, module_config
from core.errors import ConfigError, MRAError
from core.logger import get_logger, setup_logger
from core.models import (
    CSV_COLUMNS,
    Estimate,
    Method,
    PilotMode,
    RiskReport,
    SampleBatch,
    SignalSpec,
    SweepConfig,
    TrialRecord,
)
from mra_mle.mra_mle import run_mle
from mra_model.mra_model import draw_signal, loss, reference_rate, sample
from mra_model.rng import derive_seed
from mra_mom.mra_mom import estimate_bispectrum, run_mom
from mra_mom.pilots.frequency_marching import frequency_marching_pilot

logger = get_logger("sweep")

RESULTS_CSV = "results.csv"
REPORT_JSON = "report.json"
FLOAT_FORMAT = "%.17g"
TRIAL_ERRORS = (MRAError, FloatingPointError, np.linalg.LinAlgError)

MOM_MODES = {
    Method.MOM_FM: PilotMode.FREQUENCY_MARCHING,
    Method.MOM_LINF: PilotMode.PILOT_LINF,
    Method.MOM_ORACLE: PilotMode.ORACLE,
}


def load_sweep_config(path: Optional[Union[str, Path]] = None) -> SweepConfig:
    """Package defaults, then the YAML/JSON file, then MRA_* variables."""
    defaults = module_config(__file__)
    return SweepConfig.from_dict(load_config(path, defaults))


def run_estimator(batch: SampleBatch, method: Union[str, Method], truth: Optional[SignalSpec] = None) -> Estimate:
    method = Method(method)
    if method in MOM_MODES:
        phi_true = truth.phases if truth is not None else None
        result = run_mom(batch, mode=MOM_MODES[method], phi_true=phi_true)
    elif method is Method.MLE:
        # start at the marching pilot, no least-squares inversion
        estimate = estimate_bispectrum(batch)
        init = SignalSpec(magnitudes=estimate.r_hat, phases=frequency_marching_pilot(estimate))
        result = run_mle(batch, init)
    else:
        result = run_mle(batch, run_mom(batch).signal)
    result.method = method.value
    return result


def _estimate_flag(result: Estimate) -> str:
    flags = list(result.diagnostics.get("flags", []))
    if result.diagnostics.get("degenerate_pairs"):
        flags.append("degenerate_bispectrum")
    return ";".join(flags)


def run_trial(family, k: int, sigma: float, n: int, method, seed: int,
              r: float = 1.0, c_lo: float = 0.5, c_hi: float = 2.0,
              phi: Optional[float] = None, signal_seed: Optional[int] = None,
              replicate: int = 0) -> TrialRecord:
    """One replicate. Estimator failures become a flagged record with a NaN loss."""
    method = Method(method)
    start = time.perf_counter()
    try:
        truth = draw_signal(family, k, r, seed if signal_seed is None else signal_seed,
                            c_lo=c_lo, c_hi=c_hi, sigma=sigma, n=n, phi=phi)
        batch = sample(truth, sigma, n, seed, debug=(sigma == 0))
        result = run_estimator(batch, method, truth)
        value, flag = loss(result.signal, truth), _estimate_flag(result)
    except TRIAL_ERRORS as e:
        logger.warning("trial K=%d sigma=%g N=%d %s seed=%d failed: %s", k, sigma, n, method.value, seed, e)
        value, flag = math.nan, f"error:{type(e).__name__}"
    runtime_ms = (time.perf_counter() - start) * 1000.0
    return TrialRecord(k=int(k), sigma=float(sigma), n=int(n), method=method.value, replicate=int(replicate),
                       seed=int(seed), loss=float(value), runtime_ms=runtime_ms, flag=flag)


@dataclass(frozen=True)
class TrialTask:
    """Picklable arguments of one run_trial call."""
    family: str
    k: int
    sigma: float
    n: int
    method: str
    seed: int
    r: float
    c_lo: float
    c_hi: float
    phi: Optional[float]
    signal_seed: Optional[int]
    replicate: int


def _run_task(task: TrialTask) -> TrialRecord:
    return run_trial(**asdict(task))


def build_tasks(cfg: SweepConfig) -> List[TrialTask]:
    """All trials in (k, sigma, n, method, replicate) order, with pairwise distinct seeds."""
    tasks = []
    for k in cfg.k_grid:
        for si, sigma in enumerate(cfg.sigma_grid):
            for ni, n in enumerate(cfg.n_values(sigma)):
                for method in cfg.methods:
                    for rep in range(cfg.replicates):
                        tasks.append(TrialTask(
                            family=cfg.family.value, k=k, sigma=sigma, n=n, method=method.value,
                            seed=derive_seed(cfg.base_seed, k, si, ni, method.value, rep),
                            r=cfg.r, c_lo=cfg.c_lo, c_hi=cfg.c_hi, phi=cfg.hypercube_phi,
                            signal_seed=derive_seed(cfg.base_seed, "signal", k) if cfg.fixed_signal else None,
                            replicate=rep,
                        ))
    seeds = [t.seed for t in tasks]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("derived trial seeds collide", base_seed=cfg.base_seed)
    return tasks


def _execute(tasks: List[TrialTask], workers: int, progress: bool) -> List[TrialRecord]:
    records: List[Optional[TrialRecord]] = [None] * len(tasks)
    with alive_bar(len(tasks), title="sweep", file=sys.stderr, disable=not progress) as bar:
        if workers <= 1:
            for i, task in enumerate(tasks):
                records[i] = _run_task(task)
                bar()
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = {executor.submit(_run_task, task): i for i, task in enumerate(tasks)}
                for future in as_completed(futures):
                    records[futures[future]] = future.result()
                    bar()
    return records


def records_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame([rec.to_dict() for rec in records], columns=CSV_COLUMNS)


def _trimmed_mean(losses: np.ndarray, trim_top: float) -> float:
    drop = int(math.floor(trim_top * losses.size))
    kept = np.sort(losses)[:losses.size - drop]
    return float(np.mean(kept))


def aggregate(records: Sequence[TrialRecord], r: Optional[float] = None, trim_top: float = 0.02) -> List[Dict[str, Any]]:
    """Per-cell statistics over successful replicates, cells sorted by (k, sigma, n, method)."""
    frame = records_frame(records)
    cells = []
    for (k, sigma, n, method), group in frame.groupby(["k", "sigma", "n", "method"], sort=True):
        ok = group[~group["flag"].str.startswith("error")]
        losses = ok["loss"].to_numpy(dtype=float)
        cell: Dict[str, Any] = {
            "k": int(k), "sigma": float(sigma), "n": int(n), "method": method,
            "count": int(losses.size),
            "failed": int(len(group) - losses.size),
        }
        if losses.size:
            mean = float(np.mean(losses))
            cell.update({
                "mean_loss": mean,
                "stderr": float(np.std(losses, ddof=1) / math.sqrt(losses.size)) if losses.size > 1 else 0.0,
                "median_loss": float(np.median(losses)),
                "trimmed_mean_loss": _trimmed_mean(losses, trim_top),
                "worst_loss": float(np.max(losses)),
            })
            if r is not None and sigma > 0:
                rate = reference_rate(int(k), r, float(sigma), int(n))
                cell["reference_rate"] = rate
                cell["normalized_risk"] = mean / rate
        else:
            logger.warning("cell K=%d sigma=%g N=%d %s has no successful replicates", k, sigma, n, method)
        cells.append(cell)
    return cells


def worst_cells(cells: Sequence[Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    """Per method, the cell with the highest mean loss and the largest single loss seen.

    Averages over the signal prior stand in for the supremum over signals; this
    summary is the worst that the sweep actually observed.
    """
    frame = pd.DataFrame([c for c in cells if "mean_loss" in c])
    summary: Dict[str, Dict[str, Any]] = {}
    if frame.empty:
        return summary
    for method, group in frame.groupby("method", sort=True):
        top = group.loc[group["mean_loss"].idxmax()]
        entry = {
            "k": int(top["k"]), "sigma": float(top["sigma"]), "n": int(top["n"]),
            "mean_loss": float(top["mean_loss"]),
            "worst_loss": float(group["worst_loss"].max()),
        }
        if "normalized_risk" in group and group["normalized_risk"].notna().any():
            entry["max_normalized_risk"] = float(group["normalized_risk"].max())
        summary[method] = entry
    return summary


def determinism_hash(frame: pd.DataFrame) -> str:
    """sha256 of the CSV rendering without the runtime column."""
    text = frame.drop(columns=["runtime_ms"]).to_csv(index=False, float_format=FLOAT_FORMAT)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_report(report: RiskReport, out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = records_frame(report.records)
    frame.to_csv(out_dir / RESULTS_CSV, index=False, float_format=FLOAT_FORMAT)
    payload = report.to_dict()
    payload["results_csv"] = RESULTS_CSV
    payload["determinism_hash"] = determinism_hash(frame)
    with open(out_dir / REPORT_JSON, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    return out_dir


def save_fits(report: RiskReport, path: Union[str, Path]) -> Optional[Path]:
    """Merge report.fits into the report.json next to the results; None when there is none."""
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_JSON
    elif path.suffix != ".json":
        path = path.parent / REPORT_JSON
    if not path.exists():
        logger.info("no %s beside the results; fits not saved", REPORT_JSON)
        return None
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    payload.setdefault("fits", {}).update(report.fits)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    return path


def load_report(path: Union[str, Path]) -> RiskReport:
    """Read a sweep output directory, its report.json or its results.csv."""
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_JSON if (path / REPORT_JSON).exists() else path / RESULTS_CSV
    config = None
    csv_path = path
    fits = {}
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("config"):
            config = SweepConfig.from_dict(payload["config"])
        fits = payload.get("fits") or {}
        csv_path = path.parent / payload.get("results_csv", RESULTS_CSV)
    if not csv_path.exists():
        raise ConfigError(f"Sweep results not found: {csv_path}")

    frame = pd.read_csv(csv_path, dtype={"flag": str, "method": str}).fillna({"flag": ""})
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError("results CSV is missing columns", missing=missing)
    records = [TrialRecord(**{c: row[c] for c in CSV_COLUMNS}) for row in frame.to_dict("records")]
    for rec in records:
        rec.k, rec.n, rec.replicate, rec.seed = int(rec.k), int(rec.n), int(rec.replicate), int(rec.seed)
    r = config.r if config else None
    trim_top = config.trim_top if config else 0.02
    cells = aggregate(records, r=r, trim_top=trim_top)
    return RiskReport(config=config, records=records, cells=cells, worst_cells=worst_cells(cells), fits=fits)


def risk_sweep(cfg: SweepConfig, out_dir: Optional[Union[str, Path]] = None) -> RiskReport:
    tasks = build_tasks(cfg)
    logger.info("sweep: %d trials on %d worker(s)", len(tasks), cfg.workers)
    records = _execute(tasks, cfg.workers, cfg.progress)
    cells = aggregate(records, r=cfg.r, trim_top=cfg.trim_top)
    report = RiskReport(config=cfg, records=records, cells=cells, worst_cells=worst_cells(cells))
    failed = sum(rec.failed for rec in records)
    if failed:
        logger.warning("%d of %d trials failed", failed, len(records))
    if out_dir is not None:
        write_report(report, out_dir)
        logger.info("sweep results written to %s", out_dir)
    return report


def main(argv: Optional[Sequence[str]] = None):
    """`sweep`: run a Monte Carlo risk sweep from a config file."""
    parser = argparse.ArgumentParser(prog="mra sweep", description="Run a Monte Carlo risk sweep")
    parser.add_argument("--config", required=True, help="sweep config (YAML or JSON)")
    parser.add_argument("--out-dir", required=True, help="directory for results.csv and report.json")
    parser.add_argument("--workers", type=int, default=None, help="override the worker count")
    parser.add_argument("--no-progress", action="store_true", help="disable the progress bar")
    args = parser.parse_args(argv)

    setup_logger()
    try:
        cfg = load_sweep_config(args.config)
        if args.workers is not None:
            cfg.workers = max(1, args.workers)
        if args.no_progress:
            cfg.progress = False
        report = risk_sweep(cfg, args.out_dir)
    except MRAError as e:
        print(f"[MRA] Error: {e}", file=sys.stderr)
        sys.exit(1)

    for cell in report.cells:
        print(json.dumps(cell))


if __name__ == "__main__":
    main()
