"""MRA experiment harness: Monte Carlo risk sweeps and scaling-exponent fits."""
from .fit import fit_scaling_exponent
from .mra_sweep import (
    aggregate,
    build_tasks,
    determinism_hash,
    load_report,
    load_sweep_config,
    records_frame,
    risk_sweep,
    run_estimator,
    run_trial,
    save_fits,
    worst_cells,
    write_report,
)

__all__ = [
    'fit_scaling_exponent', 'aggregate', 'build_tasks', 'determinism_hash', 'load_report',
    'load_sweep_config', 'records_frame', 'risk_sweep', 'run_estimator', 'run_trial', 'save_fits', 'worst_cells',
    'write_report',
]
