"""MRA method of moments: bispectrum estimation, phase unwrapping and inversion."""
from .mra_mom import (
    build_phase_system,
    estimate_bispectrum,
    estimate_power,
    mom_estimate,
    pilot_unwrap,
    run_mom,
    solve_phases,
)
from .pilots import get_pilot
from .pilots.base import pilot_objective
from .pilots.frequency_marching import frequency_marching_pilot
from .pilots.linf import linf_pilot
from .pilots.oracle import oracle_unwrap

__all__ = [
    'build_phase_system', 'estimate_bispectrum', 'estimate_power', 'mom_estimate',
    'pilot_unwrap', 'run_mom', 'solve_phases', 'get_pilot', 'pilot_objective',
    'frequency_marching_pilot', 'linf_pilot', 'oracle_unwrap',
]
