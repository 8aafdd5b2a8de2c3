"""Heuristic minimizer of the l-infinity bispectrum-phase objective.

The exact argmin is a search over a K-torus; this does cyclic coordinate
descent instead. Each coordinate is scanned on a uniform grid, the best grid
point is refined by a bounded scalar search, and the move is kept only when
it strictly lowers the objective. The result therefore never scores worse
than its initialization, but it is a local answer that depends on it.
"""
import math
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from core.logger import get_logger
from core.models import BispectrumEstimate, PilotMode, wrap_phase
from .base import BasePilot, bispectrum_phases, pilot_objective
from .frequency_marching import frequency_marching_pilot

MODES = [PilotMode.PILOT_LINF.value]

GRID_POINTS = 256
MAX_SWEEPS = 50
IMPROVEMENT_TOL = 1e-14

logger = get_logger("mom.linf")


def _column_signs(estimate: BispectrumEstimate, j: int) -> np.ndarray:
    """Column j of M: coefficient of phi_j in every Phi_{k,l}."""
    ki, li = estimate.index_set.arrays()
    return (ki + li + 1 == j).astype(float) - (ki == j).astype(float) - (li == j).astype(float)


def linf_pilot(estimate: BispectrumEstimate, init: Optional[np.ndarray] = None,
               grid_points: int = GRID_POINTS, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    if init is None:
        init = frequency_marching_pilot(estimate)
    phi = np.atleast_1d(wrap_phase(np.asarray(init, dtype=float))).copy()
    if len(estimate.index_set) == 0:
        return phi

    arg = estimate.arg()
    columns = [_column_signs(estimate, j) for j in range(estimate.k_max)]
    grid = -math.pi + 2.0 * math.pi * np.arange(grid_points) / grid_points
    h = 2.0 * math.pi / grid_points
    current = pilot_objective(estimate, phi)

    for sweep in range(max_sweeps):
        improved = False
        for j, col in enumerate(columns):
            if not np.any(col):
                continue
            base = bispectrum_phases(phi, estimate)

            def objective(values, base=base, col=col, j=j):
                shifted = base[None, :] + np.outer(np.asarray(values) - phi[j], col)
                return np.max(np.abs(wrap_phase(arg[None, :] - shifted)), axis=1)

            scores = objective(grid)
            i = int(np.argmin(scores))
            res = minimize_scalar(lambda x: float(objective(np.array([x]))[0]),
                                  bounds=(grid[i] - h, grid[i] + h), method="bounded",
                                  options={"xatol": 1e-12})
            candidate, value = (float(res.x), float(res.fun)) if res.fun < scores[i] else (float(grid[i]), float(scores[i]))
            if value < current - IMPROVEMENT_TOL:
                phi[j] = wrap_phase(candidate)
                current = pilot_objective(estimate, phi)
                improved = True
        if not improved:
            break
    else:
        logger.debug("l-infinity descent stopped after %d sweeps", max_sweeps)

    return phi


class Pilot(BasePilot):
    mode = PilotMode.PILOT_LINF

    def pilot(self, init=None, **kwargs) -> np.ndarray:
        return linf_pilot(self.estimate, init=init)
