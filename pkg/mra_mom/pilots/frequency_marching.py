"""Frequency marching: phi~_1 = 0, phi~_k = Arg B_{1,k-1} + phi~_{k-1} mod 2 pi."""
import numpy as np

from core.errors import PhaseSystemError
from core.models import BispectrumEstimate, PilotMode, wrap_phase
from .base import BasePilot

MODES = [PilotMode.FREQUENCY_MARCHING.value]


def frequency_marching_pilot(estimate: BispectrumEstimate) -> np.ndarray:
    k_max = estimate.k_max
    if k_max < 2:
        raise PhaseSystemError("frequency marching needs K >= 2", k=k_max)
    arg = estimate.arg()
    index_set = estimate.index_set
    phi = np.zeros(k_max)
    for k in range(2, k_max + 1):
        phi[k - 1] = wrap_phase(arg[index_set.position(1, k - 1)] + phi[k - 2])
    return phi


class Pilot(BasePilot):
    mode = PilotMode.FREQUENCY_MARCHING

    def pilot(self, **kwargs) -> np.ndarray:
        return frequency_marching_pilot(self.estimate)
