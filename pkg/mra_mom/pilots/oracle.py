"""Oracle unwrapping against the true phases (tests and benchmarks only)."""
import numpy as np

from core.errors import DimensionMismatchError, MRAError
from core.models import BispectrumEstimate, PilotMode, UnwrappedBispectrum
from .base import BasePilot, lift

MODES = [PilotMode.ORACLE.value]


def oracle_unwrap(estimate: BispectrumEstimate, phi_true) -> UnwrappedBispectrum:
    phi_true = np.asarray(phi_true, dtype=float)
    if phi_true.size != estimate.k_max:
        raise DimensionMismatchError("true phases differ in length from K", k=estimate.k_max, found=phi_true.size)
    return lift(estimate, phi_true, PilotMode.ORACLE)


class Pilot(BasePilot):
    mode = PilotMode.ORACLE

    def pilot(self, phi_true=None, **kwargs) -> np.ndarray:
        if phi_true is None:
            raise MRAError("oracle unwrapping needs the true phases")
        return np.asarray(phi_true, dtype=float)
