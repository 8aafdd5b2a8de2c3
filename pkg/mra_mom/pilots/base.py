import numpy as np

from core.models import BispectrumEstimate, PilotMode, UnwrappedBispectrum, wrap_phase


def bispectrum_phases(phi, estimate: BispectrumEstimate) -> np.ndarray:
    """Phi_{k,l} = phi_{k+l} - phi_k - phi_l, computed in R (not mod 2 pi)."""
    phi = np.asarray(phi, dtype=float)
    ki, li = estimate.index_set.arrays()
    return phi[ki + li + 1] - phi[ki] - phi[li]


def pilot_objective(estimate: BispectrumEstimate, phi) -> float:
    """max over pairs of |Arg B_{k,l} - (phi_{k+l} - phi_k - phi_l)| (circular)."""
    if len(estimate.index_set) == 0:
        return 0.0
    gaps = np.abs(wrap_phase(estimate.arg() - bispectrum_phases(phi, estimate)))
    return float(np.max(gaps))


def lift(estimate: BispectrumEstimate, anchor, mode: PilotMode) -> UnwrappedBispectrum:
    """Choose the version of Arg B_{k,l} lying in [Phi~ - pi, Phi~ + pi)."""
    anchor = np.atleast_1d(wrap_phase(np.asarray(anchor, dtype=float)))
    phi_tilde = bispectrum_phases(anchor, estimate)
    phi_big = phi_tilde + np.atleast_1d(wrap_phase(estimate.arg() - phi_tilde))
    return UnwrappedBispectrum(phi_big=phi_big, mode=mode)


class BasePilot:
    """A strategy producing a pilot phase vector from a bispectrum estimate."""
    mode: PilotMode = None

    def __init__(self, estimate: BispectrumEstimate):
        self.estimate = estimate

    def pilot(self, **kwargs) -> np.ndarray:
        raise NotImplementedError()

    def unwrap(self, **kwargs) -> UnwrappedBispectrum:
        return lift(self.estimate, self.pilot(**kwargs), self.mode)
