"""MRA model: signals, rotations, sampling, orbit loss and signal families."""
from .mra_model import (
    Alignment,
    align,
    assouad_phi,
    circ_dist,
    draw_signal,
    generic_signal,
    hamming_distance,
    hypercube_signal,
    kl_upper_gaussian,
    linf_orbit_distance,
    loss,
    minimize_over_rotation,
    noise_regime,
    orbit_alignment,
    phase_error,
    phases_equivalent,
    reference_rate,
    rotate,
    sample,
    tangent,
    to_complex,
)
from .formats import load_batch, load_signal, save_batch, save_signal

__all__ = [
    'Alignment', 'align', 'assouad_phi', 'circ_dist', 'draw_signal', 'generic_signal',
    'hamming_distance', 'hypercube_signal', 'kl_upper_gaussian', 'linf_orbit_distance',
    'loss', 'minimize_over_rotation', 'noise_regime', 'orbit_alignment', 'phase_error',
    'phases_equivalent', 'reference_rate', 'rotate', 'sample', 'tangent', 'to_complex',
    'load_batch', 'load_signal', 'save_batch', 'save_signal',
]
