"""MRA method of moments: bispectrum estimation and inversion.

Pipeline:
1. power spectrum r_k from the debiased mean of |y_k|^2;
2. bispectrum B_{k,l} = mean of y_{k+l} conj(y_k) conj(y_l) over pairs k + l <= K;
3. lift each Arg B_{k,l} to a real value next to a pilot estimate, and solve
   the least-squares system Phi = M phi with the pseudo-inverse of M.
The rotation factors cancel in every bispectrum entry, so nothing here needs
the latent rotations.
"""
import argparse
import json
import sys
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

# ensure project root is importable when run as a script
sys.path.insert(0, str(Path(__file__).parent.parent))
from core.errors import DimensionMismatchError, MRAError, PhaseSystemError
from core.logger import get_logger, setup_logger
from core.models import (
    BispectrumEstimate,
    BispectrumIndexSet,
    Estimate,
    PhaseSystem,
    PilotMode,
    SampleBatch,
    SignalSpec,
    UnwrappedBispectrum,
    wrap_phase,
)
from mra_mom.pilots import get_pilot
from mra_mom.pilots.base import lift, pilot_objective

logger = get_logger("mom")

# complex entries per reduction chunk (16 MiB); chunk sums are accumulated in a fixed order
CHUNK_ELEMENTS = 1 << 20
DEGENERATE_MODULUS = 1e-12
# nonzero eigenvalues of M^T M are at least K + 1
KERNEL_EIG_CUTOFF = 0.5


def _chunked_mean(rows: int, width: int, term) -> np.ndarray:
    step = max(1, CHUNK_ELEMENTS // max(1, width))
    total = None
    for start in range(0, rows, step):
        part = np.sum(term(slice(start, min(start + step, rows))), axis=0)
        total = part if total is None else total + part
    return total / rows


def estimate_power(batch: SampleBatch) -> np.ndarray:
    """r_k = sqrt(max(0, mean |y_k|^2 - 2 sigma^2))."""
    second = _chunked_mean(batch.n, batch.k_max, lambda s: np.abs(batch.data[s]) ** 2)
    return np.sqrt(np.maximum(0.0, second - 2.0 * batch.sigma ** 2))


def _triple_products(rows: np.ndarray, ki: np.ndarray, li: np.ndarray) -> np.ndarray:
    out = rows[:, ki + li + 1]
    out *= np.conj(rows[:, ki])
    out *= np.conj(rows[:, li])
    return out


def estimate_bispectrum(batch: SampleBatch) -> BispectrumEstimate:
    index_set = BispectrumIndexSet.build(batch.k_max)
    ki, li = index_set.arrays()
    if len(index_set):
        b_hat = _chunked_mean(batch.n, len(index_set), lambda s: _triple_products(batch.data[s], ki, li))
    else:
        b_hat = np.zeros(0, dtype=complex)

    degenerate = tuple(index_set.pairs[i] for i in np.flatnonzero(np.abs(b_hat) < DEGENERATE_MODULUS))
    if degenerate:
        logger.warning("bispectrum entries with |B| < %g have meaningless phase: %s",
                       DEGENERATE_MODULUS, list(degenerate))
    return BispectrumEstimate(
        r_hat=estimate_power(batch),
        b_hat=b_hat,
        n=batch.n,
        index_set=index_set,
        degenerate=degenerate,
    )


@lru_cache(maxsize=128)
def build_phase_system(k_max: int) -> PhaseSystem:
    """M with row (k, l) equal to e_{k+l} - e_k - e_l, plus the spectrum of M^T M."""
    if k_max < 2:
        raise PhaseSystemError("the phase system needs K >= 2", k=k_max)
    index_set = BispectrumIndexSet.build(k_max)
    ki, li = index_set.arrays()
    n_rows = len(index_set)
    rows = np.repeat(np.arange(n_rows), 3)
    cols = np.stack([ki + li + 1, ki, li], axis=1).reshape(-1)
    vals = np.tile([1.0, -1.0, -1.0], n_rows)
    # duplicate (row, col) entries are summed, giving -2 on e_k when k == l
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(n_rows, k_max)).tocsr()

    gram = (matrix.T @ matrix).toarray()
    eigvals, eigvecs = np.linalg.eigh(gram)
    kernel = np.arange(1, k_max + 1, dtype=float)
    kernel /= np.linalg.norm(kernel)
    return PhaseSystem(
        k_max=k_max,
        index_set=index_set,
        matrix=matrix,
        kernel_dir=kernel,
        gram_eigvals=eigvals,
        gram_eigvecs=eigvecs,
    )


def pilot_unwrap(estimate: BispectrumEstimate, pilot, mode=PilotMode.PILOT_LINF) -> UnwrappedBispectrum:
    """Lift Arg B next to the pilot; `mode` labels where the pilot came from."""
    pilot = np.asarray(pilot, dtype=float)
    if pilot.size != estimate.k_max:
        raise DimensionMismatchError("pilot length differs from K", k=estimate.k_max, found=pilot.size)
    return lift(estimate, pilot, PilotMode(mode))


def solve_phases(system: PhaseSystem, unwrapped: UnwrappedBispectrum) -> np.ndarray:
    """Minimum-norm least-squares solution phi = M^+ Phi."""
    phi_big = np.asarray(unwrapped.phi_big, dtype=float)
    if phi_big.size != len(system.index_set):
        raise DimensionMismatchError("unwrapped bispectrum length differs from |I|",
                                     expected=len(system.index_set), found=phi_big.size)
    rhs = system.matrix.T @ phi_big
    keep = system.gram_eigvals > KERNEL_EIG_CUTOFF
    vecs = system.gram_eigvecs[:, keep]
    phi = vecs @ ((vecs.T @ rhs) / system.gram_eigvals[keep])
    # project off (1, 2, ..., K) once more against round-off
    return phi - system.kernel_dir * float(system.kernel_dir @ phi)


def run_mom(batch: SampleBatch, mode=PilotMode.FREQUENCY_MARCHING,
            phi_true=None, init=None) -> Estimate:
    """Full estimator; returns the signal with its diagnostics."""
    if batch.k_max < 2:
        raise PhaseSystemError("the method of moments needs K >= 2", k=batch.k_max)
    mode = PilotMode(mode)
    estimate = estimate_bispectrum(batch)
    system = build_phase_system(batch.k_max)

    anchor = get_pilot(mode, estimate).pilot(phi_true=phi_true, init=init)
    unwrapped = pilot_unwrap(estimate, anchor, mode)

    phases = solve_phases(system, unwrapped)
    signal = SignalSpec(magnitudes=estimate.r_hat, phases=wrap_phase(phases))
    diagnostics = {
        "mode": mode.value,
        "pilot_objective": pilot_objective(estimate, anchor),
        "bispectrum_count": len(estimate.index_set),
        "degenerate_pairs": [list(p) for p in estimate.degenerate],
    }
    return Estimate(method=f"mom-{mode.value}", signal=signal, diagnostics=diagnostics)


def mom_estimate(batch: SampleBatch, mode=PilotMode.FREQUENCY_MARCHING,
                 phi_true=None, init=None) -> SignalSpec:
    return run_mom(batch, mode=mode, phi_true=phi_true, init=init).signal


METHOD_MODES = {
    "mom-fm": PilotMode.FREQUENCY_MARCHING,
    "mom-linf": PilotMode.PILOT_LINF,
    "mom-oracle": PilotMode.ORACLE,
}


def main(argv: Optional[Sequence[str]] = None):
    """`estimate`: run an estimator on a saved batch."""
    from mra_model.formats import load_batch, load_signal
    from mra_model.mra_model import orbit_alignment

    parser = argparse.ArgumentParser(prog="mra estimate", description="Estimate a signal from a sample batch")
    parser.add_argument("--method", required=True, choices=list(METHOD_MODES) + ["mle", "mle-from-mom"])
    parser.add_argument("--in", dest="input", required=True, help="batch file")
    parser.add_argument("--truth", default=None, help="true signal file (enables loss, required by mom-oracle)")
    parser.add_argument("--out", default=None, help="estimate JSON path (default: stdout)")
    parser.add_argument("--trace", default=None, help="MLE optimizer trace (JSON lines)")
    args = parser.parse_args(argv)

    setup_logger()
    try:
        batch = load_batch(args.input)
        truth = load_signal(args.truth) if args.truth else None
        if args.method in METHOD_MODES:
            phi_true = truth.phases if truth is not None else None
            result = run_mom(batch, mode=METHOD_MODES[args.method], phi_true=phi_true)
            result.method = args.method
        else:
            from mra_mle.mra_mle import run_mle
            init = run_mom(batch).signal
            result = run_mle(batch, init, trace_path=args.trace, method=args.method)
        if truth is not None:
            alignment = orbit_alignment(result.signal, truth)
            result.loss, result.alpha = alignment.value, alignment.alpha
    except MRAError as e:
        print(f"[MRA] Error: {e}", file=sys.stderr)
        sys.exit(1)

    text = json.dumps(result.to_dict(), indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        logger.info("estimate written to %s", args.out)
    else:
        print(text)


if __name__ == "__main__":
    main()
