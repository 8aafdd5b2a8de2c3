"""MRA marginalized maximum likelihood.

The latent rotation is integrated out on a uniform quadrature grid:

    R_N(theta) = K log(2 pi sigma^2) + ||theta||^2 / (2 sigma^2)
                 + mean_m [ ||y_m||^2 / (2 sigma^2) - log mean_q exp(s_mq) ]

with s_mq = <y_m, g(alpha_q) theta> / sigma^2. The softmax of s_m over q is the
tilted rotation law of sample m; its mean and variance give the gradient and
Hessian quadratic forms. Everything is evaluated in chunks of samples with
log-sum-exp stabilization.
"""
import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

# ensure project root is importable when run as a script
sys.path.insert(0, str(Path(__file__).parent.parent))
from core.config import module_config
from core.errors import DimensionMismatchError, InvalidSampleError, InvalidSignalError, QuadratureError
from core.logger import get_logger
from core.models import Estimate, OptimizerConfig, QuadratureGrid, SampleBatch, SignalSpec, TiltedMoments
from mra_model.mra_model import align
from mra_mom.mra_mom import mom_estimate

logger = get_logger("mle")

DEFAULTS: Dict[str, Any] = {
    "max_iters": 500,
    "grad_tol_scale": 1.0e-6,
    "initial_step": 1.0,
    "shrink": 0.5,
    "armijo": 1.0e-4,
    "max_backtracks": 40,
    "min_nodes": 1024,
    "nodes_per_peak": 16,
    "chunk_size": 2048,
}

UNIT_TOL = 1e-8


def load_settings() -> Dict[str, Any]:
    return module_config(__file__, DEFAULTS)


def _to_real(z: np.ndarray) -> np.ndarray:
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def _to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[0::2] + 1j * x[1::2]


def _check_batch(theta: SignalSpec, batch: SampleBatch):
    if theta.k_max != batch.k_max:
        raise DimensionMismatchError("signal and batch have different K", signal=theta.k_max, batch=batch.k_max)
    if batch.sigma <= 0:
        raise InvalidSampleError("the likelihood needs sigma > 0", sigma=batch.sigma)


def default_quadrature(batch: SampleBatch, init: Optional[SignalSpec] = None,
                       min_nodes: int = 1024, nodes_per_peak: int = 16) -> QuadratureGrid:
    """max(min_nodes, 16 K^1.5 max r / sigma) nodes, rounded up to a power of two."""
    if batch.sigma <= 0:
        raise InvalidSampleError("the likelihood needs sigma > 0", sigma=batch.sigma)
    if init is not None:
        r_max = float(np.max(init.magnitudes))
    else:
        second = np.mean(np.abs(batch.data) ** 2, axis=0)
        r_max = float(np.max(np.sqrt(np.maximum(0.0, second - 2.0 * batch.sigma ** 2))))
    q = max(int(min_nodes), math.ceil(nodes_per_peak * batch.k_max ** 1.5 * r_max / batch.sigma))
    return QuadratureGrid.uniform(1 << (q - 1).bit_length())


def _scores(z: np.ndarray, y: np.ndarray, sigma: float, phasors: np.ndarray) -> np.ndarray:
    """s_mq = Re sum_k conj(y_mk) theta_k e^{i k alpha_q} / sigma^2, shape (m, Q)."""
    return ((np.conj(y) * z[None, :]) @ phasors).real / sigma ** 2


def _log_partitions(scores: np.ndarray) -> np.ndarray:
    lse = logsumexp(scores, axis=1) - math.log(scores.shape[1])
    if not np.all(np.isfinite(lse)):
        raise QuadratureError("tilted normalization is not finite", bad=int(np.sum(~np.isfinite(lse))))
    return lse


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _evaluate(z: np.ndarray, batch: SampleBatch, quad: QuadratureGrid,
              with_grad: bool = True, chunk_size: int = 2048) -> Tuple[float, Optional[np.ndarray]]:
    """R_N and (optionally) its gradient in complex form; sums reduced in chunk order."""
    sigma2 = batch.sigma ** 2
    phasors = quad.phasors(batch.k_max)
    inner = 0.0
    tilted_sum = np.zeros(batch.k_max, dtype=complex)
    for s in _chunks(batch.n, chunk_size):
        y = batch.data[s]
        scores = _scores(z, y, batch.sigma, phasors)
        lse = _log_partitions(scores)
        inner += float(np.sum(np.sum(np.abs(y) ** 2, axis=1) / (2.0 * sigma2) - lse))
        if with_grad:
            weights = softmax(scores, axis=1)
            tilted_sum += np.sum(y * (weights @ np.conj(phasors).T), axis=0)

    k_max = batch.k_max
    value = k_max * math.log(2.0 * math.pi * sigma2) + float(np.sum(np.abs(z) ** 2)) / (2.0 * sigma2) + inner / batch.n
    if not math.isfinite(value):
        raise QuadratureError("negative log-likelihood is not finite", value=value)
    grad = z / sigma2 - tilted_sum / (batch.n * sigma2) if with_grad else None
    return value, grad


def neg_loglik(theta: SignalSpec, batch: SampleBatch, quad: QuadratureGrid, chunk_size: int = 2048) -> float:
    _check_batch(theta, batch)
    value, _ = _evaluate(theta.to_complex(), batch, quad, with_grad=False, chunk_size=chunk_size)
    return value


def grad_neg_loglik(theta: SignalSpec, batch: SampleBatch, quad: QuadratureGrid, chunk_size: int = 2048) -> np.ndarray:
    """Gradient in interleaved real coordinates (Re theta_1, Im theta_1, ...)."""
    _check_batch(theta, batch)
    _, grad = _evaluate(theta.to_complex(), batch, quad, with_grad=True, chunk_size=chunk_size)
    return _to_real(grad)


def _direction(v, k_max: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size != 2 * k_max:
        raise DimensionMismatchError("direction must have length 2K", expected=2 * k_max, found=v.size)
    if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_TOL:
        raise InvalidSignalError("direction must be a unit vector", norm=float(np.linalg.norm(v)))
    return _to_complex(v)


def _projections(vc: np.ndarray, y: np.ndarray, phasors: np.ndarray) -> np.ndarray:
    """v^T g(alpha_q)^{-1} y_m, shape (m, Q)."""
    return ((np.conj(vc)[None, :] * y) @ np.conj(phasors)).real


def tilted_moments(theta: SignalSpec, y, sigma: float, quad: QuadratureGrid, v=None) -> TiltedMoments:
    """Tilted rotation law of one observation y (K complex coefficients)."""
    y = np.asarray(y, dtype=complex).reshape(1, -1)
    if y.shape[1] != theta.k_max:
        raise DimensionMismatchError("observation length differs from K", k=theta.k_max, found=y.shape[1])
    if sigma <= 0:
        raise InvalidSampleError("the tilted law needs sigma > 0", sigma=sigma)
    phasors = quad.phasors(theta.k_max)
    scores = _scores(theta.to_complex(), y, sigma, phasors)
    log_partition = float(_log_partitions(scores)[0])
    weights = softmax(scores, axis=1)
    mean = y[0] * (weights @ np.conj(phasors).T)[0]

    variance = None
    if v is not None:
        proj = _projections(_direction(v, theta.k_max), y, phasors)[0]
        first = float(weights[0] @ proj)
        variance = max(0.0, float(weights[0] @ proj ** 2) - first ** 2)
    return TiltedMoments(mean_vec=_to_real(mean), log_partition=log_partition,
                         weights=weights[0], cov_trace_form=variance)


def hessian_quadform(theta: SignalSpec, v, batch: SampleBatch, quad: QuadratureGrid, chunk_size: int = 2048) -> float:
    """v^T Hess R_N(theta) v = 1/sigma^2 - mean_m Var_m[v^T g^{-1} y_m] / sigma^4."""
    _check_batch(theta, batch)
    vc = _direction(v, theta.k_max)
    z = theta.to_complex()
    phasors = quad.phasors(theta.k_max)
    total_var = 0.0
    for s in _chunks(batch.n, chunk_size):
        y = batch.data[s]
        scores = _scores(z, y, batch.sigma, phasors)
        _log_partitions(scores)
        weights = softmax(scores, axis=1)
        proj = _projections(vc, y, phasors)
        first = np.sum(weights * proj, axis=1)
        total_var += float(np.sum(np.maximum(0.0, np.sum(weights * proj ** 2, axis=1) - first ** 2)))
    sigma2 = batch.sigma ** 2
    return 1.0 / sigma2 - total_var / (batch.n * sigma2 ** 2)


def optimizer_config(settings: Optional[Dict[str, Any]] = None) -> OptimizerConfig:
    return OptimizerConfig.from_dict(settings or load_settings())


def _descend(z0: np.ndarray, batch: SampleBatch, quad: QuadratureGrid, cfg: OptimizerConfig,
             grad_tol: float, chunk_size: int) -> Tuple[np.ndarray, Dict[str, Any], List[Dict[str, Any]]]:
    """Gradient descent with Armijo backtracking; every accepted step lowers R_N."""
    z = z0.copy()
    value, grad = _evaluate(z, batch, quad, chunk_size=chunk_size)
    initial_value = value
    base_step = cfg.initial_step * batch.sigma ** 2
    trace: List[Dict[str, Any]] = []
    flags: List[str] = []
    converged = False
    it = 0

    for it in range(cfg.max_iters):
        grad_norm = float(np.linalg.norm(_to_real(grad)))
        if grad_norm <= grad_tol:
            converged = True
            trace.append({"iter": it, "r_n": value, "grad_norm": grad_norm, "step": 0.0})
            break
        step = base_step
        accepted = False
        for _ in range(cfg.max_backtracks):
            candidate = z - step * grad
            cand_value, _ = _evaluate(candidate, batch, quad, with_grad=False, chunk_size=chunk_size)
            if cand_value <= value - cfg.armijo * step * grad_norm ** 2:
                accepted = True
                break
            step *= cfg.shrink
        trace.append({"iter": it, "r_n": value, "grad_norm": grad_norm, "step": step if accepted else 0.0})
        if not accepted:
            flags.append("line_search_failed")
            logger.warning("line search failed at iteration %d (grad norm %.3e)", it, grad_norm)
            break
        z = candidate
        value, grad = _evaluate(z, batch, quad, chunk_size=chunk_size)
    else:
        flags.append("max_iters")
        logger.warning("likelihood descent did not converge in %d iterations", cfg.max_iters)

    info = {
        "converged": converged,
        "iterations": len(trace),
        "r_n_init": initial_value,
        "r_n": value,
        "grad_norm": float(np.linalg.norm(_to_real(grad))),
        "grad_tol": grad_tol,
        "flags": flags,
    }
    return z, info, trace


def run_mle(batch: SampleBatch, init: Optional[SignalSpec] = None, cfg: Optional[OptimizerConfig] = None,
            quad: Optional[QuadratureGrid] = None, trace_path: Optional[str] = None,
            method: str = "mle") -> Estimate:
    """Local likelihood optimization from `init` (default: the MoM estimate).

    The result is rotated onto init's orbit representative.
    """
    if init is None:
        init = mom_estimate(batch)
    _check_batch(init, batch)
    settings = load_settings()
    cfg = cfg or optimizer_config(settings)
    quad = quad or default_quadrature(batch, init, settings["min_nodes"], settings["nodes_per_peak"])
    grad_tol = cfg.grad_tol
    if grad_tol is None:
        grad_tol = float(settings["grad_tol_scale"]) * math.sqrt(2.0 * batch.k_max / batch.sigma ** 2)

    logger.debug("MLE: K=%d N=%d sigma=%g Q=%d", batch.k_max, batch.n, batch.sigma, quad.size)
    z, info, trace = _descend(init.to_complex(), batch, quad, cfg, grad_tol, int(settings["chunk_size"]))
    signal = align(SignalSpec.from_complex(z), init)

    if trace_path:
        path = Path(trace_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for row in trace:
                f.write(json.dumps(row) + "\n")

    info["quad_nodes"] = quad.size
    info["r_n_trace"] = [row["r_n"] for row in trace]
    return Estimate(method=method, signal=signal, diagnostics=info)


def mle_estimate(batch: SampleBatch, init: Optional[SignalSpec] = None, cfg: Optional[OptimizerConfig] = None,
                 quad: Optional[QuadratureGrid] = None) -> SignalSpec:
    return run_mle(batch, init, cfg=cfg, quad=quad).signal
