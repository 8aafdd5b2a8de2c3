"""MRA core model: signals, the rotation action, sampling and the orbit loss.

A signal is a vector theta of K complex Fourier coefficients
theta_k = r_k e^{i phi_k}. A rotation by alpha multiplies frequency k by
e^{i k alpha}. Observations are rotated copies plus complex Gaussian noise.
The loss between two signals is the squared distance between their orbits.
"""
import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

# ensure project root is importable when run as a script
sys.path.insert(0, str(Path(__file__).parent.parent))
from core.errors import (
    DimensionMismatchError,
    InvalidSampleError,
    InvalidSignalError,
    MRAError,
)
from core.logger import get_logger, setup_logger
from core.models import (
    Family,
    HypercubeLabel,
    RotationAngle,
    SampleBatch,
    SignalSpec,
    wrap_phase,
)
from mra_model.rng import stream

logger = get_logger("model")

# exp() overflows past this exponent
EXP_GUARD = 700.0
# grid angles times K evaluated at once by minimize_over_rotation
GRID_CHUNK_ELEMENTS = 1 << 20


@dataclass(frozen=True)
class Alignment:
    """Result of minimizing a periodic objective over rotations."""
    value: float
    alpha: float


def to_complex(signal: SignalSpec) -> np.ndarray:
    return signal.to_complex()


def rotate(signal: SignalSpec, alpha) -> SignalSpec:
    """Apply g(alpha): phase k becomes phi_k + k*alpha."""
    if isinstance(alpha, RotationAngle):
        alpha = alpha.alpha
    k = np.arange(1, signal.k_max + 1)
    return SignalSpec(magnitudes=signal.magnitudes, phases=signal.phases + k * float(alpha))


def tangent(signal: SignalSpec) -> np.ndarray:
    """g'(0) theta in interleaved real coordinates: d/dalpha of r_k e^{i(phi_k + k alpha)}."""
    k = np.arange(1, signal.k_max + 1)
    dz = 1j * k * signal.to_complex()
    out = np.empty(2 * signal.k_max)
    out[0::2] = dz.real
    out[1::2] = dz.imag
    return out


def circ_dist(a, b):
    """Circular distance min_j |a - b + 2 pi j|, in [0, pi]."""
    d = np.abs(wrap_phase(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    if np.ndim(d) == 0:
        return float(d)
    return d


def _check_same_k(a: SignalSpec, b: SignalSpec):
    if a.k_max != b.k_max:
        raise DimensionMismatchError("signals have different K", left=a.k_max, right=b.k_max)


def alpha_grid_size(k_max: int) -> int:
    return max(1024, 64 * k_max)


def rotation_grid(grid_size: int) -> np.ndarray:
    return -math.pi + 2.0 * math.pi * np.arange(grid_size) / grid_size


def minimize_over_rotation(objective: Callable[[np.ndarray], np.ndarray],
                           grid_size: int,
                           refine: bool = True,
                           width: int = 1,
                           grid_values: Optional[np.ndarray] = None) -> Alignment:
    """Global minimum of a 2*pi-periodic objective: dense grid, then a bounded
    scalar search inside the best grid bracket.

    `objective` takes an array of angles and returns an array of values. It is
    called on slices of the grid holding about GRID_CHUNK_ELEMENTS / width
    angles, where `width` is the per-angle size of its intermediates.
    `grid_values`, when given, replaces the grid pass entirely.
    """
    grid = rotation_grid(grid_size)
    if grid_values is None:
        step = max(1, GRID_CHUNK_ELEMENTS // max(1, width))
        values = np.concatenate([objective(grid[i:i + step]) for i in range(0, grid_size, step)])
    else:
        values = np.asarray(grid_values, dtype=float)
    i = int(np.argmin(values))
    best_alpha, best_value = float(grid[i]), float(values[i])
    if refine:
        h = 2.0 * math.pi / grid_size
        res = minimize_scalar(
            lambda a: float(objective(np.array([a]))[0]),
            bounds=(best_alpha - h, best_alpha + h),
            method="bounded",
            options={"xatol": 1e-13},
        )
        if res.fun < best_value:
            best_alpha, best_value = float(res.x), float(res.fun)
    return Alignment(value=best_value, alpha=wrap_phase(best_alpha))


def _orbit_distances(z_hat: np.ndarray, z: np.ndarray, grid_size: int) -> np.ndarray:
    """||z_hat - g(alpha) z||^2 on the rotation grid through one inverse FFT.

    The distance is ||z_hat||^2 + ||z||^2 - 2 Re sum_k conj(z_hat_k) z_k e^{ik alpha},
    a trigonometric polynomial of degree K < grid_size. On alpha_j = -pi + 2 pi j / G
    the factor e^{ik alpha_j} is (-1)^k e^{2 pi i k j / G}.
    """
    k = np.arange(1, z.size + 1)
    coeffs = np.zeros(grid_size, dtype=complex)
    coeffs[k] = np.conj(z_hat) * z * np.where(k % 2, -1.0, 1.0)
    cross = np.fft.ifft(coeffs) * grid_size
    return float(np.vdot(z_hat, z_hat).real + np.vdot(z, z).real) - 2.0 * cross.real


def orbit_alignment(theta_hat: SignalSpec, theta: SignalSpec) -> Alignment:
    """min over alpha of ||theta_hat - g(alpha) theta||^2, with the minimizing alpha."""
    _check_same_k(theta_hat, theta)
    z_hat = theta_hat.to_complex()
    z = theta.to_complex()
    k = np.arange(1, theta.k_max + 1)

    def objective(alphas):
        rotated = z[None, :] * np.exp(1j * np.outer(alphas, k))
        return np.sum(np.abs(z_hat[None, :] - rotated) ** 2, axis=1)

    grid_size = alpha_grid_size(theta.k_max)
    best = minimize_over_rotation(objective, grid_size, grid_values=_orbit_distances(z_hat, z, grid_size))
    return Alignment(value=max(0.0, best.value), alpha=best.alpha)


def loss(theta_hat: SignalSpec, theta: SignalSpec) -> float:
    return orbit_alignment(theta_hat, theta).value


def align(theta_hat: SignalSpec, theta: SignalSpec) -> SignalSpec:
    """The representative of theta_hat's orbit closest to theta."""
    return rotate(theta_hat, -orbit_alignment(theta_hat, theta).alpha)


def phase_error(phi_hat, phi) -> float:
    """inf over alpha of sum_k |phi_hat_k - phi_k + k alpha|^2 (circular)."""
    phi_hat = np.asarray(phi_hat, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi_hat.shape != phi.shape:
        raise DimensionMismatchError("phase vectors differ in length", left=phi_hat.size, right=phi.size)
    k = np.arange(1, phi.size + 1)
    diff = phi_hat - phi

    def objective(alphas):
        return np.sum(circ_dist(diff[None, :] + np.outer(alphas, k), 0.0) ** 2, axis=1)

    return minimize_over_rotation(objective, alpha_grid_size(phi.size), width=phi.size).value


def linf_orbit_distance(phi, phi_p, grid_size: int = 1 << 16) -> float:
    """min over alpha of max_k |phi_k - phi'_k - k alpha| (circular)."""
    phi = np.asarray(phi, dtype=float)
    phi_p = np.asarray(phi_p, dtype=float)
    k = np.arange(1, phi.size + 1)
    diff = phi - phi_p

    def objective(alphas):
        return np.max(circ_dist(diff[None, :] - np.outer(alphas, k), 0.0), axis=1)

    return minimize_over_rotation(objective, grid_size, width=phi.size).value


def phases_equivalent(phi, phi_p, tol: float = 1e-9) -> bool:
    """True when phi' and phi describe the same Fourier phases up to rotation."""
    return linf_orbit_distance(phi, phi_p) <= tol


def sample(signal: SignalSpec, sigma: float, n: int, seed: int,
           no_rotation: bool = False, debug: bool = False) -> SampleBatch:
    """Draw N observations y_k = r_k e^{i(phi_k + k alpha)} + sigma * eps_k.

    eps_k has independent standard normal real and imaginary parts. Rotations
    and noise come from separate streams of the same seed. `no_rotation`
    fixes every alpha at 0; `debug` additionally allows sigma = 0.
    """
    sigma = float(sigma)
    if int(n) < 1:
        raise InvalidSampleError("sample count must be at least 1", n=n)
    if sigma < 0 or (sigma == 0 and not debug) or not math.isfinite(sigma):
        raise InvalidSampleError("sigma must be positive", sigma=sigma)
    n = int(n)
    k = np.arange(1, signal.k_max + 1)

    if no_rotation:
        alphas = np.zeros(n)
    else:
        alphas = stream(seed, "rotation").uniform(-math.pi, math.pi, size=n)
    noise_rng = stream(seed, "noise")
    eps = noise_rng.standard_normal((n, signal.k_max)) + 1j * noise_rng.standard_normal((n, signal.k_max))

    clean = signal.to_complex()[None, :] * np.exp(1j * np.outer(alphas, k))
    data = clean + sigma * eps
    return SampleBatch(
        data=data,
        sigma=sigma,
        seed=seed,
        signal_hash=signal.signal_hash(),
        no_rotation=no_rotation,
        debug=debug,
    )


def generic_signal(k_max: int, r: float, c_lo: float, c_hi: float, seed: int) -> SignalSpec:
    """A draw from Theta(r): magnitudes uniform on [c_lo r, c_hi r], phases uniform."""
    if not (0 < c_lo <= c_hi) or r <= 0 or int(k_max) < 1:
        raise InvalidSignalError("need K >= 1, r > 0 and 0 < c_lo <= c_hi", k=k_max, r=r, c_lo=c_lo, c_hi=c_hi)
    rng = stream(seed, "signal")
    magnitudes = rng.uniform(c_lo * r, c_hi * r, size=int(k_max))
    phases = rng.uniform(-math.pi, math.pi, size=int(k_max))
    return SignalSpec(magnitudes=magnitudes, phases=phases)


def hypercube_signal(k_max: int, r: float, label: HypercubeLabel) -> SignalSpec:
    """Equal magnitudes r and phases tau_k * phi."""
    if len(label.tau) != int(k_max):
        raise DimensionMismatchError("tau length differs from K", k=k_max, tau=len(label.tau))
    tau = np.asarray(label.tau, dtype=float)
    return SignalSpec(magnitudes=np.full(int(k_max), float(r)), phases=tau * label.phi)


def hamming_distance(a: HypercubeLabel, b: HypercubeLabel) -> int:
    return int(sum(x != y for x, y in zip(a.tau, b.tau)))


def assouad_phi(k_max: int, r: float, sigma: float, n: int) -> float:
    """Largest hypercube offset keeping neighbouring KL divergences below 1/N."""
    if k_max < 1 or r <= 0 or sigma <= 0 or n < 1:
        raise InvalidSignalError("assouad_phi needs positive inputs", k=k_max, r=r, sigma=sigma, n=n)
    exponent = 3.0 * k_max * r ** 2 / (2.0 * sigma ** 2)
    if exponent > EXP_GUARD:
        a = 0.0
    else:
        a = 2.0 * sigma ** 6 / (3.0 * k_max * r ** 4 * math.exp(exponent))
    first = max(math.sqrt(2.0 * sigma ** 2), math.sqrt(a)) / (r * math.sqrt(n))
    return min(first, math.pi / 3)


def kl_upper_gaussian(theta: SignalSpec, theta_p: SignalSpec, sigma: float, mode: str = "low") -> float:
    """Upper bounds on KL(p_theta || p_theta').

    mode="low": ||theta - theta'||^2 / (2 sigma^2).
    mode="high": the high-noise bound mixing power-spectrum differences with the
    rotation-aligned phase differences; +inf when its exponentials overflow.
    """
    _check_same_k(theta, theta_p)
    if sigma <= 0:
        raise InvalidSampleError("sigma must be positive", sigma=sigma)
    if mode == "low":
        return float(np.sum((theta.to_real() - theta_p.to_real()) ** 2) / (2.0 * sigma ** 2))
    if mode != "high":
        raise InvalidSignalError("unknown KL bound mode", mode=mode)

    r, rp = theta.magnitudes, theta_p.magnitudes
    big_r2 = max(float(np.sum(r ** 2)), float(np.sum(rp ** 2)))
    r_bar = max(float(r.max()), float(rp.max()))
    if 3.0 * big_r2 / (2.0 * sigma ** 2) > EXP_GUARD:
        return math.inf

    k = np.arange(1, theta.k_max + 1)
    diff = theta.phases - theta_p.phases
    weights = r * rp

    def objective(alphas):
        return np.sum(weights[None, :] * circ_dist(diff[None, :] + np.outer(alphas, k), 0.0) ** 2, axis=1)

    phase_term = minimize_over_rotation(objective, alpha_grid_size(theta.k_max), width=theta.k_max).value
    first = math.exp(big_r2 / (2.0 * sigma ** 2)) / (4.0 * sigma ** 4) * float(np.sum((r ** 2 - rp ** 2) ** 2))
    second = (3.0 * r_bar ** 2 * big_r2 * math.exp(3.0 * big_r2 / (2.0 * sigma ** 2)) / (2.0 * sigma ** 6)
              * (float(np.sum((r - rp) ** 2)) + phase_term))
    return first + second


def noise_regime(k_max: int, r: float, sigma: float) -> str:
    """'high' when sigma^2 >= K r^2, 'low' when sigma^2 <= K r^2 / log K, else 'intermediate'."""
    snr = k_max * r ** 2
    if sigma ** 2 >= snr:
        return "high"
    if k_max > 1 and sigma ** 2 <= snr / math.log(k_max):
        return "low"
    return "intermediate"


def reference_rate(k_max: int, r: float, sigma: float, n: int) -> float:
    """Minimax risk scale without constants: sigma^6/(r^4 N) or K sigma^2 / N."""
    high = sigma ** 6 / (r ** 4 * n)
    low = k_max * sigma ** 2 / n
    regime = noise_regime(k_max, r, sigma)
    if regime == "high":
        return high
    if regime == "low":
        return low
    return max(high, low)


def draw_signal(family: Family, k_max: int, r: float, seed: int,
                c_lo: float = 0.5, c_hi: float = 2.0,
                sigma: Optional[float] = None, n: Optional[int] = None,
                phi: Optional[float] = None) -> SignalSpec:
    """One signal from a family; hypercube vertices are drawn uniformly.

    Without an explicit phi the hypercube offset comes from assouad_phi(K, r, sigma, N).
    """
    family = Family(family)
    if family is Family.GENERIC:
        return generic_signal(k_max, r, c_lo, c_hi, seed)
    if phi is None:
        if not sigma or not n:
            phi = math.pi / 3
        else:
            phi = assouad_phi(k_max, r, sigma, n)
    tau = stream(seed, "signal").integers(0, 2, size=k_max)
    return hypercube_signal(k_max, r, HypercubeLabel(tau=tuple(tau), phi=phi))


def main(argv: Optional[Sequence[str]] = None):
    """`simulate`: draw a signal and a sample batch and write them to disk."""
    from mra_model.formats import save_batch, save_signal

    parser = argparse.ArgumentParser(prog="mra simulate", description="Simulate an MRA sample batch")
    parser.add_argument("--k", type=int, required=True, help="number of Fourier frequencies K")
    parser.add_argument("--sigma", type=float, required=True, help="noise level")
    parser.add_argument("--n", type=int, required=True, help="number of samples N")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--family", choices=[f.value for f in Family], default=Family.GENERIC.value)
    parser.add_argument("--r", type=float, default=1.0)
    parser.add_argument("--c-lo", type=float, default=0.5)
    parser.add_argument("--c-hi", type=float, default=2.0)
    parser.add_argument("--phi", type=float, default=None, help="hypercube phase offset (default: assouad_phi)")
    parser.add_argument("--no-rotation", action="store_true", help="rotation-free model")
    parser.add_argument("--debug", action="store_true", help="allow sigma = 0")
    parser.add_argument("--out", required=True, help="batch file path")
    parser.add_argument("--signal-out", default=None, help="where to save the true signal (default: <out>.signal.json)")
    args = parser.parse_args(argv)

    setup_logger()
    try:
        signal = draw_signal(args.family, args.k, args.r, args.seed, args.c_lo, args.c_hi,
                             sigma=args.sigma, n=args.n, phi=args.phi)
        batch = sample(signal, args.sigma, args.n, args.seed, no_rotation=args.no_rotation, debug=args.debug)
        out = Path(args.out)
        save_batch(batch, out)
        signal_out = Path(args.signal_out) if args.signal_out else out.with_suffix(".signal.json")
        save_signal(signal, signal_out)
    except MRAError as e:
        print(f"[MRA] Error: {e}", file=sys.stderr)
        sys.exit(1)

    logger.info("wrote %d samples (K=%d, sigma=%g) to %s", batch.n, batch.k_max, batch.sigma, out)
    print(json.dumps({"batch": str(out), "signal": str(signal_out), **batch.header()}, indent=2))


if __name__ == "__main__":
    main()
