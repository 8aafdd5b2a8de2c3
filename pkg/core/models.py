"""Core data models for the MRA toolkit.

All modules produce and consume these value types. Arrays held by the frozen
dataclasses are made read-only on construction, so every value is immutable
after it is built and can be shared between threads and worker processes.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Dict, Any, Optional, Tuple
import hashlib
import math

import numpy as np

from core.errors import (
    InvalidSignalError,
    InvalidSampleError,
    DimensionMismatchError,
    OptimizerError,
    QuadratureError,
    ConfigError,
)

TWO_PI = 2.0 * math.pi


def wrap_phase(x):
    """Reduce phases to [-pi, pi); pi itself maps to -pi."""
    wrapped = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


class PilotMode(str, Enum):
    """How the bispectrum phases are lifted before inversion."""
    ORACLE = "oracle"
    PILOT_LINF = "pilot-linf"
    FREQUENCY_MARCHING = "frequency-marching"


class Method(str, Enum):
    """Estimators the harness and CLI can run."""
    MOM_FM = "mom-fm"
    MOM_LINF = "mom-linf"
    MOM_ORACLE = "mom-oracle"
    MLE = "mle"
    MLE_FROM_MOM = "mle-from-mom"


class Family(str, Enum):
    """Signal families for simulation and sweeps."""
    GENERIC = "generic"
    HYPERCUBE = "hypercube"


@dataclass(frozen=True)
class SignalSpec:
    """A band-limited signal stored as K (magnitude, phase) Fourier pairs."""
    magnitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.magnitudes, dtype=float).reshape(-1)
        phi = np.asarray(self.phases, dtype=float).reshape(-1)
        if r.shape != phi.shape:
            raise DimensionMismatchError(
                "magnitudes and phases differ in length",
                magnitudes=r.size, phases=phi.size,
            )
        if r.size == 0:
            raise InvalidSignalError("a signal needs at least one frequency")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(phi))):
            raise InvalidSignalError("magnitudes and phases must be finite")
        if np.any(r < 0):
            raise InvalidSignalError("magnitudes must be nonnegative", min=float(r.min()))
        phi = np.atleast_1d(wrap_phase(phi))
        # phase is unidentifiable at zero magnitude
        phi = np.where(r == 0, 0.0, phi)
        object.__setattr__(self, "magnitudes", _frozen(r))
        object.__setattr__(self, "phases", _frozen(phi))

    @property
    def k_max(self) -> int:
        return int(self.magnitudes.size)

    @classmethod
    def from_complex(cls, coeffs) -> "SignalSpec":
        z = np.asarray(coeffs, dtype=complex).reshape(-1)
        return cls(magnitudes=np.abs(z), phases=np.angle(z))

    @classmethod
    def from_real(cls, theta) -> "SignalSpec":
        """Build from the interleaved real vector (Re 1, Im 1, ..., Re K, Im K)."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size % 2:
            raise DimensionMismatchError("real coordinates must have even length", size=theta.size)
        return cls.from_complex(theta[0::2] + 1j * theta[1::2])

    def to_complex(self) -> np.ndarray:
        return self.magnitudes * np.exp(1j * self.phases)

    def to_real(self) -> np.ndarray:
        z = self.to_complex()
        out = np.empty(2 * z.size)
        out[0::2] = z.real
        out[1::2] = z.imag
        return out

    def signal_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.magnitudes, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.phases, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k_max,
            "magnitudes": [float(x) for x in self.magnitudes],
            "phases": [float(x) for x in self.phases],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SignalSpec":
        try:
            spec = cls(magnitudes=data["magnitudes"], phases=data["phases"])
        except KeyError as e:
            raise InvalidSignalError(f"signal record missing key {e}")
        if "k" in data and int(data["k"]) != spec.k_max:
            raise DimensionMismatchError("declared k disagrees with data", k=data["k"], found=spec.k_max)
        return spec


@dataclass(frozen=True)
class RotationAngle:
    """A rotation of the circle, stored by its representative in [-pi, pi)."""
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", wrap_phase(float(self.alpha)))


@dataclass(frozen=True)
class SampleBatch:
    """N noisy rotated observations of one signal, in complex Fourier form."""
    data: np.ndarray  # (N, K) complex
    sigma: float
    seed: int
    signal_hash: str = ""
    no_rotation: bool = False
    debug: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidSampleError("batch data must be a nonempty N x K matrix", shape=data.shape)
        sigma = float(self.sigma)
        if not math.isfinite(sigma) or sigma < 0 or (sigma == 0 and not self.debug):
            raise InvalidSampleError("sigma must be positive (zero only in debug mode)", sigma=sigma)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def k_max(self) -> int:
        return int(self.data.shape[1])

    def header(self) -> Dict[str, Any]:
        return {
            "k": self.k_max,
            "n": self.n,
            "sigma": self.sigma,
            "seed": self.seed,
            "signal_hash": self.signal_hash,
            "no_rotation": self.no_rotation,
            "debug": self.debug,
        }


@dataclass(frozen=True)
class HypercubeLabel:
    """A vertex tau of {0,1}^K together with the phase offset phi."""
    tau: Tuple[int, ...]
    phi: float

    def __post_init__(self):
        tau = tuple(int(t) for t in self.tau)
        if any(t not in (0, 1) for t in tau):
            raise InvalidSignalError("tau must be a bit vector", tau=tau)
        phi = float(self.phi)
        if not (0.0 <= phi <= math.pi / 3):
            raise InvalidSignalError("hypercube phase offset must lie in [0, pi/3]", phi=phi)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class BispectrumIndexSet:
    """Ordered pairs (k, l) with k, l >= 1 and k + l <= K, lexicographic."""
    k_max: int
    pairs: Tuple[Tuple[int, int], ...]

    @classmethod
    def build(cls, k_max: int) -> "BispectrumIndexSet":
        pairs = tuple((k, l) for k in range(1, k_max + 1) for l in range(1, k_max + 1) if k + l <= k_max)
        return cls(k_max=int(k_max), pairs=pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Zero-based column indices (k-1, l-1) of every pair."""
        if not self.pairs:
            empty = np.zeros(0, dtype=int)
            return empty, empty
        idx = np.asarray(self.pairs, dtype=int)
        return idx[:, 0] - 1, idx[:, 1] - 1

    def position(self, k: int, l: int) -> int:
        # pairs are lexicographic, so the offset of row k is a triangular count
        return sum(self.k_max - j for j in range(1, k)) + (l - 1)


@dataclass(frozen=True)
class BispectrumEstimate:
    r_hat: np.ndarray
    b_hat: np.ndarray  # complex, indexed like BispectrumIndexSet.pairs
    n: int
    index_set: BispectrumIndexSet
    degenerate: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        r_hat = np.asarray(self.r_hat, dtype=float)
        b_hat = np.asarray(self.b_hat, dtype=complex)
        if np.any(r_hat < 0):
            raise InvalidSignalError("power estimates are clipped at zero", min=float(r_hat.min()))
        if b_hat.size != len(self.index_set):
            raise DimensionMismatchError("bispectrum length differs from index set",
                                         found=b_hat.size, expected=len(self.index_set))
        if not np.all(np.isfinite(b_hat)):
            raise InvalidSignalError("bispectrum estimate must be finite")
        object.__setattr__(self, "r_hat", _frozen(r_hat))
        object.__setattr__(self, "b_hat", _frozen(b_hat))

    @property
    def k_max(self) -> int:
        return self.index_set.k_max

    def arg(self) -> np.ndarray:
        """Principal arguments in [-pi, pi); Arg(0) is 0."""
        return np.atleast_1d(wrap_phase(np.angle(self.b_hat)))


@dataclass(frozen=True)
class PhaseSystem:
    """The matrix M with rows e_{k+l} - e_k - e_l, and its normal-equation spectrum."""
    k_max: int
    index_set: BispectrumIndexSet
    matrix: Any  # scipy.sparse.csr_matrix, shape (|I|, K)
    kernel_dir: np.ndarray
    gram_eigvals: np.ndarray
    gram_eigvecs: np.ndarray

    def __post_init__(self):
        for name in ("kernel_dir", "gram_eigvals", "gram_eigvecs"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float)))

    @property
    def rows(self) -> np.ndarray:
        return self.matrix.toarray()

    def gram(self) -> np.ndarray:
        return (self.matrix.T @ self.matrix).toarray()


@dataclass(frozen=True)
class UnwrappedBispectrum:
    phi_big: np.ndarray
    mode: PilotMode

    def __post_init__(self):
        object.__setattr__(self, "phi_big", _frozen(np.asarray(self.phi_big, dtype=float)))
        object.__setattr__(self, "mode", PilotMode(self.mode))


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform nodes on [-pi, pi) with trapezoid weights 2*pi/Q."""
    nodes: np.ndarray
    weights: np.ndarray

    MIN_NODES = 64

    @classmethod
    def uniform(cls, q: int) -> "QuadratureGrid":
        q = int(q)
        if q < cls.MIN_NODES:
            raise QuadratureError("quadrature needs at least 64 nodes", q=q)
        nodes = -math.pi + TWO_PI * np.arange(q) / q
        return cls(nodes=_frozen(nodes), weights=_frozen(np.full(q, TWO_PI / q)))

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def spacing(self) -> float:
        return TWO_PI / self.size

    def phasors(self, k_max: int) -> np.ndarray:
        """e^{i k alpha_q} for k = 1..K as a (K, Q) matrix."""
        k = np.arange(1, k_max + 1)[:, None]
        return np.exp(1j * k * self.nodes[None, :])


@dataclass(frozen=True)
class TiltedMoments:
    mean_vec: np.ndarray  # length 2K, interleaved real coordinates
    log_partition: float
    weights: np.ndarray
    cov_trace_form: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "mean_vec", _frozen(np.asarray(self.mean_vec, dtype=float)))
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 500
    grad_tol: Optional[float] = None  # None: 1e-6 * sqrt(2K / sigma^2)
    initial_step: float = 1.0  # in units of sigma^2
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if self.max_iters < 1 or self.initial_step <= 0 or self.armijo <= 0 or self.max_backtracks < 1:
            raise OptimizerError("optimizer settings must be positive", config=self.__dict__)
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise OptimizerError("grad_tol must be positive", grad_tol=self.grad_tol)
        if not (0.0 < self.shrink < 1.0):
            raise OptimizerError("shrink must lie in (0, 1)", shrink=self.shrink)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OptimizerConfig":
        keys = {"max_iters", "grad_tol", "initial_step", "shrink", "armijo", "max_backtracks"}
        return cls(**{k: v for k, v in data.items() if k in keys})


@dataclass
class Estimate:
    """An estimator's output plus the diagnostics the CLI writes out."""
    method: str
    signal: SignalSpec
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    loss: Optional[float] = None
    alpha: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "method": self.method,
            "k": self.signal.k_max,
            "r_hat": [float(x) for x in self.signal.magnitudes],
            "phi_hat": [float(x) for x in self.signal.phases],
            "diagnostics": self.diagnostics,
        }
        if self.loss is not None:
            out["loss"] = self.loss
            out["alpha"] = self.alpha
        return out


CSV_COLUMNS = ["k", "sigma", "n", "method", "replicate", "seed", "loss", "runtime_ms", "flag"]


@dataclass
class TrialRecord:
    """One Monte Carlo replicate of one sweep cell."""
    k: int
    sigma: float
    n: int
    method: str
    replicate: int
    seed: int
    loss: float
    runtime_ms: float
    flag: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    @property
    def failed(self) -> bool:
        return self.flag.startswith("error")


@dataclass
class SweepConfig:
    """A grid of (K, sigma, N, method) cells and how many replicates to run."""
    family: Family = Family.GENERIC
    k_grid: List[int] = field(default_factory=lambda: [4])
    sigma_grid: List[float] = field(default_factory=lambda: [1.0])
    n_grid: List[int] = field(default_factory=lambda: [1000])
    methods: List[Method] = field(default_factory=lambda: [Method.MOM_FM])
    replicates: int = 10
    base_seed: int = 0
    r: float = 1.0
    c_lo: float = 0.5
    c_hi: float = 2.0
    hypercube_phi: Optional[float] = None
    fixed_signal: bool = False
    n_scaling: Optional[Dict[str, float]] = None
    workers: int = 1
    trim_top: float = 0.02
    progress: bool = True

    def __post_init__(self):
        try:
            self.family = Family(self.family)
            self.methods = [Method(m) for m in self.methods]
        except ValueError as e:
            raise ConfigError(str(e))
        self.k_grid = [int(k) for k in self.k_grid]
        self.sigma_grid = [float(s) for s in self.sigma_grid]
        self.n_grid = [int(n) for n in self.n_grid]
        if self.n_scaling is not None:
            if "coefficient" not in self.n_scaling or "sigma_power" not in self.n_scaling:
                raise ConfigError("n_scaling needs coefficient and sigma_power", n_scaling=self.n_scaling)
        grids = [self.k_grid, self.sigma_grid, self.methods]
        if self.n_scaling is None:
            grids.append(self.n_grid)
        if not all(grids):
            raise ConfigError("all grids must be nonempty")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be at least 1", replicates=self.replicates)
        if any(k < 2 for k in self.k_grid):
            raise ConfigError("every K must be at least 2", k_grid=self.k_grid)
        if any(s < 0 for s in self.sigma_grid):
            raise ConfigError("sigma values must be nonnegative", sigma_grid=self.sigma_grid)
        if not (0 < self.c_lo <= self.c_hi) or self.r <= 0:
            raise ConfigError("need r > 0 and 0 < c_lo <= c_hi", r=self.r, c_lo=self.c_lo, c_hi=self.c_hi)
        if not (0.0 <= self.trim_top < 0.5):
            raise ConfigError("trim_top must lie in [0, 0.5)", trim_top=self.trim_top)
        self.replicates = int(self.replicates)
        self.base_seed = int(self.base_seed)
        self.workers = max(1, int(self.workers))

    def n_values(self, sigma: float) -> List[int]:
        if self.n_scaling is None:
            return list(self.n_grid)
        coef = float(self.n_scaling["coefficient"])
        power = float(self.n_scaling["sigma_power"])
        return [max(1, int(round(coef * sigma ** power)))]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError("unknown sweep config keys", keys=sorted(unknown))
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        out = {name: getattr(self, name) for name in self.__dataclass_fields__}
        out["family"] = self.family.value
        out["methods"] = [m.value for m in self.methods]
        return out


@dataclass
class RiskReport:
    """Per-replicate records, per-cell aggregates and any fitted exponents."""
    config: Optional[SweepConfig]
    records: List[TrialRecord] = field(default_factory=list)
    cells: List[Dict[str, Any]] = field(default_factory=list)
    worst_cells: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    fits: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict() if self.config else None,
            "cells": self.cells,
            "worst_cells": self.worst_cells,
            "fits": self.fits,
        }
