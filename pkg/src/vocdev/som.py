"""One-dimensional self-organizing map (layer Y)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, EmptyDataset, FrozenModel

ALPHA_FLOOR = 1e-4
SIGMA_FLOOR = 1.0


@dataclass(frozen=True)
class DecaySchedules:
    alpha0: float = 0.5
    sigma0: float = 200.0
    tau_alpha: float = 25000.0
    tau_sigma: float = 25000.0
    total_iterations: int = 100000

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1:
            raise ValueError("alpha0 must lie in (0, 1]")
        if self.sigma0 < 1:
            raise ValueError("sigma0 must be >= 1")
        if self.tau_alpha <= 0 or self.tau_sigma <= 0:
            raise ValueError("decay constants must be positive")
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")

    @classmethod
    def for_iterations(cls, total_iterations: int, alpha0: float = 0.5, sigma0: float = 200.0) -> "DecaySchedules":
        tau = total_iterations / 4.0
        return cls(alpha0, sigma0, tau, tau, total_iterations)

    def alpha(self, t) -> float:
        return max(ALPHA_FLOOR, self.alpha0 * np.exp(-t / self.tau_alpha))

    def sigma(self, t) -> float:
        return max(SIGMA_FLOOR, self.sigma0 * np.exp(-t / self.tau_sigma))


def mexican_hat(d, sigma):
    r2 = (np.asarray(d, dtype=np.float64) / sigma) ** 2
    return (1.0 - r2) * np.exp(-0.5 * r2)


def gaussian(d, sigma):
    r2 = (np.asarray(d, dtype=np.float64) / sigma) ** 2
    return np.exp(-0.5 * r2)


KERNELS = {"mexican_hat": mexican_hat, "gaussian": gaussian}
_KERNEL_IDS = {"mexican_hat": 0, "gaussian": 1}


def neighborhood(schedules: DecaySchedules, i0, i, t, kernel: str = "mexican_hat"):
    """Lateral kernel value between BMU ``i0`` and neuron(s) ``i`` at iteration ``t``."""
    d = np.abs(np.asarray(i) - i0)
    return KERNELS[kernel](d, schedules.sigma(t))


@dataclass
class BmuResult:
    index: int
    squared_distance: float


class SomLayer:
    """Linear-chain SOM with ``n_neurons`` weight rows of dimension ``dim``.

    Weights are z-score scaled like the inputs, so initialization is uniform
    on [-1, 1]. ``inhibition`` scales the negative lobe of the kernel when
    weights are updated; at 1.0 the surround pushes rows away from the input
    by up to 1.22x per step and the map diverges.
    """

    def __init__(
        self, n_neurons=2000, dim=20, schedules=None, kernel="mexican_hat", seed=0, weights=None, inhibition=0.1
    ):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}")
        self.schedules = schedules or DecaySchedules()
        self.kernel = kernel
        self.inhibition = float(inhibition)
        self.seed = int(seed)
        if weights is None:
            rng = np.random.default_rng(self.seed)
            weights = rng.uniform(-1.0, 1.0, size=(n_neurons, dim))
        self.weights = np.array(weights, dtype=np.float64)
        self.trained_iterations = 0
        self.frozen = False
        self._index = np.arange(self.weights.shape[0])

    @property
    def n_neurons(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def freeze(self) -> "SomLayer":
        self.frozen = True
        self.weights.setflags(write=False)
        self._weights_t = None
        return self

    @property
    def weights_t(self) -> np.ndarray:
        """Contiguous (dim, n_neurons) copy of the weights, cached once frozen."""
        if not self.frozen:
            return np.ascontiguousarray(self.weights.T)
        if getattr(self, "_weights_t", None) is None:
            self._weights_t = np.ascontiguousarray(self.weights.T)
        return self._weights_t

    def copy(self) -> "SomLayer":
        other = SomLayer(
            schedules=self.schedules,
            kernel=self.kernel,
            seed=self.seed,
            weights=self.weights.copy(),
            inhibition=self.inhibition,
        )
        other.trained_iterations = self.trained_iterations
        if self.frozen:
            other.freeze()
        return other

    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.weights, dtype="<f8").tobytes()).hexdigest()

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"input dimension {x.shape[-1]} != map dimension {self.dim}")
        return x

    def squared_distances(self, x) -> np.ndarray:
        """||x - w_i||^2 for every row; for a batch (n, dim) returns (n, n_neurons)."""
        x = self._check(x)
        if x.ndim == 1:
            diff = self.weights - x
            return np.einsum("ij,ij->i", diff, diff)
        # batched: expand the norm, then clamp round-off
        d2 = (
            np.einsum("ij,ij->i", x, x)[:, None]
            - 2.0 * x @ self.weights.T
            + np.einsum("ij,ij->i", self.weights, self.weights)[None, :]
        )
        return np.maximum(d2, 0.0)

    def find_bmu(self, x) -> BmuResult:
        d2 = self.squared_distances(x)
        if d2.ndim != 1:
            raise DimensionMismatch("find_bmu expects a single frame")
        i0 = int(np.argmin(d2))  # argmin returns the lowest index on ties
        return BmuResult(i0, float(d2[i0]))

    def bmu_indices(self, frames) -> np.ndarray:
        frames = self._check(np.atleast_2d(frames))
        out = np.empty(len(frames), dtype=np.int64)
        for start in range(0, len(frames), 512):
            chunk = frames[start : start + 512]
            diff = chunk[:, None, :] - self.weights[None, :, :]
            out[start : start + 512] = np.argmin(np.einsum("bij,bij->bi", diff, diff), axis=1)
        return out

    def activate(self, x) -> np.ndarray:
        """Activation 1 / (1 + ||x - w_i||^2) of every neuron."""
        return 1.0 / (1.0 + self.squared_distances(x))

    def train_step(self, x, t, alpha=None, theta=None) -> BmuResult:
        """One Kohonen update. ``alpha``/``theta`` override the schedules (tests only)."""
        if self.frozen:
            raise FrozenModel("SOM is frozen; training is not allowed")
        x = self._check(x)
        bmu = self.find_bmu(x)
        if alpha is None:
            alpha = self.schedules.alpha(t)
        if theta is None:
            theta = neighborhood(self.schedules, bmu.index, self._index, t, self.kernel)
            theta = np.where(theta < 0, self.inhibition * theta, theta)
        gain = np.broadcast_to(np.asarray(theta, dtype=np.float64) * alpha, (self.n_neurons,))
        self.weights += gain[:, None] * (x - self.weights)
        self.trained_iterations += 1
        return bmu


def train(som: SomLayer, frames, total_iterations=None, rng_seed=0, trace_every=0, trace_frames=None):
    """Train ``som`` by uniform sampling with replacement, then freeze it.

    Returns the frozen map and, if ``trace_every`` > 0, a list of
    (iteration, quantization_error) pairs measured on ``trace_frames``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise EmptyDataset("cannot train a SOM on an empty frame set")
    if total_iterations is None:
        total_iterations = som.schedules.total_iterations
    if som.frozen:
        raise FrozenModel("SOM is frozen; training is not allowed")
    rng = np.random.default_rng(rng_seed)
    order = rng.integers(0, len(frames), size=total_iterations)
    ts = np.arange(total_iterations, dtype=np.float64)
    s = som.schedules
    alphas = np.maximum(ALPHA_FLOOR, s.alpha0 * np.exp(-ts / s.tau_alpha))
    sigmas = np.maximum(SIGMA_FLOOR, s.sigma0 * np.exp(-ts / s.tau_sigma))
    trace = []
    probe = frames if trace_frames is None else np.asarray(trace_frames, dtype=np.float64)
    chunk = trace_every or total_iterations
    for start in range(0, total_iterations, chunk):
        if trace_every:
            trace.append((start, quantization_error(som, probe)))
        stop = min(start + chunk, total_iterations)
        _train_loop(
            som.weights, frames, order[start:stop], alphas[start:stop], sigmas[start:stop],
            _KERNEL_IDS[som.kernel], som.inhibition,
        )
    som.trained_iterations += total_iterations
    if trace_every:
        trace.append((total_iterations, quantization_error(som, probe)))
    som.freeze()
    return (som, trace) if trace_every else som


@njit(cache=True)
def _train_loop(weights, frames, order, alphas, sigmas, kernel_id, inhibition):
    n, d = weights.shape
    for k in range(order.shape[0]):
        x = frames[order[k]]
        best = np.inf
        i0 = 0
        for i in range(n):
            s = 0.0
            for j in range(d):
                diff = x[j] - weights[i, j]
                s += diff * diff
            if s < best:
                best = s
                i0 = i
        sigma = sigmas[k]
        for i in range(n):
            r2 = ((i - i0) / sigma) ** 2
            if kernel_id == 0:
                theta = (1.0 - r2) * np.exp(-0.5 * r2)
                if theta < 0.0:
                    theta *= inhibition
            else:
                theta = np.exp(-0.5 * r2)
            g = theta * alphas[k]
            for j in range(d):
                weights[i, j] += g * (x[j] - weights[i, j])


def quantization_error(som: SomLayer, frames) -> float:
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0:
        raise EmptyDataset("quantization error of an empty frame set")
    idx = som.bmu_indices(frames)
    diff = frames - som.weights[idx]
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def winner_census(som: SomLayer, frames) -> int:
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0:
        raise EmptyDataset("winner census of an empty frame set")
    return int(np.unique(som.bmu_indices(frames)).size)
