"""Compositional optimization (CO): rebuild a frame as a weighted sum of the
N best-matching stored templates. Only the mixing coefficients are fitted;
the model itself is never modified."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, EmptyDataset, NNotAvailable, NonFiniteValue
from .memory import ZLayer
from .som import SomLayer


@dataclass(frozen=True)
class CoConfig:
    n_constituents: int = 10
    learning_rate: float = 0.05
    max_steps: int = 500
    tolerance: float = 1e-8
    rng_seed: int = 0
    literal_update: bool = False

    def __post_init__(self):
        if self.n_constituents < 1:
            raise ValueError("n_constituents must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class CoResult:
    coefficients: np.ndarray
    constituent_indices: np.ndarray
    reconstruction: np.ndarray
    final_error: float
    steps_used: int
    error_curve: list


def co_select(z: ZLayer, som: SomLayer, x, n: int):
    """Top-``n`` Z neurons for ``x`` and their stacked templates (n, dim)."""
    if n > z.count:
        raise NNotAvailable(f"requested {n} constituents but Z holds {z.count}")
    y = som.activate(x)
    idx = z.top_n(y, n)
    return idx, z.template_rows[idx].copy()


def _check_shapes(w4, constituents, x):
    w4 = np.asarray(w4, dtype=np.float64)
    constituents = np.atleast_2d(np.asarray(constituents, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    if w4.shape != (constituents.shape[0],) or x.shape != (constituents.shape[1],):
        raise DimensionMismatch(
            f"coefficients {w4.shape}, constituents {constituents.shape}, target {x.shape} are inconsistent"
        )
    return w4, constituents, x


def co_error(w4, constituents, x) -> float:
    w4, constituents, x = _check_shapes(w4, constituents, x)
    r = x - w4 @ constituents
    return float(r @ r)


def co_gradient(w4, constituents, x) -> np.ndarray:
    """Gradient of ||x - w4 . X'||^2 with respect to w4."""
    w4, constituents, x = _check_shapes(w4, constituents, x)
    return -2.0 * constituents @ (x - w4 @ constituents)


def least_squares_optimum(constituents, x) -> float:
    """Closed-form minimum of ||x - w . X'||^2 over w (normal equations)."""
    X = np.atleast_2d(np.asarray(constituents, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    w, *_ = np.linalg.lstsq(X.T, x, rcond=None)
    r = x - w @ X
    return float(r @ r)


def descend(constituents, x, cfg: CoConfig):
    """Gradient descent on the mixing coefficients with step halving on any increase.

    Works on the Gram form ||x||^2 - 2 w.b + w.G.w, which has the same gradient
    as the residual form but costs O(N^2) per step instead of O(N * dim).
    """
    constituents = np.atleast_2d(np.asarray(constituents, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    n = constituents.shape[0]
    G = constituents @ constituents.T
    b = constituents @ x
    w4, steps, curve, ok = _descend(
        G, b, float(x @ x), np.full(n, 1.0 / n), cfg.learning_rate, cfg.max_steps, cfg.tolerance, cfg.literal_update
    )
    if not ok:
        raise NonFiniteValue("reconstruction error became non-finite")
    err = co_error(w4, constituents, x)
    return w4, err, int(steps), curve.tolist()


@njit(cache=True)
def _gram_error(G, b, c, w):
    return max(c - 2.0 * (w @ b) + w @ (G @ w), 0.0)


@njit(cache=True)
def _descend(G, b, c, w, eta, max_steps, tol, literal):
    n = w.shape[0]
    err = _gram_error(G, b, c, w)
    curve = np.empty(max_steps + 1)
    curve[0] = err
    steps = 0
    for _ in range(max_steps):
        if literal:
            direction = np.full(n, err)
        else:
            direction = -2.0 * (b - G @ w)
        cand = w - eta * direction
        cand_err = _gram_error(G, b, c, cand)
        if not np.isfinite(cand_err):
            return w, steps, curve[: steps + 1], False
        if cand_err > err:
            eta *= 0.5
            if eta < 1e-30:
                break
            continue
        improvement = err - cand_err
        w, err = cand, cand_err
        steps += 1
        curve[steps] = err
        if improvement < tol:
            break
    return w, steps, curve[: steps + 1], True


def co_optimize(z: ZLayer, som: SomLayer, x, cfg: CoConfig = CoConfig()) -> CoResult:
    if z.count == 0:
        raise NNotAvailable("Z layer is empty")
    x = np.asarray(x, dtype=np.float64)
    idx, constituents = co_select(z, som, x, cfg.n_constituents)
    w4, err, steps, curve = descend(constituents, x, cfg)
    return CoResult(w4, idx, w4 @ constituents, err, steps, curve)


def co_evaluate(z: ZLayer, som: SomLayer, frames, cfg: CoConfig = CoConfig(), csv_path=None, sidecar_path=None):
    """Mean CO error over ``frames``; returns (mean, list of CoResult)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise EmptyDataset("CO evaluation needs at least one frame")
    results = [co_optimize(z, som, x, cfg) for x in frames]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame_index", "final_error", "steps_used"])
            for i, r in enumerate(results):
                w.writerow([i, repr(r.final_error), r.steps_used])
    if sidecar_path is not None:
        side = [
            {"frame_index": i, "constituents": [[int(k), float(c)] for k, c in zip(r.constituent_indices, r.coefficients)]}
            for i, r in enumerate(results)
        ]
        with open(sidecar_path, "w") as fh:
            json.dump(side, fh)
    return float(np.mean([r.final_error for r in results])), results
