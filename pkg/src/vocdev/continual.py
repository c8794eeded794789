"""Continual-learning (CL) imitation: Gaussian hill climbing on the winner's
output template, scored by re-encoding the candidate through the frozen SOM."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

import numpy as np
from numba import njit

from .errors import EmptyDataset
from .memory import DUPLICATE_COS, Decision, GateResult, ZLayer, activity_variance, pattern_similarity
from .som import SomLayer


@dataclass(frozen=True)
class ClConfig:
    proposal_std: float = 0.1
    steps_per_frame: int = 100
    epochs: int = 10
    rng_seed: int = 0
    target: str = "heard"
    score: str = "cosine"

    def __post_init__(self):
        if not self.proposal_std > 0:
            raise ValueError("proposal_std must be positive")
        if self.steps_per_frame < 1:
            raise ValueError("steps_per_frame must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.target not in ("heard", "stored"):
            raise ValueError("target must be 'heard' or 'stored'")
        if self.score not in ("cosine", "dot"):
            raise ValueError("score must be 'cosine' or 'dot'")

    @property
    def budget_per_frame(self) -> int:
        return self.steps_per_frame * self.epochs


@dataclass
class ImitationTrace:
    """One record per frame visit."""

    frame_index: list = field(default_factory=list)
    epoch: list = field(default_factory=list)
    neuron: list = field(default_factory=list)
    recruited: list = field(default_factory=list)
    initial_error: list = field(default_factory=list)
    initial_pattern_error: list = field(default_factory=list)
    reconstruction_error: list = field(default_factory=list)
    pattern_error: list = field(default_factory=list)
    winner_activity: list = field(default_factory=list)
    accepted: list = field(default_factory=list)

    def __len__(self):
        return len(self.reconstruction_error)

    def append(self, **rec):
        for k, v in rec.items():
            getattr(self, k).append(v)

    def extend(self, other: "ImitationTrace"):
        for f in fields(other):
            getattr(self, f.name).extend(getattr(other, f.name))

    def arrays(self) -> dict:
        return {f.name: np.asarray(getattr(self, f.name)) for f in fields(self)}

    def epoch_curve(self, key="reconstruction_error") -> np.ndarray:
        """Mean per epoch, preceded by the mean error before any proposal."""
        a = self.arrays()
        epochs = a["epoch"]
        first = epochs == epochs.min()
        start = {"reconstruction_error": "initial_error", "pattern_error": "initial_pattern_error"}.get(key)
        points = [a[start][first].mean()] if start else []
        for e in np.unique(epochs):
            points.append(a[key][epochs == e].mean())
        return np.asarray(points)

    def final_errors(self) -> dict:
        """Per-frame errors from the last visit of each frame."""
        a = self.arrays()
        last = a["epoch"] == a["epoch"].max()
        return {k: a[k][last] for k in ("frame_index", "reconstruction_error", "pattern_error")}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "reconstruction_error", "pattern_error", "winner_activity"])
            for i, row in enumerate(zip(self.reconstruction_error, self.pattern_error, self.winner_activity)):
                w.writerow([i, *(repr(float(v)) for v in row)])


# --- proposal kernels ------------------------------------------------------------


@njit(cache=True, fastmath=True, error_model="numpy")
def _climb(weights_t, target, template, noise, cosine):
    """Run len(noise) proposals; returns (template, activity, n_accepted).

    ``weights_t`` is the SOM weight matrix transposed to (dim, n_neurons) so the
    distance accumulation vectorizes over neurons.
    """
    d, n = weights_t.shape
    tnorm = np.sqrt(np.sum(target * target))
    cur = template.copy()
    cand = cur.copy()
    acc = np.empty(n)
    best = 0.0
    accepted = 0
    for s in range(-1, noise.shape[0]):
        if s >= 0:
            for j in range(d):
                cand[j] = cur[j] + noise[s, j]
        acc[:] = 0.0
        for j in range(d):
            c = cand[j]
            for i in range(n):
                diff = c - weights_t[j, i]
                acc[i] += diff * diff
        dot = 0.0
        sq = 0.0
        for i in range(n):
            y = 1.0 / (1.0 + acc[i])
            dot += target[i] * y
            sq += y * y
        if cosine:
            denom = tnorm * np.sqrt(sq)
            a = dot / denom if denom > 0.0 else 0.0
        else:
            a = dot
        if s < 0:
            best = a
        elif a > best:
            best = a
            cur[:] = cand
            accepted += 1
    return cur, best, accepted


@njit(cache=True, fastmath=True, error_model="numpy")
def _activate(weights_t, x):
    d, n = weights_t.shape
    acc = np.zeros(n)
    for j in range(d):
        c = x[j]
        for i in range(n):
            diff = c - weights_t[j, i]
            acc[i] += diff * diff
    return 1.0 / (1.0 + acc)


def climb_reference(som: SomLayer, target, template, noise, score="cosine"):
    """Plain numpy version of the proposal loop, kept as an oracle for the kernel."""
    cur = np.array(template, dtype=np.float64)
    best = pattern_similarity(target, som.activate(cur), score)
    accepted = 0
    for step in noise:
        cand = cur + step
        a = pattern_similarity(target, som.activate(cand), score)
        if a > best:
            best, cur = a, cand
            accepted += 1
    return cur, best, accepted


def cl_hill_step(
    som: SomLayer, z: ZLayer, i0: int, y_heard, rng, proposal_std: float, noise=None, score="cosine"
) -> bool:
    """One Gaussian proposal on template ``i0``; accepted only on strict improvement.

    ``noise`` forces the perturbation (tests).
    """
    template = z.template_rows[i0]
    if noise is None:
        noise = rng.normal(0.0, proposal_std, size=template.shape)
    current = pattern_similarity(y_heard, som.activate(template), score)
    cand = template + noise
    a = pattern_similarity(y_heard, som.activate(cand), score)
    if a > current:
        z.set_template(i0, cand)
        return True
    return False


# --- frame processing --------------------------------------------------------------


class _GateCache:
    """Incremental best-match bookkeeping for one frame across revisits."""

    __slots__ = ("seen", "best_cos", "best_cos_idx", "best_act", "best_act_idx")

    def __init__(self):
        self.seen = 0
        self.best_cos = -np.inf
        self.best_cos_idx = -1
        self.best_act = -np.inf
        self.best_act_idx = -1

    def update(self, z: ZLayer, y):
        if self.seen == z.count:
            return
        rows = z.pattern_rows[self.seen :]
        norms = z._norms[self.seen : z.count]
        yn = np.linalg.norm(y)
        dots = rows @ y
        cos = dots / (norms * yn) if yn > 0 else np.zeros(len(rows))
        k = int(np.argmax(cos))
        if cos[k] > self.best_cos:
            self.best_cos, self.best_cos_idx = float(cos[k]), self.seen + k
        act = cos if z.similarity == "cosine" else dots
        k = int(np.argmax(act))
        if act[k] > self.best_act:
            self.best_act, self.best_act_idx = float(act[k]), self.seen + k
        self.seen = z.count


def _gate_cached(z: ZLayer, y, cache: _GateCache):
    """Same decision as ``ZLayer.gate_and_select`` using cached maxima."""
    var = activity_variance(y)
    if z.count == 0:
        return z._recruit_decision(var, "empty")
    cache.update(z, y)
    if var < z.variance_threshold and not cache.best_cos >= DUPLICATE_COS:
        return z._recruit_decision(var, "flat")
    if z.vigilance is not None and cache.best_cos < z.vigilance:
        return z._recruit_decision(var, "vigilance")
    return GateResult(Decision.MATCH, cache.best_act_idx, var, "match")


def cl_process_frame(som: SomLayer, z: ZLayer, x, cfg: ClConfig, rng, steps=None, cache=None, y=None):
    """Select or recruit a Z neuron for ``x`` and hill-climb its template.

    Returns (winner index, trace record dict).
    """
    x = np.asarray(x, dtype=np.float64)
    if y is None:
        y = _activate(som.weights_t, x)
    gate = _gate_cached(z, y, cache) if cache is not None else z.gate_and_select(y)
    recruited = gate.decision is Decision.RECRUIT
    i0 = z.recruit(y, rng) if recruited else gate.index
    if z.reassign_patterns and not recruited:
        z.set_pattern(i0, y)
    target = y if cfg.target == "heard" else z.pattern_rows[i0]
    before = z.template_rows[i0]
    initial_error = float(np.sum((x - before) ** 2))
    n = cfg.steps_per_frame if steps is None else steps
    noise = rng.normal(0.0, cfg.proposal_std, size=(n, z.output_dim))
    recon, activity, accepted = _climb(som.weights_t, target, before.copy(), noise, cfg.score == "cosine")
    z.set_template(i0, recon)
    initial_pattern_error = float(np.sum((y - _activate(som.weights_t, before)) ** 2))
    pattern_error = float(np.sum((y - _activate(som.weights_t, recon)) ** 2))
    return i0, dict(
        neuron=i0,
        recruited=recruited,
        initial_error=initial_error,
        initial_pattern_error=initial_pattern_error,
        reconstruction_error=float(np.sum((x - recon) ** 2)),
        pattern_error=pattern_error,
        winner_activity=float(activity),
        accepted=int(accepted),
    )


def cl_run(som: SomLayer, z: ZLayer, frames, cfg: ClConfig = ClConfig(), log=None):
    """Stream the corpus ``cfg.epochs`` times in order, learning online.

    ``z`` is updated in place and returned. ``log``, if given, is called with a
    growth-event dict for every recruitment.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise EmptyDataset("CL needs at least one frame")
    rng = np.random.default_rng(cfg.rng_seed)
    trace = ImitationTrace()
    start_count = z.count
    caches = [_GateCache() for _ in range(len(frames))]
    for epoch in range(cfg.epochs):
        for i, x in enumerate(frames):
            y = _activate(som.weights_t, x)
            i0, rec = cl_process_frame(som, z, x, cfg, rng, cache=None if z.reassign_patterns else caches[i], y=y)
            trace.append(frame_index=i, epoch=epoch, **rec)
            if rec["recruited"] and log is not None:
                log({"frame_index": i, "variance": activity_variance(y), "decision": "recruit", "neuron_index": i0})
    final = trace.final_errors()
    summary = {
        "frames": int(len(frames)),
        "epochs": cfg.epochs,
        "budget_per_frame": cfg.budget_per_frame,
        "recruited": int(z.count - start_count),
        "z_count": int(z.count),
        "initial_mean_error": float(trace.epoch_curve()[0]),
        "mean_reconstruction_error": float(final["reconstruction_error"].mean()),
        "mean_pattern_error": float(final["pattern_error"].mean()),
        "error_curve": trace.epoch_curve().tolist(),
        "pattern_error_curve": trace.epoch_curve("pattern_error").tolist(),
    }
    return z, trace, summary
