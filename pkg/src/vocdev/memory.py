"""Growing memory layer Z.

Each Z neuron stores the Y-activation pattern that recruited it (a row of
W2) and an output template in normalized MFCC units (a row of W3).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CapacityExhausted, DimensionMismatch, EmptyLayer, NNotAvailable

DUPLICATE_COS = 1.0 - 1e-12


class Decision(Enum):
    RECRUIT = "recruit"
    MATCH = "match"


@dataclass
class GateResult:
    decision: Decision
    index: int | None = None
    variance: float = 0.0
    reason: str = ""


@dataclass
class ZResponse:
    activities: np.ndarray
    winner: int
    winner_activity: float


def activity_variance(y) -> float:
    """Population variance of the activation vector."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.var(y))


def cosine_to_rows(rows: np.ndarray, norms: np.ndarray, y: np.ndarray) -> np.ndarray:
    yn = np.linalg.norm(y)
    if yn == 0.0:
        return np.zeros(rows.shape[0])
    return (rows @ y) / (norms * yn)


def pattern_similarity(target, y, kind="dot") -> float:
    """Dot product or cosine between two activation patterns."""
    if kind == "cosine":
        denom = np.linalg.norm(target) * np.linalg.norm(y)
        return float(target @ y / denom) if denom > 0 else 0.0
    return float(target @ y)


class ZLayer:
    """Variance-gated growing layer.

    ``similarity`` selects how Z activities are scored: ``"dot"`` is the
    plain product W2 . y; ``"cosine"`` divides by both norms so that flat,
    high-energy patterns do not win every comparison. ``vigilance`` (cosine
    in [0, 1]) additionally recruits when no stored pattern is that similar;
    ``None`` disables the test.
    """

    def __init__(
        self,
        pattern_dim=2000,
        output_dim=20,
        capacity=5000,
        variance_threshold=2e-5,
        similarity="dot",
        vigilance=None,
        reassign_patterns=False,
        template_init_std=0.1,
    ):
        if similarity not in ("dot", "cosine"):
            raise ValueError(f"similarity must be 'dot' or 'cosine', got {similarity!r}")
        self.pattern_dim = int(pattern_dim)
        self.output_dim = int(output_dim)
        self.capacity = int(capacity)
        self.variance_threshold = float(variance_threshold)
        self.similarity = similarity
        self.vigilance = None if vigilance is None else float(vigilance)
        self.reassign_patterns = bool(reassign_patterns)
        self.template_init_std = float(template_init_std)
        self.count = 0
        # preallocated storage grows by doubling; only the first ``count`` rows are live
        self._patterns = np.zeros((0, self.pattern_dim))
        self._templates = np.zeros((0, self.output_dim))
        self._norms = np.zeros(0)

    # -- storage ---------------------------------------------------------------

    @property
    def pattern_rows(self) -> np.ndarray:
        return self._patterns[: self.count]

    @property
    def template_rows(self) -> np.ndarray:
        return self._templates[: self.count]

    def _grow(self):
        new = max(16, 2 * self._patterns.shape[0])
        new = min(new, self.capacity)
        p = np.zeros((new, self.pattern_dim))
        w = np.zeros((new, self.output_dim))
        n = np.zeros(new)
        p[: self.count] = self._patterns[: self.count]
        w[: self.count] = self._templates[: self.count]
        n[: self.count] = self._norms[: self.count]
        self._patterns, self._templates, self._norms = p, w, n

    def set_template(self, i, row) -> None:
        self._templates[i] = row

    def set_pattern(self, i, y) -> None:
        self._patterns[i] = y
        self._norms[i] = np.linalg.norm(y)

    def copy(self) -> "ZLayer":
        z = ZLayer(
            self.pattern_dim,
            self.output_dim,
            self.capacity,
            self.variance_threshold,
            self.similarity,
            self.vigilance,
            self.reassign_patterns,
            self.template_init_std,
        )
        z.count = self.count
        z._patterns = self._patterns.copy()
        z._templates = self._templates.copy()
        z._norms = self._norms.copy()
        return z

    @classmethod
    def from_arrays(cls, patterns, templates, **config) -> "ZLayer":
        """Rebuild a layer from stored W2/W3 rows (used when loading bundles)."""
        z = cls(**config)
        patterns = np.asarray(patterns, dtype=np.float64).reshape(-1, z.pattern_dim)
        templates = np.asarray(templates, dtype=np.float64).reshape(-1, z.output_dim)
        if len(patterns) != len(templates) or len(patterns) > z.capacity:
            raise DimensionMismatch("pattern and template row counts disagree or exceed capacity")
        z._patterns = patterns.copy()
        z._templates = templates.copy()
        z._norms = np.array([np.linalg.norm(r) for r in z._patterns])
        z.count = len(patterns)
        return z

    def config(self) -> dict:
        return {
            "pattern_dim": self.pattern_dim,
            "output_dim": self.output_dim,
            "capacity": self.capacity,
            "variance_threshold": self.variance_threshold,
            "similarity": self.similarity,
            "vigilance": self.vigilance,
            "reassign_patterns": self.reassign_patterns,
            "template_init_std": self.template_init_std,
        }

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.count).tobytes())
        h.update(np.ascontiguousarray(self.pattern_rows, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.template_rows, dtype="<f8").tobytes())
        return h.hexdigest()

    # -- recall ----------------------------------------------------------------

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.pattern_dim,):
            raise DimensionMismatch(f"activation has shape {y.shape}, expected ({self.pattern_dim},)")
        return y

    def activities(self, y) -> np.ndarray:
        y = self._check(y)
        if self.similarity == "cosine":
            return cosine_to_rows(self.pattern_rows, self._norms[: self.count], y)
        return self.pattern_rows @ y

    def respond(self, y) -> ZResponse:
        if self.count == 0:
            raise EmptyLayer("Z layer has no neurons")
        act = self.activities(y)
        i0 = int(np.argmax(act))
        return ZResponse(act, i0, float(act[i0]))

    def top_n(self, y, n: int) -> np.ndarray:
        """Indices of the ``n`` strongest activities, descending, lowest index on ties."""
        if n < 1 or n > self.count:
            raise NNotAvailable(f"requested {n} constituents but Z holds {self.count}")
        act = self.activities(y)
        order = np.lexsort((np.arange(self.count), -act))
        return order[:n]

    def score(self, i0: int, y_candidate) -> float:
        """Similarity between neuron ``i0``'s stored pattern and a candidate activation."""
        return float(self.similarity_to(self.pattern_rows[i0], y_candidate))

    def similarity_to(self, target, y_candidate) -> float:
        return pattern_similarity(target, y_candidate, self.similarity)

    # -- growth ----------------------------------------------------------------

    def gate_and_select(self, y) -> GateResult:
        y = self._check(y)
        var = activity_variance(y)
        if self.count == 0:
            return self._recruit_decision(var, "empty")
        cos = cosine_to_rows(self.pattern_rows, self._norms[: self.count], y)
        stored = bool(cos.max() >= DUPLICATE_COS)
        if var < self.variance_threshold and not stored:
            return self._recruit_decision(var, "flat")
        if self.vigilance is not None and cos.max() < self.vigilance:
            return self._recruit_decision(var, "vigilance")
        act = cos if self.similarity == "cosine" else self.pattern_rows @ y
        return GateResult(Decision.MATCH, int(np.argmax(act)), var, "match")

    def _recruit_decision(self, var, reason) -> GateResult:
        if self.count >= self.capacity:
            raise CapacityExhausted(f"Z is full ({self.capacity} neurons) and a new neuron is required")
        return GateResult(Decision.RECRUIT, None, var, reason)

    def recruit(self, y, rng) -> int:
        y = self._check(y)
        if self.count >= self.capacity:
            raise CapacityExhausted(f"Z is full ({self.capacity} neurons)")
        if self.count == self._patterns.shape[0]:
            self._grow()
        i = self.count
        self.set_pattern(i, y)
        self._templates[i] = rng.normal(0.0, self.template_init_std, size=self.output_dim)
        self.count += 1
        return i
