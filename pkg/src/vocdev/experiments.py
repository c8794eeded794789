"""Experiment protocols: curriculum training, CL-vs-CO mode comparison with a
same-language control, forgetting test, error curves and PCA exports.

Every protocol is a pure function of (frames, config, seed). Reports are plain
dataclasses that serialize to JSON + CSV, with SVG figures drawn by hand so the
output is byte-stable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import spearmanr

from .audio_features import (
    DatasetManifest,
    FeatureConfig,
    ManifestEntry,
    fit_normalization,
    mfcc,
    synth_pseudo_language,
    write_frames,
)
from .compositional import CoConfig, co_evaluate
from .continual import ClConfig, cl_run
from .errors import InsufficientData, MissingLanguage
from .memory import ZLayer
from .model_store import ModelBundle
from .som import DecaySchedules, SomLayer, quantization_error, train, winner_census

MIN_TEST_FRAMES = 100


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class SomConfig:
    n_neurons: int = 2000
    iterations: int = 100000
    alpha0: float = 0.5
    sigma0: float = 200.0
    kernel: str = "mexican_hat"
    inhibition: float = 0.1

    def build(self, seed: int, dim: int = 20) -> SomLayer:
        sched = DecaySchedules.for_iterations(self.iterations, self.alpha0, self.sigma0)
        return SomLayer(self.n_neurons, dim, sched, self.kernel, seed=seed, inhibition=self.inhibition)


@dataclass(frozen=True)
class ZConfig:
    capacity: int = 5000
    variance_threshold: float = 2e-5
    similarity: str = "cosine"
    vigilance: float | None = 0.99
    reassign_patterns: bool = False
    template_init_std: float = 0.1

    def build(self, pattern_dim: int, output_dim: int = 20) -> ZLayer:
        return ZLayer(pattern_dim, output_dim, **asdict(self))


@dataclass(frozen=True)
class PipelineConfig:
    som: SomConfig = SomConfig()
    z: ZConfig = ZConfig()
    cl: ClConfig = ClConfig()
    co: CoConfig = CoConfig()
    seed: int = 0
    bootstrap: int = 1000

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        parts = {"som": SomConfig, "z": ZConfig, "cl": ClConfig, "co": CoConfig}
        for key, kind in parts.items():
            if key in d:
                d[key] = kind(**d[key])
        return cls(**d)


def derive_seed(seed: int, *tags) -> int:
    """Stable per-arm seed from the run seed and string tags."""
    return (int(seed) * 1000003 + zlib.crc32("/".join(map(str, tags)).encode())) % (2**31)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]


# --- data ------------------------------------------------------------------------


def synth_desk_corpus(
    root,
    seed: int = 0,
    l1: str = "A",
    l2s=("B", "C"),
    l1_seconds: float = 120.0,
    l2_seconds: float = 60.0,
    test_seconds: float = 60.0,
    feature_config: FeatureConfig = FeatureConfig(),
) -> DatasetManifest:
    """Write a synthetic corpus (raw MFCC frame files + manifest) under ``root``.

    Language tags are the synthetic profile letters. Normalization statistics
    come from the L1 training frames.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    norm = None
    for k, lang in enumerate([l1, *[t for t in l2s if t != l1]]):
        train_seconds = l1_seconds if lang == l1 else l2_seconds
        for r, (role, seconds) in enumerate((("train", train_seconds), ("test", test_seconds))):
            clip = synth_pseudo_language(seed * 100 + 10 * k + r, lang, seconds)
            frames = mfcc(clip, feature_config)
            name = f"{lang}_{role}.mfc"
            write_frames(frames, root / name)
            entries.append(ManifestEntry(lang, role, name))
            if lang == l1 and role == "train":
                norm = fit_normalization(frames)
    manifest = DatasetManifest(entries, norm, root)
    manifest.save(root / "manifest.json")
    return manifest


def normalized_frames(manifest: DatasetManifest, language: str, role: str) -> np.ndarray:
    frames = manifest.load_frames(language, role)
    if len(frames) == 0:
        raise MissingLanguage(f"manifest has no {role} frames for language {language!r}")
    if manifest.normalization is not None:
        frames = manifest.normalization.normalize(frames)
    return frames


# --- statistics ------------------------------------------------------------------


def bootstrap_ci(values, n_resamples: int = 1000, seed: int = 0, level: float = 0.95):
    """Mean and percentile bootstrap interval of the mean."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InsufficientData("bootstrap of an empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(n_resamples, v.size))
    means = v[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return float(v.mean()), float(lo), float(hi)


def topography_check(som: SomLayer, n_pairs: int = 5000, n_resamples: int = 1000, seed: int = 0) -> dict:
    """Index-adjacent vs random neuron pairs in weight space, with a bootstrap p-value."""
    W = som.weights
    rng = np.random.default_rng(seed)
    adjacent = np.linalg.norm(np.diff(W, axis=0), axis=1)
    pairs = rng.integers(0, len(W), size=(n_pairs, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    random = np.linalg.norm(W[pairs[:, 0]] - W[pairs[:, 1]], axis=1)
    a = adjacent[rng.integers(0, adjacent.size, size=(n_resamples, adjacent.size))].mean(axis=1)
    r = random[rng.integers(0, random.size, size=(n_resamples, random.size))].mean(axis=1)
    p = (np.sum(a >= r) + 1) / (n_resamples + 1)
    return {"adjacent_mean": float(adjacent.mean()), "random_mean": float(random.mean()), "p_value": float(p)}


# --- PCA -------------------------------------------------------------------------


@dataclass
class PcaProjection:
    points: np.ndarray  # (n, 3): x, y, color_index
    explained_variance: np.ndarray
    components: np.ndarray
    kind: str = "neurons"


def _power_iteration(C, v0, tol=1e-14, max_iter=200000):
    v = v0 / np.linalg.norm(v0)
    for _ in range(max_iter):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        w /= norm
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return float(v @ C @ v), v


def pca_project(vectors, labels=None, kind: str = "neurons", seed: int = 0) -> PcaProjection:
    """Project onto the top-2 covariance eigenvectors (power iteration + deflation).

    ``labels`` become the color index; by default the row index.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3 or X.shape[1] < 2:
        raise InsufficientData("PCA needs at least 3 vectors of dimension >= 2")
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / len(X)
    scale = np.trace(C)
    if not scale > 0:
        raise InsufficientData("all vectors are identical; covariance is zero")
    rng = np.random.default_rng(seed)
    vals, vecs = [], []
    D = C.copy()
    for _ in range(2):
        lam, v = _power_iteration(D, rng.normal(size=C.shape[0]))
        vals.append(max(lam, 0.0))
        vecs.append(v)
        D = D - lam * np.outer(v, v)
    comps = np.array(vecs)
    # deterministic sign: largest-magnitude loading positive
    for k in range(2):
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    proj = Xc @ comps.T
    color = np.arange(len(X)) if labels is None else np.asarray(labels)
    points = np.column_stack([proj, color.astype(np.float64)])
    return PcaProjection(points, np.array(vals), comps, kind)


# --- reports ---------------------------------------------------------------------


@dataclass
class ConditionResult:
    l1: str
    l2: str | None
    mode: str
    test_language: str
    mean: float
    ci_low: float
    ci_high: float
    n_frames: int

    @property
    def label(self) -> str:
        return self.l1 if self.l2 is None else f"{self.l1}+{self.l2}"


@dataclass
class ExperimentReport:
    name: str
    conditions: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    censuses: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    model_hashes: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def condition(self, label: str, mode: str, test_language: str) -> ConditionResult:
        for c in self.conditions:
            if c.label == label and c.mode == mode and c.test_language == test_language:
                return c
        raise KeyError((label, mode, test_language))

    def check(self, name: str, passed: bool, **values) -> None:
        self.checks[name] = {"passed": bool(passed), **{k: _jsonable(v) for k, v in values.items()}}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "conditions": [{**asdict(c), "label": c.label} for c in self.conditions],
            "checks": self.checks,
            "censuses": self.censuses,
            "curves": {k: [float(v) for v in vals] for k, vals in self.curves.items()},
            "config": self.config,
            "model_hashes": self.model_hashes,
            "notes": self.notes,
            "extra": _jsonable(self.extra),
        }

    def write(self, run_dir) -> Path:
        """JSON + CSV (+ SVG bars and curves) into ``run_dir``."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / f"{self.name}.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if self.conditions:
            with open(run_dir / f"{self.name}_conditions.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["condition", "mode", "test_language", "mean", "ci_low", "ci_high", "n_frames"])
                for c in self.conditions:
                    w.writerow([c.label, c.mode, c.test_language, repr(c.mean), repr(c.ci_low), repr(c.ci_high), c.n_frames])
            emit_plots(self, run_dir / f"{self.name}_bars.svg")
        if self.curves:
            with open(run_dir / f"{self.name}_curves.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["series", "point", "value"])
                for k, vals in self.curves.items():
                    for i, v in enumerate(vals):
                        w.writerow([k, i, repr(float(v))])
            emit_plots(self.curves, run_dir / f"{self.name}_curves.svg")
        return run_dir


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


# --- curriculum ------------------------------------------------------------------


@dataclass
class PassResult:
    summary: dict
    errors: np.ndarray  # per-frame final reconstruction error
    seconds: float


@dataclass
class Curriculum:
    l1: str
    baseline: ModelBundle
    arms: dict = field(default_factory=dict)  # label -> ModelBundle
    passes: dict = field(default_factory=dict)  # label -> PassResult
    som_seconds: float = 0.0
    notes: list = field(default_factory=list)


def _cl_pass(som, z, frames, cl_cfg):
    t0 = time.perf_counter()
    z, trace, summary = cl_run(som, z, frames, cl_cfg)
    errors = trace.final_errors()["reconstruction_error"]
    return z, PassResult(summary, errors, time.perf_counter() - t0)


def _pmap(fn, jobs_args, jobs: int):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [fn(*a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, *a) for a in jobs_args]
        return [f.result() for f in futures]


def control_frames(l1_train: np.ndarray, n: int) -> np.ndarray:
    """Additional same-language material for the control arm: the first ``n`` L1 frames."""
    return l1_train[: max(1, min(n, len(l1_train)))]


def run_curriculum(
    frames: dict,
    config: PipelineConfig = PipelineConfig(),
    l1: str = "A",
    l2s=(),
    normalization=None,
    jobs: int = 1,
) -> Curriculum:
    """Train the SOM and the L1 memory, then continue CL on each L2 arm.

    ``frames`` maps language -> normalized training frames. An L2 equal to the
    L1 tag is the same-language control; it streams the first
    ``len(L2 train)`` L1 frames again.
    """
    if l1 not in frames or len(frames[l1]) == 0:
        raise MissingLanguage(f"no training frames for L1 {l1!r}")
    for t in l2s:
        if t != l1 and (t not in frames or len(frames[t]) == 0):
            raise MissingLanguage(f"no training frames for L2 {t!r}")
    seed = config.seed
    l1_frames = frames[l1]

    t0 = time.perf_counter()
    som = config.som.build(seed, l1_frames.shape[1])
    train(som, l1_frames, rng_seed=derive_seed(seed, "som"))
    som_seconds = time.perf_counter() - t0

    z0 = config.z.build(som.n_neurons, l1_frames.shape[1])
    cl_cfg = replace(config.cl, rng_seed=derive_seed(seed, "cl", l1))
    z1, pass1 = _cl_pass(som, z0, l1_frames, cl_cfg)
    echo = config.to_dict()
    baseline = ModelBundle(som, z1, normalization, echo, [l1], seed)
    cur = Curriculum(l1, baseline, som_seconds=som_seconds)
    cur.passes[l1] = pass1

    if not l2s:
        cur.notes.append("no L2 requested; bilingual arms skipped")
        return cur
    true_l2 = [t for t in l2s if t != l1]
    n_ctrl = max([len(frames[t]) for t in true_l2], default=len(l1_frames) // 2)
    work = []
    for t in l2s:
        data = control_frames(l1_frames, n_ctrl) if t == l1 else frames[t]
        work.append((som, z1.copy(), data, replace(config.cl, rng_seed=derive_seed(seed, "cl", l1, t))))
    for t, (z, res) in zip(l2s, _pmap(_cl_pass, work, jobs)):
        label = f"{l1}+{t}"
        cur.arms[label] = ModelBundle(som, z, normalization, echo, [l1, t], seed)
        cur.passes[label] = res
    return cur


def _check_test(test: dict, lang: str) -> np.ndarray:
    if lang not in test:
        raise MissingLanguage(f"no test frames for language {lang!r}")
    x = np.asarray(test[lang], dtype=np.float64)
    if len(x) < MIN_TEST_FRAMES:
        raise InsufficientData(f"test set for {lang!r} has {len(x)} frames; need >= {MIN_TEST_FRAMES}")
    return x


def _co_errors(model: ModelBundle, frames, co_cfg):
    before = model.fingerprint()
    _, results = co_evaluate(model.z, model.som, frames, co_cfg)
    if model.fingerprint() != before:  # CO must never learn
        raise RuntimeError("CO evaluation changed the model")
    return np.array([r.final_error for r in results])


def _cl_eval(model: ModelBundle, frames, cl_cfg):
    """CL pass over test frames on a clone; the model itself is left untouched."""
    _, res = _cl_pass(model.som, model.z.copy(), frames, cl_cfg)
    return res.errors


def _non_overlapping(a: ConditionResult, b: ConditionResult) -> bool:
    """True when a's interval lies entirely below b's."""
    return a.ci_high < b.ci_low


def run_mode_comparison(cur: Curriculum, test: dict, config: PipelineConfig = PipelineConfig(), jobs: int = 1):
    """CL and CO errors per condition, plus the directional checks.

    CL mode on L2 means learning L2 continually on top of the L1 model, which
    is also how every bilingual arm was built. The CL condition of each arm is
    therefore one shared CL pass over the L2 test frames from the L1 model.
    The CL pass from the arm's own model is kept in ``extra`` as a diagnostic.
    """
    l1 = cur.l1
    report = ExperimentReport("mode_comparison", config=config.to_dict())
    true_arms = {lab: m for lab, m in cur.arms.items() if m.lineage[1] != l1}
    ctrl_label = f"{l1}+{l1}"
    control = cur.arms.get(ctrl_label)
    if not true_arms:
        report.notes.append("no bilingual arms; comparison limited to the L1-only model")
    seed = config.seed
    boot = lambda v, *tags: bootstrap_ci(v, config.bootstrap, derive_seed(seed, "boot", *tags))

    def add(l2, mode, lang, errors):
        mean, lo, hi = boot(errors, l2 or "-", mode, lang)
        c = ConditionResult(l1, l2, mode, lang, mean, lo, hi, int(len(errors)))
        report.conditions.append(c)
        return c

    models = {l1: cur.baseline, **cur.arms}
    report.model_hashes = {lab: m.fingerprint() for lab, m in models.items()}
    report.censuses = {lab: {"z_count": m.z.count} for lab, m in models.items()}

    for label, arm in true_arms.items():
        lang = arm.lineage[1]
        x = _check_test(test, lang)
        cl_cfg = replace(config.cl, rng_seed=derive_seed(seed, "cl-test", lang))
        shared, own = _pmap(_cl_eval, [(cur.baseline, x, cl_cfg), (arm, x, cl_cfg)], jobs)
        base_cl = add(None, "CL", lang, shared)
        base_co = add(None, "CO", lang, _co_errors(cur.baseline, x, config.co))
        arm_cl = add(lang, "CL", lang, shared)
        arm_co = add(lang, "CO", lang, _co_errors(arm, x, config.co))
        report.extra[f"cl_from_arm_model[{lang}]"] = {
            "mean": float(np.mean(own)),
            "relative_gap": float(abs(np.mean(own) - base_cl.mean) / base_cl.mean),
        }
        report.check(
            f"cl_beats_co_before_l2[{lang}]",
            _non_overlapping(base_cl, base_co),
            cl=base_cl.mean,
            co=base_co.mean,
        )
        report.check(
            f"co_improves_with_l2[{lang}]",
            _non_overlapping(arm_co, base_co),
            before=base_co.mean,
            after=arm_co.mean,
        )
        gap = abs(arm_cl.mean - base_cl.mean) / base_cl.mean
        report.check(f"cl_arms_agree[{lang}]", gap < 0.02, relative_gap=gap)
        report.check(
            f"co_above_cl_after_l2[{lang}]", arm_co.mean > arm_cl.mean, co=arm_co.mean, cl=arm_cl.mean
        )
        if control is not None:
            add(l1, "CL", lang, shared)
            ctrl_co = add(l1, "CO", lang, _co_errors(control, x, config.co))
            true_gain = base_co.mean - arm_co.mean
            ctrl_gain = base_co.mean - ctrl_co.mean
            ratio = ctrl_gain / true_gain if true_gain > 0 else float("inf")
            report.check(f"control_ratio[{lang}]", ratio < 0.25, ratio=ratio, control_gain=ctrl_gain, true_gain=true_gain)
    return report


def run_forgetting_test(cur: Curriculum, l1_test, config: PipelineConfig = PipelineConfig(), jobs: int = 1):
    """L1 test errors in both modes before and after each L2 arm."""
    l1 = cur.l1
    x = _check_test({l1: l1_test}, l1)
    report = ExperimentReport("forgetting", config=config.to_dict())
    models = {l1: cur.baseline, **cur.arms}
    hashes = {lab: m.fingerprint() for lab, m in models.items()}
    cl_cfg = replace(config.cl, rng_seed=derive_seed(config.seed, "cl-test", l1))
    cl_errs = _pmap(_cl_eval, [(m, x, cl_cfg) for m in models.values()], jobs)
    means = {}
    for (label, model), cl_e in zip(models.items(), cl_errs):
        l2 = None if label == l1 else model.lineage[1]
        for mode, errs in (("CL", cl_e), ("CO", _co_errors(model, x, config.co))):
            mean, lo, hi = bootstrap_ci(errs, config.bootstrap, derive_seed(config.seed, "boot", label, mode))
            report.conditions.append(ConditionResult(l1, l2, mode, l1, mean, lo, hi, len(errs)))
            means[label, mode] = mean
    after = {lab: m.fingerprint() for lab, m in models.items()}
    report.check("models_unchanged", after == hashes)
    report.model_hashes = hashes
    n1 = cur.baseline.z.count
    base_rows = cur.baseline.z.pattern_rows.tobytes()
    for label, arm in cur.arms.items():
        same_patterns = arm.z.pattern_rows[:n1].tobytes() == base_rows
        moved = int(np.sum(np.any(arm.z.template_rows[:n1] != cur.baseline.z.template_rows, axis=1)))
        report.check(f"l1_patterns_preserved[{label}]", same_patterns, l1_templates_refined=moved)
        for mode in ("CL", "CO"):
            rel = (means[label, mode] - means[l1, mode]) / means[l1, mode]
            report.check(f"forgetting[{label},{mode}]", rel < 0.15, relative_increase=rel)
    return report


def curve_report(cur: Curriculum, config: PipelineConfig = PipelineConfig()) -> ExperimentReport:
    """Error curves of the L1 learning pass (reconstruction and pattern error)."""
    res = cur.passes[cur.l1]
    s = res.summary
    report = ExperimentReport("curves", config=config.to_dict())
    rec = np.asarray(s["error_curve"])
    pat = np.asarray(s["pattern_error_curve"])
    report.curves = {"reconstruction_error": rec.tolist(), "pattern_error": pat.tolist()}
    ratio = s["mean_reconstruction_error"] / s["initial_mean_error"]
    smooth = np.convolve(rec, np.ones(3) / 3, mode="valid") if len(rec) >= 3 else rec
    rho = float(spearmanr(rec, pat).statistic) if len(rec) > 2 else float("nan")
    report.check("final_below_10pct", ratio < 0.10, ratio=ratio)
    report.check("smoothed_non_increasing", bool(np.all(np.diff(smooth) <= 0)))
    report.check("runtime_under_3min", res.seconds < 180.0, seconds=res.seconds)
    report.check("pattern_error_tracks", rho > 0.8, spearman=rho)
    report.censuses = {"z_count": s["z_count"], "frames": s["frames"]}
    report.model_hashes = {cur.l1: cur.baseline.fingerprint()}
    return report


def pca_report(som: SomLayer, frames, config: PipelineConfig = PipelineConfig()):
    """Neuron and input projections plus the topography statistics."""
    neurons = pca_project(som.weights, kind="neurons")
    inputs = pca_project(frames, labels=som.bmu_indices(frames), kind="inputs")
    topo = topography_check(som, seed=derive_seed(config.seed, "topo"))
    report = ExperimentReport("pca", config=config.to_dict())
    report.check("adjacent_closer_than_random", topo["p_value"] < 0.05, **topo)
    for p in (neurons, inputs):
        ev = p.explained_variance
        report.check(f"variance_ordered[{p.kind}]", ev[0] >= ev[1] >= 0, explained_variance=ev)
    report.censuses = {
        "som_winners": winner_census(som, frames),
        "quantization_error": quantization_error(som, frames),
    }
    return report, neurons, inputs


def write_projection(p: PcaProjection, run_dir) -> None:
    run_dir = Path(run_dir)
    with open(run_dir / f"pca_{p.kind}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "color_index"])
        for x, y, c in p.points:
            w.writerow([repr(float(x)), repr(float(y)), int(c)])
    emit_plots(p, run_dir / f"pca_{p.kind}.svg")


# --- SVG output --------------------------------------------------------------------

_W, _H, _PAD = 640, 400, 50
_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _f(v) -> str:
    return f"{v:.2f}"


def _svg(body: list, title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _no_data(title) -> str:
    return _svg([f'<text x="{_W // 2}" y="{_H // 2}" text-anchor="middle" font-size="16">no data</text>'], title)


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def svg_bars(report: ExperimentReport) -> str:
    groups = {}
    for c in report.conditions:
        groups.setdefault((c.label, c.test_language), {})[c.mode] = c
    if not groups:
        return _no_data(report.name)
    modes = sorted({c.mode for c in report.conditions})
    top = max(c.ci_high for c in report.conditions)
    y = _scale(0.0, top * 1.05, _H - _PAD, _PAD)
    gw = (_W - 2 * _PAD) / len(groups)
    bw = gw * 0.8 / len(modes)
    body = []
    for g, ((label, lang), by_mode) in enumerate(groups.items()):
        gx = _PAD + g * gw + gw * 0.1
        body.append(f'<g class="group" data-condition="{escape(label)}" data-test="{escape(lang)}">')
        for m, mode in enumerate(modes):
            c = by_mode.get(mode)
            if c is None:
                continue
            x = gx + m * bw
            body.append(
                f'<rect class="bar" data-mode="{mode}" x="{_f(x)}" y="{_f(y(c.mean))}" width="{_f(bw * 0.9)}" '
                f'height="{_f(y(0) - y(c.mean))}" fill="{_PALETTE[m % len(_PALETTE)]}"/>'
            )
            cx = x + bw * 0.45
            body.append(f'<line x1="{_f(cx)}" y1="{_f(y(c.ci_low))}" x2="{_f(cx)}" y2="{_f(y(c.ci_high))}" stroke="black"/>')
        body.append(
            f'<text x="{_f(gx + gw * 0.4)}" y="{_H - _PAD + 16}" text-anchor="middle" font-size="11">'
            f"{escape(label)} on {escape(lang)}</text>"
        )
        body.append("</g>")
    for m, mode in enumerate(modes):
        body.append(
            f'<text x="{_W - _PAD - 60}" y="{_PAD + 14 * m}" font-size="11" fill="{_PALETTE[m % len(_PALETTE)]}">{mode}</text>'
        )
    return _svg(body, report.name)


def svg_curves(curves: dict, title: str = "curves") -> str:
    series = {k: np.asarray(v, dtype=np.float64) for k, v in curves.items() if len(v)}
    if not series:
        return _no_data(title)
    n = max(len(v) for v in series.values())
    lo = min(float(v.min()) for v in series.values())
    hi = max(float(v.max()) for v in series.values())
    x = _scale(0, max(n - 1, 1), _PAD, _W - _PAD)
    y = _scale(min(lo, 0.0), hi, _H - _PAD, _PAD)
    body = []
    for k, (name, v) in enumerate(series.items()):
        pts = " ".join(f"{_f(x(i))},{_f(y(val))}" for i, val in enumerate(v))
        color = _PALETTE[k % len(_PALETTE)]
        body.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" fill="none" stroke="{color}"/>')
        body.append(f'<text x="{_W - _PAD - 150}" y="{_PAD + 14 * k}" font-size="11" fill="{color}">{escape(name)}</text>')
    return _svg(body, title)


def svg_scatter(p: PcaProjection) -> str:
    if len(p.points) == 0:
        return _no_data(f"PCA ({p.kind})")
    xs, ys, cs = p.points[:, 0], p.points[:, 1], p.points[:, 2]
    x = _scale(xs.min(), xs.max(), _PAD, _W - _PAD)
    y = _scale(ys.min(), ys.max(), _H - _PAD, _PAD)
    c = _scale(cs.min(), cs.max(), 0.0, 1.0)
    body = []
    for xi, yi, ci in p.points:
        t = c(ci)
        # blue (low index) to red (high index)
        rgb = f"rgb({int(255 * t)},{int(80 * (1 - abs(2 * t - 1)))},{int(255 * (1 - t))})"
        body.append(f'<circle cx="{_f(x(xi))}" cy="{_f(y(yi))}" r="1.5" fill="{rgb}"/>')
    ev = p.explained_variance
    title = f"PCA ({p.kind}); explained variance {ev[0]:.3f}, {ev[1]:.3f}"
    return _svg(body, title)


def emit_plots(obj, path) -> Path:
    """Render a report (grouped bars), projection (scatter) or curve dict to SVG."""
    if isinstance(obj, ExperimentReport):
        text = svg_bars(obj)
    elif isinstance(obj, PcaProjection):
        text = svg_scatter(obj)
    elif isinstance(obj, dict):
        text = svg_curves(obj, Path(path).stem)
    else:
        raise TypeError(f"cannot plot {type(obj).__name__}")
    path = Path(path)
    path.write_text(text)
    return path
