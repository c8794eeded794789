"""The eleven acceptance criteria, run at their stated tolerances on the desk corpus.

Each test records one PASS/FAIL line, printed in the terminal summary. Criteria
3 and 6 are marked strict xfail: on this corpus CO beats CL, so the measured
outcome is a FAIL and is reported as such. If they ever start passing, the
strict marker turns the run red so the marker gets removed.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_LINES
from vocdev.audio_features import AudioClip, FeatureConfig, frame_count, frame_signal, mfcc
from vocdev.compositional import CoConfig, co_error, co_evaluate, co_gradient, descend, least_squares_optimum
from vocdev.continual import ClConfig, cl_run
from vocdev.experiments import (
    PipelineConfig,
    SomConfig,
    curve_report,
    normalized_frames,
    pca_project,
    pca_report,
    run_curriculum,
    run_forgetting_test,
    run_mode_comparison,
    synth_desk_corpus,
)
from vocdev.memory import activity_variance

CONFIG = PipelineConfig()
L2 = "B"


def record(n, passed, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    m = synth_desk_corpus(root, seed=CONFIG.seed, l2s=(L2,))
    train = {t: normalized_frames(m, t, "train") for t in ("A", L2)}
    test = {t: normalized_frames(m, t, "test") for t in ("A", L2)}
    t0 = time.perf_counter()
    cur = run_curriculum(train, CONFIG, "A", (L2, "A"), m.normalization)
    return {"train": train, "test": test, "cur": cur, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def comparison(desk):
    return run_mode_comparison(desk["cur"], desk["test"], CONFIG)


@pytest.fixture(scope="module")
def forgetting(desk):
    return run_forgetting_test(desk["cur"], desk["test"]["A"], CONFIG)


def test_criterion_01_cl_convergence(desk):
    c = curve_report(desk["cur"], CONFIG).checks
    ok = c["final_below_10pct"]["passed"] and c["smoothed_non_increasing"]["passed"] and c["runtime_under_3min"]["passed"]
    record(1, ok, f"final/initial={c['final_below_10pct']['ratio']:.4f} (< 0.10), "
                  f"smoothed non-increasing={c['smoothed_non_increasing']['passed']}, "
                  f"L1 pass {c['runtime_under_3min']['seconds']:.0f} s (< 180 s)")
    assert ok


def test_criterion_02_pattern_error_tracks(desk):
    c = curve_report(desk["cur"], CONFIG).checks["pattern_error_tracks"]
    record(2, c["passed"], f"spearman={c['spearman']:.3f} (> 0.8)")
    assert c["passed"]


@pytest.mark.xfail(strict=True, reason="CO's least-squares fit beats landscape-limited CL on this corpus")
def test_criterion_03_cl_beats_co_before_l2(comparison):
    c = comparison.checks[f"cl_beats_co_before_l2[{L2}]"]
    cl, co = comparison.condition("A", "CL", L2), comparison.condition("A", "CO", L2)
    record(3, c["passed"], f"L1-only on {L2}: CL {cl.mean:.3f} [{cl.ci_low:.3f}, {cl.ci_high:.3f}] vs "
                           f"CO {co.mean:.3f} [{co.ci_low:.3f}, {co.ci_high:.3f}]")
    assert c["passed"]


def test_criterion_04_minimal_input(comparison):
    improve = comparison.checks[f"co_improves_with_l2[{L2}]"]
    agree = comparison.checks[f"cl_arms_agree[{L2}]"]
    before, after = comparison.condition("A", "CO", L2), comparison.condition(f"A+{L2}", "CO", L2)
    ok = improve["passed"] and agree["passed"]
    record(4, ok, f"CO {before.mean:.3f} [{before.ci_low:.3f}, {before.ci_high:.3f}] -> "
                  f"{after.mean:.3f} [{after.ci_low:.3f}, {after.ci_high:.3f}]; "
                  f"CL arm gap {agree['relative_gap']:.4f} (< 0.02)")
    assert ok


def test_criterion_05_control_separation(comparison):
    c = comparison.checks[f"control_ratio[{L2}]"]
    record(5, c["passed"], f"control gain / true gain = {c['ratio']:.4f} (< 0.25)")
    assert c["passed"]


@pytest.mark.xfail(strict=True, reason="after L2 learning CO is well below CL on this corpus")
def test_criterion_06_residual_co_gap(comparison):
    c = comparison.checks[f"co_above_cl_after_l2[{L2}]"]
    record(6, c["passed"], f"A+{L2} on {L2}: CO {c['co']:.3f} vs CL {c['cl']:.3f} (want CO > CL)")
    assert c["passed"]


def test_criterion_07_forgetting(forgetting):
    rels = {k: v["relative_increase"] for k, v in forgetting.checks.items() if k.startswith("forgetting[")}
    ok = all(forgetting.checks[k]["passed"] for k in rels) and forgetting.checks["models_unchanged"]["passed"]
    worst = max(rels.values())
    record(7, ok, f"largest relative L1 increase {worst:+.4f} over {len(rels)} arm/mode pairs (< 0.15)")
    assert ok


def test_criterion_08_topography(desk):
    report, _, _ = pca_report(desk["cur"].baseline.som, desk["train"]["A"], CONFIG)
    c = report.checks
    topo = c["adjacent_closer_than_random"]
    ok = report.passed
    record(8, ok, f"adjacent {topo['adjacent_mean']:.3f} vs random {topo['random_mean']:.3f}, p={topo['p_value']:.4f}; "
                  f"variance ordered={c['variance_ordered[neurons]']['passed'] and c['variance_ordered[inputs]']['passed']}")
    assert ok


def test_criterion_09_numerical_oracles():
    worst_grad = 0.0
    worst_ls = 0.0
    h = 1e-6
    for seed in range(100):
        rng = np.random.default_rng(seed)
        w, X, x = rng.normal(size=10), rng.normal(size=(10, 20)), rng.normal(size=20)
        g = co_gradient(w, X, x)
        fd = np.array([(co_error(w + h * e, X, x) - co_error(w - h * e, X, x)) / (2 * h) for e in np.eye(10)])
        worst_grad = max(worst_grad, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        Xs = 0.3 * X
        _, err, _, _ = descend(Xs, x, CoConfig(max_steps=20000, tolerance=1e-14))
        worst_ls = max(worst_ls, err - least_squares_optimum(Xs, x))

    rng = np.random.default_rng(0)
    V = rng.normal(size=(300, 5)) @ np.diag([5.0, 3.0, 1.0, 0.5, 0.2])
    p = pca_project(V)
    Vc = V - V.mean(axis=0)
    vals, vecs = np.linalg.eigh(Vc.T @ Vc / len(V))
    worst_pca = max(
        min(np.abs(p.components[k] - vecs[:, -1 - k]).max(), np.abs(p.components[k] + vecs[:, -1 - k]).max())
        for k in range(2)
    )
    worst_pca = max(worst_pca, np.abs(p.explained_variance - vals[::-1][:2]).max())

    worst_var = 0.0
    for seed in range(20):
        y = np.random.default_rng(seed).uniform(size=2000)
        m = sum(y) / len(y)
        two_pass = sum((v - m) ** 2 for v in y) / len(y)
        worst_var = max(worst_var, abs(activity_variance(y) - two_pass))

    ok = worst_grad < 1e-6 and worst_ls < 1e-4 and worst_pca < 1e-8 and worst_var < 1e-12
    record(9, ok, f"gradient rel err {worst_grad:.2e}, LS gap {worst_ls:.2e}, PCA {worst_pca:.2e}, variance {worst_var:.2e}")
    assert ok


def test_criterion_10_structural_invariants(desk, comparison, forgetting):
    cur = desk["cur"]
    som = cur.baseline.som
    som_fp = som.fingerprint()
    base = cur.baseline
    n1 = base.z.count

    # CO leaves every fingerprint alone
    before = base.fingerprint()
    co_evaluate(base.z, som, desk["test"][L2][:200], CONFIG.co)
    co_ok = base.fingerprint() == before and forgetting.checks["models_unchanged"]["passed"]

    # CL only appends Z neurons and rewrites templates of winners
    z = base.z.copy()
    x = desk["test"][L2][:100]
    _, trace, _ = cl_run(som, z, x, ClConfig(steps_per_frame=20, epochs=1, rng_seed=1))
    winners = set(trace.neuron)
    changed = set(np.flatnonzero(np.any(z.template_rows[:n1] != base.z.template_rows, axis=1)).tolist())
    cl_ok = (
        z.pattern_rows[:n1].tobytes() == base.z.pattern_rows.tobytes()
        and changed <= winners
        and z.count >= n1
    )
    som_ok = som.fingerprint() == som_fp and all(a.som.fingerprint() == som_fp for a in cur.arms.values())

    # bit reproducibility at reduced scale
    small = PipelineConfig(som=SomConfig(n_neurons=150, iterations=4000, sigma0=15), cl=ClConfig(steps_per_frame=20, epochs=2))
    frames = {"A": desk["train"]["A"][:400], L2: desk["train"][L2][:200]}
    runs = [run_curriculum(frames, small, "A", (L2,)) for _ in range(2)]
    repro = all(
        runs[0].arms[k].fingerprint() == runs[1].arms[k].fingerprint() for k in runs[0].arms
    ) and runs[0].baseline.fingerprint() == runs[1].baseline.fingerprint()

    ok = co_ok and cl_ok and som_ok and repro
    record(10, ok, f"CO no-op={co_ok}, CL append/winner-only={cl_ok}, SOM hash-stable={som_ok}, reproducible={repro}")
    assert ok


@settings(max_examples=200, deadline=None)
@given(st.integers(1024, 40000), st.sampled_from([256, 512, 1024, 2048]), st.integers(1, 1024))
def test_criterion_11_frame_count_property(n, n_fft, hop):
    hop = min(hop, n_fft)
    if n < n_fft:
        return
    cfg = FeatureConfig(n_fft=n_fft, hop=hop)
    assert frame_signal(AudioClip(np.zeros(n), 16000), cfg).shape[0] == frame_count(n, n_fft, hop) == 1 + (n - n_fft) // hop


def test_criterion_11_frame_count():
    n = mfcc(AudioClip(0.01 * np.random.default_rng(0).normal(size=16000), 16000)).shape[0]
    record(11, n == 30, f"1 s at 16 kHz -> {n} frames (expected 30); property test over (len, n_fft, hop)")
    assert n == 30
