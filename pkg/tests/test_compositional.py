import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vocdev.compositional import (
    CoConfig,
    co_error,
    co_evaluate,
    co_gradient,
    co_optimize,
    co_select,
    descend,
    least_squares_optimum,
)
from vocdev.errors import DimensionMismatch, EmptyDataset, NNotAvailable
from vocdev.memory import ZLayer


def instance(seed, n=10, dim=20):
    rng = np.random.default_rng(seed)
    return rng.normal(size=n), rng.normal(size=(n, dim)), rng.normal(size=dim)


def test_gradient_matches_central_differences():
    h = 1e-6
    worst = 0.0
    for seed in range(100):
        w, X, x = instance(seed)
        g = co_gradient(w, X, x)
        fd = np.empty_like(w)
        for k in range(len(w)):
            e = np.zeros_like(w)
            e[k] = h
            fd[k] = (co_error(w + e, X, x) - co_error(w - e, X, x)) / (2 * h)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert worst < 1e-6


def test_gradient_matches_closed_form():
    w, X, x = instance(1, n=3, dim=4)
    expected = 2 * (X @ X.T @ w - X @ x)
    np.testing.assert_allclose(co_gradient(w, X, x), expected, rtol=1e-12)


def test_reaches_least_squares_optimum():
    cfg = CoConfig(max_steps=20000, tolerance=1e-14)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.normal(0, 0.3, size=(10, 20))
        x = rng.normal(size=20)
        _, err, _, _ = descend(X, x, cfg)
        assert err - least_squares_optimum(X, x) < 1e-4


def test_one_hot_exact():
    X = np.eye(3, 5)
    x = np.array([2.0, -1.0, 0.5, 0.0, 0.0])
    w, err, _, _ = descend(X, x, CoConfig(max_steps=5000, tolerance=1e-16))
    np.testing.assert_allclose(w, [2.0, -1.0, 0.5], atol=1e-6)
    assert err < 1e-10


def test_in_span_reaches_zero():
    rng = np.random.default_rng(2)
    X = rng.normal(0, 0.3, size=(4, 20))
    x = np.array([0.5, -1.0, 2.0, 0.25]) @ X
    _, err, _, _ = descend(X, x, CoConfig(max_steps=20000, tolerance=1e-16))
    assert err < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_curve_non_increasing(seed, literal):
    _, X, x = instance(seed)
    _, err, steps, curve = descend(X, x, CoConfig(literal_update=literal))
    assert np.all(np.diff(curve) <= 0)
    assert len(curve) == steps + 1
    assert err == pytest.approx(curve[-1], rel=1e-9, abs=1e-9)


def test_literal_mode_differs():
    _, X, x = instance(3)
    a = descend(X, x, CoConfig())
    b = descend(X, x, CoConfig(literal_update=True))
    assert not np.allclose(a[0], b[0])
    # the literal update moves every coefficient by the same amount
    assert np.ptp(b[0]) < 1e-12


def test_shape_errors():
    with pytest.raises(DimensionMismatch):
        co_error(np.ones(3), np.ones((2, 5)), np.ones(5))
    with pytest.raises(DimensionMismatch):
        co_gradient(np.ones(2), np.ones((2, 5)), np.ones(4))


@pytest.fixture(scope="module")
def memory(small_som):
    rng = np.random.default_rng(0)
    z = ZLayer(pattern_dim=small_som.n_neurons, output_dim=20, similarity="cosine")
    for x in rng.normal(size=(25, 20)):
        z.recruit(small_som.activate(x), rng)
        z.set_template(z.count - 1, x + rng.normal(0, 0.1, 20))
    return z


class TestOnModel:
    def test_more_constituents_never_hurt(self, small_som, memory, small_frames):
        for x in small_frames[:10]:
            small = co_optimize(memory, small_som, x, CoConfig(n_constituents=10, max_steps=20000, tolerance=1e-14))
            full = co_optimize(memory, small_som, x, CoConfig(n_constituents=memory.count, max_steps=20000, tolerance=1e-14))
            assert full.final_error <= small.final_error + 1e-4

    def test_selection_is_top_n(self, small_som, memory, small_frames):
        x = small_frames[0]
        idx, C = co_select(memory, small_som, x, 10)
        np.testing.assert_array_equal(idx, memory.top_n(small_som.activate(x), 10))
        np.testing.assert_array_equal(C, memory.template_rows[idx])

    def test_fingerprint_unchanged(self, small_som, memory, small_frames):
        before = (memory.fingerprint(), small_som.fingerprint())
        co_evaluate(memory, small_som, small_frames)
        assert (memory.fingerprint(), small_som.fingerprint()) == before

    def test_outputs(self, small_som, memory, small_frames, tmp_path):
        mean, results = co_evaluate(memory, small_som, small_frames[:4], CoConfig(), tmp_path / "r.csv", tmp_path / "c.json")
        assert mean == pytest.approx(np.mean([r.final_error for r in results]))
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "frame_index,final_error,steps_used" and len(lines) == 5
        side = json.loads((tmp_path / "c.json").read_text())
        assert len(side) == 4 and len(side[0]["constituents"]) == 10

    def test_too_few(self, small_som, small_frames):
        z = ZLayer(pattern_dim=small_som.n_neurons, output_dim=20)
        with pytest.raises(NNotAvailable):
            co_optimize(z, small_som, small_frames[0])
        z.recruit(small_som.activate(small_frames[0]), np.random.default_rng(0))
        with pytest.raises(NNotAvailable):
            co_optimize(z, small_som, small_frames[0])

    def test_empty(self, small_som, memory):
        with pytest.raises(EmptyDataset):
            co_evaluate(memory, small_som, np.zeros((0, 20)))


def test_config_validation():
    for bad in (dict(n_constituents=0), dict(learning_rate=0), dict(max_steps=0)):
        with pytest.raises(ValueError):
            CoConfig(**bad)
