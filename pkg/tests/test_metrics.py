import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frnet import metrics
from frnet.metrics import UndefinedMetricError
from frnet.models import FMFRNet, ModelSpec


def test_auc_hand_example():
    assert metrics.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_perfect_and_reversed():
    assert metrics.auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert metrics.auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0


def test_auc_all_tied_is_one_half():
    assert metrics.auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5


def test_auc_single_class_raises():
    with pytest.raises(UndefinedMetricError):
        metrics.auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        metrics.auc_pairwise([0.1, 0.2], [0, 0])


def test_auc_rejects_non_binary_labels():
    with pytest.raises(ValueError):
        metrics.auc([0.1, 0.2], [0, 2])


def test_average_ranks_ties():
    np.testing.assert_array_equal(metrics.average_ranks(np.array([3.0, 1.0, 3.0, 2.0])), [3.5, 1, 3.5, 2])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 1000), st.integers(0, 2**31 - 1), st.booleans())
def test_fast_auc_matches_pairwise_oracle(n, seed, coarse):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, 5, n) / 4 if coarse else rng.random(n)
    assert abs(metrics.auc(s, y) - metrics.auc_pairwise(s, y)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_invariant_to_monotone_transforms(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, 98)]
    s = rng.normal(size=100)
    assert metrics.auc(s, y) == pytest.approx(metrics.auc(np.exp(3 * s) + 1, y), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_of_complement_scores(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, 48)]
    s = rng.random(50)
    assert metrics.auc(s, y) + metrics.auc(1 - s, y) == pytest.approx(1.0, abs=1e-12)


def test_logloss_examples():
    assert metrics.logloss([0.5, 0.5], [0, 1]) == pytest.approx(np.log(2))
    assert metrics.logloss([0.9, 0.2], [1, 0]) == pytest.approx(-(np.log(0.9) + np.log(0.8)) / 2)


def test_logloss_is_clamped():
    assert metrics.logloss([0.0, 1.0], [1, 0]) == pytest.approx(-np.log(1e-7), rel=1e-6)
    assert np.isfinite(metrics.logloss([1.0], [1]))


def test_logloss_empty_raises():
    with pytest.raises(UndefinedMetricError):
        metrics.logloss([], [])


def small_model(variant=13, seed=0):
    return FMFRNet.initialize(ModelSpec(num_features=30, num_fields=4, embed_dim=5, attn_dim=5,
                                        cie_hidden=(8,), variant=variant), seed=seed)


def test_gate_stats_at_initialization_is_near_one_half():
    feats = np.random.default_rng(0).integers(0, 30, size=(500, 4))
    st_ = metrics.gate_stats(small_model(), feats, chunk=128)
    assert st_.count == 500 * 4 * 5
    assert abs(st_.mean - 0.5) < 0.01
    assert st_.counts.sum() == st_.count and len(st_.counts) == 100


def test_gate_stats_complement_sums_to_one():
    feats = np.random.default_rng(1).integers(0, 30, size=(200, 4))
    m = small_model(seed=1)
    for p in m.parameters():
        p.data *= 40  # push the gates away from 1/2
    st_ = metrics.gate_stats(m, feats)
    assert abs(st_.mean + st_.mean_complement - 1.0) <= 1e-6


def test_gate_histogram_csv(tmp_path):
    feats = np.random.default_rng(2).integers(0, 30, size=(50, 4))
    st_ = metrics.gate_stats(small_model(), feats, bins=10)
    st_.write_histogram(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_low,bin_high,count"
    assert len(lines) == 11 and lines[1].startswith("0.00,0.10,")
    assert sum(int(r.split(",")[2]) for r in lines[1:]) == st_.count


def test_gate_stats_empty_sample_raises():
    with pytest.raises(UndefinedMetricError):
        metrics.gate_stats(small_model(), np.zeros((0, 4), dtype=np.int64))
