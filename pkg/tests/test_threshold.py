import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trunctail.estimators import kernel_estimate, trajectory
from trunctail.model import TruncationDesign, sample_truncated
from trunctail.threshold import RTConfig, ThresholdError, auto_k, rt_criterion, select_k


def brute_criterion(values, k, theta, i_start=1):
    window = [values[i - 1] for i in range(i_start, k + 1)]
    med = statistics.median(window)
    return sum(i**theta * abs(values[i - 1] - med) for i in range(i_start, k + 1)) / k


def brute_select(values, k_min, k_max, theta):
    best_k, best = None, None
    for k in range(k_min, k_max + 1):
        c = brute_criterion(values, k, theta)
        if best is None or c < best:
            best_k, best = k, c
    return best_k


def test_constant_trajectory_returns_k_min():
    assert select_k(np.full(50, 0.7)) == 2
    assert select_k(np.full(50, 0.7), cfg=RTConfig(k_min=5)) == 5


def test_synthetic_trajectory_matches_brute_force():
    k_max = 200
    path = 1.0 + (np.arange(1, k_max + 1) / k_max) ** 2
    for theta in (0.0, 0.3, 0.5):
        got = select_k(path, cfg=RTConfig(theta=theta, k_max=k_max))
        assert got == brute_select(list(path), 2, k_max, theta)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=80), st.sampled_from([0.0, 0.3, 0.5]))
def test_criterion_matches_brute_force(values, theta):
    ks = np.arange(1, len(values) + 1)
    crit = rt_criterion(np.array(values), ks, theta, block=7)
    for k in range(1, len(values) + 1):
        assert crit[k - 1] == pytest.approx(brute_criterion(values, k, theta), rel=1e-12, abs=1e-12)
    assert select_k(np.array(values), cfg=RTConfig(theta=theta)) == brute_select(values, 2, len(values), theta)


def test_ties_go_to_smallest_k():
    # constant after k=3: criterion is flat and minimal from several k
    path = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0])
    assert select_k(path) == 2


def test_callable_source_and_range():
    design = TruncationDesign.from_p(0.6, 0.8, 500)
    s = sample_truncated(design, 12)
    path = trajectory(s, "kernel")
    k1 = select_k(s.n, lambda k: path[k - 1])
    assert 2 <= k1 <= int(0.9 * s.n)
    assert k1 == auto_k(s, "kernel")
    # library estimators reject k = 1, which drops the first window point
    k2 = select_k(s.n, lambda k: kernel_estimate(s, k).gamma1_hat)
    assert k2 == select_k(s.n, lambda k: path[k - 1] if k > 1 else np.nan)


def test_theta_variants_reproducible():
    s = sample_truncated(TruncationDesign.from_p(0.6, 0.9, 1000), 77)
    for theta in (0.0, 0.3):
        cfg = RTConfig(theta=theta)
        a = auto_k(s, "kernel", cfg=cfg)
        b = auto_k(s, "kernel", cfg=cfg)
        assert a == b
        lo, hi = cfg.bounds(s.n)
        assert lo <= a <= hi


@pytest.mark.parametrize("est", ["kernel", "bmn", "gs", "hill"])
def test_output_in_range(est):
    for seed in range(10):
        s = sample_truncated(TruncationDesign.from_p(0.6, 0.7, 300), seed)
        k = auto_k(s, est)
        assert 2 <= k <= min(int(0.9 * s.n), s.n - 1)


def test_rescaling_does_not_change_choice():
    for seed in range(5):
        s = sample_truncated(TruncationDesign.from_p(0.6, 0.8, 400), seed)
        for est in ("kernel", "bmn", "gs"):
            assert auto_k(s, est) == auto_k(s.scaled(16.0), est)


def test_failed_evaluations_are_skipped():
    path = np.array([1.0, np.nan, 1.1, 1.05, np.nan, 1.2, 1.0])
    k = select_k(path)
    assert k in (3, 4, 6, 7)
    clean = [v for v in path if np.isfinite(v)]
    ks = [i + 1 for i, v in enumerate(path) if np.isfinite(v)]
    # brute force on the finite points only, with the original k values as weights and divisors
    best = min(
        (sum(ks[j] ** 0.3 * abs(clean[j] - statistics.median(clean[: i + 1])) for j in range(i + 1)) / ks[i], ks[i])
        for i in range(len(ks))
        if ks[i] >= 2
    )
    assert k == best[1]


def test_callable_exceptions_are_failures():
    def fn(k):
        if k % 2:
            raise ValueError("odd")
        return 1.0 + 0.01 * k

    k = select_k(fn, cfg=RTConfig(k_max=20))
    assert k % 2 == 0


def test_all_fail_raises():
    with pytest.raises(ThresholdError):
        select_k(np.full(10, np.nan))
    with pytest.raises(ThresholdError):
        select_k(lambda k: float("nan"), cfg=RTConfig(k_max=10))


def test_config_validation():
    with pytest.raises(ValueError):
        RTConfig(theta=0.6)
    with pytest.raises(ValueError):
        RTConfig(k_min=1)
    with pytest.raises(ValueError):
        RTConfig(k_min=5, k_max=5)
    with pytest.raises(ValueError):
        RTConfig(i_start=3, k_min=2)
    with pytest.raises(ThresholdError):
        RTConfig().bounds(2)


def test_k_min_start_is_degenerate():
    # starting the sum at k_min makes crit(k_min) = 0, so k_min always wins
    s = sample_truncated(TruncationDesign.from_p(0.6, 0.8, 600), 5)
    path = trajectory(s, "kernel", int(0.9 * s.n))
    assert select_k(path, cfg=RTConfig(k_min=2, i_start=2)) == 2
