"""Choice of the number ``k`` of top order statistics.

The stability criterion of Reiss and Thomas picks the ``k`` minimising

    crit(k) = k^-1 sum_{i=i_start}^{k} i^theta |est(i) - median(est(i_start..k))|

over ``k_min <= k <= k_max``.  Ties go to the smallest ``k``.  With
``i_start = k_min`` the criterion is identically zero at ``k = k_min``, so the
sum starts at ``i_start = 1`` by default (the trajectory then includes the
single-order-statistic estimate, which is never itself returned).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimators import trajectory

__all__ = [
    "RTConfig",
    "ThresholdError",
    "rt_criterion",
    "select_k",
    "auto_k",
    "default_k_max",
]


class ThresholdError(RuntimeError):
    """No admissible ``k`` could be evaluated."""


def default_k_max(n: int) -> int:
    return max(int(0.9 * n), 1)


@dataclass(frozen=True)
class RTConfig:
    """Parameters of the stability criterion; ``k_max=None`` means ``floor(0.9 n)``."""

    theta: float = 0.3
    k_min: int = 2
    k_max: int | None = None
    i_start: int = 1

    def __post_init__(self):
        if not 0.0 <= self.theta <= 0.5:
            raise ValueError(f"theta must lie in [0, 0.5], got {self.theta}")
        if self.k_min < 2:
            raise ValueError(f"k_min must be >= 2, got {self.k_min}")
        if not 1 <= self.i_start <= self.k_min:
            raise ValueError(f"i_start must lie in [1, k_min], got {self.i_start}")
        if self.k_max is not None and self.k_max <= self.k_min:
            raise ValueError(f"k_max ({self.k_max}) must exceed k_min ({self.k_min})")

    def bounds(self, n: int) -> tuple[int, int]:
        """Effective ``(k_min, k_max)`` for a sample of size ``n``."""
        k_max = default_k_max(n) if self.k_max is None else self.k_max
        k_max = min(k_max, n - 1)
        if k_max < self.k_min:
            raise ThresholdError(f"sample of size {n} leaves no k in [{self.k_min}, {k_max}]")
        return self.k_min, k_max


def _running_medians(values: np.ndarray) -> np.ndarray:
    window: list[float] = []
    out = np.empty(values.size)
    for j, v in enumerate(values):
        bisect.insort(window, float(v))
        m = len(window)
        mid = m // 2
        out[j] = window[mid] if m % 2 else 0.5 * (window[mid - 1] + window[mid])
    return out


def rt_criterion(path: np.ndarray, ks: np.ndarray, theta: float, block: int = 512) -> np.ndarray:
    """Criterion value at each end point of ``path``.

    ``path[j]`` is the estimate at ``ks[j]``; entry ``j`` of the result uses
    the window ``path[0..j]``.  Rows are evaluated in blocks to bound memory.
    """
    path = np.asarray(path, dtype=float)
    ks = np.asarray(ks, dtype=float)
    med = _running_medians(path)
    w = ks**theta
    crit = np.empty(path.size)
    for start in range(0, path.size, block):
        stop = min(start + block, path.size)
        cols = stop
        dev = np.abs(path[None, :cols] - med[start:stop, None]) * w[None, :cols]
        rows = np.arange(start, stop)[:, None]
        dev[np.arange(cols)[None, :] > rows] = 0.0
        crit[start:stop] = dev.sum(axis=1)
    return crit / ks


def select_k(source, estimator: Callable[[int], float] | None = None, cfg: RTConfig | None = None) -> int:
    """Select ``k`` by the stability criterion.

    Parameters
    ----------
    source : int, sequence or callable
        Either the sample size ``n`` (with ``estimator`` a callable ``k -> est``),
        a callable ``k -> est`` (then ``cfg.k_max`` is required), or a
        precomputed trajectory whose entry ``k - 1`` is the estimate at ``k``.
    estimator : callable, optional
    cfg : RTConfig, optional

    Failed evaluations (exceptions or non-finite values) are left out of
    the medians, the sums and the candidate set.  A callable is evaluated
    from ``cfg.i_start`` (default 1) even though only ``k >= k_min`` can be
    returned; if it cannot handle ``k = 1`` (the library estimators reject
    it) the first window point is lost, and with ``k_min = 2`` the criterion
    then vanishes at ``k = 2``.  Pass a trajectory from
    :func:`trunctail.estimators.trajectory` to keep that point.
    """
    cfg = RTConfig() if cfg is None else cfg
    if callable(source):
        source, estimator = None, source
    if estimator is not None:
        if source is None:
            if cfg.k_max is None:
                raise ValueError("k_max must be set when no sample size is given")
            k_min, k_max = cfg.k_min, cfg.k_max
        else:
            k_min, k_max = cfg.bounds(int(source))
        ks = np.arange(cfg.i_start, k_max + 1)
        values = np.array([_safe_call(estimator, int(k)) for k in ks])
    else:
        traj = np.asarray(source, dtype=float)
        k_min = cfg.k_min
        k_max = traj.size if cfg.k_max is None else min(cfg.k_max, traj.size)
        if k_max < k_min:
            raise ThresholdError(f"trajectory of length {traj.size} leaves no k >= {k_min}")
        ks = np.arange(cfg.i_start, k_max + 1)
        values = traj[ks - 1]
    return _argmin_k(ks, values, k_min, cfg.theta)


def _argmin_k(ks, values, k_min, theta):
    ok = np.isfinite(values)
    if not ok[ks >= k_min].any():
        raise ThresholdError("estimator failed for every candidate k")
    ks, values = ks[ok], values[ok]
    crit = rt_criterion(values, ks, theta)
    crit = np.where(ks >= k_min, crit, np.inf)
    # argmin returns the first (smallest k) minimiser
    return int(ks[int(np.argmin(crit))])


def _safe_call(fn, k):
    try:
        v = float(fn(k))
    except (ValueError, ArithmeticError):
        return np.nan
    return v


def auto_k(sample, estimator: str, kernel="biweight", cfg: RTConfig | None = None, **kwargs) -> int:
    """``select_k`` on the full trajectory of a named estimator for ``sample``."""
    cfg = RTConfig() if cfg is None else cfg
    n = len(sample)
    _, k_max = cfg.bounds(n)
    path = trajectory(sample, estimator, k_max, kernel=kernel, **kwargs)
    ks = np.arange(cfg.i_start, k_max + 1)
    return _argmin_k(ks, path[ks - 1], cfg.k_min, cfg.theta)
