"""Tail-index estimators for randomly right-truncated data.

All estimators work on the top ``k`` X order statistics.  With
``a_i = F_n(X_{n-i+1:n}) / C_n(X_{n-i+1:n})`` (Woodroofe product-limit
``F_n`` over the at-risk fraction ``C_n``), the estimators are

* ``kernel``: ``sum a_i g(r_i) log(X_{n-i+1:n}/X_{n-k:n}) / sum a_i``,
* ``bmn``: the same with ``g = 1`` (a weighted Hill average),
* ``gs``: the Gardes-Stupfler ratio built from X and Y log-excesses,
* ``hill``: the classical, unweighted Hill estimator.

The ratio ``r_i`` compares estimated tail masses at ``X_{n-i+1:n}`` and
``X_{n-k:n}``.  Under the default ``"partial-sum"`` convention the tail mass
is ``S(X_{n-j:n}) = n^-1 (a_1 + ... + a_j)``, so ``r_i = P_{i-1} / P_k`` with
``P`` the prefix sums of ``a``; ``"product"`` uses ``1 - F_n`` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, get_kernel
from .model import ObservedSample, complete_data_mode

__all__ = [
    "EstimatorError",
    "SortedView",
    "TopWeights",
    "EstimateResult",
    "empirical_c",
    "woodroofe_cdf",
    "top_weights",
    "tail_mass",
    "tail_sf",
    "kernel_estimate",
    "bmn_estimate",
    "gs_estimate",
    "hill_estimate",
    "cdm_kernel_estimate",
    "estimate",
    "trajectory",
    "ESTIMATOR_NAMES",
]

ESTIMATOR_NAMES = ("kernel", "bmn", "gs", "hill")
TAIL_CONVENTIONS = ("partial-sum", "product")
WEIGHT_MODES = ("auto", "product-limit", "unit")


class EstimatorError(ValueError):
    """The estimator is undefined for this sample / k."""


@dataclass(frozen=True, eq=False)
class SortedView:
    """Order statistics of an observed sample with ``C_n`` and ``F_n`` at each X.

    Arrays are indexed by ascending rank ``j = 0..n-1``; ``x_order`` holds
    the original indices of ``x_sorted``.
    """

    x_sorted: np.ndarray
    x_order: np.ndarray
    y_sorted: np.ndarray
    cn_at_x: np.ndarray
    fn_at_x: np.ndarray
    complete: bool
    has_sentinel: bool

    @property
    def n(self) -> int:
        return int(self.x_sorted.size)

    @property
    def log_x_desc(self) -> np.ndarray:
        """``log X_{n-i+1:n}`` for ``i = 1..n`` (descending order)."""
        return np.log(self.x_sorted[::-1])


@dataclass(frozen=True, eq=False)
class TopWeights:
    """``a[i-1] = a_i`` for ``i = 1..k`` and their prefix sums (``prefix[0] = 0``)."""

    k: int
    a: np.ndarray
    prefix: np.ndarray


@dataclass(frozen=True)
class EstimateResult:
    estimator: str
    k: int
    gamma1_hat: float
    n: int
    diagnostics: dict | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "k": self.k,
            "gamma1_hat": self.gamma1_hat,
            "n": self.n,
        }


def _as_sample(data) -> ObservedSample:
    if isinstance(data, ObservedSample):
        return data
    return complete_data_mode(data)


def _count_bracketing(x_sorted, y_trunc_sorted, points):
    # pairs with X <= t <= Y: those with X <= t minus those with Y < t
    # (Y < t forces X <= Y < t); sentinel Y never drops out
    points = np.asarray(points, dtype=float)
    below = np.searchsorted(x_sorted, points, side="right")
    gone = np.searchsorted(y_trunc_sorted, points, side="left")
    return below - gone


def empirical_c(sample: ObservedSample, x):
    """``C_n(x) = n^-1 #{i : X_i <= x <= Y_i}``; sentinel ``Y`` is never below ``x``."""
    xs = np.sort(sample.x)
    ys = np.sort(sample.y[~sample.untruncated])
    out = _count_bracketing(xs, ys, x) / sample.n
    return float(out) if np.ndim(x) == 0 else out


def woodroofe_cdf(sample: ObservedSample) -> SortedView:
    """Sort the sample and evaluate ``C_n`` and Woodroofe's ``F_n`` at each X.

    ``F_n(x) = prod_{i : X_i > x} exp(-1 / (n C_n(X_i)))``.  Ties in X are
    ordered by original index (stable sort); the product uses the strict
    inequality, so tied values share one ``F_n`` value.
    """
    n = sample.n
    order = np.argsort(sample.x, kind="stable")
    xs = sample.x[order]
    y_trunc = np.sort(sample.y[~sample.untruncated])
    cn = _count_bracketing(xs, y_trunc, xs) / n
    inv = 1.0 / (n * cn)
    # suffix[j] = sum of inv over ranks >= j; suffix[n] = 0
    suffix = np.concatenate([np.cumsum(inv[::-1])[::-1], [0.0]])
    first_above = np.searchsorted(xs, xs, side="right")
    fn = np.exp(-suffix[first_above])
    for arr in (xs, order, cn, fn):
        arr.setflags(write=False)
    ys = np.sort(sample.y)
    ys.setflags(write=False)
    return SortedView(
        x_sorted=xs,
        x_order=order,
        y_sorted=ys,
        cn_at_x=cn,
        fn_at_x=fn,
        complete=sample.is_complete,
        has_sentinel=bool(sample.untruncated.any()),
    )


def _view(data) -> SortedView:
    if isinstance(data, SortedView):
        return data
    return woodroofe_cdf(_as_sample(data))


def _all_weights(view: SortedView, weights: str) -> np.ndarray:
    if weights not in WEIGHT_MODES:
        raise ValueError(f"weights must be one of {WEIGHT_MODES}, got {weights!r}")
    if weights == "unit" or (weights == "auto" and view.complete):
        # complete data: the product-limit df is the empirical df, F_n = C_n
        return np.ones(view.n)
    return (view.fn_at_x / view.cn_at_x)[::-1]


def top_weights(view, k: int | None = None, weights: str = "auto") -> TopWeights:
    """Weights ``a_i`` for the top ``k`` order statistics (all ``n`` by default).

    ``weights="auto"`` uses unit weights on complete data (where the
    product-limit df coincides with the empirical df) and the product-limit
    ratio otherwise; ``"product-limit"`` forces the ratio, ``"unit"`` forces 1.
    """
    view = _view(view)
    k = view.n if k is None else int(k)
    if not 0 <= k <= view.n:
        raise ValueError(f"k must lie in [0, {view.n}], got {k}")
    a = _all_weights(view, weights)[:k]
    prefix = np.concatenate([[0.0], np.cumsum(a)])
    return TopWeights(k, a, prefix)


def tail_mass(view, j: int, weights: str = "auto") -> float:
    """Sum-form tail estimate ``S(X_{n-j:n}) = n^-1 sum_{i<=j} a_i`` (0 for ``j = 0``)."""
    view = _view(view)
    if int(j) != j or not 0 <= j <= view.n - 1:
        raise ValueError(f"j must be an integer in [0, {view.n - 1}], got {j}")
    return float(top_weights(view, int(j), weights).prefix[-1] / view.n)


def tail_sf(view, t, weights: str = "auto"):
    """Right-continuous sum-form tail ``n^-1 sum_{i : X_{n-i+1:n} > t} a_i``."""
    view = _view(view)
    tw = top_weights(view, None, weights)
    # number of order statistics strictly above t
    above = view.n - np.searchsorted(view.x_sorted, np.asarray(t, dtype=float), side="right")
    out = tw.prefix[above] / view.n
    return float(out) if np.ndim(t) == 0 else out


def _check_k(k, n):
    if int(k) != k:
        raise EstimatorError(f"k must be an integer, got {k!r}")
    k = int(k)
    if k < 2:
        raise EstimatorError(f"k must be >= 2, got {k}")
    if k > n - 1:
        raise EstimatorError(f"k must be <= n - 1 = {n - 1}, got {k}")
    return k


def _log_excess(view: SortedView, k: int) -> np.ndarray:
    lx = view.log_x_desc
    exc = lx[:k] - lx[k]
    if not np.any(exc > 0):
        raise EstimatorError(f"top {k + 1} order statistics are tied; all log-ratios are zero")
    return exc


def kernel_estimate(
    sample,
    k: int,
    kernel="biweight",
    tail_convention: str = "partial-sum",
    weights: str = "auto",
) -> EstimateResult:
    """Kernel estimate of the tail index of the truncated variable.

    Parameters
    ----------
    sample : ObservedSample, SortedView or sequence of complete observations
    k : int
        Number of top order statistics, ``2 <= k <= n - 1``.
    kernel : Kernel or str
    tail_convention : {"partial-sum", "product"}
        How the tail-mass ratio fed to ``g`` is computed.
    weights : {"auto", "product-limit", "unit"}
        See :func:`top_weights`.

    Returns
    -------
    EstimateResult
        ``diagnostics`` holds the weights, the ratio arguments and the
        per-term contributions to the numerator.
    """
    kernel = get_kernel(kernel)
    view = _view(sample)
    k = _check_k(k, view.n)
    if tail_convention not in TAIL_CONVENTIONS:
        raise ValueError(f"tail_convention must be one of {TAIL_CONVENTIONS}")
    tw = top_weights(view, k, weights)
    exc = _log_excess(view, k)
    ratio = _ratios(view, tw, k, tail_convention)
    terms = tw.a * kernel.g_at(ratio) * exc
    value = float(np.sum(terms) / tw.prefix[k])
    return EstimateResult(
        "kernel",
        k,
        value,
        view.n,
        {"kernel": kernel.name, "weights": tw.a, "ratios": ratio, "terms": terms},
    )


def _ratios(view, tw, k, tail_convention):
    if tail_convention == "partial-sum":
        return tw.prefix[:k] / tw.prefix[k]
    fn_desc = view.fn_at_x[::-1]
    return (1.0 - fn_desc[:k]) / (1.0 - fn_desc[k])


def bmn_estimate(sample, k: int, weights: str = "auto") -> EstimateResult:
    """Product-limit weighted Hill estimator ``sum a_i log(X_{n-i+1}/X_{n-k}) / sum a_i``."""
    view = _view(sample)
    k = _check_k(k, view.n)
    tw = top_weights(view, k, weights)
    exc = _log_excess(view, k)
    terms = tw.a * exc
    return EstimateResult(
        "bmn", k, float(np.sum(terms) / tw.prefix[k]), view.n, {"weights": tw.a, "terms": terms}
    )


def _gs_value(lx_desc, ly_desc, k):
    sx = float(np.sum(lx_desc[:k] - lx_desc[k]))
    sy = float(np.sum(ly_desc[:k] - ly_desc[k]))
    # sum_i log(X_{n-k} Y_{n-i+1} / (Y_{n-k} X_{n-i+1})) = sy - sx
    denom = sy - sx
    if denom == 0.0 or not math.isfinite(denom):
        raise EstimatorError("GS undefined: zero denominator")
    return sx * sy / (k * denom), sx, sy, denom


def gs_estimate(sample, k: int) -> EstimateResult:
    """Gardes-Stupfler estimator; X and Y order statistics are sorted separately."""
    view = _view(sample)
    if view.has_sentinel:
        raise EstimatorError("GS undefined: sample contains untruncated (y = inf) pairs")
    k = _check_k(k, view.n)
    lx = view.log_x_desc
    ly = np.log(view.y_sorted[::-1])
    value, sx, sy, denom = _gs_value(lx, ly, k)
    return EstimateResult(
        "gs", k, float(value), view.n, {"sum_log_x": sx, "sum_log_y": sy, "denominator": denom}
    )


def hill_estimate(xs, k: int) -> EstimateResult:
    """Classical Hill estimator ``k^-1 sum log(X_{n-i+1:n} / X_{n-k:n})``."""
    x = xs.x if isinstance(xs, ObservedSample) else np.asarray(xs, dtype=float).ravel()
    n = x.size
    k = _check_k(k, n)
    lx = np.log(np.sort(x)[::-1])
    exc = lx[:k] - lx[k]
    if not np.any(exc > 0):
        raise EstimatorError(f"top {k + 1} order statistics are tied; all log-ratios are zero")
    return EstimateResult("hill", k, float(np.mean(exc)), n)


def cdm_kernel_estimate(xs, k: int, kernel="biweight") -> EstimateResult:
    """Complete-data kernel form ``sum_i (i/k) K(i/k) log(X_{n-i+1:n} / X_{n-i:n})``.

    ``K(1)`` is read as the left limit ``K(1-)`` so the indicator kernel
    recovers Hill exactly.
    """
    kernel = get_kernel(kernel)
    x = xs.x if isinstance(xs, ObservedSample) else np.asarray(xs, dtype=float).ravel()
    n = x.size
    k = _check_k(k, n)
    lx = np.log(np.sort(x)[::-1])
    spacings = lx[:k] - lx[1 : k + 1]
    s = np.arange(1, k + 1) / k
    s[-1] = np.nextafter(1.0, 0.0)
    value = float(np.sum(s * kernel.k_at(s) * spacings))
    return EstimateResult("cdm-kernel", k, value, n)


def estimate(sample, estimator: str, k: int, kernel="biweight", **kwargs) -> EstimateResult:
    """Dispatch by estimator name (``kernel``, ``bmn``, ``gs``, ``hill``)."""
    if estimator == "kernel":
        return kernel_estimate(sample, k, kernel, **kwargs)
    if estimator == "bmn":
        return bmn_estimate(sample, k, **kwargs)
    if estimator == "gs":
        return gs_estimate(sample, k)
    if estimator == "hill":
        return hill_estimate(sample.x if isinstance(sample, ObservedSample) else sample, k)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATOR_NAMES)}")


# --- whole trajectories k = 1..k_max --------------------------------------
#
# Used for threshold selection.  Entry k-1 is the estimate at k; undefined
# values are NaN.  k = 1 is included as a trajectory point only.


def trajectory(
    sample,
    estimator: str,
    k_max: int | None = None,
    kernel="biweight",
    tail_convention: str = "partial-sum",
    weights: str = "auto",
) -> np.ndarray:
    """Estimates for every ``k = 1..k_max`` (default ``n - 1``) as one array."""
    view = _view(sample)
    n = view.n
    k_max = n - 1 if k_max is None else int(k_max)
    if not 1 <= k_max <= n - 1:
        raise ValueError(f"k_max must lie in [1, {n - 1}], got {k_max}")
    ks = np.arange(1, k_max + 1)
    lx = view.log_x_desc
    # centring keeps the cumulative sums small
    lx = lx - lx[k_max]
    with np.errstate(divide="ignore", invalid="ignore"):
        if estimator == "hill":
            out = (np.cumsum(lx)[:k_max] - ks * lx[1 : k_max + 1]) / ks
        elif estimator == "bmn":
            a = _all_weights(view, weights)
            p = np.cumsum(a)[:k_max]
            out = (np.cumsum(a * lx)[:k_max] - p * lx[1 : k_max + 1]) / p
        elif estimator == "gs":
            if view.has_sentinel:
                return np.full(k_max, np.nan)
            ly = np.log(view.y_sorted[::-1])
            ly = ly - ly[k_max]
            sx = np.cumsum(lx)[:k_max] - ks * lx[1 : k_max + 1]
            sy = np.cumsum(ly)[:k_max] - ks * ly[1 : k_max + 1]
            out = sx * sy / (ks * (sy - sx))
        elif estimator == "kernel":
            out = _kernel_trajectory(view, get_kernel(kernel), k_max, lx, tail_convention, weights)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        # ties at the top make the log-excesses vanish
        degenerate = lx[0] == lx[1 : k_max + 1]
    out = np.where(np.isfinite(out) & ~degenerate, out, np.nan)
    return out


def _kernel_trajectory(view, kernel: Kernel, k_max, lx, tail_convention, weights):
    a = _all_weights(view, weights)[: k_max + 1]
    prefix = np.concatenate([[0.0], np.cumsum(a)])
    ks = np.arange(1, k_max + 1)
    pk = prefix[1 : k_max + 1]
    if kernel.g_coeffs is not None and tail_convention == "partial-sum":
        # g polynomial on [0,1): expand g(P_{i-1}/P_k) in powers of 1/P_k
        prev = prefix[:k_max]
        lk = lx[1 : k_max + 1]
        num = np.zeros(k_max)
        for j, c in enumerate(kernel.g_coeffs):
            if c == 0.0:
                continue
            w = a[:k_max] * prev**j
            s1 = np.cumsum(w * lx[:k_max])
            s0 = np.cumsum(w)
            num += c * (s1 - s0 * lk) / pk**j
        return num / pk
    out = np.empty(k_max)
    fn_desc = view.fn_at_x[::-1]
    for k in ks:
        if tail_convention == "partial-sum":
            r = prefix[:k] / prefix[k]
        else:
            r = (1.0 - fn_desc[:k]) / (1.0 - fn_desc[k])
        out[k - 1] = np.sum(a[:k] * kernel.g_at(r) * (lx[:k] - lx[k])) / prefix[k]
    return out
