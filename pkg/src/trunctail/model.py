"""Burr sampling and the random right-truncation mechanism.

A latent pair ``(X, Y)`` is drawn from two independent Burr laws and is kept
only when ``X <= Y``.  Kept pairs form an :class:`ObservedSample`.  A pair
can also be flagged as *untruncated*, meaning its ``Y`` is the "no
truncation" sentinel (``+inf``); complete data is a sample in which every
pair carries that flag.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "BurrSpec",
    "TruncationDesign",
    "ObservedSample",
    "EmptySampleError",
    "DataFormatError",
    "burr_quantile",
    "burr_sf",
    "sample_truncated",
    "complete_data_mode",
    "read_csv",
    "write_csv",
]


class EmptySampleError(RuntimeError):
    """No latent pair survived truncation."""


class DataFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based (``None`` if not line specific)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class BurrSpec:
    """Burr law with survival function ``(1 + x**(1/delta)) ** (-delta/gamma)``."""

    delta: float
    gamma: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass(frozen=True)
class TruncationDesign:
    """Latent design: ``capital_n`` pairs, X ~ ``truncated``, Y ~ ``truncating``.

    ``truncating=None`` is the no-truncation sentinel: every X is observed.
    """

    truncated: BurrSpec
    truncating: BurrSpec | None
    capital_n: int

    def __post_init__(self):
        if int(self.capital_n) != self.capital_n or self.capital_n < 1:
            raise ValueError(f"capital_n must be a positive integer, got {self.capital_n}")
        if self.truncating is not None and self.truncated.gamma >= self.truncating.gamma:
            warnings.warn(
                f"gamma1={self.truncated.gamma} >= gamma2={self.truncating.gamma}: "
                "the asymptotic theory assumes gamma1 < gamma2",
                stacklevel=2,
            )

    @classmethod
    def from_p(cls, gamma1: float, p: float, capital_n: int, delta: float = 0.25):
        """Shared-delta design whose observed fraction is ``p = g2 / (g1 + g2)``."""
        if not 0 < p < 1:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        gamma2 = p * gamma1 / (1.0 - p)
        return cls(BurrSpec(delta, gamma1), BurrSpec(delta, gamma2), capital_n)

    @property
    def p(self) -> float:
        if self.truncating is None:
            return 1.0
        g1, g2 = self.truncated.gamma, self.truncating.gamma
        return g2 / (g1 + g2)


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Observed pairs ``(x_i, y_i)`` with ``x_i <= y_i``.

    ``untruncated[i]`` marks pair ``i`` as carrying the no-truncation
    sentinel; its ``y`` is stored as ``+inf`` but consumers branch on the flag.
    """

    x: np.ndarray
    y: np.ndarray
    untruncated: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if x.size == 0:
            raise EmptySampleError("observed sample is empty")
        if self.untruncated is None:
            flag = np.isposinf(y)
        else:
            flag = np.array(self.untruncated, dtype=bool)
            if flag.shape != x.shape:
                raise ValueError("untruncated mask has the wrong shape")
        y = np.where(flag, np.inf, y)
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise ValueError("x values must be finite and strictly positive")
        finite_y = y[~flag]
        if not np.all(np.isfinite(finite_y)) or np.any(finite_y <= 0):
            raise ValueError("y values must be finite and strictly positive (or flagged)")
        if np.any(x > y):
            bad = int(np.flatnonzero(x > y)[0])
            raise ValueError(f"pair {bad} violates x <= y: ({x[bad]}, {y[bad]})")
        for arr in (x, y, flag):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "untruncated", flag)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def is_complete(self) -> bool:
        """True when no pair is subject to truncation."""
        return bool(self.untruncated.all())

    def scaled(self, cx: float, cy: float | None = None) -> "ObservedSample":
        """Rescale X by ``cx`` and finite Y by ``cy`` (default ``cx``)."""
        cy = cx if cy is None else cy
        y = np.where(self.untruncated, np.inf, self.y * cy)
        return ObservedSample(self.x * cx, y, self.untruncated)

    def to_bytes(self) -> bytes:
        return self.x.tobytes() + self.y.tobytes() + self.untruncated.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ObservedSample):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __len__(self):
        return self.n


def burr_quantile(spec: BurrSpec, u):
    """Inverse of the Burr df: ``((1 - u)**(-gamma/delta) - 1)**delta``.

    Accepts a scalar or array ``u`` in the open interval (0, 1).
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise ValueError("u must lie in the open interval (0, 1)")
    # expm1/log1p keep accuracy for u near 0
    base = np.expm1(-(spec.gamma / spec.delta) * np.log1p(-u_arr))
    out = base**spec.delta
    return float(out) if np.ndim(u) == 0 else out


def burr_sf(spec: BurrSpec, x):
    """Burr survival function, vectorised over ``x >= 0``."""
    x_arr = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        # x^(1/delta) = inf only where the survival is already 0
        out = np.exp(-(spec.delta / spec.gamma) * np.log1p(x_arr ** (1.0 / spec.delta)))
    return float(out) if np.ndim(x) == 0 else out


def sample_truncated(design: TruncationDesign, seed) -> ObservedSample:
    """Draw ``capital_n`` latent pairs and keep those with ``X <= Y``.

    The generator is ``numpy.random.default_rng(seed)``.  Uniforms are drawn
    as one ``(N, 2)`` block: column 0 feeds X, column 1 feeds Y, so the
    stream layout does not depend on the design.
    """
    rng = np.random.default_rng(seed)
    u = rng.random((design.capital_n, 2))
    # u == 0 has probability 2**-53 per draw; map it inside the open interval
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    x = burr_quantile(design.truncated, u[:, 0])
    if design.truncating is None:
        return ObservedSample(x, np.full_like(x, np.inf), np.ones(x.size, dtype=bool))
    y = burr_quantile(design.truncating, u[:, 1])
    keep = x <= y
    if not keep.any():
        raise EmptySampleError(
            f"no pair retained out of N={design.capital_n} (seed={seed!r})"
        )
    return ObservedSample(x[keep], y[keep], np.zeros(int(keep.sum()), dtype=bool))


def complete_data_mode(xs) -> ObservedSample:
    """Wrap untruncated observations; every pair gets the sentinel ``y``."""
    x = np.asarray(xs, dtype=float).ravel()
    if x.size == 0:
        raise EmptySampleError("complete-data sample needs at least one value")
    return ObservedSample(x, np.full(x.size, np.inf), np.ones(x.size, dtype=bool))


def read_csv(path) -> ObservedSample:
    """Read a ``x,y`` CSV (header required); ``y`` may be ``inf``."""
    path = Path(path)
    xs, ys, flags = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["x", "y"]:
            raise DataFormatError("expected header 'x,y'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataFormatError(f"expected 2 columns, got {len(row)}", lineno)
            sx, sy = (c.strip() for c in row)
            try:
                x = float(sx)
            except ValueError:
                raise DataFormatError(f"x is not a number: {sx!r}", lineno) from None
            if sy.lower() in ("inf", "+inf"):
                y, flag = math.inf, True
            else:
                try:
                    y = float(sy)
                except ValueError:
                    raise DataFormatError(f"y is not a number: {sy!r}", lineno) from None
                flag = False
                if not math.isfinite(y):
                    raise DataFormatError(f"y must be finite or 'inf': {sy!r}", lineno)
            if not (math.isfinite(x) and x > 0):
                raise DataFormatError(f"x must be finite and positive: {sx!r}", lineno)
            if x > y:
                raise DataFormatError(f"x > y ({x} > {y})", lineno)
            xs.append(x)
            ys.append(y)
            flags.append(flag)
    if not xs:
        raise DataFormatError("no data rows")
    return ObservedSample(np.array(xs), np.array(ys), np.array(flags))


def write_csv(sample: ObservedSample, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y, flag in zip(sample.x, sample.y, sample.untruncated):
            w.writerow([repr(float(x)), "inf" if flag else repr(float(y))])
