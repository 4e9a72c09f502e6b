"""Monte Carlo comparison of the estimators on Burr-truncated samples.

A grid cell is one ``(N, p)`` pair.  Every replicate of a cell draws one
truncated sample, and all estimators (the kernel estimator once per kernel)
are evaluated on that same sample, each with its own RT-selected ``k``.

Seeds follow a counter scheme: replicate ``r`` of cell ``c`` uses
``SeedSequence([master_seed, c, r, attempt])`` where ``attempt`` is bumped
when the draw retains no pair.  Moments are summed with ``math.fsum`` over
replicates in index order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .estimators import ESTIMATOR_NAMES, estimate
from .kernels import KERNELS
from .model import EmptySampleError, ObservedSample, TruncationDesign, sample_truncated
from .threshold import RTConfig, ThresholdError, auto_k

__all__ = [
    "SimulationConfig",
    "ConfigError",
    "ReportRow",
    "SimulationReport",
    "run_cell",
    "run_grid",
    "default_workers",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("N", "mean_n", "p", "gamma1", "kernel", "estimator", "abs_bias", "rmse", "failures")
WORKERS_ENV = "TRUNCTAIL_WORKERS"
MAX_ATTEMPTS = 100


class ConfigError(ValueError):
    """Bad simulation config; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}", WORKERS_ENV) from None
    return max(value, 1)


@dataclass(frozen=True)
class SimulationConfig:
    gamma1: float
    p_values: tuple
    n_values: tuple
    replicates: int = 1000
    delta: float = 0.25
    kernels: tuple = ("biweight",)
    estimators: tuple = ("kernel", "bmn", "gs")
    master_seed: int = 0
    rt: RTConfig = field(default_factory=RTConfig)

    def __post_init__(self):
        object.__setattr__(self, "p_values", tuple(float(p) for p in self.p_values))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not self.gamma1 > 0:
            raise ConfigError(f"gamma1 must be positive, got {self.gamma1}", "gamma1")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}", "replicates")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}", "delta")
        if not self.p_values or any(not 0 < p < 1 for p in self.p_values):
            raise ConfigError(f"each p must lie in (0, 1), got {self.p_values}", "p_values")
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ConfigError(f"each N must be a positive integer, got {self.n_values}", "n_values")
        for name in self.kernels:
            if name not in KERNELS:
                raise ConfigError(f"unknown kernel {name!r}", "kernels")
        for name in self.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigError(f"unknown estimator {name!r}", "estimators")

    def cells(self):
        return [(n, p) for n in self.n_values for p in self.p_values]

    # flat ``key = value`` text form; lists are comma-separated
    _LISTS = {"p_values": float, "n_values": int, "kernels": str, "estimators": str}
    _SCALARS = {"gamma1": float, "replicates": int, "delta": float, "master_seed": int}
    _RT = {"rt_theta": ("theta", float), "rt_k_min": ("k_min", int), "rt_k_max": ("k_max", int), "rt_i_start": ("i_start", int)}

    def to_text(self) -> str:
        lines = [f"gamma1 = {self.gamma1!r}"]
        lines.append("p_values = " + ", ".join(repr(p) for p in self.p_values))
        lines.append("n_values = " + ", ".join(str(n) for n in self.n_values))
        lines.append(f"replicates = {self.replicates}")
        lines.append(f"delta = {self.delta!r}")
        lines.append("kernels = " + ", ".join(self.kernels))
        lines.append("estimators = " + ", ".join(self.estimators))
        lines.append(f"master_seed = {self.master_seed}")
        for key, (attr, _) in self._RT.items():
            value = getattr(self.rt, attr)
            if value is not None:
                lines.append(f"{key} = {value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SimulationConfig":
        kwargs, rt_kwargs = {}, {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                if key in cls._LISTS:
                    conv = cls._LISTS[key]
                    kwargs[key] = tuple(conv(v.strip()) for v in value.split(",") if v.strip())
                elif key in cls._SCALARS:
                    kwargs[key] = cls._SCALARS[key](value)
                elif key in cls._RT:
                    attr, conv = cls._RT[key]
                    rt_kwargs[attr] = conv(value)
                else:
                    raise ConfigError(f"line {lineno}: unknown config key {key!r}", key)
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}", key) from None
        for required in ("gamma1", "p_values", "n_values"):
            if required not in kwargs:
                raise ConfigError(f"missing required key {required!r}", required)
        try:
            rt = RTConfig(**rt_kwargs)
        except ValueError as exc:
            raise ConfigError(f"invalid RT setting: {exc}", "rt") from None
        return cls(rt=rt, **kwargs)

    @classmethod
    def load(cls, path) -> "SimulationConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class ReportRow:
    N: int
    mean_n: float
    p: float
    gamma1: float
    kernel: str
    estimator: str
    abs_bias: float
    rmse: float
    failures: int
    seed_range: tuple
    mean_bias: float = math.nan


@dataclass
class SimulationReport:
    rows: list
    errors: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.N, f"{r.mean_n:.1f}", repr(r.p), repr(r.gamma1), r.kernel, r.estimator,
                 repr(r.abs_bias), repr(r.rmse), r.failures]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    def find(self, N, p, estimator, kernel=None) -> ReportRow:
        for r in self.rows:
            if r.N == N and math.isclose(r.p, p) and r.estimator == estimator and (kernel is None or r.kernel == kernel):
                return r
        raise KeyError((N, p, estimator, kernel))

    def pretty(self) -> str:
        """Tables grouped by ``p``: one line per ``N``, abs bias and rmse per method."""
        methods = []
        for r in self.rows:
            tag = r.estimator if r.kernel == "none" else f"{r.estimator}[{r.kernel}]"
            if (tag, r.estimator, r.kernel) not in methods:
                methods.append((tag, r.estimator, r.kernel))
        out = []
        p_values = sorted({r.p for r in self.rows})
        head = f"{'N':>6} {'n':>7} " + " ".join(f"{tag:>21}" for tag, _, _ in methods)
        sub = " " * 15 + " ".join(f"{'abs bias':>10} {'rmse':>10}" for _ in methods)
        for p in p_values:
            out.append(f"p = {p:g}")
            out.append(head)
            out.append(sub)
            for N in sorted({r.N for r in self.rows if r.p == p}):
                cells = []
                mean_n = math.nan
                for _, est, ker in methods:
                    try:
                        r = self.find(N, p, est, ker)
                    except KeyError:
                        cells.append(f"{'-':>10} {'-':>10}")
                        continue
                    mean_n = r.mean_n
                    cells.append(f"{r.abs_bias:10.3f} {r.rmse:10.3f}")
                out.append(f"{N:>6} {mean_n:7.1f} " + " ".join(cells))
            out.append("")
        return "\n".join(out)


# --- replicate work -------------------------------------------------------------


def _columns(cfg: SimulationConfig):
    cols = []
    for est in cfg.estimators:
        if est == "kernel":
            cols.extend(("kernel", k) for k in cfg.kernels)
        else:
            cols.append((est, "none"))
    return cols


def _draw(design: TruncationDesign, master_seed: int, cell_idx: int, rep: int):
    for attempt in range(MAX_ATTEMPTS):
        seed = np.random.SeedSequence([master_seed, cell_idx, rep, attempt])
        try:
            return sample_truncated(design, seed), attempt
        except EmptySampleError:
            continue
    raise EmptySampleError(f"cell {cell_idx} replicate {rep}: {MAX_ATTEMPTS} empty draws in a row")


def _evaluate(sample: ObservedSample, est: str, kernel: str, rt: RTConfig) -> float:
    ker = "biweight" if kernel == "none" else kernel
    try:
        k = auto_k(sample, est, kernel=ker, cfg=rt)
        return estimate(sample, est, k, kernel=ker).gamma1_hat
    except (ValueError, ArithmeticError, ThresholdError):
        return math.nan


def _replicate_block(args):
    cfg, cell_idx, N, p, reps, custom = args
    design = TruncationDesign.from_p(cfg.gamma1, p, N, delta=cfg.delta)
    cols = _columns(cfg)
    values = np.full((len(reps), len(cols) + len(custom)), np.nan)
    sizes = np.empty(len(reps))
    resamples = 0
    for row, rep in enumerate(reps):
        sample, attempt = _draw(design, cfg.master_seed, cell_idx, rep)
        resamples += attempt
        sizes[row] = sample.n
        for j, (est, ker) in enumerate(cols):
            values[row, j] = _evaluate(sample, est, ker, cfg.rt)
        for j, fn in enumerate(custom.values(), start=len(cols)):
            try:
                values[row, j] = float(fn(sample))
            except (ValueError, ArithmeticError):
                values[row, j] = math.nan
    return sizes, values, resamples


def _summarise(cfg, N, p, sizes, values, labels, seed_range, errors):
    rows = []
    mean_n = math.fsum(sizes) / sizes.size
    for j, (est, ker) in enumerate(labels):
        col = values[:, j]
        ok = col[np.isfinite(col)]
        failures = int(col.size - ok.size)
        if ok.size == 0:
            errors.append(f"N={N} p={p:g} {est}[{ker}]: all {col.size} replicates failed")
            rows.append(ReportRow(N, mean_n, p, cfg.gamma1, ker, est, math.nan, math.nan, failures, seed_range))
            continue
        err = ok - cfg.gamma1
        bias = math.fsum(err) / ok.size
        rmse = math.sqrt(math.fsum(err * err) / ok.size)
        # guard the single-draw identity rmse = |bias| against rounding
        if ok.size == 1:
            rmse = abs(bias)
        rows.append(ReportRow(N, mean_n, p, cfg.gamma1, ker, est, abs(bias), rmse, failures, seed_range, bias))
    return rows


def run_cell(
    cfg: SimulationConfig,
    N: int,
    p: float,
    cell_idx: int = 0,
    custom: Mapping[str, Callable[[ObservedSample], float]] | None = None,
    workers: int = 1,
    executor=None,
) -> list:
    """Replicate one ``(N, p)`` cell and return one :class:`ReportRow` per column.

    ``custom`` adds extra estimators as callables ``sample -> estimate``
    (reported with kernel ``"none"``); they are run in-process.
    """
    custom = dict(custom or {})
    labels = _columns(cfg) + [(name, "none") for name in custom]
    reps = list(range(cfg.replicates))
    if custom or (workers <= 1 and executor is None):
        sizes, values, _ = _replicate_block((cfg, cell_idx, N, p, reps, custom))
    else:
        blocks = _split(reps, workers)
        own = executor is None
        pool = ProcessPoolExecutor(max_workers=workers) if own else executor
        try:
            parts = list(pool.map(_replicate_block, [(cfg, cell_idx, N, p, b, {}) for b in blocks]))
        finally:
            if own:
                pool.shutdown()
        sizes = np.concatenate([s for s, _, _ in parts])
        values = np.concatenate([v for _, v, _ in parts])
    errors: list = []
    rows = _summarise(cfg, N, p, sizes, values, labels, (cell_idx, 0, cfg.replicates - 1), errors)
    if errors and len(errors) == len(labels):
        raise RuntimeError("; ".join(errors))
    return rows


def _split(items, parts):
    size = max(1, math.ceil(len(items) / (parts * 4)))
    return [items[i : i + size] for i in range(0, len(items), size)]


def run_grid(cfg: SimulationConfig, workers: int | None = None, progress: Callable[[str], None] | None = None) -> SimulationReport:
    """Run every ``(N, p)`` cell; cells that fail entirely are listed in ``errors``."""
    workers = default_workers() if workers is None else max(int(workers), 1)
    rows, errors = [], []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for idx, (N, p) in enumerate(cfg.cells()):
            try:
                cell_rows = run_cell(cfg, N, p, idx, workers=workers, executor=pool)
            except (RuntimeError, EmptySampleError) as exc:
                errors.append(f"N={N} p={p:g}: {exc}")
                continue
            rows.extend(cell_rows)
            for r in cell_rows:
                if r.failures == cfg.replicates:
                    errors.append(f"N={N} p={p:g} {r.estimator}: all replicates failed")
            if progress is not None:
                progress(f"cell {idx + 1}/{len(cfg.cells())} N={N} p={p:g} done")
    finally:
        if pool is not None:
            pool.shutdown()
    return SimulationReport(rows, errors)


def with_replicates(cfg: SimulationConfig, replicates: int) -> SimulationConfig:
    return replace(cfg, replicates=int(replicates))
