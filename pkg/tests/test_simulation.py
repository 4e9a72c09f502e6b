import csv
import io
import math
from importlib import resources

import numpy as np
import pytest

from trunctail.simulation import (
    REPORT_COLUMNS,
    ConfigError,
    SimulationConfig,
    run_cell,
    run_grid,
    with_replicates,
)


def table1():
    return SimulationConfig.from_text(resources.files("trunctail").joinpath("data/table1.cfg").read_text())


def small(**kw):
    base = dict(gamma1=0.6, p_values=(0.7, 0.9), n_values=(150, 300), replicates=6, master_seed=5)
    base.update(kw)
    return SimulationConfig(**base)


def test_table1_shape_and_round_trip():
    cfg = table1()
    assert len(cfg.cells()) == 21
    assert cfg.n_values == (150, 200, 300, 500, 1000, 1500, 2000)
    assert cfg.p_values == (0.7, 0.8, 0.9)
    assert SimulationConfig.from_text(cfg.to_text()) == cfg
    assert SimulationConfig.from_text(cfg.to_text()).to_text() == cfg.to_text()


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as info:
        SimulationConfig.from_text("gamma1 = 0.6\np_values = 0.7\nn_values = 100\nreplicatez = 4\n")
    assert info.value.key == "replicatez"
    assert "replicatez" in str(info.value)


@pytest.mark.parametrize(
    "text",
    [
        "gamma1 = -1\np_values = 0.7\nn_values = 100\n",
        "gamma1 = 0.6\np_values = 1.2\nn_values = 100\n",
        "gamma1 = 0.6\np_values = 0.7\nn_values = 0\n",
        "gamma1 = 0.6\np_values = 0.7\nn_values = 100\nestimators = kernel, median\n",
        "gamma1 = 0.6\np_values = 0.7\n",
        "gamma1 0.6\n",
    ],
)
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        SimulationConfig.from_text(text)


def test_constant_estimator_has_zero_error():
    cfg = small(replicates=20)
    rows = run_cell(cfg, 150, 0.7, custom={"oracle": lambda s: 0.6})
    r = [r for r in rows if r.estimator == "oracle"][0]
    assert r.abs_bias == 0.0
    assert r.rmse == 0.0
    assert r.failures == 0


def test_single_replicate_rmse_equals_bias():
    rows = run_cell(small(replicates=1), 300, 0.8)
    for r in rows:
        assert r.rmse == r.abs_bias


def test_rmse_dominates_bias():
    report = run_grid(small())
    assert len(report.rows) == 4 * 3
    for r in report.rows:
        assert r.rmse >= r.abs_bias


def test_failures_counted():
    calls = iter(range(1000))

    def flaky(sample):
        if next(calls) % 3 == 0:
            raise ArithmeticError("boom")
        return 0.7

    cfg = small(replicates=9)
    r = [r for r in run_cell(cfg, 150, 0.7, custom={"flaky": flaky}) if r.estimator == "flaky"][0]
    assert r.failures == 3
    assert r.abs_bias == pytest.approx(0.1)


def test_mean_n_tracks_observed_fraction():
    cfg = small(estimators=("hill",), replicates=200)
    r = run_cell(cfg, 1000, 0.7)[0]
    # 699 for this cell in the published table; sd of the mean is about 1
    assert abs(r.mean_n - 699) < 5


def test_csv_columns_exact():
    report = run_grid(small(replicates=2))
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert len(rows) == 1 + len(report.rows)
    assert all(len(r) == len(REPORT_COLUMNS) for r in rows)


def test_parallel_is_byte_identical():
    cfg = small(replicates=8)
    assert run_grid(cfg, workers=1).to_csv() == run_grid(cfg, workers=2).to_csv()


def test_seed_changes_output():
    cfg = small(replicates=4)
    other = SimulationConfig(**{**cfg.__dict__, "master_seed": 6})
    assert run_grid(cfg).to_csv() != run_grid(other).to_csv()


def test_with_replicates():
    cfg = with_replicates(table1(), 3)
    assert cfg.replicates == 3
    assert cfg.n_values == table1().n_values


def test_pretty_table_lists_every_cell():
    report = run_grid(small(replicates=2))
    text = report.pretty()
    assert text.count("p = ") == 2
    for N in (150, 300):
        assert sum(line.split()[0] == str(N) for line in text.splitlines() if line.strip()) == 2


def test_kernel_beats_hill_on_truncated_data():
    # the untruncated Hill estimator is biased downward under truncation
    cfg = small(estimators=("kernel", "hill"), replicates=40, p_values=(0.7,), n_values=(1000,))
    rows = {r.estimator: r for r in run_grid(cfg).rows}
    assert rows["kernel"].abs_bias < rows["hill"].abs_bias
    assert not math.isnan(rows["kernel"].rmse)
    assert np.isfinite(rows["hill"].mean_bias) and rows["hill"].mean_bias < 0
