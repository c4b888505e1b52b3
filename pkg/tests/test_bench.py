import io

import numpy as np
import pytest

from fpcagp import bench, synthgen
from fpcagp.bench import ExperimentConfig, MaeRecord


def write_cmapss(path, n_units, rng, max_cycles=None):
    """Whitespace table in the 26-column turbofan layout with one informative sensor pair."""
    lines = []
    for u in range(1, n_units + 1):
        life = int(rng.integers(170, 220))
        end = life if max_cycles is None else min(life, int(rng.integers(*max_cycles)))
        rate = rng.uniform(0.8, 1.2)
        for c in range(1, end + 1):
            x = c / life
            row = [u, c, 0.0, 0.0, 100.0] + [1.0] * 21
            row[2 + 3 + 3] = 1400 + 20 * rate * x**2 + rng.normal(0, 0.5)   # sensor_4
            row[2 + 3 + 10] = 8.4 + 0.1 * rate * x + rng.normal(0, 0.005)   # sensor_11
            lines.append(" ".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def test_mae_examples():
    assert bench.mae(lambda t: t, lambda t: t, 0.0, 1.0, 10) == 0.0
    assert bench.mae(lambda t: t + 2, lambda t: t, 0.0, 1.0, 10) == pytest.approx(2.0)
    assert bench.mae(lambda t: 2 * t, lambda t: 0 * t, 0.0, 1.0, 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bench.mae(lambda t: t, lambda t: t, 1.0, 1.0, 3)
    assert bench.mae_at(lambda t: t, [1.0, 2.0], [0.0, 0.0]) == pytest.approx(1.5)


def test_mean_sd():
    assert bench.mean_sd([1, 2, 3]) == (2.0, 1.0)
    assert bench.mean_sd([4.0]) == (4.0, 0.0)


def test_records_and_summary(tmp_path):
    recs = [MaeRecord("FPCA-B", 0.5, r, "7", float(r)) for r in range(5)]
    buf = io.StringIO()
    bench.write_records(sorted(recs), buf)
    assert buf.getvalue().splitlines()[1] == "FPCA-B,0.5,1,7,1"
    (row,) = bench.summarize(recs)
    assert (row["n"], row["median"], row["mean"], row["min"], row["max"]) == (5, 2.0, 2.0, 0.0, 4.0)
    bench.write_summary([row], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith(",".join(bench.SUMMARY_HEADER))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(gammas=(1.0,))
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("XYZ",))
    with pytest.raises(ValueError):
        ExperimentConfig(reps=0)


def test_synthetic_run_shape_and_determinism():
    cfg = ExperimentConfig(reps=2, restarts=2, gammas=(0.25, 0.75))
    a = bench.run_synthetic(cfg)
    assert not a.failures
    assert len(a.records) == 2 * 2 * 3
    assert a.records == sorted(a.records)
    assert all(np.isfinite(r.mae) and r.mae >= 0 for r in a.records)
    b = bench.run_synthetic(ExperimentConfig(reps=2, restarts=2, gammas=(0.25, 0.75), threads=2))
    assert a.records == b.records
    seen = []
    bench.run_synthetic(ExperimentConfig(reps=2, restarts=1, methods=("ME",)), sink=seen.append)
    assert [len(s) for s in seen] == [3, 3]


def test_failures_are_recorded_not_raised(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("nope")
    monkeypatch.setattr(bench.baselines, "me_predict", boom)
    res = bench.run_synthetic(ExperimentConfig(reps=1, methods=("ME", "FPCA-B")))
    assert len(res.failures) == 3 and len(res.records) == 3
    assert res.failure_rate == 0.5 and not res.ok
    assert "nope" in res.failures[0].error


def test_ingest_cmapss(tmp_path, rng):
    p = tmp_path / "train.txt"
    write_cmapss(p, 3, rng)
    units = bench.ingest(p)
    assert [u.unit_id for u in units] == [1, 2, 3]
    assert set(units[0].streams) == set(bench.CMAPSS_STREAMS)
    s4 = units[0]["sensor_4"]
    assert s4.times[0] == 1 and np.all(np.diff(s4.times) == 1)
    bad = tmp_path / "bad.txt"
    bad.write_text(" ".join(["1"] * 25) + "\n")
    with pytest.raises(ValueError, match="line 1: expected 26 columns"):
        bench.ingest_cmapss(bad)
    bad.write_text(" ".join(["1", "2"] + ["0"] * 24) + "\n" + " ".join(["1", "2"] + ["0"] * 24) + "\n")
    with pytest.raises(ValueError, match="line 2"):
        bench.ingest_cmapss(bad)


def test_long_csv_round_trip(tmp_path):
    hist, test = synthgen.generate(synthgen.SynthConfig(n_units=3, seed=0, points_per_signal=6))
    path = tmp_path / "d.csv"
    synthgen.export_csv(hist + [test], path)
    units = bench.ingest(path)
    assert [u.unit_id for u in units] == [0, 1, 2, 3]
    for u, orig in zip(units, hist + [test]):
        for s in synthgen.STREAMS:
            np.testing.assert_array_equal(u[s].values, orig.streams[s].values)
            np.testing.assert_array_equal(u[s].times, orig.streams[s].times)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(ValueError, match="header"):
        bench.ingest_long_csv(bad)


def test_recorded_study_smoke(tmp_path, rng):
    train, test = tmp_path / "train.txt", tmp_path / "test.txt"
    write_cmapss(train, 15, rng)
    write_cmapss(test, 5, rng, max_cycles=(120, 200))
    cfg = ExperimentConfig(gammas=(0.5,), restarts=1)
    res = bench.run_cmapss(cfg, train, test, "sensor_4", ["sensor_11", "sensor_4"], (100.0, 160.0))
    assert not res.failures
    units = {r.unit for r in res.records}
    assert units and not units & set(res.excluded)
    assert len(units) + len(res.excluded) == 5
    assert {r.method for r in res.records} == set(bench.METHODS)
    assert all(r.mae < 20 for r in res.records)
