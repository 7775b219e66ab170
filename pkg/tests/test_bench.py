import csv

import numpy as np
import pytest

from randla.bench import (BenchReport, BenchRow, benchmark_samplers, run_cascade,
                          time_sampler, warmup)
from randla.rng import Rng
from randla.sampling import SamplerKind


@pytest.fixture(scope="module", autouse=True)
def _warm():
    warmup()


def test_time_sampler_rows(rng):
    coords = Rng(1).uniforms((400, 3))
    rows = time_sampler(SamplerKind.RS, coords, 40, reps=3, rng=rng)
    assert len(rows) == 3
    assert all(r.kind == "rs" and r.n == 400 and r.m == 40 for r in rows)
    assert all(r.seconds >= 0.0 for r in rows)
    assert [r.rep for r in rows] == [0, 1, 2]


def test_time_sampler_every_kind_runs(rng):
    coords = Rng(2).uniforms((300, 3))
    for kind in SamplerKind:
        rows = time_sampler(kind, coords, 30, reps=1, rng=rng.child(hash(kind.value) % 100))
        assert len(rows) == 1


def test_cascade_final_count(rng):
    coords = Rng(3).uniforms((1000, 3))
    seconds, final_m = run_cascade(SamplerKind.RS, coords, rng)
    assert final_m == 1  # 1000 -> 250 -> 63 -> 16 -> 4 -> 1
    assert seconds >= 0.0


def test_cascade_crs_produces_soft_points(rng):
    coords = Rng(4).uniforms((256, 3))
    seconds, final_m = run_cascade(SamplerKind.CRS, coords, rng)
    assert final_m == 1
    assert seconds >= 0.0


def test_crs_memory_guard(rng):
    coords = Rng(5).uniforms((100, 3))
    report = BenchReport()
    big = np.zeros((2, 3))
    from randla.bench import _crs_guard
    with pytest.raises(MemoryError, match="GiB"):
        _crs_guard(10**6, 10**5)


def test_benchmark_samplers_report_and_csv(tmp_path, rng):
    report = benchmark_samplers([300, 600], 0.1, [SamplerKind.RS, SamplerKind.FPS],
                                repetitions=2, rng=rng)
    # 2 scales x 2 kinds x (2 single reps + 2 cascade reps)
    assert len(report.rows) == 16
    assert report.errors == []
    path = tmp_path / "report.csv"
    report.write_csv(str(path))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["kind", "n", "m", "rep", "seconds", "bytes"]
    assert len(rows) == 17
    assert report.min_seconds("rs", 300) >= 0.0


def test_benchmark_records_failures_nonfatal(rng):
    # CRS at a scale whose weight matrix exceeds the budget is recorded, not raised
    report = benchmark_samplers([40000], 0.5, [SamplerKind.CRS], repetitions=1, rng=rng)
    assert any("crs" in e for e in report.errors)
