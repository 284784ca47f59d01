"""Test the benchmark harness"""

import csv
import io

import pytest

from trusted_preprocessing.bench import CSV_HEADER, BenchRow, run_benchmark, write_csv
from trusted_preprocessing.metering import CostWeights
from trusted_preprocessing.models import BackendId

BACKENDS = [BackendId.CONSTRAINT_SYSTEM, BackendId.ENCLAVE]
SIZES = [1, 4, 8, 16, 32]


def test_csv_schema():
    rows = [BenchRow("cs", "size", 4, 0.5, None, 1234), BenchRow("tee", "count", 2, 0.25, 0.01, 99)]
    text = write_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert tuple(parsed[0]) == CSV_HEADER
    assert parsed[1] == ["cs", "size", "4", "0.500000", "", "1234"]
    assert parsed[2] == ["tee", "count", "2", "0.250000", "0.010000", "99"]


def test_write_csv_to_stream_and_path(tmp_path):
    rows = [BenchRow("tee", "size", 1, 0.1, None, 10)]
    stream = io.StringIO()
    text = write_csv(rows, stream)
    assert stream.getvalue() == text
    assert write_csv(rows, tmp_path / "out" / "b.csv") == (tmp_path / "out" / "b.csv").read_text()


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_repetition_has_no_stddev(backend):
    rows = run_benchmark(backend, "size", [1, 2], repetitions=1)
    assert [(r.backend, r.mode, r.param) for r in rows] == [
        (backend.short, "size", 1), (backend.short, "size", 2)
    ]
    assert all(r.stddev is None and r.mean_seconds > 0 and r.cost_units > 0 for r in rows)


def test_repetitions_report_stddev():
    (row,) = run_benchmark(BackendId.ENCLAVE, "count", [2], repetitions=3)
    assert row.stddev is not None and row.stddev >= 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_count_mode_cost_is_linear(backend):
    rows = run_benchmark(backend, "count", [1, 2, 4], repetitions=1, weights=CostWeights())
    unit = rows[0].cost_units
    assert [r.cost_units for r in rows] == [unit, 2 * unit, 4 * unit]


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_large_batch_is_cheaper_than_many_small(backend):
    (size_row,) = run_benchmark(backend, "size", [4], repetitions=1, weights=CostWeights())
    (count_row,) = run_benchmark(backend, "count", [4], repetitions=1, weights=CostWeights())
    assert size_row.cost_units < count_row.cost_units


def test_enclave_cost_independent_of_batch_size():
    rows = run_benchmark(BackendId.ENCLAVE, "size", [1, 8], repetitions=1, weights=CostWeights())
    assert rows[0].cost_units == rows[1].cost_units


def test_cost_is_reproducible():
    first = run_benchmark("cs", "size", [2], repetitions=2, seed=4, weights=CostWeights())
    second = run_benchmark("cs", "size", [2], repetitions=2, seed=4, weights=CostWeights())
    assert first[0].cost_units == second[0].cost_units


@pytest.mark.parametrize("mode, params, repetitions", [
    ("sizes", [1], 1),
    ("size", [0], 1),
    ("count", [1, -2], 1),
])
def test_invalid_arguments(mode, params, repetitions):
    with pytest.raises(ValueError):
        run_benchmark(BackendId.ENCLAVE, mode, params, repetitions=repetitions)


@pytest.mark.slow
@pytest.mark.parametrize("backend", BACKENDS)
def test_timing_grows_with_batch_count(backend):
    small, large = run_benchmark(backend, "count", [1, 16], repetitions=3)
    assert large.mean_seconds > small.mean_seconds


@pytest.mark.integration
@pytest.mark.parametrize("backend", BACKENDS)
def test_honest_packages_accepted_for_every_size(backend):
    """run_benchmark raises WorkflowError on any rejected honest package."""
    rows = run_benchmark(backend, "size", SIZES, repetitions=1)
    assert [r.param for r in rows] == SIZES


@pytest.mark.slow
@pytest.mark.parametrize("backend", BACKENDS)
def test_count_mode_time_is_linear(backend):
    rows = run_benchmark(backend, "count", [4, 8, 16], repetitions=3)
    per_batch = [r.mean_seconds / r.param for r in rows]
    mean = sum(per_batch) / len(per_batch)
    assert all(abs(t - mean) <= 0.2 * mean for t in per_batch), per_batch


@pytest.mark.slow
@pytest.mark.parametrize("backend", BACKENDS)
def test_size_mode_time_is_monotone(backend):
    rows = run_benchmark(backend, "size", SIZES, repetitions=5)
    times = [r.mean_seconds for r in rows]
    if backend is BackendId.CONSTRAINT_SYSTEM:
        assert times == sorted(times)
    else:
        # per-measurement work is small next to the fixed signature work
        assert all(b >= 0.9 * a for a, b in zip(times, times[1:])), times
        assert times[-1] > times[0], times


@pytest.mark.slow
@pytest.mark.parametrize("backend", BACKENDS)
def test_marginal_time_per_measurement_lower_in_size_mode(backend):
    size_1, size_32 = run_benchmark(backend, "size", [1, 32], repetitions=3)
    count_1, count_32 = run_benchmark(backend, "count", [1, 32], repetitions=3)
    size_slope = (size_32.mean_seconds - size_1.mean_seconds) / 31
    count_slope = (count_32.mean_seconds - count_1.mean_seconds) / 31
    assert size_slope < count_slope, (size_slope, count_slope)
