import pytest

from impulsive_abstraction.bench import BenchmarkRecord, format_table, records_as_rows, run_benchmark


def test_capped_monolithic_and_state_counts():
    records, ratios = run_benchmark(range(1, 6), 2.5, memory_cap=8 * 1024 ** 2, min_repeats=1, budget=0.0)
    by = {(r.N, r.mode): r for r in records}
    for n in range(1, 6):
        assert by[(n, "compositional")].states == 55 * n
    assert by[(5, "monolithic")].capped and by[(5, "monolithic")].states == 5 ** 5 * 11 ** 5
    assert ratios[5] is None and by[(5, "monolithic")].seconds is None
    assert by[(2, "monolithic")].states == 3025 and not by[(2, "monolithic")].capped
    assert ratios[1] > 0
    table = format_table(records, ratios)
    assert "capped" in table and table.splitlines()[0].startswith("#")
    assert records_as_rows(records)[0]["mode"] == "compositional"


def test_counts_are_deterministic():
    a, _ = run_benchmark(range(2, 4), 2.5, min_repeats=1, budget=0.0)
    b, _ = run_benchmark(range(2, 4), 2.5, min_repeats=1, budget=0.0)
    strip = lambda rs: [(r.N, r.mode, r.states, r.transitions, r.capped) for r in rs]
    assert strip(a) == strip(b)
    assert {(r.N, r.mode): r.states for r in a}[(3, "monolithic")] == 166375


def test_record_defaults():
    assert not BenchmarkRecord(1, "compositional", 2.5, 0.1, 55, 100).capped
