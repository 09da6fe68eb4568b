import json

import pytest

from mistakelab.backtracking import (
    BacktrackConfig,
    accuracy_sweep,
    backtrack,
    run_backtracking_experiment,
    summary_table,
    sweep_table,
    write_outcome_records,
)
from mistakelab.errors import LocatorError, MistakeLabError
from mistakelab.generation import MockBackend, build_generation_prompt
from mistakelab.locators import OracleLocator
from mistakelab.model import NO_MISTAKE, MistakeLocation, TaskKind

from conftest import make_trace, word_sorting_trace


STEP1 = "Thought 1: I should look at the first letter of each word."


def resample_prompt(trace, n):
    return build_generation_prompt(trace.task, trace.question, trace.steps[: n - 1], n)


def continuation_prompt(trace, steps, n):
    return build_generation_prompt(trace.task, trace.question, steps, n)


class TestBacktrack:
    def test_no_mistake_unchanged(self):
        backend = MockBackend([])
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=NO_MISTAKE)
        result = backtrack(backend, trace, NO_MISTAKE)
        assert result.trace == trace
        assert result.regeneration_samples == 0
        assert backend.call_count == 0

    def test_out_of_range_location(self):
        trace = word_sorting_trace("t", ["b", "a"], "a b")
        with pytest.raises(MistakeLabError, match="out of range"):
            backtrack(MockBackend([]), trace, MistakeLocation.at_step(5))

    def test_resample_fixes_final_step(self):
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=MistakeLocation.at_step(2))
        backend = MockBackend(
            [{"key": resample_prompt(trace, 2), "completions": ["Re-sorting. The answer is a b"]}]
        )
        result = backtrack(backend, trace, MistakeLocation.at_step(2))
        assert result.trace.steps == (STEP1, "Thought 2: Re-sorting. The answer is a b")
        assert result.trace.answer == "a b"
        assert result.trace.mistake is None
        assert backend.call_count == 1  # one n=8 batch
        assert backend.call_log[0][3] == 8
        assert backend.call_log[0][1] == 1.0  # resampled at high temperature

    def test_prefix_preserved_verbatim(self):
        trace = make_trace(
            id="mid",
            steps=(
                "Thought 1: alpha.",
                "Thought 2: beta.",
                "Thought 3: broken claim.",
                "Thought 4: The answer is b a",
            ),
            answer="b a",
            mistake=MistakeLocation.at_step(3),
        )
        p3 = build_generation_prompt(trace.task, trace.question, trace.steps[:2], 3)
        fixed3 = "Thought 3: repaired claim."
        p4 = build_generation_prompt(
            trace.task, trace.question, list(trace.steps[:2]) + [fixed3], 4
        )
        backend = MockBackend(
            [
                {"key": p3, "completions": ["repaired claim."]},
                {"key": p4, "completions": ["The answer is a b"]},
            ]
        )
        result = backtrack(backend, trace, MistakeLocation.at_step(3))
        assert result.trace.steps[:2] == trace.steps[:2]
        assert result.trace.steps[2] == fixed3
        assert result.trace.answer == "a b"
        # continuation is greedy
        assert backend.call_log[1][1] == 0.0

    def test_resamples_until_textually_different(self):
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=MistakeLocation.at_step(2))
        original_body = "I have now sorted all the words. The answer is a b"
        backend = MockBackend(
            [
                {"key": "#0", "completions": [original_body]},
                {"key": "#1", "completions": [original_body]},
                {"key": "#2", "completions": ["Checked again. The answer is b a"]},
            ]
        )
        config = BacktrackConfig(batch_size=1)
        result = backtrack(backend, trace, MistakeLocation.at_step(2), config)
        assert result.regeneration_samples == 3
        assert result.trace.answer == "b a"

    def test_label_stripped_before_comparison(self):
        # a resample that differs only in its "Thought N:" label does not count
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=MistakeLocation.at_step(2))
        original_body = "I have now sorted all the words. The answer is a b"
        backend = MockBackend(
            [
                {"key": "#0", "completions": [original_body]},
                {"key": "#1", "completions": ["Different now. The answer is a b"]},
            ]
        )
        config = BacktrackConfig(batch_size=1)
        result = backtrack(backend, trace, MistakeLocation.at_step(2), config)
        assert result.regeneration_samples == 2

    def test_all_samples_identical_keeps_last(self):
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=MistakeLocation.at_step(2))
        original_body = "I have now sorted all the words. The answer is a b"
        backend = MockBackend([], default=original_body)
        config = BacktrackConfig(max_regenerations=3, batch_size=1)
        result = backtrack(backend, trace, MistakeLocation.at_step(2), config)
        assert result.regeneration_samples == 3
        assert result.trace.steps[-1] == f"Thought 2: {original_body}"

    def test_sample_cap_respected_with_batching(self):
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=MistakeLocation.at_step(2))
        backend = MockBackend([], default="I have now sorted all the words. The answer is a b")
        result = backtrack(backend, trace, MistakeLocation.at_step(2), BacktrackConfig())
        assert result.regeneration_samples == 8
        assert backend.call_count == 1
        assert backend.call_log[0][3] == 8

    def test_continuation_stops_at_step_cap(self):
        trace = word_sorting_trace("t", ["b", "a"], "a b", mistake=MistakeLocation.at_step(2))
        backend = MockBackend([], default="still thinking.")
        config = BacktrackConfig(max_steps=6)
        result = backtrack(backend, trace, MistakeLocation.at_step(2), config)
        assert result.trace.answer is None
        assert len(result.trace.steps) == 6


def _scripted_suite():
    """20 word-sorting traces plus a mock scripted to known outcomes.

    Originally correct: c1, c2 (gold step 2) and c3..c5 (no mistake).
    The c1 resample breaks the answer; the c2 resample keeps it.
    Originally incorrect: i1..i15 (gold step 2); resamples fix 9 of 15.
    Expected oracle deltas: correct (4-5)/5 = -20.0, incorrect 9/15 = +60.0.
    """
    traces = []
    records = []

    def add(trace, completion):
        traces.append(trace)
        records.append({"key": resample_prompt(trace, 2), "completions": [completion]})

    add(word_sorting_trace("c1", ["m1", "a"], "a m1", MistakeLocation.at_step(2)),
        "Re-checking. The answer is m1 a")
    add(word_sorting_trace("c2", ["m2", "a"], "a m2", MistakeLocation.at_step(2)),
        "Re-checking. The answer is a m2")
    for k in (3, 4, 5):
        traces.append(word_sorting_trace(f"c{k}", [f"m{k}", "a"], f"a m{k}", NO_MISTAKE))
    for k in range(1, 16):
        fixed = k <= 9
        answer = f"a n{k}" if fixed else f"n{k} a"
        add(word_sorting_trace(f"i{k}", [f"n{k}", "a"], f"n{k} a", MistakeLocation.at_step(2)),
            f"Re-checking. The answer is {answer}")
    return traces, MockBackend(records)


class TestExperiment:
    def test_oracle_deltas_match_hand_computation(self):
        traces, backend = _scripted_suite()
        report = run_backtracking_experiment(traces, OracleLocator(), backend)
        assert report.delta_correct == pytest.approx(-20.0)
        assert report.delta_incorrect == pytest.approx(+60.0)
        assert report.n_correct_before == 5
        assert report.n_incorrect_before == 15
        assert report.n_failed == 0

    def test_no_mistake_traces_cost_zero_calls(self):
        traces, backend = _scripted_suite()
        run_backtracking_experiment(traces, OracleLocator(), backend)
        # 17 traces have a located mistake, each one n=8 batch; 3 are untouched
        assert backend.call_count == 17

    def test_regeneration_accounting(self):
        traces, backend = _scripted_suite()
        report = run_backtracking_experiment(traces, OracleLocator(), backend)
        assert report.regeneration_histogram == {0: 3, 8: 17}
        (row,) = report.per_task
        assert row.task is TaskKind.WORD_SORTING
        assert row.mean_regenerations == pytest.approx(8 * 17 / 20)

    def test_locator_failure_excluded(self):
        traces, backend = _scripted_suite()

        def flaky(trace):
            if trace.id == "i1":
                raise LocatorError("no label")
            return trace.mistake

        report = run_backtracking_experiment(traces, flaky, backend)
        assert report.n_failed == 1
        assert report.n_incorrect_before == 14
        assert report.delta_incorrect == pytest.approx(100 * 8 / 14)
        failures = [o for o in report.outcomes if o.error]
        assert len(failures) == 1 and failures[0].trace_id == "i1"

    def test_out_of_range_prediction_keeps_original(self):
        traces, backend = _scripted_suite()
        report = run_backtracking_experiment(traces, lambda t: MistakeLocation.at_step(99), backend)
        assert backend.call_count == 0
        assert report.delta_correct == 0.0
        assert report.delta_incorrect == 0.0

    def test_outcome_records_roundtrip(self, tmp_path):
        traces, backend = _scripted_suite()
        report = run_backtracking_experiment(traces, OracleLocator(), backend)
        path = tmp_path / "outcomes.jsonl"
        write_outcome_records(report, path)
        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(records) == 20
        by_id = {r["trace_id"]: r for r in records}
        assert by_id["c1"]["correct_before"] and not by_id["c1"]["correct_after"]
        assert not by_id["i1"]["correct_before"] and by_id["i1"]["correct_after"]
        assert by_id["c3"]["regeneration_samples"] == 0

    def test_summary_table(self):
        traces, backend = _scripted_suite()
        report = run_backtracking_experiment(traces, OracleLocator(), backend)
        table = summary_table([report])
        assert "word_sorting,oracle,5,15,-20.00,+60.00,6.80" in table


class TestAccuracySweep:
    def test_perfect_beats_broken_locator(self):
        base = [
            word_sorting_trace(f"s{i}", ["b", "a"], "b a", MistakeLocation.at_step(2))
            for i in range(30)
        ] + [
            word_sorting_trace(f"ok{i}", ["b", "a"], "a b", NO_MISTAKE) for i in range(10)
        ]
        backend = MockBackend([], default="Fixed order. The answer is a b")
        results = accuracy_sweep(base, backend, [0.0, 1.0], seed=5)
        by_acc = {acc: report for acc, report in results}
        assert by_acc[1.0].delta_incorrect == pytest.approx(100.0)
        assert by_acc[0.0].delta_incorrect < by_acc[1.0].delta_incorrect

    def test_sweep_table_rows(self):
        base = [word_sorting_trace("s", ["b", "a"], "b a", MistakeLocation.at_step(2))]
        backend = MockBackend([], default="Fixed. The answer is a b")
        results = accuracy_sweep(base, backend, [1.0], seed=0)
        table = sweep_table(results)
        assert table.splitlines()[0] == "accuracy,task,delta_correct,delta_incorrect"
        assert "1.00,word_sorting,+0.00,+100.00" in table
        assert "1.00,overall,+0.00,+100.00" in table
