"""Backtracking correction: keep the prefix before the first mistake,
resample that step at high temperature until it differs, then regenerate the
rest of the trace greedily. Plus the experiment runner and accuracy sweep."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .errors import BackendError, LocatorError, MistakeLabError
from .generation import (
    Backend,
    build_generation_prompt,
    generate_step,
    strip_step_label,
)
from .locators import (
    Locator,
    SimulatedClassifier,
    SimulatedLocator,
    fit_location_distribution,
)
from .model import MistakeLocation, TaskKind, Trace
from .tasks import extract_answer, is_correct_ans

@dataclass(frozen=True)
class BacktrackConfig:
    max_regenerations: int = 8
    regen_temperature: float = 1.0
    continue_temperature: float = 0.0
    batch_size: int = 8
    max_steps: int = 40  # cap for suffix regeneration

    def __post_init__(self) -> None:
        if self.max_regenerations < 1:
            raise ValueError("max_regenerations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class BacktrackResult:
    trace: Trace
    regeneration_samples: int


def backtrack(
    backend: Backend,
    trace: Trace,
    location: MistakeLocation,
    config: BacktrackConfig = BacktrackConfig(),
    *,
    prompt_dir: str | Path | None = None,
) -> BacktrackResult:
    """Apply the correction algorithm for one trace.

    No mistake: the input is returned unchanged with zero backend calls.
    Step n: steps 1..n-1 are preserved verbatim; step n is resampled at the
    regeneration temperature in batches until a sample differs from the
    original (capped at max_regenerations total samples; if none differ the
    final sample is used); the remaining steps are generated greedily until
    an answer is stated or the step cap is reached.
    """
    if not location.is_mistake:
        return BacktrackResult(trace, 0)
    n = location.step
    if not 1 <= n <= len(trace.steps):
        raise MistakeLabError(
            f"mistake location {n} out of range 1..{len(trace.steps)} for trace {trace.id!r}"
        )
    prefix = list(trace.steps[: n - 1])
    original_body = strip_step_label(trace.steps[n - 1])

    prompt = build_generation_prompt(trace.task, trace.question, prefix, n, prompt_dir)
    samples_drawn = 0
    chosen: str | None = None
    last_sample: str | None = None
    while samples_drawn < config.max_regenerations and chosen is None:
        batch = min(config.batch_size, config.max_regenerations - samples_drawn)
        candidates = generate_step(
            backend, prompt, n, config.regen_temperature, n=batch
        )
        samples_drawn += batch
        for candidate in candidates:
            last_sample = candidate
            if strip_step_label(candidate) != original_body:
                chosen = candidate
                break
    if chosen is None:
        chosen = last_sample  # all regenerations identical: proceed with it

    steps = prefix + [chosen]
    answer = extract_answer(chosen)
    index = n
    while answer is None and index < config.max_steps:
        index += 1
        step_prompt = build_generation_prompt(
            trace.task, trace.question, steps, index, prompt_dir
        )
        step = generate_step(
            backend, step_prompt, index, config.continue_temperature, n=1
        )[0]
        steps.append(step)
        answer = extract_answer(step)
    corrected = replace(
        trace, steps=tuple(steps), answer=answer, mistake=None
    )
    return BacktrackResult(corrected, samples_drawn)


@dataclass(frozen=True)
class TraceOutcome:
    trace_id: str
    task: TaskKind
    location: MistakeLocation | None  # None = locator failure
    correct_before: bool
    correct_after: bool
    regeneration_samples: int
    answer_before: str | None
    answer_after: str | None
    error: str | None = None


@dataclass(frozen=True)
class TaskDelta:
    task: TaskKind
    n_correct_before: int
    n_incorrect_before: int
    delta_correct: float  # signed percentage on the originally-correct subset
    delta_incorrect: float  # signed percentage on the originally-incorrect subset
    mean_regenerations: float


@dataclass(frozen=True)
class BacktrackReport:
    locator: str
    outcomes: tuple[TraceOutcome, ...]
    per_task: tuple[TaskDelta, ...]
    delta_correct: float
    delta_incorrect: float
    n_correct_before: int
    n_incorrect_before: int
    n_failed: int
    regeneration_histogram: dict[int, int]


def _deltas(outcomes: Sequence[TraceOutcome]) -> tuple[float, float, int, int]:
    correct = [o for o in outcomes if o.correct_before]
    incorrect = [o for o in outcomes if not o.correct_before]
    delta_correct = (
        100.0 * (sum(o.correct_after for o in correct) - len(correct)) / len(correct)
        if correct
        else 0.0
    )
    delta_incorrect = (
        100.0 * sum(o.correct_after for o in incorrect) / len(incorrect)
        if incorrect
        else 0.0
    )
    return delta_correct, delta_incorrect, len(correct), len(incorrect)


def run_backtracking_experiment(
    traces: Sequence[Trace],
    locator: Locator | Callable[[Trace], MistakeLocation],
    backend: Backend,
    config: BacktrackConfig = BacktrackConfig(),
    *,
    prompt_dir: str | Path | None = None,
) -> BacktrackReport:
    """Backtrack every trace whose locator output is a mistake step and report
    the accuracy deltas split by original correctness.

    A trace whose locator or backend call fails is excluded from the deltas
    and counted in ``n_failed``.
    """
    outcomes: list[TraceOutcome] = []
    failed: list[TraceOutcome] = []
    for trace in traces:
        correct_before = is_correct_ans(trace.answer, trace.target)
        try:
            location = locator(trace)
            if location.is_mistake and not 1 <= location.step <= len(trace.steps):
                # out-of-range prediction: nothing to backtrack, keep the original
                result = BacktrackResult(trace, 0)
            else:
                result = backtrack(backend, trace, location, config, prompt_dir=prompt_dir)
        except (BackendError, LocatorError) as exc:
            failed.append(
                TraceOutcome(
                    trace_id=trace.id,
                    task=trace.task,
                    location=None,
                    correct_before=correct_before,
                    correct_after=correct_before,
                    regeneration_samples=0,
                    answer_before=trace.answer,
                    answer_after=trace.answer,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
            continue
        outcomes.append(
            TraceOutcome(
                trace_id=trace.id,
                task=trace.task,
                location=location,
                correct_before=correct_before,
                correct_after=is_correct_ans(result.trace.answer, trace.target),
                regeneration_samples=result.regeneration_samples,
                answer_before=trace.answer,
                answer_after=result.trace.answer,
            )
        )
    delta_correct, delta_incorrect, n_correct, n_incorrect = _deltas(outcomes)
    per_task = []
    for task in TaskKind:
        group = [o for o in outcomes if o.task == task]
        if not group:
            continue
        dc, di, nc, ni = _deltas(group)
        per_task.append(
            TaskDelta(
                task=task,
                n_correct_before=nc,
                n_incorrect_before=ni,
                delta_correct=dc,
                delta_incorrect=di,
                mean_regenerations=sum(o.regeneration_samples for o in group) / len(group),
            )
        )
    histogram: dict[int, int] = {}
    for outcome in outcomes:
        histogram[outcome.regeneration_samples] = (
            histogram.get(outcome.regeneration_samples, 0) + 1
        )
    name = getattr(locator, "name", getattr(locator, "__name__", "locator"))
    return BacktrackReport(
        locator=name,
        outcomes=tuple(outcomes + failed),
        per_task=tuple(per_task),
        delta_correct=delta_correct,
        delta_incorrect=delta_incorrect,
        n_correct_before=n_correct,
        n_incorrect_before=n_incorrect,
        n_failed=len(failed),
        regeneration_histogram=histogram,
    )


def accuracy_sweep(
    traces: Sequence[Trace],
    backend: Backend,
    accuracies: Sequence[float],
    seed: int,
    config: BacktrackConfig = BacktrackConfig(),
    *,
    prompt_dir: str | Path | None = None,
) -> list[tuple[float, BacktrackReport]]:
    """Run one backtracking experiment per simulated-locator accuracy level."""
    distribution = fit_location_distribution(traces)
    results = []
    for accuracy in accuracies:
        clf = SimulatedClassifier(
            target_accuracy=accuracy, location_distribution=distribution, seed=seed
        )
        locator = SimulatedLocator(clf, traces)
        results.append(
            (accuracy, run_backtracking_experiment(traces, locator, backend, config, prompt_dir=prompt_dir))
        )
    return results


# --- report serialization -------------------------------------------------------


def write_outcome_records(report: BacktrackReport, path: str | Path) -> None:
    """Per-trace before/after records, line-delimited."""
    with Path(path).open("w") as fh:
        for o in report.outcomes:
            record = {
                "trace_id": o.trace_id,
                "task": o.task.value,
                "location": None if o.location is None else o.location.step,
                "located": o.location is not None,
                "correct_before": o.correct_before,
                "correct_after": o.correct_after,
                "answer_before": o.answer_before,
                "answer_after": o.answer_after,
                "regeneration_samples": o.regeneration_samples,
            }
            if o.error:
                record["error"] = o.error
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def summary_table(reports: Sequence[BacktrackReport]) -> str:
    """Delta summary, one row per (task, locator)."""
    header = (
        "task,locator,n_correct_before,n_incorrect_before,"
        "delta_correct,delta_incorrect,mean_regenerations"
    )
    lines = [header]
    for report in reports:
        for row in report.per_task:
            lines.append(
                f"{row.task.value},{report.locator},{row.n_correct_before},"
                f"{row.n_incorrect_before},{row.delta_correct:+.2f},"
                f"{row.delta_incorrect:+.2f},{row.mean_regenerations:.2f}"
            )
    return "\n".join(lines) + "\n"


def sweep_table(results: Sequence[tuple[float, BacktrackReport]]) -> str:
    """Accuracy-sweep summary: deltas per accuracy level, per task and overall."""
    header = "accuracy,task,delta_correct,delta_incorrect"
    lines = [header]
    for accuracy, report in results:
        for row in report.per_task:
            lines.append(
                f"{accuracy:.2f},{row.task.value},{row.delta_correct:+.2f},{row.delta_incorrect:+.2f}"
            )
        lines.append(
            f"{accuracy:.2f},overall,{report.delta_correct:+.2f},{report.delta_incorrect:+.2f}"
        )
    return "\n".join(lines) + "\n"
