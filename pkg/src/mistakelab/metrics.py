"""Scoring: mistake-location accuracy with correctness splits, the weighted-F1
correctness proxy, Krippendorff's alpha, and table rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .errors import MistakeLabError, ZeroVarianceError
from .model import MistakeLocation


@dataclass(frozen=True)
class SplitAccuracy:
    """Exact-match mistake-location accuracy, overall and split by gold label.

    All values are percentages. ``correct_mis`` covers traces whose gold label
    is "no mistake"; ``incorrect_mis`` covers traces with a gold mistake step.
    """

    overall: float
    correct_mis: float
    incorrect_mis: float
    n_total: int
    n_correct_mis: int
    n_incorrect_mis: int


def mistake_accuracy(
    predictions: Sequence[MistakeLocation | None], golds: Sequence[MistakeLocation]
) -> SplitAccuracy:
    """Exact-match proportion; a None prediction (parse failure) scores wrong."""
    if len(predictions) != len(golds):
        raise MistakeLabError(
            f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds"
        )
    hits = {True: 0, False: 0}
    counts = {True: 0, False: 0}
    for pred, gold in zip(predictions, golds):
        key = not gold.is_mistake  # True = correct_mis subset
        counts[key] += 1
        if pred is not None and pred == gold:
            hits[key] += 1

    def pct(hit: int, n: int) -> float:
        return 100.0 * hit / n if n else 0.0

    n = len(golds)
    return SplitAccuracy(
        overall=pct(hits[True] + hits[False], n),
        correct_mis=pct(hits[True], counts[True]),
        incorrect_mis=pct(hits[False], counts[False]),
        n_total=n,
        n_correct_mis=counts[True],
        n_incorrect_mis=counts[False],
    )


def _f1(tp: int, fp: int, fn: int) -> float:
    # F1 of a class with no predicted and no actual positives is 0 by convention
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


def correctness_proxy_f1(
    predictions: Sequence[MistakeLocation | None], gold_correct_ans: Sequence[bool]
) -> float:
    """Weighted two-class F1 (x100) treating "found a mistake" as predicting
    that the trace's answer is incorrect.

    A None prediction (parse failure) is treated as predicting a mistake:
    it can never be exactly right, and the mistake class is the conservative
    reading of an unparseable location output.
    """
    if len(predictions) != len(gold_correct_ans):
        raise MistakeLabError(
            f"length mismatch: {len(predictions)} predictions vs {len(gold_correct_ans)} golds"
        )
    if not predictions:
        raise MistakeLabError("cannot compute F1 over an empty prediction list")
    # confusion counts with "incorrect_ans" as the positive class
    tp = fp = fn = tn = 0
    for pred, gold_correct in zip(predictions, gold_correct_ans):
        predicted_incorrect = pred is None or pred.is_mistake
        if predicted_incorrect and not gold_correct:
            tp += 1
        elif predicted_incorrect and gold_correct:
            fp += 1
        elif not predicted_incorrect and not gold_correct:
            fn += 1
        else:
            tn += 1
    f1_incorrect = _f1(tp, fp, fn)
    f1_correct = _f1(tn, fn, fp)  # swap roles: "correct_ans" as positive
    n_incorrect = tp + fn
    n_correct = fp + tn
    total = n_incorrect + n_correct
    return 100.0 * (f1_incorrect * n_incorrect + f1_correct * n_correct) / total


# --- Krippendorff's alpha -----------------------------------------------------

ReliabilityData = Sequence[Sequence[Hashable | None]]  # units x annotators, None = missing


def krippendorff_alpha(data: ReliabilityData) -> float:
    """Nominal-level alpha via the coincidence-matrix formulation.

    ``data`` is a units x annotators matrix; None marks a missing (skipped)
    label. Units with fewer than 2 non-missing labels are excluded pairwise.
    Raises ZeroVarianceError when every observed label is identical.
    """
    coincidence: dict[tuple[Hashable, Hashable], float] = {}
    totals: dict[Hashable, float] = {}
    for unit in data:
        labels = [v for v in unit if v is not None]
        m = len(labels)
        if m < 2:
            continue
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if i == j:
                    continue
                coincidence[(a, b)] = coincidence.get((a, b), 0.0) + 1.0 / (m - 1)
    if not coincidence:
        raise MistakeLabError("alpha needs at least one unit with 2 or more labels")
    for (a, _), value in coincidence.items():
        totals[a] = totals.get(a, 0.0) + value
    if len(totals) < 2:
        raise ZeroVarianceError(
            "alpha is undefined: all observed labels are identical (zero variance)"
        )
    n = sum(totals.values())
    observed_disagreement = sum(v for (a, b), v in coincidence.items() if a != b)
    expected_disagreement = sum(
        totals[a] * totals[b] for a in totals for b in totals if a != b
    ) / (n - 1)
    return 1.0 - observed_disagreement / expected_disagreement


# --- report tables -------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    task: str
    method: str
    accuracy: SplitAccuracy
    weighted_f1: float | None = None


def build_table(reports: Sequence[MetricReport]) -> str:
    """Deterministic CSV summary, values to 2 decimals, plus an overall row."""
    header = (
        "task,method,n,accuracy,accuracy_correct_mis,accuracy_incorrect_mis,weighted_f1"
    )
    lines = [header]
    for report in sorted(reports, key=lambda r: (r.task, r.method)):
        acc = report.accuracy
        f1 = f"{report.weighted_f1:.2f}" if report.weighted_f1 is not None else ""
        lines.append(
            f"{report.task},{report.method},{acc.n_total},{acc.overall:.2f},"
            f"{acc.correct_mis:.2f},{acc.incorrect_mis:.2f},{f1}"
        )
    methods = sorted({r.method for r in reports})
    for method in methods:
        rows = [r for r in reports if r.method == method]
        n = sum(r.accuracy.n_total for r in rows)
        if n == 0 or len(rows) < 2:
            continue

        def weighted(value_of, count_of) -> float:
            total = sum(count_of(r) for r in rows)
            if total == 0:
                return 0.0
            return sum(value_of(r) * count_of(r) for r in rows) / total

        overall = weighted(lambda r: r.accuracy.overall, lambda r: r.accuracy.n_total)
        c = weighted(lambda r: r.accuracy.correct_mis, lambda r: r.accuracy.n_correct_mis)
        i = weighted(lambda r: r.accuracy.incorrect_mis, lambda r: r.accuracy.n_incorrect_mis)
        f1_rows = [r for r in rows if r.weighted_f1 is not None]
        f1 = (
            f"{sum(r.weighted_f1 * r.accuracy.n_total for r in f1_rows) / sum(r.accuracy.n_total for r in f1_rows):.2f}"
            if f1_rows
            else ""
        )
        lines.append(f"overall,{method},{n},{overall:.2f},{c:.2f},{i:.2f},{f1}")
    return "\n".join(lines) + "\n"
