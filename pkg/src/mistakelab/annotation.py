"""Annotation workflow: automatic Dyck-trace labeling, record validation,
append-only persistence, majority aggregation, and task dispatch."""

from __future__ import annotations

import datetime as _dt
import json
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import re

from .errors import MistakeLabError, ProtocolError, QuestionParseError
from .generation import strip_step_label
from .metrics import krippendorff_alpha
from .model import NO_MISTAKE, MistakeLocation, TaskKind, Trace
from .tasks import BRACKET_PAIRS, CLOSERS, dyck_closing_sequence, parse_dyck_prefix

VERDICTS = ("correct", "incorrect", "skipped")

# Shown with every dispatched trace: correct-answer traces may still contain
# logical mistakes, so annotators should not trust the final answer.
CORRECT_TRACE_NOTE = (
    "Note: a trace can reach the correct target answer and still contain a "
    "logical mistake in one of its steps. Judge each step on its own logic."
)


class UnknownTraceError(MistakeLabError):
    pass


class DuplicateAnnotationError(MistakeLabError):
    pass


# --- automatic Dyck annotation --------------------------------------------------

_SYM = r"[()\[\]{}<>]"
_CONSUME_RE = re.compile(
    rf'^[Ww]e consume\s+"?\s*({_SYM})\s*"?\s*[;,.]?\s*[Tt]he stack is now\s+(.+?)\s*\.?\s*$'
)
_MERGED_RE = re.compile(
    rf'^[Ww]e consume\s+"?\s*({_SYM})\s*"?\s*[;,.]?\s*[Tt]he stack is now\s+(.+?)\s*\.\s*'
    r"[Tt]o close the stack we need\s+(.+?)\s*\.?\s*[Tt]he answer is\s*(.*?)\s*\.?\s*$"
)
_CLOSING_RE = re.compile(
    r"^(?:[Ww]e have reached the end of the input\s*\.?\s*)?"
    r"[Tt]o close the stack we need\s+(.+?)\s*\.?\s*[Tt]he answer is\s*(.*?)\s*\.?\s*$"
)


@dataclass(frozen=True)
class ReferenceSolution:
    """Algorithmically generated reference steps for one Dyck question."""

    question: str
    steps: tuple[str, ...]
    consumed: tuple[tuple[str, tuple[str, ...]], ...]  # (symbol, stack after consuming)
    closing: tuple[str, ...]
    answer: str


def _render_stack(stack: Sequence[str]) -> str:
    return " ".join(stack) if stack else "empty"


def generate_reference_steps(question: str) -> ReferenceSolution:
    """One step per consumed input symbol showing the running stack, plus a
    closing-sequence step, in the shipped prompt format."""
    symbols = parse_dyck_prefix(question)
    closing = dyck_closing_sequence(symbols)  # also validates the prefix
    stack: list[str] = []
    consumed: list[tuple[str, tuple[str, ...]]] = []
    steps: list[str] = []
    for i, symbol in enumerate(symbols, 1):
        if symbol in BRACKET_PAIRS:
            stack.append(symbol)
        else:
            stack.pop()
        consumed.append((symbol, tuple(stack)))
        steps.append(
            f'Thought {i}: We consume "{symbol}"; the stack is now "{_render_stack(stack)}".'
        )
    answer = " ".join(closing)
    steps.append(
        f"Thought {len(symbols) + 1}: We have reached the end of the input. "
        f'To close the stack we need "{answer}". The answer is {answer}'
    )
    return ReferenceSolution(
        question=question,
        steps=tuple(steps),
        consumed=tuple(consumed),
        closing=tuple(closing),
        answer=answer,
    )


def _parse_symbols(raw: str) -> tuple[str, ...] | None:
    """Tolerant symbol-sequence parse: quotes optional, whitespace flexible."""
    cleaned = raw.replace('"', " ").strip()
    if cleaned.lower() == "empty" or not cleaned:
        return ()
    symbols = cleaned.split()
    for symbol in symbols:
        if symbol not in BRACKET_PAIRS and symbol not in CLOSERS:
            return None
    return tuple(symbols)


def _parse_consume(body: str) -> tuple[str, tuple[str, ...]] | None:
    match = _CONSUME_RE.match(body)
    if match is None:
        return None
    stack = _parse_symbols(match.group(2))
    if stack is None:
        return None
    return match.group(1), stack


def _parse_closing(body: str) -> tuple[str, ...] | None:
    match = _CLOSING_RE.match(body)
    if match is None:
        return None
    return _parse_symbols(match.group(1))


def _parse_merged(body: str) -> tuple[str, tuple[str, ...], tuple[str, ...]] | None:
    match = _MERGED_RE.match(body)
    if match is None:
        return None
    stack = _parse_symbols(match.group(2))
    closing = _parse_symbols(match.group(3))
    if stack is None or closing is None:
        return None
    return match.group(1), stack, closing


def auto_annotate_dyck(trace: Trace) -> MistakeLocation:
    """First step diverging from the algorithmic reference (or failing format
    matching); full match with matching answer is annotated no-mistake.

    Handles the merged-final-steps variant and optional quoting of symbols.
    """
    if trace.task is not TaskKind.DYCK_LANGUAGES:
        raise QuestionParseError(f"auto-annotation only covers Dyck traces, got {trace.task}")
    ref = generate_reference_steps(trace.question)
    n_consume = len(ref.consumed)
    steps = trace.steps
    for i, step in enumerate(steps, 1):
        body = strip_step_label(step)
        is_last = i == len(steps)
        if i <= n_consume:
            if is_last and i == n_consume:
                merged = _parse_merged(body)
                if merged is not None:
                    symbol, stack, closing = merged
                    if (symbol, stack) != ref.consumed[i - 1] or closing != ref.closing:
                        return MistakeLocation.at_step(i)
                    break
            parsed = _parse_consume(body)
            if parsed is None or parsed != ref.consumed[i - 1]:
                return MistakeLocation.at_step(i)
            if is_last:
                # trace ended without the closing step
                return MistakeLocation.at_step(i)
        elif i == n_consume + 1:
            closing = _parse_closing(body)
            if closing is None or closing != ref.closing:
                return MistakeLocation.at_step(i)
        else:
            # steps beyond the reference solution
            return MistakeLocation.at_step(i)
    if trace.answer is not None and trace.answer != ref.answer:
        return MistakeLocation.at_step(len(steps))
    return NO_MISTAKE


# --- human annotation records ----------------------------------------------------


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's per-step verdicts for one trace.

    Protocol: at most one "incorrect"; every verdict after the first
    "incorrect" is "skipped"; with no "incorrect" there are no "skipped".
    """

    trace_id: str
    annotator_id: str
    verdicts: tuple[str, ...]
    submitted_at: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "verdicts", tuple(self.verdicts))
        if not self.submitted_at:
            object.__setattr__(
                self, "submitted_at", _dt.datetime.now(_dt.timezone.utc).isoformat()
            )
        self.validate_protocol()

    def validate_protocol(self) -> None:
        if not self.verdicts:
            raise ProtocolError("a record needs at least one verdict")
        for verdict in self.verdicts:
            if verdict not in VERDICTS:
                raise ProtocolError(f"unknown verdict {verdict!r}")
        incorrect_positions = [i for i, v in enumerate(self.verdicts) if v == "incorrect"]
        if len(incorrect_positions) > 1:
            raise ProtocolError("at most one step may be marked incorrect")
        if incorrect_positions:
            first = incorrect_positions[0]
            tail = self.verdicts[first + 1:]
            if any(v != "skipped" for v in tail):
                raise ProtocolError(
                    "every step after the first incorrect verdict must be skipped"
                )
        elif "skipped" in self.verdicts:
            raise ProtocolError("skipped steps are only allowed after an incorrect verdict")

    def derived_label(self) -> MistakeLocation:
        for i, verdict in enumerate(self.verdicts, 1):
            if verdict == "incorrect":
                return MistakeLocation.at_step(i)
        return NO_MISTAKE

    def to_record(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "annotator_id": self.annotator_id,
            "verdicts": list(self.verdicts),
            "submitted_at": self.submitted_at,
        }


@dataclass(frozen=True)
class AggregateResult:
    status: str  # "done" or "pending"
    location: MistakeLocation | None
    n_records: int
    needs_more: bool = False


class AnnotationStore:
    """Append-only annotation log with in-memory indexes.

    Writes are serialized by a lock; reads see a consistent snapshot because
    records are immutable and appended atomically under the lock.
    """

    def __init__(self, traces: Iterable[Trace], log_path: str | Path | None = None):
        self._traces: dict[str, Trace] = {t.id: t for t in traces}
        self._order: list[str] = [t.id for t in self._traces.values()]
        self._records: dict[str, dict[str, AnnotationRecord]] = {}
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path is not None else None
        if self._log_path is not None and self._log_path.exists():
            for lineno, line in enumerate(self._log_path.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                raw = json.loads(line)
                record = AnnotationRecord(
                    trace_id=raw["trace_id"],
                    annotator_id=raw["annotator_id"],
                    verdicts=tuple(raw["verdicts"]),
                    submitted_at=raw.get("submitted_at", ""),
                )
                self._check(record)  # re-check invariants at read time
                self._records.setdefault(record.trace_id, {})[record.annotator_id] = record

    def trace(self, trace_id: str) -> Trace:
        if trace_id not in self._traces:
            raise UnknownTraceError(f"unknown trace {trace_id!r}")
        return self._traces[trace_id]

    def _check(self, record: AnnotationRecord) -> None:
        trace = self.trace(record.trace_id)
        if len(record.verdicts) != len(trace.steps):
            raise ProtocolError(
                f"trace {trace.id!r} has {len(trace.steps)} steps, "
                f"record carries {len(record.verdicts)} verdicts"
            )

    def submit(self, record: AnnotationRecord) -> AnnotationRecord:
        """Persist a record. Idempotent on identical resubmission; a second,
        different record from the same annotator is rejected."""
        with self._lock:
            self._check(record)
            existing = self._records.get(record.trace_id, {}).get(record.annotator_id)
            if existing is not None:
                if existing.verdicts == record.verdicts:
                    return existing
                raise DuplicateAnnotationError(
                    f"annotator {record.annotator_id!r} already annotated trace "
                    f"{record.trace_id!r}"
                )
            self._records.setdefault(record.trace_id, {})[record.annotator_id] = record
            if self._log_path is not None:
                with self._log_path.open("a") as fh:
                    fh.write(json.dumps(record.to_record(), ensure_ascii=False) + "\n")
            return record

    def records_for(self, trace_id: str) -> list[AnnotationRecord]:
        self.trace(trace_id)
        return sorted(
            self._records.get(trace_id, {}).values(), key=lambda r: r.annotator_id
        )

    def aggregate(self, trace_id: str) -> AggregateResult:
        """Majority over per-annotator derived labels; needs >= 3 records and
        a strict plurality, otherwise pending."""
        records = self.records_for(trace_id)
        if len(records) < 3:
            return AggregateResult("pending", None, len(records))
        counts = Counter(r.derived_label() for r in records)
        ranked = counts.most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            return AggregateResult("pending", None, len(records), needs_more=True)
        return AggregateResult("done", ranked[0][0], len(records))

    def next_task(self, annotator_id: str) -> Trace | None:
        """A trace the annotator has not labeled, fewest existing records first."""
        candidates = [
            tid
            for tid in self._order
            if annotator_id not in self._records.get(tid, {})
        ]
        if not candidates:
            return None
        candidates.sort(key=lambda tid: (len(self._records.get(tid, {})), tid))
        return self._traces[candidates[0]]

    def reliability_data(self) -> list[list[str | None]]:
        """(trace, step) units x annotators matrix of step verdicts.

        Skipped steps are structurally missing labels.
        """
        annotators = sorted(
            {a for records in self._records.values() for a in records}
        )
        rows: list[list[str | None]] = []
        for trace_id in self._order:
            records = self._records.get(trace_id)
            if not records:
                continue
            n_steps = len(self._traces[trace_id].steps)
            for step_index in range(n_steps):
                row: list[str | None] = []
                for annotator in annotators:
                    record = records.get(annotator)
                    if record is None:
                        row.append(None)
                    else:
                        verdict = record.verdicts[step_index]
                        row.append(None if verdict == "skipped" else verdict)
                rows.append(row)
        return rows

    def alpha(self) -> float:
        return krippendorff_alpha(self.reliability_data())
