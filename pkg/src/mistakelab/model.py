"""Canonical trace data model, dataset (de)serialization, sampling, and stats.

The canonical dataset file is line-delimited JSON, one record per line:

    {"id": str, "task": str, "question": str, "target": str,
     "steps": [str, ...], "answer": str | null,
     "mistake_index": int >= 1 | null | absent}

``mistake_index`` is 1-based ("Thought N" numbering). An absent field means
the trace is unannotated; an explicit null means annotated-no-mistake.
Externally named schemas are imported through a mapping file (see
``load_mapping``).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DatasetError

# Seed used to reproduce the "sampled" Dyck subset (88 correct + all 504
# incorrect traces) from the full 986-trace set. The upstream selection seed
# is unknown; this one is fixed so our subset is at least reproducible.
DYCK_SAMPLE_SEED = 2024

CANONICAL_FIELDS = ("id", "task", "question", "target", "steps", "answer", "mistake_index")


class TaskKind(str, Enum):
    WORD_SORTING = "word_sorting"
    TRACKING_SHUFFLED_OBJECTS = "tracking_shuffled_objects"
    LOGICAL_DEDUCTION = "logical_deduction"
    MULTISTEP_ARITHMETIC = "multistep_arithmetic"
    DYCK_LANGUAGES = "dyck_languages"


@dataclass(frozen=True)
class MistakeLocation:
    """Either "no mistake" or the 1-based index of the first mistaken step."""

    step: int | None = None

    def __post_init__(self) -> None:
        if self.step is not None and self.step < 1:
            raise ValueError(f"step index must be >= 1, got {self.step}")

    @classmethod
    def no_mistake(cls) -> "MistakeLocation":
        return cls(None)

    @classmethod
    def at_step(cls, n: int) -> "MistakeLocation":
        return cls(int(n))

    @property
    def is_mistake(self) -> bool:
        return self.step is not None

    def __str__(self) -> str:
        return "no mistake" if self.step is None else f"step {self.step}"


NO_MISTAKE = MistakeLocation.no_mistake()


@dataclass(frozen=True)
class CorrectnessLabels:
    """correct_ans: answer exact-matches target. correct_mis: gold says no mistake."""

    correct_ans: bool
    correct_mis: bool


@dataclass(frozen=True)
class Trace:
    """One question with its ordered reasoning steps and optional gold label.

    ``mistake`` is None when the trace is unannotated, ``NO_MISTAKE`` when
    annotated as mistake-free, and ``MistakeLocation.at_step(n)`` otherwise.
    """

    id: str
    task: TaskKind
    question: str
    target: str
    steps: tuple[str, ...]
    answer: str | None = None
    mistake: MistakeLocation | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def validate(self, check_answer: bool = True) -> None:
        if len(self.steps) < 1:
            raise DatasetError(f"trace {self.id!r}: steps must be non-empty")
        for i, step in enumerate(self.steps, 1):
            if not step:
                raise DatasetError(f"trace {self.id!r}: step {i} is empty")
            if "\n" in step:
                raise DatasetError(f"trace {self.id!r}: step {i} contains a newline")
        if self.mistake is not None and self.mistake.is_mistake:
            n = self.mistake.step
            if not 1 <= n <= len(self.steps):
                raise DatasetError(
                    f"trace {self.id!r}: mistake_index {n} out of range 1..{len(self.steps)}"
                )
        if check_answer and self.answer is not None:
            from .tasks import extract_answer  # deferred: tasks imports TaskKind

            extracted = extract_answer(self.steps[-1])
            if extracted != self.answer:
                raise DatasetError(
                    f"trace {self.id!r}: answer {self.answer!r} is not extractable "
                    f"from the final step (got {extracted!r})"
                )

    def correctness(self) -> CorrectnessLabels:
        from .tasks import is_correct_ans

        return CorrectnessLabels(
            correct_ans=is_correct_ans(self.answer, self.target),
            correct_mis=self.mistake is not None and not self.mistake.is_mistake,
        )

    def with_mistake(self, mistake: MistakeLocation | None) -> "Trace":
        return replace(self, mistake=mistake)


def _trace_to_record(trace: Trace) -> dict:
    record = {
        "id": trace.id,
        "task": trace.task.value,
        "question": trace.question,
        "target": trace.target,
        "steps": list(trace.steps),
        "answer": trace.answer,
    }
    if trace.mistake is not None:
        record["mistake_index"] = trace.mistake.step
    return record


def _record_to_trace(record: Mapping, context: str, check_answer: bool = True) -> Trace:
    for name in ("task", "question", "target", "steps"):
        if name not in record:
            raise DatasetError(f"{context}: missing field {name!r}")
    try:
        task = TaskKind(record["task"])
    except ValueError:
        raise DatasetError(f"{context}: unknown task {record['task']!r}") from None
    steps = record["steps"]
    if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
        raise DatasetError(f"{context}: steps must be an array of strings")
    answer = record.get("answer")
    if answer is not None and not isinstance(answer, str):
        raise DatasetError(f"{context}: answer must be a string or null")
    mistake: MistakeLocation | None
    if "mistake_index" not in record:
        mistake = None
    elif record["mistake_index"] is None:
        mistake = NO_MISTAKE
    else:
        idx = record["mistake_index"]
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 1:
            raise DatasetError(f"{context}: mistake_index must be an integer >= 1 or null")
        mistake = MistakeLocation.at_step(idx)
    trace = Trace(
        id=str(record["id"]),
        task=task,
        question=str(record["question"]),
        target=str(record["target"]),
        steps=tuple(steps),
        answer=answer,
        mistake=mistake,
    )
    trace.validate(check_answer=check_answer)
    return trace


@dataclass(frozen=True)
class FieldMapping:
    """Translation from an external record schema to the canonical one.

    ``fields`` maps external field name -> canonical field name.
    ``mistake_index_base`` is the base of the external mistake index (the
    canonical base is 1). ``task``/``task_from_filename`` supply the task when
    the external schema has no task field; ``id_from_line`` synthesizes ids
    from the file name and line number. ``validate_answer`` may be disabled
    for external corpora whose answer field is not re-derivable verbatim.
    """

    fields: Mapping[str, str] = field(default_factory=dict)
    mistake_index_base: int = 1
    task: str | None = None
    task_from_filename: bool = False
    id_from_line: bool = False
    validate_answer: bool = True


def load_mapping(path: str | Path) -> FieldMapping:
    raw = json.loads(Path(path).read_text())
    known = {"fields", "mistake_index_base", "task", "task_from_filename", "id_from_line", "validate_answer"}
    unknown = set(raw) - known
    if unknown:
        raise DatasetError(f"mapping file {path}: unknown keys {sorted(unknown)}")
    return FieldMapping(**raw)


def _apply_mapping(record: Mapping, mapping: FieldMapping, path: Path, lineno: int) -> dict:
    out: dict = {}
    for external, canonical in mapping.fields.items():
        if canonical not in CANONICAL_FIELDS:
            raise DatasetError(f"mapping targets unknown canonical field {canonical!r}")
        if external in record:
            out[canonical] = record[external]
    for name in CANONICAL_FIELDS:  # untranslated fields pass through by name
        if name not in out and name in record and name not in mapping.fields:
            out[name] = record[name]
    if mapping.mistake_index_base != 1 and isinstance(out.get("mistake_index"), int):
        out["mistake_index"] = out["mistake_index"] + (1 - mapping.mistake_index_base)
    if "task" not in out:
        if mapping.task is not None:
            out["task"] = mapping.task
        elif mapping.task_from_filename:
            out["task"] = path.stem
    if "id" not in out and mapping.id_from_line:
        out["id"] = f"{path.stem}-{lineno}"
    return out


def load_dataset(path: str | Path, mapping: FieldMapping | str | Path | None = None) -> list[Trace]:
    """Load a line-delimited trace file, validating every record.

    Malformed lines are reported with their line number. ``mapping`` adapts
    an externally named schema to the canonical one.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if mapping is not None and not isinstance(mapping, FieldMapping):
        mapping = load_mapping(mapping)
    traces: list[Trace] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            context = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{context}: invalid JSON ({exc})") from None
            check_answer = True
            if mapping is not None:
                record = _apply_mapping(record, mapping, path, lineno)
                check_answer = mapping.validate_answer
            if "id" not in record:
                raise DatasetError(f"{context}: missing field 'id'")
            traces.append(_record_to_trace(record, context, check_answer=check_answer))
    return traces


def save_dataset(traces: Iterable[Trace], path: str | Path) -> None:
    """Write traces to a canonical line-delimited file, preserving order."""
    path = Path(path)
    with path.open("w") as fh:
        for trace in traces:
            fh.write(json.dumps(_trace_to_record(trace), ensure_ascii=False) + "\n")


def sample_split(
    traces: Sequence[Trace], n_correct: int, n_incorrect: int, seed: int
) -> list[Trace]:
    """Sample exactly n_correct correct_ans and n_incorrect incorrect_ans traces.

    Sampling is without replacement and deterministic per seed. Output order
    follows the input order.
    """
    correct = [t for t in traces if t.correctness().correct_ans]
    incorrect = [t for t in traces if not t.correctness().correct_ans]
    if len(correct) < n_correct:
        raise DatasetError(f"need {n_correct} correct_ans traces, pool has {len(correct)}")
    if len(incorrect) < n_incorrect:
        raise DatasetError(f"need {n_incorrect} incorrect_ans traces, pool has {len(incorrect)}")
    rng = random.Random(seed)
    chosen = set()
    for pool, n in ((correct, n_correct), (incorrect, n_incorrect)):
        chosen.update(t.id for t in rng.sample(pool, n))
    return [t for t in traces if t.id in chosen]


@dataclass(frozen=True)
class TaskStats:
    task: TaskKind
    total: int
    correct_ans: int
    incorrect_ans: int
    correct_mis: int
    incorrect_mis: int
    unannotated: int
    avg_steps: float


@dataclass(frozen=True)
class DatasetStats:
    per_task: tuple[TaskStats, ...]
    total: int

    def for_task(self, task: TaskKind) -> TaskStats | None:
        for row in self.per_task:
            if row.task == task:
                return row
        return None


def dataset_stats(traces: Sequence[Trace]) -> DatasetStats:
    """Composition counts per task plus average steps per trace."""
    by_task: dict[TaskKind, list[Trace]] = {}
    for trace in traces:
        by_task.setdefault(trace.task, []).append(trace)
    rows = []
    for task in TaskKind:
        group = by_task.get(task)
        if not group:
            continue
        labels = [t.correctness() for t in group]
        n_correct = sum(1 for l in labels if l.correct_ans)
        annotated = [t for t in group if t.mistake is not None]
        n_correct_mis = sum(1 for t in annotated if not t.mistake.is_mistake)
        rows.append(
            TaskStats(
                task=task,
                total=len(group),
                correct_ans=n_correct,
                incorrect_ans=len(group) - n_correct,
                correct_mis=n_correct_mis,
                incorrect_mis=len(annotated) - n_correct_mis,
                unannotated=len(group) - len(annotated),
                avg_steps=sum(len(t.steps) for t in group) / len(group),
            )
        )
    return DatasetStats(per_task=tuple(rows), total=len(traces))
