"""Mistake-location strategies.

Three prompting protocols (whole-trace, per-step direct, per-step CoT), the
gold-label oracle, a uniform random baseline, a simulated classifier with a
tunable gold-usage rate, and a pre-computed-predictions file reader.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import LocationParseError, LocatorError
from .generation import Backend, backend_from_spec
from .model import NO_MISTAKE, MistakeLocation, TaskKind, Trace

logger = logging.getLogger(__name__)

_NO_RE = re.compile(r"\bno\b", re.IGNORECASE)
_INT_RE = re.compile(r"\d+")
_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_location_output(text: str) -> MistakeLocation:
    """Parse a prompted completion into a mistake location.

    A word-bounded, case-insensitive "no" wins; otherwise the first integer
    token is the step number. Anything else is a parse failure. Out-of-range
    step numbers are preserved raw; scoring treats them as wrong.
    """
    if _NO_RE.search(text):
        return NO_MISTAKE
    match = _INT_RE.search(text)
    if match:
        n = int(match.group(0))
        if n >= 1:
            return MistakeLocation.at_step(n)
    raise LocationParseError(f"cannot parse mistake location from {text!r}")


def _load_find_prompt(name: str, prompt_dir: str | Path | None = None) -> str:
    if prompt_dir is not None:
        return (Path(prompt_dir) / f"{name}.txt").read_text()
    return resources.files("mistakelab").joinpath("prompts", "find", f"{name}.txt").read_text()


def _fill(template: str, question: str, trace_text: str) -> str:
    return template.replace("{question}", question).replace("{trace}", trace_text)


def find_direct_trace(
    backend: Backend, trace: Trace, prompt_dir: str | Path | None = None
) -> MistakeLocation:
    """Whole trace in, one greedy call out, parsed as number-or-No."""
    template = _load_find_prompt("trace", prompt_dir)
    prompt = _fill(template, trace.question, "\n".join(trace.steps))
    completion = backend.complete(prompt, temperature=0.0, n=1)[0]
    return parse_location_output(completion)


def _first_verdict(completion: str) -> str | None:
    match = _YES_NO_RE.search(completion)
    return match.group(1).lower() if match else None


def _last_verdict(completion: str) -> str | None:
    matches = _YES_NO_RE.findall(completion)
    return matches[-1].lower() if matches else None


def _find_stepwise(
    backend: Backend, trace: Trace, template_name: str, take_last: bool,
    prompt_dir: str | Path | None = None,
) -> MistakeLocation:
    template = _load_find_prompt(template_name, prompt_dir)
    for i in range(1, len(trace.steps) + 1):
        partial = "\n".join(trace.steps[:i])
        prompt = _fill(template, trace.question, partial)
        completion = backend.complete(prompt, temperature=0.0, n=1)[0]
        verdict = _last_verdict(completion) if take_last else _first_verdict(completion)
        if verdict is None:
            logger.warning(
                "unparseable verdict for trace %s step %d: %r (treated as Yes)",
                trace.id, i, completion,
            )
            verdict = "yes"
        if verdict == "no":
            return MistakeLocation.at_step(i)
    return NO_MISTAKE


def find_direct_step(
    backend: Backend, trace: Trace, prompt_dir: str | Path | None = None
) -> MistakeLocation:
    """One Yes/No call per step over the partial trace; stops at the first No.

    Each call sees only the steps through the target step, never earlier
    verdicts.
    """
    return _find_stepwise(backend, trace, "step_direct", take_last=False, prompt_dir=prompt_dir)


def find_cot_step(
    backend: Backend, trace: Trace, prompt_dir: str | Path | None = None
) -> MistakeLocation:
    """Like find_direct_step, but the verdict is the final yes/no of a
    free-form reasoning passage."""
    return _find_stepwise(backend, trace, "step_cot", take_last=True, prompt_dir=prompt_dir)


class Locator:
    """A named strategy mapping a trace to a MistakeLocation, with call accounting."""

    name = "locator"

    def __init__(self) -> None:
        self.calls = 0

    def __call__(self, trace: Trace) -> MistakeLocation:
        self.calls += 1
        return self._locate(trace)

    def _locate(self, trace: Trace) -> MistakeLocation:
        raise NotImplementedError


class OracleLocator(Locator):
    """Returns the gold label verbatim. Errors on unlabeled traces."""

    name = "oracle"

    def __init__(self, dataset: Iterable[Trace] = ()):
        super().__init__()
        self._labels: dict[str, MistakeLocation] = {
            t.id: t.mistake for t in dataset if t.mistake is not None
        }

    def _locate(self, trace: Trace) -> MistakeLocation:
        label = self._labels.get(trace.id, trace.mistake)
        if label is None:
            raise LocatorError(f"trace {trace.id!r} has no gold mistake label")
        return label


class RandomLocator(Locator):
    """Uniform draw over {no mistake, step 1..len}, deterministic per (seed, trace id)."""

    def __init__(self, seed: int):
        super().__init__()
        self.seed = seed
        self.name = f"random:{seed}"

    def _locate(self, trace: Trace) -> MistakeLocation:
        rng = random.Random(f"{self.seed}:{trace.id}")
        draw = rng.randrange(len(trace.steps) + 1)
        return NO_MISTAKE if draw == 0 else MistakeLocation.at_step(draw)


@dataclass(frozen=True)
class SimulatedClassifier:
    """Config for a locator that uses the gold label target_accuracy of the time.

    ``location_distribution`` maps task -> {location: count}, where locations
    are None (no mistake) or absolute 1-based step indices, fitted from the
    gold labels of a dataset.
    """

    target_accuracy: float
    location_distribution: Mapping[TaskKind, Mapping[int | None, int]]
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.target_accuracy <= 1.0:
            raise ValueError("target_accuracy must lie in [0, 1]")


def fit_location_distribution(
    dataset: Iterable[Trace],
) -> dict[TaskKind, dict[int | None, int]]:
    """Empirical gold mistake-location counts, pooled per task."""
    dist: dict[TaskKind, dict[int | None, int]] = {}
    for trace in dataset:
        if trace.mistake is None:
            continue
        counts = dist.setdefault(trace.task, {})
        key = trace.mistake.step
        counts[key] = counts.get(key, 0) + 1
    return dist


class SimulatedLocator(Locator):
    """Gold with probability X; otherwise a distribution-matched wrong location.

    Wrong draws come from the fitted per-task distribution truncated to the
    trace's valid range and renormalized with the gold location removed, so a
    wrong draw never equals gold.
    """

    def __init__(self, clf: SimulatedClassifier, gold: Iterable[Trace] = ()):
        super().__init__()
        self.clf = clf
        self.name = f"simulated:{clf.target_accuracy}:{clf.seed}"
        self._labels: dict[str, MistakeLocation] = {
            t.id: t.mistake for t in gold if t.mistake is not None
        }

    def _gold(self, trace: Trace) -> MistakeLocation:
        label = self._labels.get(trace.id, trace.mistake)
        if label is None:
            raise LocatorError(f"trace {trace.id!r} has no gold mistake label")
        return label

    def _locate(self, trace: Trace) -> MistakeLocation:
        gold = self._gold(trace)
        rng = random.Random(f"{self.clf.seed}:{trace.id}")
        if rng.random() < self.clf.target_accuracy:
            return gold
        return self._sample_wrong(trace, gold, rng)

    def _sample_wrong(
        self, trace: Trace, gold: MistakeLocation, rng: random.Random
    ) -> MistakeLocation:
        candidates: list[int | None] = [None] + list(range(1, len(trace.steps) + 1))
        candidates = [c for c in candidates if c != gold.step]
        if not candidates:  # unreachable: None and step 1 cannot both be gold
            raise LocatorError(f"no wrong location exists for trace {trace.id!r}")
        if len(trace.steps) == 1 and len(candidates) == 1:
            # single-candidate degenerate case: the other member of {step 1, no mistake}
            c = candidates[0]
            return NO_MISTAKE if c is None else MistakeLocation.at_step(c)
        counts = self.clf.location_distribution.get(trace.task, {})
        weights = [counts.get(c, 0) for c in candidates]
        if sum(weights) == 0:
            weights = [1] * len(candidates)  # no fitted support in range: uniform
        choice = rng.choices(candidates, weights=weights, k=1)[0]
        return NO_MISTAKE if choice is None else MistakeLocation.at_step(choice)


class PromptedLocator(Locator):
    """Wraps one of the three prompting protocols around a backend."""

    def __init__(self, method: str, backend: Backend, prompt_dir: str | Path | None = None):
        super().__init__()
        if method not in ("trace", "step", "cot"):
            raise LocatorError(f"unknown prompting method {method!r}")
        self.method = method
        self.backend = backend
        self.prompt_dir = prompt_dir
        self.name = f"prompt:{method}"

    def _locate(self, trace: Trace) -> MistakeLocation:
        if self.method == "trace":
            return find_direct_trace(self.backend, trace, self.prompt_dir)
        if self.method == "step":
            return find_direct_step(self.backend, trace, self.prompt_dir)
        return find_cot_step(self.backend, trace, self.prompt_dir)


class FileLocator(Locator):
    """Replays pre-computed predictions keyed by trace id.

    Record format: {"id": str, "predicted_index": int | null}.
    """

    def __init__(self, path: str | Path):
        super().__init__()
        path = Path(path)
        self.name = f"file:{path}"
        if not path.exists():
            raise LocatorError(f"predictions file not found: {path}")
        self._predictions: dict[str, MistakeLocation | None] = {}
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("failed"):
                self._predictions[record["id"]] = None
                continue
            idx = record.get("predicted_index")
            self._predictions[record["id"]] = (
                NO_MISTAKE if idx is None else MistakeLocation.at_step(idx)
            )

    def _locate(self, trace: Trace) -> MistakeLocation:
        if trace.id not in self._predictions:
            raise LocatorError(f"no prediction for trace {trace.id!r} in {self.name}")
        prediction = self._predictions[trace.id]
        if prediction is None:
            raise LocationParseError(f"recorded parse failure for trace {trace.id!r}")
        return prediction


def locator_from_spec(
    spec: str,
    *,
    dataset: Sequence[Trace] = (),
    backend: Backend | None = None,
    backend_spec: str | None = None,
    prompt_dir: str | Path | None = None,
) -> Locator:
    """CLI locator specs: oracle | random:<seed> | simulated:<acc>:<seed> |
    prompt:trace | prompt:step | prompt:cot | file:<path>."""
    if spec == "oracle":
        return OracleLocator(dataset)
    if spec.startswith("random:"):
        return RandomLocator(int(spec.split(":", 1)[1]))
    if spec.startswith("simulated:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise LocatorError(f"bad simulated spec {spec!r} (want simulated:<accuracy>:<seed>)")
        clf = SimulatedClassifier(
            target_accuracy=float(parts[1]),
            location_distribution=fit_location_distribution(dataset),
            seed=int(parts[2]),
        )
        return SimulatedLocator(clf, dataset)
    if spec.startswith("prompt:"):
        if backend is None:
            if backend_spec is None:
                raise LocatorError(f"locator {spec!r} needs a backend")
            backend = backend_from_spec(backend_spec)
        return PromptedLocator(spec.split(":", 1)[1], backend, prompt_dir)
    if spec.startswith("file:"):
        return FileLocator(spec[len("file:"):])
    raise LocatorError(f"unknown locator spec {spec!r}")
