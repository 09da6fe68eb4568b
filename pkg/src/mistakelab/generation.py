"""Text-generation backends and stepwise trace construction.

A trace is built one step at a time: the harness writes the "Thought N:"
label into the prompt, the backend completes up to the newline stop, and the
loop ends when the newest step states an answer or the step cap is reached.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .errors import BackendError
from .model import TaskKind, Trace
from .tasks import extract_answer

API_KEY_ENV = "MISTAKELAB_API_KEY"

STEP_LABEL = "Thought {n}:"
STEP_LABEL_RE = re.compile(r"^Thought \d+:\s*")


def strip_step_label(step: str) -> str:
    """Drop a leading "Thought N:" label and trim surrounding whitespace."""
    return STEP_LABEL_RE.sub("", step).strip()


class Backend(Protocol):
    name: str

    def complete(
        self, prompt: str, *, temperature: float, stop: str | None = None, n: int = 1
    ) -> list[str]:
        """Return exactly n completions for the prompt."""
        ...


def prompt_key(prompt: str) -> str:
    """Stable hash key for replaying recorded live sessions."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockBackend:
    """Deterministic scripted backend.

    Records are ``{"key": str, "completions": [str, ...]}``. A call is
    resolved, in order, by: the exact prompt; the sha256 hex digest of the
    prompt; the sequential call index as ``"#<i>"``. If nothing matches and a
    default completion was configured, the default is returned; otherwise the
    call fails.
    """

    def __init__(self, records: Sequence[dict], name: str = "mock", default: str | None = None):
        self.name = name
        self.default = default
        self._by_key: dict[str, list[str]] = {}
        for record in records:
            if "key" not in record or "completions" not in record:
                raise BackendError("mock script record needs 'key' and 'completions'")
            self._by_key[record["key"]] = list(record["completions"])
        self._lock = threading.Lock()
        self.call_count = 0
        self.call_log: list[tuple[str, float, str | None, int]] = []

    @classmethod
    def from_file(cls, path: str | Path, default: str | None = None) -> "MockBackend":
        path = Path(path)
        if not path.exists():
            raise BackendError(f"mock script file not found: {path}")
        records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        return cls(records, name=f"mock:{path}", default=default)

    def complete(
        self, prompt: str, *, temperature: float, stop: str | None = None, n: int = 1
    ) -> list[str]:
        with self._lock:
            index = self.call_count
            self.call_count += 1
            self.call_log.append((prompt, temperature, stop, n))
        completions = (
            self._by_key.get(prompt)
            or self._by_key.get(prompt_key(prompt))
            or self._by_key.get(f"#{index}")
        )
        if completions is None:
            if self.default is not None:
                completions = [self.default]
            else:
                raise BackendError(f"mock script has no completion for call #{index}")
        if len(completions) >= n:
            return completions[:n]
        # pad deterministically by repeating the last scripted completion
        return completions + [completions[-1]] * (n - len(completions))


class HttpBackend:
    """Minimal chat-completion client. Credential from MISTAKELAB_API_KEY."""

    def __init__(self, url: str, max_retries: int = 3, timeout: float = 120.0):
        self.name = f"http:{url}"
        self.url = url
        self.max_retries = max_retries
        self.timeout = timeout

    def complete(
        self, prompt: str, *, temperature: float, stop: str | None = None, n: int = 1
    ) -> list[str]:
        payload = {
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        }
        if stop is not None:
            payload["stop"] = [stop]
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(2 ** (attempt - 1))
            try:
                response = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendError(f"backend returned {response.status_code}: {response.text[:200]}")
            try:
                choices = response.json()["choices"]
                completions = [c["message"]["content"] for c in choices]
            except (KeyError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed backend response: {exc}") from exc
            if len(completions) != n:
                raise BackendError(f"requested {n} completions, got {len(completions)}")
            return completions
        raise BackendError(f"backend call failed after {self.max_retries} retries: {last_error}")


def backend_from_spec(spec: str, default: str | None = None) -> Backend:
    """Build a backend from "mock:<script-path>" or "http:<endpoint-url>"."""
    if spec.startswith("mock:"):
        return MockBackend.from_file(spec[len("mock:"):], default=default)
    if spec.startswith("http:"):
        url = spec[len("http:"):]
        if not url.startswith(("http://", "https://")):
            url = "http:" + url if url.startswith("//") else "https://" + url
        return HttpBackend(url)
    raise BackendError(f"unknown backend spec {spec!r} (want mock:<path> or http:<url>)")


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.0
    stop: str = "\n"
    max_steps: int = 40
    step_label_format: str = STEP_LABEL

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def load_prompt_template(task: TaskKind, prompt_dir: str | Path | None = None) -> str:
    """Few-shot generation prompt for a task. Templates are opaque data."""
    if prompt_dir is not None:
        return (Path(prompt_dir) / f"{task.value}.txt").read_text()
    ref = resources.files("mistakelab").joinpath("prompts", "generate", f"{task.value}.txt")
    return ref.read_text()


def build_generation_prompt(
    task: TaskKind,
    question: str,
    steps_so_far: Sequence[str],
    next_index: int,
    prompt_dir: str | Path | None = None,
) -> str:
    """Prompt prefix for the next step, ending with its "Thought N:" label."""
    template = load_prompt_template(task, prompt_dir)
    # literal replacement: templates may contain brace characters (Dyck symbols)
    base = template.replace("{question}", question)
    if not base.endswith("\n"):
        base += "\n"
    body = "".join(step + "\n" for step in steps_so_far)
    label = STEP_LABEL.format(n=next_index)
    return base + body + label


def truncate_at_stop(completion: str, stop: str = "\n") -> str:
    return completion.split(stop, 1)[0].strip()


def generate_step(
    backend: Backend,
    prompt_prefix: str,
    step_index: int,
    temperature: float,
    n: int = 1,
    stop: str = "\n",
) -> list[str]:
    """Generate n candidate steps, each labeled "Thought {step_index}: ..."."""
    if step_index < 1:
        raise ValueError("step_index must be >= 1")
    try:
        completions = backend.complete(prompt_prefix, temperature=temperature, stop=stop, n=n)
    except BackendError as exc:
        raise BackendError(f"step {step_index} generation failed: {exc}") from exc
    label = STEP_LABEL.format(n=step_index)
    return [f"{label} {truncate_at_stop(c, stop)}" for c in completions]


def generate_trace(
    backend: Backend,
    task: TaskKind,
    question: str,
    config: GenerationConfig = GenerationConfig(),
    *,
    target: str = "",
    trace_id: str | None = None,
    prompt_dir: str | Path | None = None,
) -> Trace:
    """Build a trace step by step until an answer is stated or max_steps hits.

    Hitting the step cap yields a trace with an absent answer, not an error.
    """
    steps: list[str] = []
    answer: str | None = None
    for index in range(1, config.max_steps + 1):
        prompt = build_generation_prompt(task, question, steps, index, prompt_dir)
        step = generate_step(backend, prompt, index, config.temperature, n=1, stop=config.stop)[0]
        steps.append(step)
        answer = extract_answer(step)
        if answer is not None:
            break
    if trace_id is None:
        trace_id = f"{task.value}-{prompt_key(question)[:12]}"
    return Trace(
        id=trace_id,
        task=task,
        question=question,
        target=target,
        steps=tuple(steps),
        answer=answer,
    )
