import json

import pytest

from mistakelab.errors import BackendError
from mistakelab.generation import (
    API_KEY_ENV,
    GenerationConfig,
    HttpBackend,
    MockBackend,
    backend_from_spec,
    build_generation_prompt,
    generate_step,
    generate_trace,
    load_prompt_template,
    prompt_key,
    strip_step_label,
    truncate_at_stop,
)
from mistakelab.model import TaskKind


QUESTION = "Sort the following words alphabetically: List: b a"


def scripted_backend(question=QUESTION, steps=None, default=None):
    """Mock whose script keys are the exact prompts the harness will build."""
    steps = steps or ["Look at first letters.", "The answer is a b"]
    records = []
    so_far = []
    for i, text in enumerate(steps, 1):
        prompt = build_generation_prompt(TaskKind.WORD_SORTING, question, so_far, i)
        records.append({"key": prompt, "completions": [text]})
        so_far.append(f"Thought {i}: {text}")
    return MockBackend(records, default=default)


class TestStripStepLabel:
    def test_strips(self):
        assert strip_step_label("Thought 12:  hello there. ") == "hello there."

    def test_unlabeled_passthrough(self):
        assert strip_step_label("hello") == "hello"


class TestMockBackend:
    def test_exact_prompt_lookup(self):
        backend = MockBackend([{"key": "p", "completions": ["x"]}])
        assert backend.complete("p", temperature=0.0) == ["x"]

    def test_hash_lookup(self):
        backend = MockBackend([{"key": prompt_key("p"), "completions": ["x"]}])
        assert backend.complete("p", temperature=0.0) == ["x"]

    def test_call_index_lookup(self):
        backend = MockBackend([{"key": "#0", "completions": ["first"]}, {"key": "#1", "completions": ["second"]}])
        assert backend.complete("anything", temperature=0.0) == ["first"]
        assert backend.complete("anything", temperature=0.0) == ["second"]

    def test_missing_key_raises(self):
        backend = MockBackend([])
        with pytest.raises(BackendError, match="no completion"):
            backend.complete("p", temperature=0.0)

    def test_default_fallback(self):
        backend = MockBackend([], default="fallback")
        assert backend.complete("p", temperature=0.0) == ["fallback"]

    def test_n_sampling_pads(self):
        backend = MockBackend([{"key": "p", "completions": ["a", "b"]}])
        assert backend.complete("p", temperature=1.0, n=4) == ["a", "b", "b", "b"]

    def test_n_sampling_truncates(self):
        backend = MockBackend([{"key": "p", "completions": ["a", "b", "c"]}])
        assert backend.complete("p", temperature=1.0, n=2) == ["a", "b"]

    def test_call_log_records_parameters(self):
        backend = MockBackend([], default="x")
        backend.complete("p", temperature=1.0, stop="\n", n=8)
        assert backend.call_count == 1
        assert backend.call_log == [("p", 1.0, "\n", 8)]

    def test_from_file(self, tmp_path):
        script = tmp_path / "script.jsonl"
        script.write_text(json.dumps({"key": "p", "completions": ["x"]}) + "\n")
        backend = MockBackend.from_file(script)
        assert backend.complete("p", temperature=0.0) == ["x"]

    def test_bad_record(self):
        with pytest.raises(BackendError):
            MockBackend([{"completions": ["x"]}])


class TestBackendFromSpec:
    def test_mock(self, tmp_path):
        script = tmp_path / "s.jsonl"
        script.write_text("")
        backend = backend_from_spec(f"mock:{script}")
        assert isinstance(backend, MockBackend)

    def test_http(self):
        backend = backend_from_spec("http:https://api.example.com/v1/chat")
        assert isinstance(backend, HttpBackend)
        assert backend.url == "https://api.example.com/v1/chat"

    def test_unknown(self):
        with pytest.raises(BackendError, match="unknown backend spec"):
            backend_from_spec("carrier-pigeon:coop")


class TestHttpBackend:
    def test_sends_auth_and_parses_choices(self, monkeypatch):
        seen = {}

        class FakeResponse:
            status_code = 200
            text = ""

            def json(self):
                return {"choices": [{"message": {"content": "done"}}]}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(url=url, payload=json, headers=headers)
            return FakeResponse()

        monkeypatch.setenv(API_KEY_ENV, "sekrit")
        monkeypatch.setattr("mistakelab.generation.requests.post", fake_post)
        backend = HttpBackend("https://x.test/v1")
        assert backend.complete("hi", temperature=0.5, stop="\n") == ["done"]
        assert seen["headers"]["Authorization"] == "Bearer sekrit"
        assert seen["payload"]["temperature"] == 0.5
        assert seen["payload"]["stop"] == ["\n"]

    def test_retries_then_fails(self, monkeypatch):
        calls = []

        class FakeResponse:
            status_code = 503
            text = "unavailable"

        monkeypatch.setattr(
            "mistakelab.generation.requests.post",
            lambda *a, **k: calls.append(1) or FakeResponse(),
        )
        monkeypatch.setattr("mistakelab.generation.time.sleep", lambda s: None)
        backend = HttpBackend("https://x.test/v1", max_retries=2)
        with pytest.raises(BackendError, match="after 2 retries"):
            backend.complete("hi", temperature=0.0)
        assert len(calls) == 3

    def test_client_error_no_retry(self, monkeypatch):
        class FakeResponse:
            status_code = 401
            text = "nope"

        monkeypatch.setattr("mistakelab.generation.requests.post", lambda *a, **k: FakeResponse())
        backend = HttpBackend("https://x.test/v1")
        with pytest.raises(BackendError, match="401"):
            backend.complete("hi", temperature=0.0)


class TestPromptAssembly:
    def test_template_loads_for_every_task(self):
        for task in TaskKind:
            template = load_prompt_template(task)
            assert "{question}" in template

    def test_prompt_ends_with_next_label(self):
        prompt = build_generation_prompt(TaskKind.WORD_SORTING, QUESTION, [], 1)
        assert prompt.endswith("Thought 1:")
        assert QUESTION in prompt

    def test_prior_steps_included_in_order(self):
        steps = ["Thought 1: alpha.", "Thought 2: beta."]
        prompt = build_generation_prompt(TaskKind.WORD_SORTING, QUESTION, steps, 3)
        assert prompt.endswith("Thought 1: alpha.\nThought 2: beta.\nThought 3:")

    def test_dyck_braces_survive(self):
        question = "Complete the sequence. Input: { ["
        prompt = build_generation_prompt(TaskKind.DYCK_LANGUAGES, question, [], 1)
        assert "Input: { [" in prompt

    def test_prompt_dir_override(self, tmp_path):
        (tmp_path / "word_sorting.txt").write_text("Custom. Q: {question}\n")
        prompt = build_generation_prompt(TaskKind.WORD_SORTING, QUESTION, [], 1, prompt_dir=tmp_path)
        assert prompt == f"Custom. Q: {QUESTION}\nThought 1:"

    def test_truncate_at_stop(self):
        assert truncate_at_stop(" first line \nsecond") == "first line"


class TestGenerateStep:
    def test_labels_completions(self):
        backend = MockBackend([], default="the step text\nextra")
        steps = generate_step(backend, "prompt", 2, temperature=1.0, n=3)
        assert steps == ["Thought 2: the step text"] * 3

    def test_bad_index(self):
        with pytest.raises(ValueError):
            generate_step(MockBackend([], default="x"), "p", 0, temperature=0.0)


class TestGenerateTrace:
    def test_stops_at_answer(self):
        backend = scripted_backend()
        trace = generate_trace(backend, TaskKind.WORD_SORTING, QUESTION, target="a b")
        assert trace.steps == (
            "Thought 1: Look at first letters.",
            "Thought 2: The answer is a b",
        )
        assert trace.answer == "a b"
        assert backend.call_count == 2
        assert trace.correctness().correct_ans

    def test_greedy_zero_temperature_requested(self):
        backend = scripted_backend()
        generate_trace(backend, TaskKind.WORD_SORTING, QUESTION)
        assert all(t == 0.0 for _, t, _, _ in backend.call_log)

    def test_step_cap_yields_no_answer(self):
        backend = MockBackend([], default="still thinking.")
        config = GenerationConfig(max_steps=5)
        trace = generate_trace(backend, TaskKind.WORD_SORTING, QUESTION, config)
        assert len(trace.steps) == 5
        assert trace.answer is None
        assert backend.call_count == 5

    def test_default_id_is_stable(self):
        a = generate_trace(scripted_backend(), TaskKind.WORD_SORTING, QUESTION)
        b = generate_trace(scripted_backend(), TaskKind.WORD_SORTING, QUESTION)
        assert a.id == b.id and a.id.startswith("word_sorting-")

    def test_trace_validates(self):
        trace = generate_trace(scripted_backend(), TaskKind.WORD_SORTING, QUESTION, target="a b")
        trace.validate()
