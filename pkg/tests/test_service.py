import pytest
from fastapi.testclient import TestClient

from mistakelab.annotation import AnnotationStore
from mistakelab.service import create_app

from conftest import word_sorting_trace


@pytest.fixture
def store():
    return AnnotationStore(
        [word_sorting_trace(f"t{i}", ["b", "a"], "a b") for i in range(3)]
    )


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def submit(client, trace_id, annotator, verdicts):
    return client.post(
        "/api/annotations",
        json={"trace_id": trace_id, "annotator_id": annotator, "verdicts": verdicts},
    )


class TestNext:
    def test_serves_trace_with_note(self, client):
        response = client.get("/api/next", params={"annotator": "alice"})
        assert response.status_code == 200
        trace = response.json()["trace"]
        assert trace["id"] == "t0"
        assert trace["steps"] and trace["question"]
        assert "correct target answer" in trace["note"]

    def test_advances_past_own_annotations(self, client):
        submit(client, "t0", "alice", ["correct", "correct"])
        response = client.get("/api/next", params={"annotator": "alice"})
        assert response.json()["trace"]["id"] == "t1"

    def test_exhausted_returns_null(self, client):
        for tid in ("t0", "t1", "t2"):
            submit(client, tid, "alice", ["correct", "correct"])
        assert client.get("/api/next", params={"annotator": "alice"}).json() == {"trace": None}


class TestGetTrace:
    def test_found(self, client):
        response = client.get("/api/trace/t1")
        assert response.status_code == 200
        assert response.json()["trace"]["id"] == "t1"

    def test_missing(self, client):
        assert client.get("/api/trace/ghost").status_code == 404


class TestSubmit:
    def test_created(self, client):
        response = submit(client, "t0", "alice", ["correct", "incorrect"])
        assert response.status_code == 201
        stored = response.json()["stored"]
        assert stored["verdicts"] == ["correct", "incorrect"]
        assert stored["submitted_at"]

    def test_duplicate_conflict(self, client):
        submit(client, "t0", "alice", ["correct", "correct"])
        response = submit(client, "t0", "alice", ["incorrect", "skipped"])
        assert response.status_code == 409

    def test_identical_resubmission_accepted(self, client):
        submit(client, "t0", "alice", ["correct", "correct"])
        assert submit(client, "t0", "alice", ["correct", "correct"]).status_code == 201

    def test_protocol_violation_unprocessable(self, client):
        response = submit(client, "t0", "alice", ["incorrect", "correct"])
        assert response.status_code == 422
        assert "skipped" in response.json()["detail"]

    def test_unknown_trace_unprocessable(self, client):
        assert submit(client, "ghost", "alice", ["correct"]).status_code == 422

    def test_wrong_verdict_count_unprocessable(self, client):
        assert submit(client, "t0", "alice", ["correct"]).status_code == 422


class TestAggregate:
    def test_pending_then_done(self, client):
        submit(client, "t0", "a1", ["correct", "incorrect"])
        submit(client, "t0", "a2", ["correct", "incorrect"])
        body = client.get("/api/aggregate/t0").json()
        assert body["status"] == "pending" and body["n_records"] == 2
        submit(client, "t0", "a3", ["correct", "incorrect"])
        body = client.get("/api/aggregate/t0").json()
        assert body == {
            "status": "done",
            "mistake_index": 2,
            "has_label": True,
            "n_records": 3,
            "needs_more": False,
        }

    def test_done_no_mistake(self, client):
        for a in ("a1", "a2", "a3"):
            submit(client, "t0", a, ["correct", "correct"])
        body = client.get("/api/aggregate/t0").json()
        assert body["status"] == "done"
        assert body["mistake_index"] is None and body["has_label"] is True

    def test_missing_trace(self, client):
        assert client.get("/api/aggregate/ghost").status_code == 404


class TestAlpha:
    def test_value(self, client):
        submit(client, "t0", "a1", ["correct", "incorrect"])
        submit(client, "t0", "a2", ["correct", "incorrect"])
        response = client.get("/api/alpha")
        assert response.status_code == 200
        assert response.json()["alpha"] == pytest.approx(1.0)

    def test_no_data_conflict(self, client):
        assert client.get("/api/alpha").status_code == 409

    def test_zero_variance_conflict(self, client):
        submit(client, "t0", "a1", ["correct", "correct"])
        submit(client, "t0", "a2", ["correct", "correct"])
        assert client.get("/api/alpha").status_code == 409


class TestStaticUi:
    def test_ui_dir_served(self, store, tmp_path):
        (tmp_path / "index.html").write_text("<html><body>annotate</body></html>")
        client = TestClient(create_app(store, ui_dir=tmp_path))
        response = client.get("/")
        assert response.status_code == 200
        assert "annotate" in response.text

    def test_missing_ui_dir_ignored(self, store, tmp_path):
        client = TestClient(create_app(store, ui_dir=tmp_path / "nope"))
        assert client.get("/api/trace/t0").status_code == 200
