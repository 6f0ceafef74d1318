"""HTTP service tests: annotation round trips and map queries.

Runs against real project directories prepared by the CLI fixture;
label submissions retrain in a background thread, so the flow tests
poll the status endpoint until the model settles.
"""

import json
import time

import pytest
from conftest import run_cli
from fastapi.testclient import TestClient

from landsift import server
from landsift.active_learning import ALConfig
from landsift.classifier import TrainConfig
from landsift.fileio import atomic_write_json, read_json
from landsift.project import Project
from landsift.server import build_app

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")


def _write_al_config(root):
    cfg = ALConfig(
        label_space="restrictions",
        batch_size=5,
        subsample_size=64,
        rng_seed=3,
        train=TrainConfig(max_epochs=10, lr_scale=3e5),
    )
    (root / "al-config.json").write_text(json.dumps(cfg.to_json()), encoding="utf-8")


@pytest.fixture()
def served(project_copy):
    assert run_cli("graph", "build", "--project", project_copy) == 0
    _write_al_config(project_copy)
    project = Project(project_copy)
    client = TestClient(build_app(project))
    return client, project


def _wait_idle(client, space, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/api/al/{space}/status")
        assert status.status_code == 200
        body = status.json()
        if not body["training"]:
            return body
        time.sleep(0.05)
    raise AssertionError("training never finished")


def _submit_all(client, space, batch_body, names=()):
    assignments = {item["sentence_id"]: list(names) for item in batch_body["batch"]}
    return client.post(f"/api/al/{space}/labels", json={"assignments": assignments})


# ---------------------------------------------------------------------------
# Annotation loop


def test_version_headers_before_any_session(served):
    client, _ = served
    resp = client.get("/api/areas")
    assert resp.status_code == 200
    assert resp.headers["X-Model-Version"] == "restrictions=0,topics=0"
    assert resp.headers["X-Graph-Version"] != "0"


def test_batch_shape_and_idempotence(served):
    client, _ = served
    resp = client.get("/api/al/restrictions/batch")
    assert resp.status_code == 200
    body = resp.json()
    assert body["label_space"] == "restrictions"
    assert body["labels"] == ["Prohibition", "Requirement"]
    assert body["iteration"] == 0
    assert len(body["batch"]) == 5
    for item in body["batch"]:
        assert item["text"]
        assert len(item["probabilities"]) == 2
        assert 0.0 <= item["score"] <= 1.0
    again = client.get("/api/al/restrictions/batch").json()
    assert [i["sentence_id"] for i in again["batch"]] == [
        i["sentence_id"] for i in body["batch"]
    ]


def test_submit_flow_commits_and_retrains(served):
    client, project = served
    status = client.get("/api/al/restrictions/status").json()
    assert status["labeled"] == 500
    assert status["unlabeled"] == 1000
    version_before = status["model_version"]

    body = client.get("/api/al/restrictions/batch").json()
    assert client.get("/api/al/restrictions/status").json()["pending_batch"] is True
    resp = _submit_all(client, "restrictions", body, names=("Prohibition",))
    assert resp.status_code == 200
    out = resp.json()
    assert out["iteration"] == 1
    assert out["job_id"] == "restrictions-1"
    assert out["labeled"] == 505

    status = _wait_idle(client, "restrictions")
    assert status["model_version"] == version_before + 1
    assert status["iteration"] == 1
    assert status["pending_batch"] is False

    saved = read_json(project.al_state_file("restrictions"))
    record = saved["history"][-1]
    assert record["iteration"] == 0
    assert record["model_version"] == version_before + 1
    assert record["labeled_size"] == 505
    labeled_ids = set(record["labels"])
    for sid in labeled_ids:
        assert saved["labeled"][sid] == [1, 0]

    nxt = client.get("/api/al/restrictions/batch").json()
    assert nxt["iteration"] == 1
    assert not labeled_ids & {i["sentence_id"] for i in nxt["batch"]}


def test_submit_rejects_unknown_label_name(served):
    client, _ = served
    body = client.get("/api/al/restrictions/batch").json()
    assignments = {i["sentence_id"]: ["Weather"] for i in body["batch"]}
    resp = client.post("/api/al/restrictions/labels", json={"assignments": assignments})
    assert resp.status_code == 400
    assert "unknown labels" in resp.json()["detail"]


def test_submit_requires_matching_ids(served):
    client, _ = served
    body = client.get("/api/al/restrictions/batch").json()
    assignments = {i["sentence_id"]: [] for i in body["batch"][:-1]}
    resp = client.post("/api/al/restrictions/labels", json={"assignments": assignments})
    assert resp.status_code == 409
    assert "cover the batch exactly" in resp.json()["detail"]


def test_submit_without_fetched_batch_conflicts(served):
    client, _ = served
    resp = client.post("/api/al/topics/labels", json={"assignments": {}})
    assert resp.status_code == 409
    assert "no pending batch" in resp.json()["detail"]


def test_unknown_space_is_404(served):
    client, _ = served
    assert client.get("/api/al/nope/batch").status_code == 404


def test_no_baseline_model_is_404(tmp_path):
    root = tmp_path / "bare"
    assert run_cli("synth", "--sentences", 200, "--seed", 1, "--project", root) == 0
    client = TestClient(build_app(Project(root)))
    resp = client.get("/api/al/restrictions/batch")
    assert resp.status_code == 404


def test_conflicts_while_training(served, monkeypatch):
    client, _ = served
    # pin the session in the training state instead of racing a thread
    monkeypatch.setattr(
        server.Session, "start_retrain", lambda self: setattr(self, "training", True)
    )
    body = client.get("/api/al/restrictions/batch").json()
    assert _submit_all(client, "restrictions", body).status_code == 200

    resp = client.get("/api/al/restrictions/batch")
    assert resp.status_code == 503
    assert resp.headers["retry-after"] == "1"
    resp = client.post("/api/al/restrictions/labels", json={"assignments": {}})
    assert resp.status_code == 409
    assert client.get("/api/al/restrictions/status").json()["training"] is True


def test_dirty_checkpoint_resumes_training_on_startup(served):
    client, project = served
    body = client.get("/api/al/restrictions/batch").json()
    assert _submit_all(client, "restrictions", body).status_code == 200
    status = _wait_idle(client, "restrictions")
    settled_version = status["model_version"]

    # rewrite the checkpoint as if the process died before retraining
    state_path = project.al_state_file("restrictions")
    obj = read_json(state_path)
    obj["history"][-1]["model_version"] = None
    obj["history"][-1]["monitor_loss"] = None
    atomic_write_json(obj, state_path)

    fresh = TestClient(build_app(Project(project.root)))
    status = _wait_idle(fresh, "restrictions")
    assert status["model_version"] == settled_version + 1
    saved = read_json(state_path)
    assert saved["history"][-1]["model_version"] == settled_version + 1


# ---------------------------------------------------------------------------
# Geographic queries


def test_areas_listing(served):
    client, _ = served
    body = client.get("/api/areas").json()
    assert len(body["areas"]) == 9
    first = body["areas"][0]
    assert set(first) == {"area_id", "category", "properties", "n_documents"}
    assert first["n_documents"] > 0


def test_area_report(served):
    client, _ = served
    resp = client.get("/api/areas/A-00/report")
    assert resp.status_code == 200
    body = resp.json()
    assert body["area_id"] == "A-00"
    assert set(body["restrictions"]) == {"Prohibition", "Requirement"}
    assert body["documents"]
    for topic, areas in body["similar_areas"].items():
        assert "A-00" not in areas
    assert "weather_bands" not in body

    wet = client.get("/api/areas/A-00/report", params={"weather": 1}).json()
    bands = wet["weather_bands"]
    assert bands == sorted(bands, reverse=True)

    assert client.get("/api/areas/nope/report").status_code == 404


def test_topic_areas(served):
    client, _ = served
    body = client.get("/api/topics/Weather/areas").json()
    assert body["topic"] == "Weather"
    assert body["areas"] == sorted(body["areas"])
    assert client.get("/api/topics/NotATopic/areas").status_code == 404


def test_document_endpoint(served):
    client, project = served
    doc_id = sorted(project.metas())[0]
    body = client.get(f"/api/docs/{doc_id}").json()
    assert body["doc_id"] == doc_id
    assert body["title"]
    assert body["text"]
    assert client.get("/api/docs/no-such-doc").status_code == 404


def test_geo_features(served):
    client, _ = served
    body = client.get("/api/geo/features.geojson").json()
    assert body["type"] == "FeatureCollection"
    assert len(body["features"]) == 9


def test_geo_weather(served):
    client, _ = served
    body = client.get("/api/geo/weather.geojson").json()
    assert body["type"] == "FeatureCollection"
    assert len(body["features"]) == 3


def test_graph_missing_is_404(project_copy):
    client = TestClient(build_app(Project(project_copy)))
    resp = client.get("/api/areas")
    assert resp.status_code == 404
    assert "graph build" in resp.json()["detail"]
    assert resp.headers["X-Graph-Version"] == "0"
