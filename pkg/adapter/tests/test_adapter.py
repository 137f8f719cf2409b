"""Black-box protocol tests for the adapter through its HTTP surface."""

from __future__ import annotations

import math

import pytest
from fastapi.testclient import TestClient

from recross_adapter import AdapterService, create_app


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    service = AdapterService(registry_dir=tmp_path_factory.mktemp("registry"), seed=0)
    app = create_app(service)
    with TestClient(app, raise_server_exceptions=False) as test_client:
        yield test_client


def post(client, endpoint, payload, version=1):
    return client.post(endpoint, json={"protocol_version": version, **payload})


def example(i: int, output: str | None = None) -> dict:
    return {
        "id": f"ex-{i:03d}",
        "task": "fixture",
        "input": f"question number {i}",
        "output": output if output is not None else f"answer {i}",
    }


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["protocol_version"] == 1
    assert body["dim"] >= 1


class TestEncode:
    def test_shapes_and_dim(self, client):
        body = post(client, "/encode", {"texts": ["alpha beta", "gamma"]}).json()
        vectors = body["vectors"]
        assert len(vectors) == 2
        assert len(vectors[0]) == len(vectors[1]) >= 1
        assert all(math.isfinite(v) for row in vectors for v in row)

    def test_identical_inputs_identical_vectors(self, client):
        body = post(client, "/encode", {"texts": ["same text", "same text"]}).json()
        assert body["vectors"][0] == body["vectors"][1]

    def test_repeatable_in_process(self, client):
        first = post(client, "/encode", {"texts": ["stability probe"]}).json()
        second = post(client, "/encode", {"texts": ["stability probe"]}).json()
        assert first == second

    def test_empty_rejected(self, client):
        response = post(client, "/encode", {"texts": []})
        assert response.status_code == 400
        assert response.json()["error"]["kind"] == "precondition"


class TestScorePairs:
    def test_range_and_count(self, client):
        response = post(client, "/score_pairs", {
            "model_id": "base",
            "pairs": [["a question", "a candidate"], ["other", "thing"]],
        })
        scores = response.json()["scores"]
        assert len(scores) == 2
        assert all(0.0 <= s <= 1.0 for s in scores)

    def test_unknown_model(self, client):
        response = post(client, "/score_pairs", {"model_id": "ghost", "pairs": [["a", "b"]]})
        assert response.status_code == 404
        assert response.json()["error"]["kind"] == "not_found"


class TestFinetuneLossGenerate:
    def test_finetune_reduces_training_loss_at_stated_spec(self, client):
        train = [example(i) for i in range(16)]
        before = post(client, "/loss", {"model_id": "base", "examples": train}).json()["loss"]
        body = post(client, "/finetune", {
            "parent_id": "base",
            "examples": train,
            "spec": {"learning_rate": 1e-6, "batch_size": 4, "epochs": 2},
        }).json()
        handle = body["model_id"]
        assert handle != "base"
        after = post(client, "/loss", {"model_id": handle, "examples": train}).json()["loss"]
        assert after >= 0.0
        assert after < before

        # Parent unchanged and still answering.
        parent_again = post(client, "/loss", {"model_id": "base", "examples": train}).json()["loss"]
        assert parent_again == before

    def test_finetune_idempotent(self, client):
        train = [example(i) for i in range(4)]
        payload = {
            "parent_id": "base",
            "examples": train,
            "spec": {"learning_rate": 1e-5, "batch_size": 2, "epochs": 1},
        }
        first = post(client, "/finetune", payload).json()["model_id"]
        second = post(client, "/finetune", payload).json()["model_id"]
        assert first == second

    def test_loss_repeatable(self, client):
        held = [example(i) for i in range(3)]
        one = post(client, "/loss", {"model_id": "base", "examples": held}).json()["loss"]
        two = post(client, "/loss", {"model_id": "base", "examples": held}).json()["loss"]
        assert one == two

    def test_empty_train_rejected(self, client):
        response = post(client, "/finetune", {"parent_id": "base", "examples": [], "spec": {}})
        assert response.json()["error"]["kind"] == "precondition"

    def test_unlabeled_train_rejected(self, client):
        response = post(client, "/finetune", {
            "parent_id": "base", "examples": [example(0, output="")], "spec": {},
        })
        assert response.json()["error"]["kind"] == "precondition"

    def test_unknown_parent(self, client):
        response = post(client, "/finetune", {
            "parent_id": "ghost", "examples": [example(0)], "spec": {},
        })
        assert response.json()["error"]["kind"] == "not_found"

    def test_generate_shapes(self, client):
        body = post(client, "/generate", {"model_id": "base", "inputs": ["a", "b", "c"]}).json()
        outputs = body["outputs"]
        assert len(outputs) == 3
        assert all(isinstance(o, str) for o in outputs)

    def test_generate_deterministic(self, client):
        payload = {"model_id": "base", "inputs": ["greedy decoding probe"]}
        assert post(client, "/generate", payload).json() == post(client, "/generate", payload).json()


class TestTrainPairClassifier:
    def test_training_separates_labels(self, client):
        pairs = [["common tokens here", "common tokens here", 1],
                 ["common tokens here", "unrelated text", 0]] * 4
        handle = post(client, "/train_pair_classifier", {"pairs": pairs}).json()["model_id"]
        assert handle.startswith("clf-")
        scores = post(client, "/score_pairs", {
            "model_id": handle,
            "pairs": [["common tokens here", "common tokens here"],
                      ["common tokens here", "unrelated text"]],
        }).json()["scores"]
        assert all(0.0 <= s <= 1.0 for s in scores)

    def test_single_class_rejected(self, client):
        response = post(client, "/train_pair_classifier", {"pairs": [["a", "b", 1]]})
        assert response.json()["error"]["kind"] == "precondition"


class TestProtocolGuards:
    def test_wrong_version(self, client):
        response = post(client, "/encode", {"texts": ["x"]}, version=2)
        assert response.status_code == 422
        assert response.json()["error"]["kind"] == "protocol_violation"

    def test_checkpoints_reload_from_disk(self, tmp_path):
        service = AdapterService(registry_dir=tmp_path, seed=0)
        app = create_app(service)
        with TestClient(app) as client:
            train = [example(i) for i in range(4)]
            handle = post(client, "/finetune", {
                "parent_id": "base", "examples": train,
                "spec": {"learning_rate": 1e-5, "batch_size": 2, "epochs": 1},
            }).json()["model_id"]
            loss = post(client, "/loss", {"model_id": handle, "examples": train}).json()["loss"]

        # New service over the same registry resolves the handle from disk.
        service2 = AdapterService(registry_dir=tmp_path, seed=0)
        app2 = create_app(service2)
        with TestClient(app2) as client2:
            again = post(client2, "/loss", {"model_id": handle, "examples": train}).json()["loss"]
        assert again == pytest.approx(loss, abs=1e-9)
