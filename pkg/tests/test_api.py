import pytest
from fastapi.testclient import TestClient

from app.core.config import settings
from app.main import app

from tests.conftest import E1_TEXT, S1_TEXT, T1_TEXT

client = TestClient(app)


def test_root():
    response = client.get("/")
    assert response.status_code == 200
    assert "running" in response.json()["status"]


def test_solve_trp_tree_with_oracle():
    response = client.post("/api/v1/solve_trp", json={"instance": T1_TEXT, "oracle": True})
    assert response.status_code == 200
    body = response.json()
    assert body["kind"] == "tree"
    assert body["n"] == 2
    assert body["K"] == 6
    assert body["oracle"] == "5"
    assert body["ratio"] >= 1
    assert body["windows"]
    assert body["solution"].startswith("objective ")
    assert body["solution"].count("visit ") == 2


def test_solve_trp_euclid_small_K():
    response = client.post("/api/v1/solve_trp", json={"instance": E1_TEXT, "eps": "1", "K": 2, "retries": 4})
    assert response.status_code == 200
    assert response.json()["K"] == 2


def test_solve_sched():
    response = client.post("/api/v1/solve_sched", json={"instance": S1_TEXT, "oracle": True})
    assert response.status_code == 200
    body = response.json()
    assert body["kind"] == "sched"
    assert body["oracle"] == "8"
    assert body["diagnostics"]


def test_oracle():
    response = client.post("/api/v1/oracle", json={"instance": E1_TEXT})
    assert response.status_code == 200
    assert response.json()["optimum"] == "11"


@pytest.mark.parametrize("path, body", [
    ("/api/v1/solve_trp", {"instance": "trp tree\nn two\n"}),
    ("/api/v1/solve_trp", {"instance": T1_TEXT, "eps": "0"}),
    ("/api/v1/solve_trp", {"instance": T1_TEXT, "K": 1}),
    ("/api/v1/solve_sched", {"instance": T1_TEXT}),
    ("/api/v1/oracle", {}),
])
def test_bad_requests(path, body):
    assert client.post(path, json=body).status_code == 400


def test_oracle_budget(monkeypatch):
    monkeypatch.setattr(settings, "ORACLE_TRP_MAX_N", 1)
    response = client.post("/api/v1/oracle", json={"instance": T1_TEXT})
    assert response.status_code == 413
    assert "ORACLE_TRP_MAX_N" in response.json()["detail"]


def test_generate_round_trips_through_oracle():
    response = client.post("/api/v1/generate/line-hard", json={"k": 2})
    assert response.status_code == 200
    instance = response.json()["instance"]
    assert instance.startswith("trp tree\n")
    oracle = client.post("/api/v1/oracle", json={"instance": instance})
    assert oracle.json()["optimum"] == "12"


def test_generate_rejects_unknown_kind_and_bad_params():
    assert client.post("/api/v1/generate/random-cube", json={}).status_code == 400
    assert client.post("/api/v1/generate/random-tree", json={"n": 0}).status_code == 400
    assert client.post("/api/v1/generate/random-tree", json={"n": 3}).status_code == 200
