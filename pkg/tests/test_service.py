import base64
import io
import time

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from kpgan.model import KeypointGanModel
from kpgan.service import create_app, keypoints_px

from conftest import tiny_model_config


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return KeypointGanModel(tiny_model_config(final_resolution=16)).eval()


@pytest.fixture
def client(model):
    app = create_app(model, ckpt_id="test", access_log=None)
    return TestClient(app)


def test_sample_is_deterministic_per_seed(client):
    a = client.post("/v1/sample", json={"seed": 5}).json()
    b = client.post("/v1/sample", json={"seed": 5}).json()
    assert a["scene_state"] == b["scene_state"]
    assert a["image_png_b64"] == b["image_png_b64"]
    assert a["session_id"] != b["session_id"]
    c = client.post("/v1/sample", json={"seed": 6}).json()
    assert c["scene_state"] != a["scene_state"]


def test_keypoints_px_mapping(client, model):
    doc = client.post("/v1/sample", json={"seed": 1}).json()
    resolution = model.config.final_resolution
    coords = doc["scene_state"]["coords"]
    for (x, y), (px, py) in zip(coords, doc["keypoints_px"]):
        assert px == pytest.approx((x + 1) / 2 * resolution, abs=1e-9)
        assert py == pytest.approx((y + 1) / 2 * resolution, abs=1e-9)


def test_missing_model_gives_503():
    app = create_app(None, access_log=None)
    client = TestClient(app)
    assert client.post("/v1/sample", json={}).status_code == 503


def test_empty_ops_returns_identical_image(client):
    doc = client.post("/v1/sample", json={"seed": 2}).json()
    sid = doc["session_id"]
    edited = client.post(f"/v1/session/{sid}/edit", json={"ops": []}).json()
    assert edited["image_png_b64"] == doc["image_png_b64"]
    assert edited["scene_state"] == doc["scene_state"]


def test_move_and_inverse_round_trip(client):
    doc = client.post("/v1/sample", json={"seed": 3}).json()
    sid = doc["session_id"]
    ops = [
        {"kind": "move", "indices": [0], "delta": [0.07, -0.03]},
        {"kind": "move", "indices": [0], "delta": [-0.07, 0.03]},
    ]
    out = client.post(f"/v1/session/{sid}/edit", json={"ops": ops}).json()
    before = np.array(doc["scene_state"]["coords"])
    after = np.array(out["scene_state"]["coords"])
    assert np.abs(before - after).max() < 1e-12


def test_invalid_op_is_atomic_422(client):
    doc = client.post("/v1/sample", json={"seed": 4}).json()
    sid = doc["session_id"]
    ops = [
        {"kind": "move", "indices": [0], "delta": [0.5, 0.0]},  # valid
        {"kind": "move", "indices": [99], "delta": [0.0, 0.0]},  # invalid
    ]
    resp = client.post(f"/v1/session/{sid}/edit", json={"ops": ops})
    assert resp.status_code == 422
    current = client.get(f"/v1/session/{sid}").json()
    assert current["scene_state"] == doc["scene_state"]


def test_unknown_session_404(client):
    assert client.get("/v1/session/nope").status_code == 404
    assert client.post("/v1/session/nope/edit", json={"ops": []}).status_code == 404
    assert client.delete("/v1/session/nope").status_code == 404


def test_background_swap_keeps_coords_bitwise(client):
    a = client.post("/v1/sample", json={"seed": 7}).json()
    b = client.post("/v1/sample", json={"seed": 8}).json()
    out = client.post(
        f"/v1/session/{a['session_id']}/swap",
        json={"source_session": b["session_id"], "background": True},
    ).json()
    assert out["scene_state"]["coords"] == a["scene_state"]["coords"]
    assert out["scene_state"]["w_bg"] == b["scene_state"]["w_bg"]
    assert out["scene_state"]["w_per_kp"] == a["scene_state"]["w_per_kp"]


def test_swap_noop_when_nothing_selected(client):
    a = client.post("/v1/sample", json={"seed": 9}).json()
    b = client.post("/v1/sample", json={"seed": 10}).json()
    out = client.post(
        f"/v1/session/{a['session_id']}/swap",
        json={"source_session": b["session_id"], "indices": [], "background": False},
    ).json()
    assert out["scene_state"] == a["scene_state"]


def test_full_swap_round_trip_restores_embeddings(client, model):
    a = client.post("/v1/sample", json={"seed": 11}).json()
    b = client.post("/v1/sample", json={"seed": 12}).json()
    k = model.config.num_keypoints
    indices = list(range(k))
    swapped = client.post(
        f"/v1/session/{a['session_id']}/swap",
        json={"source_session": b["session_id"], "indices": indices},
    ).json()
    assert swapped["scene_state"]["w_per_kp"] == b["scene_state"]["w_per_kp"]
    # swapping back from a fresh session holding the original values
    restore = client.post(
        f"/v1/session/{a['session_id']}/edit",
        json={
            "ops": [
                {
                    "kind": "swap_embeddings",
                    "indices": indices,
                    "embeddings": a["scene_state"]["w_per_kp"],
                }
            ]
        },
    ).json()
    assert restore["scene_state"]["w_per_kp"] == a["scene_state"]["w_per_kp"]


def test_delete_then_get_404(client):
    doc = client.post("/v1/sample", json={"seed": 13}).json()
    sid = doc["session_id"]
    assert client.delete(f"/v1/session/{sid}").status_code == 204
    assert client.get(f"/v1/session/{sid}").status_code == 404


def test_raw_png_endpoint(client):
    doc = client.post("/v1/sample", json={"seed": 14}).json()
    resp = client.get(f"/v1/session/{doc['session_id']}/image.png")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content.startswith(b"\x89PNG")
    assert resp.content == base64.b64decode(doc["image_png_b64"])


def test_rendering_is_stateless_across_sessions(client):
    a = client.post("/v1/sample", json={"seed": 15}).json()
    b = client.post("/v1/sample", json={"seed": 15}).json()
    assert a["session_id"] != b["session_id"]
    assert a["image_png_b64"] == b["image_png_b64"]


def test_sessions_survive_restart_with_persistence(model, tmp_path):
    app = create_app(model, persist_dir=tmp_path / "sessions", access_log=None)
    with TestClient(app) as client:
        doc = client.post("/v1/sample", json={"seed": 16}).json()
        sid = doc["session_id"]
    app2 = create_app(model, persist_dir=tmp_path / "sessions", access_log=None)
    with TestClient(app2) as client2:
        restored = client2.get(f"/v1/session/{sid}").json()
        assert restored["scene_state"] == doc["scene_state"]


def test_ttl_expiry(model):
    # a fake clock makes the idle timeout deterministic
    now = {"t": 1000.0}
    app = create_app(model, ttl_seconds=60.0, access_log=None, clock=lambda: now["t"])
    client = TestClient(app)
    doc = client.post("/v1/sample", json={"seed": 17}).json()
    sid = doc["session_id"]
    now["t"] += 30.0
    assert client.get(f"/v1/session/{sid}").status_code == 200  # refreshes last_used
    now["t"] += 61.0
    assert client.get(f"/v1/session/{sid}").status_code == 404


def test_no_ttl_means_no_expiry(model):
    now = {"t": 1000.0}
    app = create_app(model, ttl_seconds=None, access_log=None, clock=lambda: now["t"])
    client = TestClient(app)
    doc = client.post("/v1/sample", json={"seed": 19}).json()
    now["t"] += 1e9
    client.post("/v1/sample", json={"seed": 20})
    assert client.get(f"/v1/session/{doc['session_id']}").status_code == 200


def test_access_log_lines_are_json(model):
    stream = io.StringIO()
    app = create_app(model, access_log=stream)
    client = TestClient(app)
    client.post("/v1/sample", json={"seed": 21})
    import json

    lines = [l for l in stream.getvalue().splitlines() if l.strip()]
    assert lines
    entry = json.loads(lines[-1])
    assert entry["method"] == "POST"
    assert entry["path"] == "/v1/sample"
    assert entry["status"] == 200


def test_static_frontend_mount(model, tmp_path):
    (tmp_path / "index.html").write_text("<html><body>editor</body></html>")
    app = create_app(model, access_log=None, static_dir=tmp_path)
    client = TestClient(app)
    page = client.get("/")
    assert page.status_code == 200
    assert b"editor" in page.content
    # API routes still win over the static mount
    assert client.post("/v1/sample", json={"seed": 1}).status_code == 200


def test_add_and_remove_part_via_service(client):
    doc = client.post("/v1/sample", json={"seed": 22}).json()
    sid = doc["session_id"]
    added = client.post(
        f"/v1/session/{sid}/edit",
        json={"ops": [{"kind": "add_part", "coord": [0.5, 0.5], "source_index": 0}]},
    ).json()
    assert added["scene_state"]["k"] == doc["scene_state"]["k"] + 1
    removed = client.post(
        f"/v1/session/{sid}/edit",
        json={"ops": [{"kind": "remove_part", "index": doc["scene_state"]["k"]}]},
    ).json()
    assert removed["scene_state"]["active"][-1] is False
