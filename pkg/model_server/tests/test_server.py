import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from model_server import PROTOCOL_VERSION, create_app, dummy_model


def payload(array, dtype="u8"):
    array = np.asarray(array, dtype=np.uint8)
    h, w = array.shape[:2]
    channels = 1 if array.ndim == 2 else array.shape[2]
    return {
        "width": w,
        "height": h,
        "channels": channels,
        "dtype": dtype,
        "pixels": base64.b64encode(array.tobytes()).decode("ascii"),
    }


def decode_mask(doc, h, w):
    return np.frombuffer(base64.b64decode(doc["mask"]), dtype=np.uint8).reshape(h, w)


@pytest.fixture
def client():
    return TestClient(create_app(threshold=10, input_width=8, input_height=8,
                                 flops_per_call=777))


class TestInfo:
    def test_schema(self, client):
        doc = client.get("/info").json()
        assert doc["protocol_version"] == PROTOCOL_VERSION
        assert doc["name"] == "dummy"
        assert doc["deterministic"] is True
        assert doc["flops_per_call"] == 777
        assert (doc["input_width"], doc["input_height"]) == (8, 8)
        assert doc["max_concurrency"] == 4

    def test_unknown_route_404(self, client):
        assert client.get("/nope").status_code == 404


class TestSegment:
    def test_all_zero_image_empty_mask(self, client):
        resp = client.post("/segment", json=payload(np.zeros((8, 8))))
        assert resp.status_code == 200
        assert decode_mask(resp.json(), 8, 8).sum() == 0

    def test_all_255_image_full_mask(self, client):
        resp = client.post("/segment", json=payload(np.full((8, 8), 255)))
        assert resp.status_code == 200
        assert decode_mask(resp.json(), 8, 8).sum() == 64

    def test_threshold_is_inclusive(self, client):
        img = np.full((8, 8), 9)
        img[0, 0] = 10
        mask = decode_mask(client.post("/segment", json=payload(img)).json(), 8, 8)
        assert mask.sum() == 1 and mask[0, 0] == 1

    def test_base64_round_trip_score_map(self, client):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (8, 8)).astype(np.uint8)
        doc = client.post("/segment", json=payload(img)).json()
        score = np.frombuffer(base64.b64decode(doc["score_map"]),
                              dtype="<f4").reshape(8, 8)
        assert np.allclose(score, img / 255.0, atol=1e-6)

    def test_deterministic_responses(self, client):
        img = np.random.default_rng(1).integers(0, 256, (8, 8)).astype(np.uint8)
        r1 = client.post("/segment", json=payload(img)).json()
        r2 = client.post("/segment", json=payload(img)).json()
        assert r1 == r2

    def test_rgb_input_accepted(self, client):
        img = np.zeros((8, 8, 3), dtype=np.uint8)
        img[:4] = 200
        mask = decode_mask(client.post("/segment", json=payload(img)).json(), 8, 8)
        assert (mask[:4] == 1).all() and (mask[4:] == 0).all()


class TestMalformedRequests:
    def test_non_json_body_400(self, client):
        resp = client.post("/segment", content=b"not json",
                           headers={"Content-Type": "application/json"})
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_missing_field_400(self, client):
        body = payload(np.zeros((8, 8)))
        del body["pixels"]
        resp = client.post("/segment", json=body)
        assert resp.status_code == 400 and "pixels" in resp.json()["error"]

    def test_wrong_dtype_400(self, client):
        resp = client.post("/segment", json=payload(np.zeros((8, 8)), dtype="f32"))
        assert resp.status_code == 400

    def test_bad_base64_400(self, client):
        body = payload(np.zeros((8, 8)))
        body["pixels"] = "!!!"
        assert client.post("/segment", json=body).status_code == 400

    def test_length_mismatch_400(self, client):
        body = payload(np.zeros((8, 8)))
        body["pixels"] = base64.b64encode(b"\x00" * 10).decode()
        assert client.post("/segment", json=body).status_code == 400

    def test_wrong_size_400(self, client):
        assert client.post("/segment",
                           json=payload(np.zeros((9, 9)))).status_code == 400

    def test_bad_channels_400(self, client):
        body = payload(np.zeros((8, 8)))
        body["channels"] = 2
        assert client.post("/segment", json=body).status_code == 400


def test_real_model_slot():
    def inverted(image):
        return (image < 100).astype(np.uint8), None

    client = TestClient(create_app(model=inverted, name="inverted",
                                   input_width=4, input_height=4))
    assert client.get("/info").json()["name"] == "inverted"
    doc = client.post("/segment", json=payload(np.zeros((4, 4)))).json()
    assert decode_mask(doc, 4, 4).sum() == 16
    assert doc["score_map"] is None
