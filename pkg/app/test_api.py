import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.core.config import settings
from app.main import app
from app.prf_agent.envs import GridNav, TraceDraw
from app.utils.image_io import decode_image_bytes, encode_pgm

client = TestClient(app)


def upload(name, image):
    return (name, (f"{name}.pgm", encode_pgm(image), "image/x-portable-graymap"))


def edge_image():
    image = np.zeros((16, 16))
    image[:, 8:] = 1.0
    return image


def test_root_and_health():
    assert client.get("/").json()["message"] == "Perceptual Reward API"
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy"}


def test_score_goal_against_itself():
    goal = GridNav().goal_images("direct")[0]
    response = client.post("/api/rewards/score", files=[upload("frame", goal), upload("goal", goal)])
    assert response.status_code == 200
    body = response.json()
    assert body["distance"] == 0.0 and body["reward"] == 1.0
    assert body["variant"] == "direct"
    # the lit floor spans tiles 1-5: a 60 px crop
    assert body["cell_size"] == 6


def test_score_prefers_frame_near_goal():
    env = GridNav()
    goal = env.goal_images("direct")[0]

    def reward(position):
        files = [upload("frame", env.draw_at(position)), upload("goal", goal)]
        return client.post("/api/rewards/score", files=files).json()["reward"]

    assert reward((1, 1)) < reward((5, 5))


def test_score_window_variant():
    env = GridNav()
    files = [upload("frame", env.draw_at(env.goal)), upload("goal", env.goal_images("window")[0])]
    response = client.post("/api/rewards/score", files=files, data={"variant": "window", "cell_fraction": "0.2"})
    assert response.status_code == 200
    assert response.json()["variant"] == "window"
    assert 0 < response.json()["reward"] <= 1


def test_score_rejects_unknown_variant():
    goal = GridNav().goal_images("direct")[0]
    files = [upload("frame", goal), upload("goal", goal)]
    response = client.post("/api/rewards/score", files=files, data={"variant": "motion"})
    assert response.status_code == 400


def test_score_rejects_bad_parameters():
    goal = GridNav().goal_images("direct")[0]
    files = [upload("frame", goal), upload("goal", goal)]
    response = client.post("/api/rewards/score", files=files, data={"cell_fraction": "1.5"})
    assert response.status_code == 400


def test_score_rejects_unreadable_image():
    goal = GridNav().goal_images("direct")[0]
    files = [("frame", ("frame.png", b"definitely not an image", "image/png")), upload("goal", goal)]
    response = client.post("/api/rewards/score", files=files)
    assert response.status_code == 400
    assert "frame.png" in response.json()["detail"]


def test_upload_size_limit(monkeypatch):
    monkeypatch.setattr(settings, "max_upload_bytes", 16)
    goal = GridNav().goal_images("direct")[0]
    response = client.post("/api/rewards/score", files=[upload("frame", goal), upload("goal", goal)])
    assert response.status_code == 413


def test_motion_reward():
    env = TraceDraw()
    goal = env.goal_frames("env")
    files = [upload("frames", f) for f in goal] + [upload("goal_frames", f) for f in goal]
    response = client.post("/api/rewards/motion", files=files)
    assert response.status_code == 200
    body = response.json()
    assert body["distance"] == 0.0 and body["reward"] == 1.0
    assert body["frames"] == body["goal_frames"] == 9

    wrong_way = [upload("frames", f) for f in reversed(goal)] + [upload("goal_frames", f) for f in goal]
    assert client.post("/api/rewards/motion", files=wrong_way).json()["distance"] > 0


def test_motion_reward_needs_two_frames():
    goal = TraceDraw().goal_frames("env")
    files = [upload("frames", goal[0])] + [upload("goal_frames", f) for f in goal]
    response = client.post("/api/rewards/motion", files=files)
    assert response.status_code == 400
    assert "frames" in response.json()["detail"]


def test_hog_endpoint():
    response = client.post("/api/features/hog", files=[upload("image", edge_image())])
    assert response.status_code == 200
    body = response.json()
    assert body["length"] == 2 * 2 * 9 == len(body["values"])
    assert body["norm"] == pytest.approx(1.0)

    flat = client.post("/api/features/hog", files=[upload("image", np.full((16, 16), 0.4))]).json()
    assert flat["norm"] == 0.0


def test_hog_endpoint_parameters():
    response = client.post(
        "/api/features/hog", files=[upload("image", edge_image())], data={"cell_size": "4", "num_bins": "6"}
    )
    assert response.json()["length"] == 4 * 4 * 6
    bad = client.post("/api/features/hog", files=[upload("image", edge_image())], data={"cell_size": "0"})
    assert bad.status_code == 400


def test_motion_template_endpoint():
    frames = TraceDraw().goal_frames("env")
    response = client.post("/api/features/motion-template", files=[upload("frames", f) for f in frames])
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/x-portable-graymap"
    template = decode_image_bytes(response.content)
    assert template.shape == frames[0].shape
    assert template.max() == 1.0

    still = client.post("/api/features/motion-template", files=[upload("frames", frames[0])] * 3)
    assert not decode_image_bytes(still.content).any()
