import math

import numpy as np
import pytest

from app.prf_agent.imaging_utils import ImageShapeError, ParameterError
from app.prf_agent.motion_template_utils import (
    MotionTemplate,
    MotionTemplateAccumulator,
    MotionTemplateParams,
    compute_mt,
    constant_delta,
    linear_delta,
    mt_update,
)


def scalar_update(prev, sigma, tau, delta):
    out = np.zeros_like(prev)
    for y in range(prev.shape[0]):
        for x in range(prev.shape[1]):
            if sigma[y, x] > 0:
                out[y, x] = tau
            elif prev[y, x] < tau - delta:
                out[y, x] = 0.0
            else:
                out[y, x] = prev[y, x]
    return out


def dot_frames(positions, shape=(8, 12)):
    frames = []
    for y, x in positions:
        frame = np.zeros(shape)
        frame[y, x] = 1.0
        frames.append(frame)
    return frames


def test_mt_update_matches_scalar_oracle():
    rng = np.random.default_rng(30)
    for _ in range(100):
        shape = (int(rng.integers(1, 17)), int(rng.integers(1, 17)))
        prev = rng.choice([0.0, 0.1, 0.4, 0.7, 1.0], size=shape)
        sigma = (rng.random(shape) > 0.6).astype(np.uint8)
        tau = float(rng.uniform(0.5, 3.0))
        delta = float(rng.uniform(0.0, 2.0))
        out = mt_update(MotionTemplate(prev, 0.0), sigma, tau, delta)
        np.testing.assert_array_equal(out.image, scalar_update(prev, sigma, tau, delta))
        assert out.final_tau == tau


def test_mt_update_cases():
    prev = MotionTemplate(np.array([[0.5, 0.2, 0.7]]), 0.7)
    sigma = np.array([[1, 0, 0]], dtype=np.uint8)
    out = mt_update(prev, sigma, tau=1.0, delta=0.5)
    np.testing.assert_array_equal(out.image, [[1.0, 0.0, 0.7]])


def test_mt_update_shape_mismatch():
    with pytest.raises(ImageShapeError):
        mt_update(MotionTemplate.empty((3, 3)), np.zeros((3, 4), dtype=np.uint8), 1.0, 0.5)


def test_identical_frames_give_black_template():
    frame = np.random.default_rng(31).random((6, 6))
    template = compute_mt([frame] * 5, MotionTemplateParams())
    assert not template.image.any()
    assert not template.to_gray().any()


def test_single_early_motion_keeps_first_tau():
    params = MotionTemplateParams(tau0=0.1, tau_increment=0.3, delta_schedule=constant_delta(math.inf))
    frames = dot_frames([(2, 2), (2, 3), (2, 3)])
    template = compute_mt(frames, params)
    assert template.final_tau == pytest.approx(0.4)
    expected = np.zeros((8, 12))
    expected[2, 2] = expected[2, 3] = 0.1
    np.testing.assert_allclose(template.image, expected)


def test_compute_mt_matches_scalar_iteration():
    rng = np.random.default_rng(32)
    params = MotionTemplateParams(delta_schedule=linear_delta(3.0), silhouette_threshold=0.2)
    for _ in range(30):
        shape = (int(rng.integers(2, 12)), int(rng.integers(2, 12)))
        frames = [rng.random(shape) for _ in range(int(rng.integers(2, 7)))]
        expected = np.zeros(shape)
        for t in range(1, len(frames)):
            sigma = (np.abs(frames[t] - frames[t - 1]) > 0.2).astype(np.uint8)
            expected = scalar_update(expected, sigma, 0.1 + (t - 1) * 0.3, (t + 1) / 3.0)
        np.testing.assert_array_equal(compute_mt(frames, params).image, expected)


def test_values_are_zero_or_a_tau():
    rng = np.random.default_rng(33)
    params = MotionTemplateParams()
    frames = [rng.random((10, 10)) for _ in range(8)]
    template = compute_mt(frames, params)
    taus = {0.0} | {params.tau(t) for t in range(1, len(frames))}
    assert set(np.unique(template.image)) <= taus


def test_zero_delta_keeps_only_latest_motion():
    params = MotionTemplateParams(delta_schedule=constant_delta(0.0))
    frames = dot_frames([(1, 1), (1, 2), (1, 3), (1, 4)])
    template = compute_mt(frames, params)
    moved_last = np.zeros((8, 12), dtype=bool)
    moved_last[1, 3] = moved_last[1, 4] = True
    assert np.all(template.image[~moved_last] == 0.0)
    assert np.all(template.image[moved_last] == params.tau(3))


def test_infinite_delta_is_last_motion_time_map():
    params = MotionTemplateParams(delta_schedule=constant_delta(math.inf))
    frames = dot_frames([(4, x) for x in range(1, 8)])
    template = compute_mt(frames, params)
    # step t moves the dot from column t to column t + 1
    for x in range(1, 7):
        assert template.image[4, x] == params.tau(x)
    assert template.image[4, 7] == params.tau(6)
    assert template.image[4, 0] == 0.0


def test_moving_dot_recency_ordering():
    params = MotionTemplateParams()
    frames = dot_frames([(3, x) for x in range(2, 9)])
    exported = compute_mt(frames, params).to_gray()
    # column x was last crossed at step x - 1; the final two columns share the last step
    trail = [exported[3, x] for x in range(2, 8)]
    assert all(0 < a < b for a, b in zip(trail, trail[1:]))
    assert exported[3, 8] == exported[3, 7] == 1.0
    assert exported.max() == 1.0
    assert exported.min() >= 0.0


def test_export_range_without_final_motion():
    frames = dot_frames([(2, 2), (2, 5), (2, 5)])
    exported = compute_mt(frames, MotionTemplateParams(delta_schedule=constant_delta(math.inf))).to_gray()
    assert 0.0 < exported.max() < 1.0


def test_compute_mt_errors():
    with pytest.raises(ValueError):
        compute_mt([np.zeros((3, 3))], MotionTemplateParams())
    with pytest.raises(ImageShapeError):
        compute_mt([np.zeros((3, 3)), np.zeros((3, 4))], MotionTemplateParams())


@pytest.mark.parametrize("kwargs", [
    {"tau0": 0.0},
    {"tau_increment": -0.1},
    {"silhouette_threshold": 1.0},
])
def test_params_validation(kwargs):
    with pytest.raises(ParameterError):
        MotionTemplateParams(**kwargs)


def test_delta_schedules():
    assert linear_delta(4.0)(1) == 0.5
    assert linear_delta(3.0)(5) == 2.0
    assert constant_delta(math.inf)(7) == math.inf
    with pytest.raises(ParameterError):
        linear_delta(0.0)
    with pytest.raises(ParameterError):
        constant_delta(-1.0)


def test_accumulator_matches_compute_mt_on_every_prefix():
    rng = np.random.default_rng(34)
    params = MotionTemplateParams()
    frames = [rng.random((9, 7)) for _ in range(6)]
    accumulator = MotionTemplateAccumulator(params)
    accumulator.push(frames[0])
    assert accumulator.frame_count == 1
    assert not accumulator.template.image.any()
    for n in range(2, len(frames) + 1):
        accumulator.push(frames[n - 1])
        expected = compute_mt(frames[:n], params)
        np.testing.assert_array_equal(accumulator.template.image, expected.image)
        assert accumulator.template.final_tau == expected.final_tau
    assert accumulator.frame_count == len(frames)

    accumulator.reset()
    assert accumulator.frame_count == 0
    with pytest.raises(ValueError):
        accumulator.template
