import numpy as np
import pytest

from app.core.config import Settings
from app.prf_agent.envs import (
    ENVIRONMENTS,
    FRAME_SIZE,
    EpisodeFinishedError,
    GridNav,
    MiniBreakout,
    MiniFlappy,
    TraceDraw,
    make_env,
)
from app.prf_agent.imaging_utils import as_gray


@pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
def test_frames_are_valid_gray_images(name):
    env = make_env(name)
    outcome = env.reset(3)
    assert outcome.mirror_state.shape == (FRAME_SIZE, FRAME_SIZE)
    as_gray(outcome.mirror_state)
    rng = np.random.default_rng(0)
    while not outcome.terminal:
        outcome = env.step(int(rng.integers(env.action_count)))
        as_gray(outcome.mirror_state)
        assert set(outcome.info) >= {"score", "success", "truncated", "steps"}
    assert env.steps <= env.step_cap


def test_frame_size_is_not_configurable(monkeypatch):
    monkeypatch.setenv("PRF_FRAME_SIZE", "32")
    assert "frame_size" not in Settings().model_dump()
    assert GridNav().reset(0).mirror_state.shape == (FRAME_SIZE, FRAME_SIZE) == (84, 84)


@pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
def test_same_seed_same_episode(name):
    def play(seed):
        env = make_env(name)
        frames = [env.reset(seed).mirror_state]
        rng = np.random.default_rng(99)
        outcome = None
        while outcome is None or not outcome.terminal:
            outcome = env.step(int(rng.integers(env.action_count)))
            frames.append(outcome.mirror_state)
        return frames

    first, second = play(7), play(7)
    assert len(first) == len(second)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


def test_step_after_terminal_raises():
    env = TraceDraw(step_cap=2)
    env.reset(0)
    env.step(0)
    outcome = env.step(0)
    assert outcome.terminal and outcome.info["truncated"]
    with pytest.raises(EpisodeFinishedError):
        env.step(0)


def test_step_before_reset_raises():
    with pytest.raises(EpisodeFinishedError):
        GridNav().step(0)


@pytest.mark.parametrize("action", [-1, 4])
def test_invalid_action(action):
    env = GridNav()
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(action)


def test_render_is_a_copy():
    env = GridNav()
    env.reset(0)
    frame = env.render()
    frame[:] = 0.0
    assert env.render().any()


def test_unknown_environment():
    with pytest.raises(ValueError) as e:
        make_env("pong")
    assert "gridnav" in str(e.value)


def walk(env, actions):
    outcome = None
    for action in actions:
        outcome = env.step(action)
    return outcome


def test_gridnav_reaches_goal():
    env = GridNav()
    env.reset(0)
    # down x4, right x4 from (1, 1); the wall on row 3 blocks columns 2-3 only
    outcome = walk(env, [1, 1, 1, 1, 3, 3, 3, 3])
    assert env.position == env.goal
    assert outcome.vrf_reward == 1.0
    assert outcome.terminal and not outcome.info["truncated"]
    assert outcome.info["success"] and outcome.info["score"] == 1
    np.testing.assert_array_equal(outcome.mirror_state, env.goal_images("direct")[0])


def test_gridnav_keeps_going_without_goal_termination():
    env = GridNav(terminate_at_goal=False)
    env.reset(0)
    outcome = walk(env, [1, 1, 1, 1, 3, 3, 3, 3])
    assert not outcome.terminal
    outcome = env.step(3)
    assert outcome.vrf_reward == 1.0 and env.position == env.goal


def test_gridnav_walls_block():
    env = GridNav()
    env.reset(0)
    env.step(0)
    assert env.position == env.start
    env.step(2)
    assert env.position == env.start


def test_gridnav_random_walk_stays_on_floor():
    env = GridNav(terminate_at_goal=False)
    rng = np.random.default_rng(11)
    env.reset(0)
    for _ in range(env.step_cap):
        env.step(int(rng.integers(env.action_count)))
        assert env.in_bounds(env.position)
        assert not env.walls[env.position]


@pytest.mark.parametrize("step_cap", [0, -3])
def test_step_cap_must_be_positive(step_cap):
    with pytest.raises(ValueError):
        GridNav(step_cap=step_cap)
    with pytest.raises(ValueError):
        TraceDraw(step_cap=step_cap)


def test_gridnav_window_goal_is_part_of_goal_frame():
    env = GridNav()
    window = env.goal_images("window")[0]
    assert window.shape == (36, 36)
    full = env.goal_images("direct")[0]
    np.testing.assert_array_equal(window, full[48:84, 48:84])


def test_breakout_direct_goal_is_black():
    env = MiniBreakout()
    goal = env.goal_images("direct")[0]
    assert goal.shape == (FRAME_SIZE, FRAME_SIZE) and not goal.any()
    with pytest.raises(ValueError):
        env.goal_images("motion")


def test_breakout_brick_hits_pay_and_count():
    env = MiniBreakout()
    env.reset(0)
    # just below the first brick of the bottom row, moving up into it
    env.ball = (env.BRICK_X0 + 2, env.BRICK_Y0 + 4 * env.BRICK_PITCH_Y + env.BRICK_H + 1)
    env.velocity = (0, -3)
    outcome = env.step(0)
    assert outcome.vrf_reward == 1.0
    assert env.brick_count == 34 and env.score == 1
    assert env.velocity[1] == 3


def test_breakout_lost_ball_ends_episode():
    env = MiniBreakout()
    env.reset(0)
    env.paddle_x = env.left
    env.ball = (70, env.PADDLE_Y - 4)
    env.velocity = (0, 3)
    outcome = env.step(0)
    assert outcome.terminal and not outcome.info["truncated"]


def test_breakout_frame_bounding_box_is_full_frame():
    env = MiniBreakout()
    frame = env.reset(1).mirror_state
    assert frame[:, 0].any() and frame[:, -1].any()
    assert frame[0].any() and frame[-1].any()


def brick_pixels(env, frame):
    x, y, w, h = env.brick_region()
    return frame[y:y + h, x:x + w]


def test_breakout_reset_draws_every_brick_row():
    env = MiniBreakout()
    frame = env.reset(0).mirror_state
    region = brick_pixels(env, frame)
    for row in range(env.BRICK_ROWS):
        _, y, _, h = env.brick_rect(row, 0)
        top = y - env.brick_region()[1]
        assert region[top:top + h].any()
        for col in range(env.BRICK_COLS):
            bx, by, bw, bh = env.brick_rect(row, col)
            assert (frame[by:by + bh, bx:bx + bw] == env.BRICK_VALUES[row]).all()


def test_breakout_cleared_bricks_leave_region_black():
    env = MiniBreakout()
    env.reset(0)
    env.bricks[:] = False
    assert not brick_pixels(env, env._draw()).any()
    assert env.success


def test_breakout_random_play_never_restores_bricks():
    env = MiniBreakout()
    rng = np.random.default_rng(5)
    for seed in range(5):
        outcome = env.reset(seed)
        initial = env.brick_count
        total = 0.0
        previous = initial
        while not outcome.terminal:
            outcome = env.step(int(rng.integers(env.action_count)))
            total += outcome.vrf_reward
            assert env.brick_count <= previous
            previous = env.brick_count
        assert total <= initial
        assert total == initial - env.brick_count == env.score


def test_flappy_rewards():
    env = MiniFlappy()
    env.reset(0)
    outcome = env.step(0)
    assert outcome.vrf_reward == pytest.approx(0.1)
    env.bird_y = 1
    outcome = env.step(0)
    assert outcome.vrf_reward == -1.0 and outcome.terminal


def test_flappy_between_pipes_and_score():
    env = MiniFlappy()
    env.reset(0)
    pipe = env.pipes[0]
    pipe.x = env.BIRD_X + env.SCROLL
    env.bird_y = pipe.gap_top + 10
    outcome = env.step(1)
    assert outcome.vrf_reward == 1.0
    pipe.x = env.BIRD_X - env.PIPE_W + env.SCROLL - 1
    env.bird_y = pipe.gap_top + 10
    env.step(0)
    assert env.score == 1


def test_flappy_goal_window():
    env = MiniFlappy()
    window = env.goal_images("window")[0]
    assert window.shape == (env.PIPE_GAP + 16, env.PIPE_W + 16)
    assert window.max() == env.BIRD_VALUE


def test_tracedraw_target_trace():
    env = TraceDraw()
    env.reset(0)
    outcome = walk(env, [4, 4, 4, 4, 1, 1, 1, 1])
    assert env.pen == env.waypoints[-1] == (50, 30)
    assert outcome.info["score"] == 8 and outcome.info["success"]
    assert outcome.vrf_reward == 0.0
    # the cap is 10 steps
    walk(env, [0])
    assert env.step(0).info["truncated"]


def test_tracedraw_noop_leaves_frame_unchanged():
    env = TraceDraw()
    first = env.reset(0).mirror_state
    np.testing.assert_array_equal(env.step(0).mirror_state, first)


def test_tracedraw_goal_sources():
    env = TraceDraw()
    pen = env.goal_images("motion", "env")
    sketch = env.goal_images("motion", "sketch")
    assert len(pen) == len(sketch) == 9
    assert not np.array_equal(pen[0], sketch[0])
    assert sketch[0].max() == env.SKETCH_VALUE
    with pytest.raises(ValueError):
        env.goal_frames("photo")


def test_tracedraw_sketch_is_a_round_brush():
    env = TraceDraw()
    pen = env.START
    sketch = env.draw_sketch(pen)
    x, y = pen
    assert sketch[y, x] == env.SKETCH_VALUE
    assert sketch[y, x + 2] == sketch[y + 2, x] == env.SKETCH_VALUE
    # corners of the pen square are outside the brush
    assert sketch[y + 2, x + 2] == 0.0
    assert env.draw_pen(pen)[y + 2, x + 2] == env.PEN_VALUE
