"""
Small deterministic pixel environments.

Every environment renders an 84x84 mirror state and also reports a variable
reward (VRF) computed from its internal variables, so PRF- and VRF-trained
agents can be compared on the same task. All dynamics are integer, fixed-step
and seeded through ``numpy.random.default_rng``.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.prf_agent.imaging_utils import GrayImage

logger = logging.getLogger(__name__)

FRAME_SIZE = 84


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


@dataclass
class StepOutcome:
    mirror_state: GrayImage
    vrf_reward: float
    terminal: bool
    info: Dict[str, Any] = field(default_factory=dict)


class Environment(ABC):
    """
    Base environment: subclasses implement ``_reset_state``, ``_advance`` and
    ``_draw``; the base class enforces the step cap and the episode contract.
    """

    name: str = ""
    action_count: int = 0
    action_names: Tuple[str, ...] = ()
    default_step_cap: int = 100

    def __init__(self, step_cap: Optional[int] = None):
        if step_cap is not None and step_cap < 1:
            raise ValueError(f"step_cap must be at least 1, got {step_cap}")
        self.step_cap = step_cap or self.default_step_cap
        self.frame_shape = (FRAME_SIZE, FRAME_SIZE)
        self.rng = np.random.default_rng(0)
        self.steps = 0
        self.score = 0
        self.terminal = False
        self._frame: Optional[np.ndarray] = None

    def reset(self, seed: int = 0) -> StepOutcome:
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.score = 0
        self.terminal = False
        self._reset_state()
        self._frame = self._draw()
        return StepOutcome(self.render(), 0.0, False, self._info(truncated=False))

    def step(self, action: int) -> StepOutcome:
        if self._frame is None:
            raise EpisodeFinishedError(f"{self.name}: reset() must be called before step()")
        if self.terminal:
            raise EpisodeFinishedError(f"{self.name}: episode already finished after {self.steps} steps")
        if not 0 <= int(action) < self.action_count:
            raise ValueError(
                f"{self.name}: action {action} out of range [0, {self.action_count})"
            )
        reward, terminal = self._advance(int(action))
        self.steps += 1
        truncated = False
        if not terminal and self.steps >= self.step_cap:
            terminal = True
            truncated = True
        self.terminal = terminal
        self._frame = self._draw()
        return StepOutcome(self.render(), float(reward), terminal, self._info(truncated))

    def render(self) -> GrayImage:
        """Current mirror state."""
        if self._frame is None:
            raise EpisodeFinishedError(f"{self.name}: reset() must be called before render()")
        return self._frame.copy()

    def _info(self, truncated: bool) -> Dict[str, Any]:
        return {
            "score": self.score,
            "success": self.success,
            "truncated": truncated,
            "steps": self.steps,
        }

    @property
    def success(self) -> bool:
        return False

    def goal_images(self, variant: str, source: str = "env") -> List[GrayImage]:
        """Builtin goal images for a descriptor variant."""
        raise ValueError(f"{self.name} has no builtin goal for variant '{variant}'")

    @abstractmethod
    def _reset_state(self) -> None:
        ...

    @abstractmethod
    def _advance(self, action: int) -> Tuple[float, bool]:
        """Apply one action; return (vrf_reward, terminal)."""

    @abstractmethod
    def _draw(self) -> np.ndarray:
        ...


def _fill(frame: np.ndarray, x: int, y: int, w: int, h: int, value: float) -> None:
    """Paint a rectangle, clipped to the frame."""
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, frame.shape[1]), min(y + h, frame.shape[0])
    if x0 < x1 and y0 < y1:
        frame[y0:y1, x0:x1] = value


class GridNav(Environment):
    """
    A room of 12 px tiles with an interior wall. The agent is a bright square
    that lights the floor around it, so the floor luminance encodes where it is.
    """

    name = "gridnav"
    action_count = 4
    action_names = ("up", "down", "left", "right")
    default_step_cap = 50

    LAYOUT = (
        "#######",
        "#S....#",
        "#.....#",
        "#.##..#",
        "#.....#",
        "#....G#",
        "#######",
    )
    TILE = 12
    AGENT_SIZE = 6
    AGENT_VALUE = 1.0
    FLOOR_MIN = 0.15
    FLOOR_GAIN = 0.5
    LIGHT_RADIUS = 100.0
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self, step_cap: Optional[int] = None, terminate_at_goal: bool = True):
        super().__init__(step_cap)
        self.terminate_at_goal = terminate_at_goal
        self.walls = np.array([[c == "#" for c in row] for row in self.LAYOUT])
        self.start = self._find("S")
        self.goal = self._find("G")
        self.position = self.start
        self.reached_goal = False

        tile_of_pixel = np.arange(FRAME_SIZE) // self.TILE
        self._floor = ~self.walls[tile_of_pixel[:, None], tile_of_pixel[None, :]]
        centres = np.arange(FRAME_SIZE, dtype=np.float64) + 0.5
        self._pixel_y, self._pixel_x = np.meshgrid(centres, centres, indexing="ij")

    def _find(self, marker: str) -> Tuple[int, int]:
        for r, row in enumerate(self.LAYOUT):
            c = row.find(marker)
            if c >= 0:
                return r, c
        raise ValueError(f"Marker {marker} missing from layout")

    def in_bounds(self, position: Tuple[int, int]) -> bool:
        r, c = position
        return 0 <= r < self.walls.shape[0] and 0 <= c < self.walls.shape[1]

    def _reset_state(self) -> None:
        self.position = self.start
        self.reached_goal = False

    def _advance(self, action: int) -> Tuple[float, bool]:
        dr, dc = self.MOVES[action]
        target = (self.position[0] + dr, self.position[1] + dc)
        if self.in_bounds(target) and not self.walls[target]:
            self.position = target
        if self.position == self.goal:
            self.reached_goal = True
            self.score = 1
            return 1.0, self.terminate_at_goal
        return 0.0, False

    @property
    def success(self) -> bool:
        return self.reached_goal

    def draw_at(self, position: Tuple[int, int]) -> np.ndarray:
        r, c = position
        centre_y = (r + 0.5) * self.TILE
        centre_x = (c + 0.5) * self.TILE
        dist = np.hypot(self._pixel_y - centre_y, self._pixel_x - centre_x)
        light = self.FLOOR_MIN + self.FLOOR_GAIN * np.maximum(0.0, 1.0 - dist / self.LIGHT_RADIUS)
        frame = np.where(self._floor, light, 0.0)
        offset = (self.TILE - self.AGENT_SIZE) // 2
        _fill(
            frame,
            c * self.TILE + offset,
            r * self.TILE + offset,
            self.AGENT_SIZE,
            self.AGENT_SIZE,
            self.AGENT_VALUE,
        )
        return frame

    def _draw(self) -> np.ndarray:
        return self.draw_at(self.position)

    def goal_images(self, variant: str, source: str = "env") -> List[GrayImage]:
        goal_frame = self.draw_at(self.goal)
        if variant == "direct":
            return [goal_frame]
        if variant == "window":
            r, c = self.goal
            top, left = (r - 1) * self.TILE, (c - 1) * self.TILE
            return [goal_frame[top:top + 3 * self.TILE, left:left + 3 * self.TILE].copy()]
        return super().goal_images(variant, source)


class MiniBreakout(Environment):
    """
    Paddle, ball and a brick grid inside grey walls.

    Bricks, walls and the paddle are separated by at least 3 px so removing a
    brick only ever removes gradient energy from the frame. The paddle sits on
    the bottom rows, which keeps the non-black bounding box equal to the frame.
    """

    name = "breakout"
    action_count = 3
    action_names = ("stay", "left", "right")
    default_step_cap = 100

    WALL = 2
    WALL_VALUE = 0.4
    BRICK_ROWS = 5
    BRICK_COLS = 7
    BRICK_W = 8
    BRICK_H = 3
    BRICK_X0 = 5
    BRICK_Y0 = 8
    BRICK_PITCH_X = 11
    BRICK_PITCH_Y = 6
    BRICK_VALUES = (1.0, 0.9, 0.8, 0.7, 0.6)
    PADDLE_W = 12
    PADDLE_H = 2
    PADDLE_Y = FRAME_SIZE - 2
    PADDLE_SPEED = 4
    PADDLE_VALUE = 1.0
    BALL = 2
    BALL_VALUE = 1.0
    BALL_START_Y = 48
    BALL_SPEED_Y = 3
    MAX_SPEED_X = 3

    def __init__(self, step_cap: Optional[int] = None):
        super().__init__(step_cap)
        self.left = self.WALL
        self.right = FRAME_SIZE - self.WALL - 1
        self.bricks = np.ones((self.BRICK_ROWS, self.BRICK_COLS), dtype=bool)
        self.paddle_x = 0
        self.ball = (0, 0)
        self.velocity = (0, 0)

    @property
    def brick_count(self) -> int:
        return int(self.bricks.sum())

    @property
    def success(self) -> bool:
        return self.brick_count == 0

    def brick_rect(self, row: int, col: int) -> Tuple[int, int, int, int]:
        return (
            self.BRICK_X0 + col * self.BRICK_PITCH_X,
            self.BRICK_Y0 + row * self.BRICK_PITCH_Y,
            self.BRICK_W,
            self.BRICK_H,
        )

    def brick_region(self) -> Tuple[int, int, int, int]:
        """(x, y, w, h) spanning every brick slot."""
        x, y, _, _ = self.brick_rect(0, 0)
        x1, y1, w, h = self.brick_rect(self.BRICK_ROWS - 1, self.BRICK_COLS - 1)
        return x, y, x1 + w - x, y1 + h - y

    def _reset_state(self) -> None:
        self.bricks = np.ones((self.BRICK_ROWS, self.BRICK_COLS), dtype=bool)
        self.paddle_x = (FRAME_SIZE - self.PADDLE_W) // 2
        self.ball = (int(self.rng.integers(20, 61)), self.BALL_START_Y)
        self.velocity = (int(self.rng.choice([-2, -1, 1, 2])), self.BALL_SPEED_Y)

    def _hit_bricks(self, x: int, y: int) -> int:
        hits = 0
        for row, col in zip(*np.nonzero(self.bricks)):
            bx, by, bw, bh = self.brick_rect(row, col)
            if x + self.BALL - 1 >= bx and x <= bx + bw - 1 and y + self.BALL - 1 >= by and y <= by + bh - 1:
                self.bricks[row, col] = False
                hits += 1
        return hits

    def _bounce_speed(self, ball_x: int, old_vx: int) -> int:
        offset = (ball_x + self.BALL // 2) - (self.paddle_x + self.PADDLE_W // 2)
        speed = min(self.MAX_SPEED_X, (abs(offset) + 1) // 2)
        if speed == 0:
            return 1 if old_vx > 0 else -1
        return speed if offset > 0 else -speed

    def _advance(self, action: int) -> Tuple[float, bool]:
        if action == 1:
            self.paddle_x -= self.PADDLE_SPEED
        elif action == 2:
            self.paddle_x += self.PADDLE_SPEED
        self.paddle_x = int(np.clip(self.paddle_x, self.left, self.right - self.PADDLE_W + 1))

        x, y = self.ball
        vx, vy = self.velocity
        nx, ny = x + vx, y + vy

        if nx < self.left:
            nx, vx = self.left, abs(vx)
        elif nx + self.BALL - 1 > self.right:
            nx, vx = self.right - self.BALL + 1, -abs(vx)
        if ny < self.WALL:
            ny, vy = self.WALL, abs(vy)

        reward = 0.0
        terminal = False
        hits = self._hit_bricks(nx, ny)
        if hits:
            reward = float(hits)
            self.score += hits
            ny, vy = y, -vy
            terminal = self.brick_count == 0
        elif vy > 0 and ny + self.BALL - 1 >= self.PADDLE_Y:
            paddle_hit = nx + self.BALL - 1 >= self.paddle_x and nx <= self.paddle_x + self.PADDLE_W - 1
            if paddle_hit:
                ny, vy = self.PADDLE_Y - self.BALL, -abs(vy)
                vx = self._bounce_speed(nx, vx)
            else:
                terminal = True

        self.ball = (nx, ny)
        self.velocity = (vx, vy)
        return reward, terminal

    def _draw(self) -> np.ndarray:
        frame = np.zeros(self.frame_shape, dtype=np.float64)
        _fill(frame, 0, 0, self.WALL, FRAME_SIZE, self.WALL_VALUE)
        _fill(frame, FRAME_SIZE - self.WALL, 0, self.WALL, FRAME_SIZE, self.WALL_VALUE)
        _fill(frame, 0, 0, FRAME_SIZE, self.WALL, self.WALL_VALUE)
        for row, col in zip(*np.nonzero(self.bricks)):
            bx, by, bw, bh = self.brick_rect(row, col)
            _fill(frame, bx, by, bw, bh, self.BRICK_VALUES[row])
        _fill(frame, self.paddle_x, self.PADDLE_Y, self.PADDLE_W, self.PADDLE_H, self.PADDLE_VALUE)
        if self.terminal and self.ball[1] + self.BALL - 1 >= self.PADDLE_Y:
            return frame
        bx, by = self.ball
        _fill(frame, bx, by, self.BALL, self.BALL, self.BALL_VALUE)
        return frame

    def goal_images(self, variant: str, source: str = "env") -> List[GrayImage]:
        if variant == "direct":
            return [np.zeros(self.frame_shape, dtype=np.float64)]
        return super().goal_images(variant, source)


@dataclass
class Pipe:
    x: int
    gap_top: int
    passed: bool = False


class MiniFlappy(Environment):
    """
    A bird at a fixed column flaps up or drops down while pipe pairs scroll
    past. VRF: 1 while between pipes, 0.1 for any other surviving step and
    -1 on a crash.
    """

    name = "flappy"
    action_count = 2
    action_names = ("flap_up", "descend")
    default_step_cap = 5000

    BIRD_X = 20
    BIRD_SIZE = 4
    BIRD_VALUE = 1.0
    BIRD_START_Y = 40
    FLAP = -3
    DESCEND = 3
    PIPE_W = 8
    PIPE_GAP = 28
    PIPE_VALUE = 0.5
    PIPE_SPACING = 44
    SCROLL = 2
    GAP_MARGIN = 12
    FIRST_PIPE_X = 60

    def __init__(self, step_cap: Optional[int] = None):
        super().__init__(step_cap)
        self.bird_y = self.BIRD_START_Y
        self.pipes: List[Pipe] = []

    def _random_gap(self) -> int:
        return int(self.rng.integers(self.GAP_MARGIN, FRAME_SIZE - self.GAP_MARGIN - self.PIPE_GAP + 1))

    def _reset_state(self) -> None:
        self.bird_y = self.BIRD_START_Y
        self.pipes = [
            Pipe(self.FIRST_PIPE_X, self._random_gap()),
            Pipe(self.FIRST_PIPE_X + self.PIPE_SPACING, self._random_gap()),
        ]

    def _overlaps_pipe(self, pipe: Pipe) -> bool:
        return self.BIRD_X + self.BIRD_SIZE - 1 >= pipe.x and self.BIRD_X <= pipe.x + self.PIPE_W - 1

    def _inside_gap(self, pipe: Pipe) -> bool:
        return self.bird_y >= pipe.gap_top and self.bird_y + self.BIRD_SIZE <= pipe.gap_top + self.PIPE_GAP

    def _advance(self, action: int) -> Tuple[float, bool]:
        self.bird_y += self.FLAP if action == 0 else self.DESCEND
        for pipe in self.pipes:
            pipe.x -= self.SCROLL
        self.pipes = [p for p in self.pipes if p.x + self.PIPE_W > 0]
        if self.pipes[-1].x <= FRAME_SIZE - self.PIPE_SPACING:
            self.pipes.append(Pipe(self.pipes[-1].x + self.PIPE_SPACING, self._random_gap()))

        if self.bird_y < 0 or self.bird_y + self.BIRD_SIZE > FRAME_SIZE:
            return -1.0, True

        between = False
        for pipe in self.pipes:
            if self._overlaps_pipe(pipe):
                if not self._inside_gap(pipe):
                    return -1.0, True
                between = True
            if not pipe.passed and pipe.x + self.PIPE_W - 1 < self.BIRD_X:
                pipe.passed = True
                self.score += 1
        return (1.0 if between else 0.1), False

    @property
    def success(self) -> bool:
        return self.score > 0

    def _draw_pipe(self, frame: np.ndarray, pipe: Pipe) -> None:
        _fill(frame, pipe.x, 0, self.PIPE_W, pipe.gap_top, self.PIPE_VALUE)
        bottom = pipe.gap_top + self.PIPE_GAP
        _fill(frame, pipe.x, bottom, self.PIPE_W, FRAME_SIZE - bottom, self.PIPE_VALUE)

    def _draw(self) -> np.ndarray:
        frame = np.zeros(self.frame_shape, dtype=np.float64)
        for pipe in self.pipes:
            self._draw_pipe(frame, pipe)
        _fill(frame, self.BIRD_X, self.bird_y, self.BIRD_SIZE, self.BIRD_SIZE, self.BIRD_VALUE)
        return frame

    def goal_window(self) -> GrayImage:
        """The bird centred in a pipe gap, cut out of an otherwise empty frame."""
        frame = np.zeros(self.frame_shape, dtype=np.float64)
        gap_top = 28
        pipe = Pipe(self.BIRD_X - (self.PIPE_W - self.BIRD_SIZE) // 2, gap_top)
        self._draw_pipe(frame, pipe)
        bird_y = gap_top + (self.PIPE_GAP - self.BIRD_SIZE) // 2
        _fill(frame, self.BIRD_X, bird_y, self.BIRD_SIZE, self.BIRD_SIZE, self.BIRD_VALUE)
        left, top = pipe.x - 8, gap_top - 8
        return frame[top:top + self.PIPE_GAP + 16, left:left + self.PIPE_W + 16].copy()

    def goal_images(self, variant: str, source: str = "env") -> List[GrayImage]:
        if variant == "window":
            return [self.goal_window()]
        return super().goal_images(variant, source)


class TraceDraw(Environment):
    """
    A pen dot on a black canvas. The task is a motion: trace the target path
    (right four times, then up four times). Action 0 is a no-op that leaves the
    frame untouched.
    """

    name = "tracedraw"
    action_count = 5
    action_names = ("noop", "up", "down", "left", "right")
    default_step_cap = 10

    PEN = 5
    PEN_VALUE = 1.0
    STEP = 8
    START = (18, 62)
    TARGET_MOVES = (4, 4, 4, 4, 1, 1, 1, 1)
    MOVES = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))
    SKETCH_RADIUS = 2.5
    SKETCH_VALUE = 0.8

    def __init__(self, step_cap: Optional[int] = None):
        super().__init__(step_cap)
        self.pen = self.START
        self.waypoints = self.target_waypoints()
        self.progress = 0

    @classmethod
    def target_waypoints(cls) -> List[Tuple[int, int]]:
        points = [cls.START]
        for action in cls.TARGET_MOVES:
            dx, dy = cls.MOVES[action]
            x, y = points[-1]
            points.append((x + dx * cls.STEP, y + dy * cls.STEP))
        return points

    def _reset_state(self) -> None:
        self.pen = self.START
        self.progress = 0

    def _advance(self, action: int) -> Tuple[float, bool]:
        dx, dy = self.MOVES[action]
        half = self.PEN // 2
        x = int(np.clip(self.pen[0] + dx * self.STEP, half, FRAME_SIZE - 1 - half))
        y = int(np.clip(self.pen[1] + dy * self.STEP, half, FRAME_SIZE - 1 - half))
        self.pen = (x, y)

        following = self.progress + 1
        if following < len(self.waypoints) and self.pen == self.waypoints[following]:
            self.progress = following
        self.score = self.progress

        end_x, end_y = self.waypoints[-1]
        return -float(np.hypot(x - end_x, y - end_y)) / FRAME_SIZE, False

    @property
    def success(self) -> bool:
        return self.progress == len(self.waypoints) - 1

    @classmethod
    def draw_pen(cls, pen: Tuple[int, int]) -> np.ndarray:
        frame = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=np.float64)
        half = cls.PEN // 2
        _fill(frame, pen[0] - half, pen[1] - half, cls.PEN, cls.PEN, cls.PEN_VALUE)
        return frame

    @classmethod
    def draw_sketch(cls, pen: Tuple[int, int]) -> np.ndarray:
        """A dimmer round brush: a second renderer for the same trajectory."""
        frame = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=np.float64)
        centres = np.arange(FRAME_SIZE)
        dist = np.hypot(centres[:, None] - pen[1], centres[None, :] - pen[0])
        frame[dist <= cls.SKETCH_RADIUS] = cls.SKETCH_VALUE
        return frame

    def _draw(self) -> np.ndarray:
        return self.draw_pen(self.pen)

    def goal_frames(self, source: str = "env") -> List[GrayImage]:
        if source == "env":
            return [self.draw_pen(p) for p in self.waypoints]
        if source == "sketch":
            return [self.draw_sketch(p) for p in self.waypoints]
        raise ValueError(f"Unknown goal source '{source}' (expected 'env' or 'sketch')")

    def goal_images(self, variant: str, source: str = "env") -> List[GrayImage]:
        if variant == "motion":
            return self.goal_frames(source)
        return super().goal_images(variant, source)


ENVIRONMENTS = {
    GridNav.name: GridNav,
    MiniBreakout.name: MiniBreakout,
    MiniFlappy.name: MiniFlappy,
    TraceDraw.name: TraceDraw,
}


def make_env(name: str, **options) -> Environment:
    """Instantiate an environment by name with its config options."""
    try:
        env_cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"Unknown environment '{name}'. Available: {sorted(ENVIRONMENTS)}")
    logger.debug(f"Creating environment {name} with options {options}")
    return env_cls(**options)
