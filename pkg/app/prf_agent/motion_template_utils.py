"""
Motion templates: silhouettes layered over time and weighted by recency.

Each iteration t (starting at 1) compares frames t-1 and t. Pixels that moved
take the current time stamp tau_t; pixels older than tau_t - delta_t are
cleared; everything else keeps its previous stamp.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from app.prf_agent.imaging_utils import (
    BinaryImage,
    GrayImage,
    ImageShapeError,
    ParameterError,
    silhouette,
)

logger = logging.getLogger(__name__)

DeltaSchedule = Callable[[int], float]


def linear_delta(divisor: float) -> DeltaSchedule:
    """delta_t = (t + 1) / divisor"""
    if divisor <= 0:
        raise ParameterError(f"delta divisor must be > 0, got {divisor}")

    def schedule(t: int) -> float:
        return (t + 1) / divisor

    return schedule


def constant_delta(value: float) -> DeltaSchedule:
    if value < 0:
        raise ParameterError(f"delta must be >= 0, got {value}")

    def schedule(t: int) -> float:
        return value

    return schedule


@dataclass(frozen=True)
class MotionTemplateParams:
    tau0: float = 0.1
    tau_increment: float = 0.3
    delta_schedule: DeltaSchedule = field(default_factory=lambda: linear_delta(4.0))
    silhouette_threshold: float = 0.1

    def __post_init__(self):
        if self.tau0 <= 0:
            raise ParameterError(f"tau0 must be > 0, got {self.tau0}")
        if self.tau_increment <= 0:
            raise ParameterError(f"tau_increment must be > 0, got {self.tau_increment}")
        if not 0.0 < self.silhouette_threshold < 1.0:
            raise ParameterError(
                f"silhouette_threshold must lie in (0, 1), got {self.silhouette_threshold}"
            )

    def tau(self, t: int) -> float:
        return self.tau0 + (t - 1) * self.tau_increment

    def delta(self, t: int) -> float:
        value = self.delta_schedule(t)
        if value < 0 or math.isnan(value):
            raise ParameterError(f"delta schedule returned {value} at t={t}")
        return value


@dataclass(frozen=True)
class MotionTemplate:
    """Raw time stamps per pixel plus the tau of the last update."""
    image: np.ndarray
    final_tau: float

    @classmethod
    def empty(cls, shape) -> "MotionTemplate":
        return cls(image=np.zeros(shape, dtype=np.float64), final_tau=0.0)

    def to_gray(self) -> GrayImage:
        """Export to [0, 1] by dividing by the final tau."""
        if self.final_tau <= 0:
            return np.zeros_like(self.image)
        return np.clip(self.image / self.final_tau, 0.0, 1.0)


def mt_update(mu_prev: MotionTemplate, sigma: BinaryImage, tau: float, delta: float) -> MotionTemplate:
    """Apply one motion-template iteration."""
    prev = mu_prev.image
    if prev.shape != np.shape(sigma):
        raise ImageShapeError(
            f"Motion template {prev.shape} and silhouette {np.shape(sigma)} differ"
        )
    moved = np.asarray(sigma) > 0
    expired = prev < (tau - delta)
    updated = np.where(moved, tau, np.where(expired, 0.0, prev))
    return MotionTemplate(image=updated, final_tau=tau)


def compute_mt(images: Sequence[GrayImage], params: MotionTemplateParams) -> MotionTemplate:
    """Motion template of an image sequence."""
    if len(images) < 2:
        raise ValueError(f"A motion template needs at least 2 images, got {len(images)}")
    accumulator = MotionTemplateAccumulator(params)
    for frame in images:
        accumulator.push(frame)
    return accumulator.template


class MotionTemplateAccumulator:
    """
    Incremental motion template of a growing frame sequence.

    After pushing frames f_0..f_n the template equals ``compute_mt`` over the
    same frames; each push costs a single update.
    """

    def __init__(self, params: MotionTemplateParams):
        self.params = params
        self._last_frame: Optional[np.ndarray] = None
        self._template: Optional[MotionTemplate] = None
        self.iterations = 0

    def reset(self) -> None:
        self._last_frame = None
        self._template = None
        self.iterations = 0

    @property
    def frame_count(self) -> int:
        if self._last_frame is None:
            return 0
        return self.iterations + 1

    @property
    def template(self) -> MotionTemplate:
        if self._template is None:
            if self._last_frame is None:
                raise ValueError("No frames pushed yet")
            return MotionTemplate.empty(self._last_frame.shape)
        return self._template

    def push(self, frame: GrayImage) -> None:
        frame = np.asarray(frame, dtype=np.float64)
        if self._last_frame is None:
            self._last_frame = frame
            return
        if frame.shape != self._last_frame.shape:
            raise ImageShapeError(
                f"Frame {frame.shape} does not match sequence shape {self._last_frame.shape}"
            )
        self.iterations += 1
        t = self.iterations
        sigma = silhouette(self._last_frame, frame, self.params.silhouette_threshold)
        prev = self._template if self._template is not None else MotionTemplate.empty(frame.shape)
        self._template = mt_update(prev, sigma, self.params.tau(t), self.params.delta(t))
        self._last_frame = frame

