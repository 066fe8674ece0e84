"""
Perceptual Reward Functions

A PRF scores how closely an agent template T_A resembles a goal template T_G:

    H(T)  = HOG features of T cropped to its non-black bounding box
    D     = || H(T_A) - H(T_G) ||
    F     = exp(-D)

T_A is resized to the goal crop before HOG, and the cell size is a fraction
of the goal crop height.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.prf_agent.hog_utils import FeatureVector, HogParams, hog_features
from app.prf_agent.imaging_utils import (
    GrayImage,
    ParameterError,
    Rect,
    as_gray,
    crop,
    grow_to_min_size,
    match_template,
    nonzero_bounding_box,
    resize,
)
from app.prf_agent.motion_template_utils import MotionTemplateParams, compute_mt

logger = logging.getLogger(__name__)


class TemplateRole(str, Enum):
    AGENT = "agent"
    GOAL = "goal"


@dataclass(frozen=True)
class PerceptualTemplate:
    image: GrayImage
    role: TemplateRole


@dataclass(frozen=True)
class PrfParams:
    """cell_size = max(1, round(cell_fraction * h)) for the goal crop height h"""
    cell_fraction: float = 0.1
    num_bins: int = 9
    norm_eps: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.cell_fraction <= 1.0:
            raise ParameterError(f"cell_fraction must lie in (0, 1], got {self.cell_fraction}")
        if self.num_bins < 2:
            raise ParameterError(f"num_bins must be >= 2, got {self.num_bins}")

    def cell_size(self, height: int) -> int:
        return max(1, int(round(self.cell_fraction * height)))

    def hog_params(self, height: int) -> HogParams:
        return HogParams(
            cell_size=self.cell_size(height),
            num_bins=self.num_bins,
            norm_eps=self.norm_eps,
        )


@dataclass(frozen=True, eq=False)
class DirectDescriptor:
    """T_G is a full mirror state; T_A is the agent's mirror state."""
    goal: GrayImage

    def __post_init__(self):
        as_gray(self.goal)

    @property
    def variant(self) -> str:
        return "direct"

    @cached_property
    def goal_template(self) -> PerceptualTemplate:
        return PerceptualTemplate(image=np.asarray(self.goal, dtype=np.float64), role=TemplateRole.GOAL)


@dataclass(frozen=True, eq=False)
class WindowDescriptor:
    """T_G is a window of the desired mirror state, located by template matching."""
    goal_window: GrayImage

    def __post_init__(self):
        as_gray(self.goal_window)
        if min(np.shape(self.goal_window)) < 2:
            raise ParameterError(f"Goal window must be at least 2x2, got {np.shape(self.goal_window)}")

    @property
    def variant(self) -> str:
        return "window"

    @cached_property
    def goal_template(self) -> PerceptualTemplate:
        return PerceptualTemplate(
            image=np.asarray(self.goal_window, dtype=np.float64), role=TemplateRole.GOAL
        )


@dataclass(frozen=True, eq=False)
class MotionDescriptor:
    """T_G and T_A are motion templates of the goal and episode sequences."""
    goal_frames: Sequence[GrayImage]
    mt_params: MotionTemplateParams = field(default_factory=MotionTemplateParams)

    def __post_init__(self):
        if len(self.goal_frames) < 2:
            raise ValueError(
                f"Motion descriptor needs at least 2 goal frames, got {len(self.goal_frames)}"
            )
        for frame in self.goal_frames:
            as_gray(frame)

    @property
    def variant(self) -> str:
        return "motion"

    @cached_property
    def goal_template(self) -> PerceptualTemplate:
        logger.debug(f"Computing goal motion template from {len(self.goal_frames)} frames")
        template = compute_mt(list(self.goal_frames), self.mt_params)
        return PerceptualTemplate(image=template.to_gray(), role=TemplateRole.GOAL)


TaskDescriptor = Union[DirectDescriptor, WindowDescriptor, MotionDescriptor]


def goal_template(descriptor: TaskDescriptor) -> PerceptualTemplate:
    """T_G of a descriptor; computed once and cached on the descriptor."""
    return descriptor.goal_template


def agent_template(
    descriptor: TaskDescriptor,
    mirror_state: GrayImage,
    episode_frames: Sequence[GrayImage] = (),
) -> PerceptualTemplate:
    """T_A for the current step."""
    state = np.asarray(mirror_state, dtype=np.float64)
    if isinstance(descriptor, DirectDescriptor):
        return PerceptualTemplate(image=state, role=TemplateRole.AGENT)
    if isinstance(descriptor, WindowDescriptor):
        window, _ = match_template(state, descriptor.goal_window)
        return PerceptualTemplate(image=crop(state, window), role=TemplateRole.AGENT)
    if len(episode_frames) < 2:
        return PerceptualTemplate(image=np.zeros_like(state), role=TemplateRole.AGENT)
    template = compute_mt(list(episode_frames), descriptor.mt_params)
    return PerceptualTemplate(image=template.to_gray(), role=TemplateRole.AGENT)


def template_region(img: GrayImage) -> Optional[Rect]:
    """Crop region used by H, or None when the template is black."""
    box = nonzero_bounding_box(img)
    if box is None:
        return None
    return grow_to_min_size(box, np.shape(img))


def crop_template(img: GrayImage) -> GrayImage:
    region = template_region(img)
    if region is None:
        return np.asarray(img, dtype=np.float64)
    return crop(img, region)


def _agent_features(ta_crop: GrayImage, goal_shape: Tuple[int, int], hog: HogParams) -> FeatureVector:
    goal_h, goal_w = goal_shape
    return hog_features(resize(ta_crop, goal_w, goal_h), hog)


def prepare_pair(
    ta: PerceptualTemplate,
    tg: PerceptualTemplate,
    params: PrfParams,
) -> Tuple[FeatureVector, FeatureVector]:
    """Apply H to both templates with identical HOG parameters."""
    tg_crop = crop_template(tg.image)
    hog = params.hog_params(tg_crop.shape[0])
    ta_features = _agent_features(crop_template(ta.image), tg_crop.shape, hog)
    return ta_features, hog_features(tg_crop, hog)


def feature_distance(a: FeatureVector, b: FeatureVector) -> float:
    return float(np.linalg.norm(a - b))


def distance(ta: PerceptualTemplate, tg: PerceptualTemplate, params: PrfParams) -> float:
    """D(T_A, T_G)"""
    return feature_distance(*prepare_pair(ta, tg, params))


def reward_from_distance(d: float) -> float:
    return math.exp(-d)


def reward(ta: PerceptualTemplate, tg: PerceptualTemplate, params: PrfParams) -> float:
    """F(T_A, T_G) = exp(-D)"""
    return reward_from_distance(distance(ta, tg, params))


class PerceptualRewardFunction:
    """
    A PRF bound to one task.

    The goal crop and its features are computed once; each call only prepares
    the agent side.
    """

    def __init__(self, descriptor: TaskDescriptor, params: PrfParams):
        self.descriptor = descriptor
        self.params = params
        self.goal = goal_template(descriptor)
        self._goal_crop = crop_template(self.goal.image)
        self.hog = params.hog_params(self._goal_crop.shape[0])
        self._goal_features = hog_features(self._goal_crop, self.hog)
        logger.info(
            f"PRF ready: variant={descriptor.variant}, goal crop={self._goal_crop.shape}, "
            f"cell_size={self.hog.cell_size}, features={self._goal_features.size}"
        )

    @property
    def cell_size(self) -> int:
        return self.hog.cell_size

    def agent_template(
        self,
        mirror_state: GrayImage,
        episode_frames: Sequence[GrayImage] = (),
    ) -> PerceptualTemplate:
        return agent_template(self.descriptor, mirror_state, episode_frames)

    def distance_to_template(self, ta: PerceptualTemplate) -> float:
        features = _agent_features(crop_template(ta.image), self._goal_crop.shape, self.hog)
        return feature_distance(features, self._goal_features)

    def distance(self, mirror_state: GrayImage, episode_frames: Sequence[GrayImage] = ()) -> float:
        return self.distance_to_template(self.agent_template(mirror_state, episode_frames))

    def reward(self, mirror_state: GrayImage, episode_frames: Sequence[GrayImage] = ()) -> float:
        return reward_from_distance(self.distance(mirror_state, episode_frames))

    def rank_frames(self, frames: List[GrayImage]) -> List[Tuple[int, float]]:
        """(index, distance) pairs, best match first; ties keep input order."""
        scored = [(i, self.distance(frame)) for i, frame in enumerate(frames)]
        return sorted(scored, key=lambda item: item[1])
