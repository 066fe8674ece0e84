from fastapi import APIRouter, HTTPException, status, UploadFile, File, Form
from typing import List, Optional
import logging

from app.core.config import settings
from app.models.reward import RewardResponse, MotionRewardResponse
from app.prf_agent.motion_template_utils import MotionTemplateParams, compute_mt
from app.prf_agent.prf_utils import (
    DirectDescriptor,
    MotionDescriptor,
    PerceptualRewardFunction,
    PerceptualTemplate,
    PrfParams,
    TemplateRole,
    WindowDescriptor,
    reward_from_distance,
)
from app.utils.uploads import read_upload_frames, read_upload_image

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/rewards", tags=["Rewards"])

@router.post("/score", response_model=RewardResponse)
async def score_frame(
    frame: UploadFile = File(...),
    goal: UploadFile = File(...),
    variant: str = Form("direct"),
    cell_fraction: Optional[float] = Form(None),
    num_bins: Optional[int] = Form(None),
    norm_eps: Optional[float] = Form(None)
):
    """Perceptual reward of a mirror state against a direct goal image or a goal window."""
    if variant not in ("direct", "window"):
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"variant must be 'direct' or 'window', got '{variant}'"
        )
    frame_image = await read_upload_image(frame)
    goal_image = await read_upload_image(goal)

    try:
        params = PrfParams(
            cell_fraction=cell_fraction if cell_fraction is not None else settings.default_cell_fraction,
            num_bins=num_bins if num_bins is not None else settings.default_num_bins,
            norm_eps=norm_eps if norm_eps is not None else settings.default_norm_eps,
        )
        descriptor = DirectDescriptor(goal_image) if variant == "direct" else WindowDescriptor(goal_image)
        prf = PerceptualRewardFunction(descriptor, params)
        d = prf.distance(frame_image)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    except Exception as e:
        logger.error(f"Scoring failed: {e}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Failed to score frame: {str(e)}"
        )

    return RewardResponse(distance=d, reward=reward_from_distance(d), variant=variant, cell_size=prf.cell_size)

@router.post("/motion", response_model=MotionRewardResponse)
async def score_motion(
    frames: List[UploadFile] = File(...),
    goal_frames: List[UploadFile] = File(...)
):
    """Perceptual reward between the motion templates of two frame sequences."""
    agent_images = await read_upload_frames(frames, "frames")
    goal_images = await read_upload_frames(goal_frames, "goal_frames")

    try:
        mt_params = MotionTemplateParams(silhouette_threshold=settings.silhouette_threshold)
        prf = PerceptualRewardFunction(
            MotionDescriptor(goal_images, mt_params),
            PrfParams(
                cell_fraction=settings.default_cell_fraction,
                num_bins=settings.default_num_bins,
                norm_eps=settings.default_norm_eps,
            ),
        )
        agent = PerceptualTemplate(compute_mt(agent_images, mt_params).to_gray(), TemplateRole.AGENT)
        d = prf.distance_to_template(agent)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    except Exception as e:
        logger.error(f"Motion scoring failed: {e}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Failed to score motion: {str(e)}"
        )

    return MotionRewardResponse(
        distance=d,
        reward=reward_from_distance(d),
        frames=len(agent_images),
        goal_frames=len(goal_images)
    )
