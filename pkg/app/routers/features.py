from fastapi import APIRouter, HTTPException, status, UploadFile, File, Form
from fastapi.responses import Response
from typing import List
import logging

import numpy as np

from app.core.config import settings
from app.models.reward import HogResponse
from app.prf_agent.hog_utils import HogParams, hog_features
from app.prf_agent.motion_template_utils import MotionTemplateParams, compute_mt
from app.utils.image_io import encode_pgm
from app.utils.uploads import read_upload_frames, read_upload_image

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/features", tags=["Features"])

@router.post("/hog", response_model=HogResponse)
async def hog(
    image: UploadFile = File(...),
    cell_size: int = Form(8),
    num_bins: int = Form(settings.default_num_bins)
):
    """HOG feature vector of an image."""
    img = await read_upload_image(image)
    try:
        features = hog_features(img, HogParams(cell_size=cell_size, num_bins=num_bins))
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    return HogResponse(length=int(features.size), norm=float(np.linalg.norm(features)), values=features.tolist())

@router.post("/motion-template")
async def motion_template(frames: List[UploadFile] = File(...)):
    """Exported motion template of a frame sequence, as a binary PGM."""
    images = await read_upload_frames(frames, "frames")
    try:
        template = compute_mt(images, MotionTemplateParams(silhouette_threshold=settings.silhouette_threshold))
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    return Response(content=encode_pgm(template.to_gray()), media_type="image/x-portable-graymap")
