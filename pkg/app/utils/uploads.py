from fastapi import HTTPException, UploadFile, status
from typing import List
import logging

from app.core.config import settings
from app.prf_agent.imaging_utils import GrayImage
from app.utils.image_io import decode_image_bytes

logger = logging.getLogger(__name__)

async def read_upload_image(file: UploadFile) -> GrayImage:
    """Read an uploaded image, enforcing the size limit."""
    contents = await file.read()
    if len(contents) > settings.max_upload_bytes:
        raise HTTPException(
            status_code=status.HTTP_413_REQUEST_ENTITY_TOO_LARGE,
            detail=f"{file.filename} is larger than {settings.max_upload_bytes} bytes"
        )
    try:
        return decode_image_bytes(contents)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"{file.filename}: {str(e)}"
        )

async def read_upload_frames(files: List[UploadFile], field: str) -> List[GrayImage]:
    """Uploaded frame sequence, in upload order."""
    if len(files) < 2:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"{field} needs at least 2 frames, got {len(files)}"
        )
    frames = [await read_upload_image(f) for f in files]
    logger.info(f"Decoded {len(frames)} frames for {field}")
    return frames
