import io
import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from app.prf_agent.imaging_utils import GrayImage, as_gray, from_uint8

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = {".pgm", ".png"}

PathLike = Union[str, Path]


def _to_gray(image: Image.Image) -> GrayImage:
    """Convert any Pillow image to a [0, 1] grayscale array."""
    if image.mode != "L":
        image = image.convert("L")
    return as_gray(from_uint8(np.asarray(image, dtype=np.uint8)))


def load_image(path: PathLike) -> GrayImage:
    """Read a PGM/PNG (or any Pillow-readable) file as a GrayImage."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Image file not found: {path}")
    try:
        with Image.open(path) as image:
            return _to_gray(image)
    except UnidentifiedImageError as e:
        raise ValueError(f"Unreadable image {path}: {e}")


def decode_image_bytes(contents: bytes) -> GrayImage:
    """Decode uploaded image bytes."""
    try:
        with Image.open(io.BytesIO(contents)) as image:
            return _to_gray(image)
    except UnidentifiedImageError as e:
        raise ValueError(f"Unreadable image upload: {e}")


def to_uint8(img: GrayImage) -> np.ndarray:
    return np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_pgm(img: GrayImage) -> bytes:
    """Binary PGM (P5, maxval 255) encoding."""
    output = io.BytesIO()
    Image.fromarray(to_uint8(img)).save(output, format="PPM")
    return output.getvalue()


def save_image(img: GrayImage, path: PathLike) -> Path:
    """
    Write an image as PGM when the suffix is ``.pgm``, otherwise let Pillow
    pick the format from the suffix (PNG is the usual alternative).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = Image.fromarray(to_uint8(img))
    if path.suffix.lower() == ".pgm":
        image.save(path, format="PPM")
    else:
        image.save(path)
    logger.debug(f"Wrote image {path}")
    return path


def list_frames(directory: PathLike) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Frame directory not found: {directory}")
    return sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES
    )


def load_frames(directory: PathLike) -> List[GrayImage]:
    """Load every PGM/PNG frame of a directory in lexicographic order."""
    paths = list_frames(directory)
    if not paths:
        raise ValueError(f"No PGM/PNG frames found in {directory}")
    return [load_image(p) for p in paths]
