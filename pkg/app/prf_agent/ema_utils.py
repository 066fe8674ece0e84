"""
Exponential moving average (EMA) states: a_t = (1 - lambda) * s_t + lambda * a_{t-1}
"""
from dataclasses import dataclass

import numpy as np

from app.prf_agent.imaging_utils import GrayImage, ImageShapeError, ParameterError


@dataclass(frozen=True)
class EmaState:
    image: GrayImage
    lam: float


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam < 1.0:
        raise ParameterError(f"EMA lambda must lie in [0, 1), got {lam}")


def ema_init(s0: GrayImage, lam: float) -> EmaState:
    """a_0 := s_0"""
    _check_lambda(lam)
    return EmaState(image=np.array(s0, dtype=np.float64), lam=lam)


def ema_update(prev: EmaState, s_t: GrayImage) -> EmaState:
    s_t = np.asarray(s_t, dtype=np.float64)
    if s_t.shape != prev.image.shape:
        raise ImageShapeError(
            f"EMA state {prev.image.shape} and frame {s_t.shape} differ"
        )
    if prev.lam == 0.0:
        return EmaState(image=s_t.copy(), lam=prev.lam)
    blended = np.clip((1.0 - prev.lam) * s_t + prev.lam * prev.image, 0.0, 1.0)
    return EmaState(image=blended, lam=prev.lam)
