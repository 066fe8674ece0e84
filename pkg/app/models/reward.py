from pydantic import BaseModel, Field
from typing import List, Literal

class RewardResponse(BaseModel):
    distance: float = Field(..., ge=0)
    reward: float = Field(..., gt=0, le=1)
    variant: Literal["direct", "window"]
    cell_size: int

class MotionRewardResponse(BaseModel):
    distance: float = Field(..., ge=0)
    reward: float = Field(..., gt=0, le=1)
    frames: int
    goal_frames: int

class HogResponse(BaseModel):
    length: int
    norm: float
    values: List[float]
