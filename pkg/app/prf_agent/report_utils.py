"""
Analysis artifacts: ranked reward reports over a frame directory and
per-episode distance traces of a finished run.
"""
import csv
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.prf_agent.prf_utils import (
    MotionDescriptor,
    PerceptualRewardFunction,
    PerceptualTemplate,
    TemplateRole,
    reward_from_distance,
)
from app.utils.image_io import list_frames, load_image, save_image

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["rank", "frame", "distance", "reward"]
TRACE_COLUMNS = ["episode", "distance_D"]

_EPISODE_TEMPLATE = re.compile(r"episode_(\d+)\.pgm$")


@dataclass(frozen=True)
class RankedFrame:
    rank: int
    frame: Path
    distance: float
    reward: float


def reward_report(
    frames_dir: Union[str, Path],
    prf: PerceptualRewardFunction,
    out_dir: Union[str, Path],
) -> List[RankedFrame]:
    """
    Score every frame against the goal, best first, and write
    ``reward_report.csv`` plus copies of the best and worst frames.
    """
    if isinstance(prf.descriptor, MotionDescriptor):
        raise ValueError("Reward reports score single frames; use a direct or window descriptor")
    paths = list_frames(frames_dir)
    if not paths:
        raise ValueError(f"No .pgm or .png frames found in {frames_dir}")

    frames = [load_image(path) for path in paths]
    ranked = [
        RankedFrame(rank=rank, frame=paths[index], distance=d, reward=reward_from_distance(d))
        for rank, (index, d) in enumerate(prf.rank_frames(frames), start=1)
    ]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "reward_report.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for item in ranked:
            writer.writerow({
                "rank": item.rank,
                "frame": item.frame.name,
                "distance": f"{item.distance:.10g}",
                "reward": f"{item.reward:.10g}",
            })

    index_of = {path: i for i, path in enumerate(paths)}
    save_image(frames[index_of[ranked[0].frame]], out_dir / "best.pgm")
    save_image(frames[index_of[ranked[-1].frame]], out_dir / "worst.pgm")
    logger.info(
        f"Ranked {len(ranked)} frames: best {ranked[0].frame.name} (D={ranked[0].distance:.4f}), "
        f"worst {ranked[-1].frame.name} (D={ranked[-1].distance:.4f})"
    )
    return ranked


def _template_trace(templates_dir: Path, prf: PerceptualRewardFunction) -> List[Tuple[int, float]]:
    trace = []
    for path in sorted(templates_dir.glob("episode_*.pgm")):
        match = _EPISODE_TEMPLATE.search(path.name)
        if match is None:
            continue
        template = PerceptualTemplate(load_image(path), TemplateRole.AGENT)
        trace.append((int(match.group(1)), prf.distance_to_template(template)))
    return trace


def _logged_trace(train_csv: Path) -> List[Tuple[int, float]]:
    trace = []
    with open(train_csv, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            d = float(row["distance_D"])
            if not math.isnan(d):
                trace.append((int(row["episode"]), d))
    return trace


def distance_trace(
    run_dir: Union[str, Path],
    prf: PerceptualRewardFunction,
    out_path: Union[str, Path],
) -> List[Tuple[int, float]]:
    """
    Per-episode D of a run. Saved agent templates are rescored against the
    given goal; without them the distances logged in train.csv are used.
    """
    run_dir = Path(run_dir)
    templates_dir = run_dir / "templates"
    trace: List[Tuple[int, float]] = []
    if templates_dir.is_dir():
        trace = _template_trace(templates_dir, prf)
    if not trace and (run_dir / "train.csv").is_file():
        logger.info(f"No saved templates in {run_dir}; using distances from train.csv")
        trace = _logged_trace(run_dir / "train.csv")
    if not trace:
        raise FileNotFoundError(f"No episode templates or logged distances found in {run_dir}")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for episode, d in trace:
            writer.writerow({"episode": episode, "distance_D": f"{d:.10g}"})
    logger.info(f"Wrote {len(trace)} distances to {out_path}")
    return trace


def quartile_means(values: Sequence[float]) -> Tuple[float, float]:
    """Mean of the first and of the last quarter of a series."""
    if len(values) < 4:
        raise ValueError(f"Need at least 4 values for quartile means, got {len(values)}")
    quarter = len(values) // 4
    data = np.asarray(values, dtype=np.float64)
    return float(data[:quarter].mean()), float(data[-quarter:].mean())
