# Copyright 2025 The zoomground authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Policy-optimization rewards

Scores a raw grounding response against a ground-truth box. The total is a
weighted mix of a point reward (format x point-in-box) and a box reward
(format x IoU). Trainers import ``compute_reward``; ``score_jsonl`` scores
whole files for trainers that shell out.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Union

from .action_grammar import parse_box_segment, parse_click_segment
from .geometry import ORIGIN, PixelBox, iou, point_in_box

logger = logging.getLogger(__name__)


class Combination(str, Enum):
    """How a format reward combines with its content reward."""

    GATED = "gated"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class RewardWeights:
    """
    Reward mixing parameters.

    Attributes:
        lam: Weight of the point reward; the box reward gets ``1 - lam``
        combination: ``gated`` multiplies format and content, ``additive``
            gives half credit for format and half for format-gated content
    """

    lam: float = 0.5
    combination: Combination = Combination.GATED

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        object.__setattr__(self, "combination", Combination(self.combination))


@dataclass(frozen=True)
class RewardBreakdown:
    format_point: int
    point_in_box: int
    format_bbox: int
    iou: float
    r_point: float
    r_bbox: float
    total: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def format_reward_point(text: str) -> int:
    """1 when the response opens with a canonical click segment."""
    return int(parse_click_segment(text) is not None)


def format_reward_bbox(text: str) -> int:
    """1 when the response ends with a canonical box segment."""
    return int(parse_box_segment(text) is not None)


def _combine(fmt: int, content: float, combination: Combination) -> float:
    if combination is Combination.ADDITIVE:
        return 0.5 * fmt + 0.5 * fmt * content
    return fmt * content


def compute_reward(text: str, gt_box: PixelBox, w: RewardWeights) -> RewardBreakdown:
    """
    Score one response.

    A null ground truth (infeasible sample) rewards exactly the null answer:
    the point term is 1 for a zero click-point and the box term is 1 for an
    all-zero box.

    Args:
        text: Raw model output
        gt_box: Ground-truth element box in the same pixel space
        w: Mixing weights

    Returns:
        RewardBreakdown: every component plus the weighted total
    """
    point = parse_click_segment(text)
    box = parse_box_segment(text)
    format_point = int(point is not None)
    format_bbox = int(box is not None)

    if gt_box.is_null:
        hit = int(point is not None and point == ORIGIN)
        overlap = 1.0 if box is not None and box.is_null else 0.0
    else:
        hit = int(point is not None and point_in_box(point, gt_box))
        overlap = iou(box, gt_box) if box is not None else 0.0

    r_point = _combine(format_point, hit, w.combination)
    r_bbox = _combine(format_bbox, overlap, w.combination)
    total = w.lam * r_point + (1.0 - w.lam) * r_bbox
    return RewardBreakdown(
        format_point=format_point,
        point_in_box=hit,
        format_bbox=format_bbox,
        iou=overlap,
        r_point=r_point,
        r_bbox=r_bbox,
        total=total,
    )


def _score_line(line: str, weights: RewardWeights) -> Dict[str, Any]:
    record = json.loads(line)
    gt_box = PixelBox.from_list(record["gt_box"])
    return compute_reward(record["response_text"], gt_box, weights).to_dict()


def score_jsonl(
    input_file: Union[str, Path],
    output_file: Union[str, Path],
    weights: RewardWeights,
    workers: int = 1,
) -> int:
    """
    Score a JSON Lines file of ``{response_text, gt_box}`` records.

    Output rows keep input order. Lines that cannot be decoded produce an
    ``{"error": ...}`` row so the line numbering still lines up.

    Args:
        input_file: Path to the input records
        output_file: Path for RewardBreakdown rows
        weights: Mixing weights
        workers: Thread count

    Returns:
        int: Number of rows written
    """
    input_path = Path(input_file)
    if not input_path.exists():
        raise FileNotFoundError(f"Reward input not found: {input_file}")

    lines = [ln for ln in input_path.read_text(encoding="utf-8").splitlines() if ln.strip()]

    def score(item):
        number, line = item
        try:
            return _score_line(line, weights)
        except (ValueError, KeyError, TypeError) as e:
            logger.warning(f"Line {number}: cannot score record: {e}")
            return {"error": str(e)}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(score, enumerate(lines, start=1)))

    with open(output_file, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")

    logger.info(f"Scored {len(rows)} responses into {output_file}")
    return len(rows)
