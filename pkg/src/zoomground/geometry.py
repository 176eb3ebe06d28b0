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
Pixel-space geometry

Integer points and boxes in screenshot coordinates, plus the predicates the
reward, zoom and evaluation code is built on. Everything here is a pure value
operation.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple


def round_half_up_div(numerator: int, denominator: int) -> int:
    """
    Divide two integers and round the exact quotient half-up.

    Args:
        numerator: Dividend
        denominator: Positive divisor

    Returns:
        int: ``floor(numerator / denominator + 1/2)`` computed without floats
    """
    if denominator <= 0:
        raise ValueError(f"Denominator must be positive, got {denominator}")
    return (2 * numerator + denominator) // (2 * denominator)


@dataclass(frozen=True)
class PixelPoint:
    """A click target in integer pixel coordinates."""

    x: int
    y: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"Point coordinates must be non-negative: ({self.x}, {self.y})")

    def to_list(self) -> List[int]:
        return [self.x, self.y]


@dataclass(frozen=True)
class PixelBox:
    """An axis-aligned box given by its top-left and bottom-right corners."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(
                f"Box corners out of order: ({self.x1},{self.y1}),({self.x2},{self.y2})"
            )

    @classmethod
    def null(cls) -> "PixelBox":
        """The all-zero box used by the null action."""
        return cls(0, 0, 0, 0)

    @classmethod
    def from_corners(cls, ax: int, ay: int, bx: int, by: int) -> "PixelBox":
        """Build a box from two arbitrary corners, swapping them into order."""
        return cls(min(ax, bx), min(ay, by), max(ax, bx), max(ay, by))

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "PixelBox":
        if len(values) != 4:
            raise ValueError(f"Box needs 4 coordinates, got {len(values)}")
        return cls(*(int(v) for v in values))

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def is_null(self) -> bool:
        return self == NULL_BOX

    def to_list(self) -> List[int]:
        return [self.x1, self.y1, self.x2, self.y2]


NULL_BOX = PixelBox(0, 0, 0, 0)
ORIGIN = PixelPoint(0, 0)


@dataclass(frozen=True)
class ImageSize:
    """Width and height of a raster image in pixels."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"Image size must be positive: {self.width}x{self.height}")

    def to_list(self) -> List[int]:
        return [self.width, self.height]


def point_in_box(p: PixelPoint, b: PixelBox) -> bool:
    """Closed-interval membership: boundary points count as inside."""
    return b.x1 <= p.x <= b.x2 and b.y1 <= p.y <= b.y2


def box_dims(b: PixelBox) -> Tuple[int, int]:
    """Return ``(width, height)`` of a box."""
    return b.width, b.height


def box_area(b: PixelBox) -> int:
    return b.width * b.height


def box_center(b: PixelBox) -> PixelPoint:
    """Integer center of a box, rounding half-up."""
    return PixelPoint(
        round_half_up_div(b.x1 + b.x2, 2), round_half_up_div(b.y1 + b.y2, 2)
    )


def iou(a: PixelBox, b: PixelBox) -> float:
    """
    Intersection over union using continuous box areas.

    Args:
        a: First box
        b: Second box

    Returns:
        float: Overlap ratio in [0, 1]; 0 when the union has no area
    """
    inter_w = max(0, min(a.x2, b.x2) - max(a.x1, b.x1))
    inter_h = max(0, min(a.y2, b.y2) - max(a.y1, b.y1))
    intersection = inter_w * inter_h
    union = box_area(a) + box_area(b) - intersection
    if union <= 0:
        return 0.0
    return intersection / union


def _clip(value: int, low: int, high: int) -> int:
    return max(low, min(value, high))


def clamp_box(b: PixelBox, s: ImageSize) -> PixelBox:
    """Clip every coordinate into ``[0, width]`` x ``[0, height]``."""
    return PixelBox(
        _clip(b.x1, 0, s.width),
        _clip(b.y1, 0, s.height),
        _clip(b.x2, 0, s.width),
        _clip(b.y2, 0, s.height),
    )


def clamp_point(p: PixelPoint, s: ImageSize) -> PixelPoint:
    """Clip a point onto the last addressable pixel row/column."""
    return PixelPoint(_clip(p.x, 0, s.width - 1), _clip(p.y, 0, s.height - 1))
