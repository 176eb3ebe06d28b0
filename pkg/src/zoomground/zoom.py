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
Conditional zoom-in

Decides when a first-pass box is small enough to justify a second look,
builds the crop window around the click-point, resizes the crop back to the
screenshot size and maps second-pass coordinates back to the screenshot.

Coordinate maps use exact integer arithmetic (crop size over output size)
so the stored float scales never introduce drift.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

from PIL import Image

from .geometry import (
    ImageSize,
    PixelBox,
    PixelPoint,
    box_dims,
    clamp_point,
    round_half_up_div,
)

logger = logging.getLogger(__name__)


class ZoomMode(str, Enum):
    """When the second grounding pass runs."""

    CONDITIONAL = "conditional"
    ALWAYS = "always"
    NEVER = "never"


@dataclass(frozen=True)
class ZoomConfig:
    """
    Zoom thresholds and ratio.

    Attributes:
        alpha: Smaller size threshold in screenshot pixels
        beta: Larger size threshold in screenshot pixels
        ratio: Linear zoom factor; the crop is ``1/ratio`` of the screenshot
    """

    alpha: int = 100
    beta: int = 300
    ratio: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha < self.beta:
            raise ValueError(
                f"Zoom thresholds need 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}"
            )
        if self.ratio <= 1:
            raise ValueError(f"Zoom ratio must be greater than 1, got {self.ratio}")


@dataclass(frozen=True)
class ZoomTransform:
    """
    Where a crop came from and how it was scaled.

    ``output_size`` is also the size of the original screenshot, since the
    crop is resized back to it.
    """

    crop_origin: PixelPoint
    crop_size: ImageSize
    output_size: ImageSize

    def __post_init__(self):
        if (
            self.crop_origin.x + self.crop_size.width > self.output_size.width
            or self.crop_origin.y + self.crop_size.height > self.output_size.height
        ):
            raise ValueError(
                f"Crop window at ({self.crop_origin.x},{self.crop_origin.y}) "
                f"size {self.crop_size.width}x{self.crop_size.height} exceeds "
                f"{self.output_size.width}x{self.output_size.height} image"
            )

    @property
    def scale_x(self) -> float:
        return self.output_size.width / self.crop_size.width

    @property
    def scale_y(self) -> float:
        return self.output_size.height / self.crop_size.height

    @property
    def crop_box(self) -> PixelBox:
        """The crop window in original-image coordinates."""
        return PixelBox(
            self.crop_origin.x,
            self.crop_origin.y,
            self.crop_origin.x + self.crop_size.width,
            self.crop_origin.y + self.crop_size.height,
        )

    def to_dict(self) -> dict:
        return {
            "crop_origin": self.crop_origin.to_list(),
            "crop_size": self.crop_size.to_list(),
            "output_size": self.output_size.to_list(),
            "scale": [self.scale_x, self.scale_y],
        }


def zoom_condition(width: int, height: int, cfg: ZoomConfig) -> bool:
    """The raw two-threshold test on a box's width and height."""
    return (width <= cfg.alpha and height <= cfg.beta) or (
        height <= cfg.alpha and width <= cfg.beta
    )


def should_zoom(box: PixelBox, cfg: ZoomConfig) -> bool:
    """
    Whether a first-pass box is small enough to zoom on.

    The null box never zooms, although its 0x0 size satisfies the raw
    condition.
    """
    if box.is_null:
        return False
    width, height = box_dims(box)
    return zoom_condition(width, height, cfg)


def _window_start(center: int, extent: int, limit: int) -> int:
    return max(0, min(center - extent // 2, limit - extent))


def compute_zoom_window(click: PixelPoint, img: ImageSize, cfg: ZoomConfig) -> ZoomTransform:
    """
    Center a ``1/ratio`` crop on the click, sliding it back inside the image.

    The window is translated rather than shrunk near edges, so its size is
    always ``(floor(W / ratio), floor(H / ratio))``.
    """
    click = clamp_point(click, img)
    crop_w = max(1, math.floor(img.width / cfg.ratio))
    crop_h = max(1, math.floor(img.height / cfg.ratio))
    origin = PixelPoint(
        _window_start(click.x, crop_w, img.width),
        _window_start(click.y, crop_h, img.height),
    )
    return ZoomTransform(
        crop_origin=origin,
        crop_size=ImageSize(crop_w, crop_h),
        output_size=img,
    )


def _to_original(value: int, origin: int, crop: int, output: int, upper: int) -> int:
    mapped = origin + round_half_up_div(value * crop, output)
    return max(0, min(mapped, upper))


def map_point_to_original(p: PixelPoint, t: ZoomTransform) -> PixelPoint:
    """Map a zoomed-space click-point back onto the screenshot."""
    return PixelPoint(
        _to_original(p.x, t.crop_origin.x, t.crop_size.width, t.output_size.width, t.output_size.width - 1),
        _to_original(p.y, t.crop_origin.y, t.crop_size.height, t.output_size.height, t.output_size.height - 1),
    )


def map_box_to_original(b: PixelBox, t: ZoomTransform) -> PixelBox:
    """Map a zoomed-space box back onto the screenshot, corner by corner."""
    w, h = t.output_size.width, t.output_size.height
    cw, ch = t.crop_size.width, t.crop_size.height
    ox, oy = t.crop_origin.x, t.crop_origin.y
    return PixelBox.from_corners(
        _to_original(b.x1, ox, cw, w, w),
        _to_original(b.y1, oy, ch, h, h),
        _to_original(b.x2, ox, cw, w, w),
        _to_original(b.y2, oy, ch, h, h),
    )


def map_point_to_zoomed(p: PixelPoint, t: ZoomTransform) -> PixelPoint:
    """
    Forward map: where a screenshot point lands in the zoomed image.

    Points outside the crop window are clipped onto its edge.
    """
    dx = max(0, min(p.x - t.crop_origin.x, t.crop_size.width))
    dy = max(0, min(p.y - t.crop_origin.y, t.crop_size.height))
    return PixelPoint(
        min(round_half_up_div(dx * t.output_size.width, t.crop_size.width), t.output_size.width - 1),
        min(round_half_up_div(dy * t.output_size.height, t.crop_size.height), t.output_size.height - 1),
    )


def crop_and_resize(image: Image.Image, t: ZoomTransform) -> Image.Image:
    """
    Cut the crop window out of the screenshot and scale it back up.

    Args:
        image: The original screenshot
        t: Transform from ``compute_zoom_window``

    Returns:
        Image.Image: Bilinear-resized crop of exactly ``t.output_size``

    Raises:
        ValueError: If the screenshot size differs from the transform's
    """
    if image.size != (t.output_size.width, t.output_size.height):
        raise ValueError(
            f"Image is {image.size[0]}x{image.size[1]} but transform expects "
            f"{t.output_size.width}x{t.output_size.height}"
        )
    crop = image.crop(tuple(t.crop_box.to_list()))
    return crop.resize(
        (t.output_size.width, t.output_size.height), Image.Resampling.BILINEAR
    )


def save_zoom_crop(image: Image.Image, directory: Union[str, Path], stem: str) -> Path:
    """Write a zoomed crop as PNG for debugging and return its path."""
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{stem}.png"
    image.save(path, format="PNG")
    logger.debug(f"Saved zoom crop to {path}")
    return path
