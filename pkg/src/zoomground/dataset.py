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
Grounding datasets

Loads ScreenSpot-style JSON Lines annotations::

    {"img_filename": "a.png", "instruction": "...", "bbox": [x1, y1, x2, y2],
     "group": "Office", "ui_type": "text"}

and augments samples two ways: geometrically (black padding, then resize,
with the box remapped) and by asking an LLM for instruction variants.
"""

import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from PIL import Image

from .backends import BackendError, ChatBackend
from .geometry import NULL_BOX, ImageSize, PixelBox, round_half_up_div
from .prompts import build_augmentation_prompt

logger = logging.getLogger(__name__)


class UIType(str, Enum):
    TEXT = "text"
    ICON = "icon"


class VariantKind(str, Enum):
    """Kinds of instruction rewrites the augmenter can request."""

    WITH_LOCATION = "with_location"
    WITHOUT_LOCATION = "without_location"
    INTENTION = "intention"
    CONTEXTUAL = "contextual"


@dataclass(frozen=True)
class Sample:
    """
    One annotated grounding target.

    ``gt_box`` is in original-image pixels and is the null box exactly when
    the sample is infeasible. The provenance fields are set on augmented
    samples only.
    """

    sample_id: str
    image_ref: Path
    instruction: str
    gt_box: PixelBox
    category: str
    ui_type: UIType
    infeasible: bool = False
    image_size: Optional[ImageSize] = None
    variant_kind: Optional[VariantKind] = None
    source_instruction: Optional[str] = None
    source_model: Optional[str] = None

    def __post_init__(self):
        if not self.instruction or not self.instruction.strip():
            raise ValueError("instruction must not be empty")
        if not self.category:
            raise ValueError("category (group) must not be empty")
        if self.infeasible != self.gt_box.is_null:
            if self.infeasible:
                raise ValueError("infeasible sample must have bbox [0, 0, 0, 0]")
            raise ValueError("bbox [0, 0, 0, 0] is reserved for infeasible samples")
        if not self.infeasible and (self.gt_box.x1 < 0 or self.gt_box.y1 < 0):
            raise ValueError(f"bbox {self.gt_box.to_list()} has negative coordinates")
        if self.image_size is not None and not self.infeasible:
            b, s = self.gt_box, self.image_size
            if b.x1 < 0 or b.y1 < 0 or b.x2 > s.width or b.y2 > s.height:
                raise ValueError(f"bbox {b.to_list()} exceeds image size {s.width}x{s.height}")

    def to_record(self, image_root: Optional[Path] = None) -> Dict[str, Any]:
        """Serialize back to the annotation format."""
        image_ref = self.image_ref
        if image_root is not None:
            try:
                image_ref = image_ref.relative_to(image_root)
            except ValueError:
                pass
        record: Dict[str, Any] = {
            "id": self.sample_id,
            "img_filename": str(image_ref),
            "instruction": self.instruction,
            "bbox": self.gt_box.to_list(),
            "group": self.category,
            "ui_type": self.ui_type.value,
        }
        if self.infeasible:
            record["infeasible"] = True
        if self.image_size is not None:
            record["img_size"] = self.image_size.to_list()
        if self.variant_kind is not None:
            record["variant_kind"] = self.variant_kind.value
            record["source_instruction"] = self.source_instruction
            record["source_model"] = self.source_model
        return record


@dataclass(frozen=True)
class AnnotationError:
    line: int
    message: str


@dataclass
class LoadedDataset:
    """Valid samples in file order, plus the lines that failed validation."""

    samples: List[Sample] = field(default_factory=list)
    errors: List[AnnotationError] = field(default_factory=list)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]


def _round_coordinate(value: Union[int, float]) -> int:
    """Round an annotation coordinate half-up, exactly."""
    if isinstance(value, int):
        return value
    if not math.isfinite(value):
        raise ValueError(f"bbox value {value!r} is not finite")
    exact = Fraction(value)
    return round_half_up_div(exact.numerator, exact.denominator)


def _sample_from_record(record: Mapping[str, Any], line: int, image_root: Path) -> Sample:
    for key in ("img_filename", "instruction", "bbox", "group", "ui_type"):
        if key not in record:
            raise ValueError(f"missing field '{key}'")
    bbox = record["bbox"]
    if not isinstance(bbox, list) or len(bbox) != 4 or not all(isinstance(v, (int, float)) for v in bbox):
        raise ValueError(f"bbox must be a list of 4 numbers, got {bbox!r}")
    size = record.get("img_size")
    return Sample(
        sample_id=str(record.get("id", f"line{line}")),
        image_ref=image_root / record["img_filename"],
        instruction=str(record["instruction"]),
        gt_box=PixelBox(*(_round_coordinate(v) for v in bbox)),
        category=str(record["group"]),
        ui_type=UIType(str(record["ui_type"]).lower()),
        infeasible=bool(record.get("infeasible", False)),
        image_size=ImageSize(*size) if size else None,
        variant_kind=VariantKind(record["variant_kind"]) if record.get("variant_kind") else None,
        source_instruction=record.get("source_instruction"),
        source_model=record.get("source_model"),
    )


def load_dataset(path: Union[str, Path], image_root: Optional[Union[str, Path]] = None) -> LoadedDataset:
    """
    Load a JSON Lines annotation file.

    Invalid lines are skipped and reported in ``errors`` with their 1-based
    line numbers; blank lines are ignored.

    Args:
        path: Annotation file
        image_root: Directory that ``img_filename`` is relative to
            (defaults to the annotation file's directory)

    Returns:
        LoadedDataset: Samples in file order and per-line errors

    Raises:
        FileNotFoundError: If the file does not exist
    """
    ann_path = Path(path)
    if not ann_path.exists():
        raise FileNotFoundError(f"Annotation file not found: {path}")
    root = Path(image_root) if image_root is not None else ann_path.parent

    dataset = LoadedDataset()
    with open(ann_path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("line is not a JSON object")
                dataset.samples.append(_sample_from_record(record, number, root))
            except (ValueError, TypeError) as e:
                logger.warning(f"{ann_path.name}:{number}: {e}")
                dataset.errors.append(AnnotationError(number, str(e)))

    logger.info(f"Loaded {len(dataset.samples)} samples from {ann_path} ({len(dataset.errors)} rejected)")
    return dataset


def write_dataset(samples: Iterable[Sample], path: Union[str, Path], image_root: Optional[Path] = None) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(sample.to_record(image_root)) + "\n")
            count += 1
    return count


class AugmentationRejected(ValueError):
    """A geometric augmentation would leave the target box without area."""


@dataclass(frozen=True)
class GeometricAugmentSpec:
    """
    Padding (left, top, right, bottom) followed by an optional resize.

    When ``target_size`` is None the padded image keeps its size.
    """

    pad: Tuple[int, int, int, int] = (0, 0, 0, 0)
    target_size: Optional[ImageSize] = None

    def __post_init__(self):
        if len(self.pad) != 4 or any(p < 0 for p in self.pad):
            raise ValueError(f"pad must be four non-negative values, got {self.pad}")

    def padded_size(self, size: ImageSize) -> ImageSize:
        left, top, right, bottom = self.pad
        return ImageSize(size.width + left + right, size.height + top + bottom)

    def output_size(self, size: ImageSize) -> ImageSize:
        return self.target_size or self.padded_size(size)


def transform_box(box: PixelBox, spec: GeometricAugmentSpec, size: ImageSize) -> PixelBox:
    """Apply pad-then-resize to a box in an image of ``size``."""
    padded = spec.padded_size(size)
    out = spec.output_size(size)
    left, top = spec.pad[0], spec.pad[1]
    return PixelBox(
        round_half_up_div((box.x1 + left) * out.width, padded.width),
        round_half_up_div((box.y1 + top) * out.height, padded.height),
        round_half_up_div((box.x2 + left) * out.width, padded.width),
        round_half_up_div((box.y2 + top) * out.height, padded.height),
    )


def restore_box(box: PixelBox, spec: GeometricAugmentSpec, original_size: ImageSize) -> PixelBox:
    """Undo ``transform_box``: scale back to the padded size, then remove the padding."""
    padded = spec.padded_size(original_size)
    out = spec.output_size(original_size)
    left, top = spec.pad[0], spec.pad[1]
    return PixelBox.from_corners(
        round_half_up_div(box.x1 * padded.width, out.width) - left,
        round_half_up_div(box.y1 * padded.height, out.height) - top,
        round_half_up_div(box.x2 * padded.width, out.width) - left,
        round_half_up_div(box.y2 * padded.height, out.height) - top,
    )


def augment_geometry(
    s: Sample, image: Image.Image, spec: GeometricAugmentSpec
) -> Tuple[Sample, Image.Image]:
    """
    Pad a screenshot with black, optionally resize it, and remap the box.

    Args:
        s: Sample whose screenshot is ``image``
        image: The screenshot
        spec: Padding and target size

    Returns:
        Tuple of the remapped sample and the new image

    Raises:
        AugmentationRejected: If the remapped box has zero width or height
    """
    size = ImageSize(*image.size)
    padded_size = spec.padded_size(size)
    left, top = spec.pad[0], spec.pad[1]

    fill = 0 if image.mode in ("L", "P", "1", "I", "F") else (0,) * len(image.getbands())
    canvas = Image.new(image.mode, (padded_size.width, padded_size.height), fill)
    canvas.paste(image, (left, top))
    out_size = spec.output_size(size)
    if spec.target_size is not None and (out_size.width, out_size.height) != canvas.size:
        canvas = canvas.resize((out_size.width, out_size.height), Image.Resampling.BILINEAR)

    if s.infeasible:
        box = NULL_BOX
    else:
        box = transform_box(s.gt_box, spec, size)
        if box.width == 0 or box.height == 0:
            raise AugmentationRejected(
                f"Sample {s.sample_id}: box {s.gt_box.to_list()} collapses to {box.to_list()} "
                f"at {out_size.width}x{out_size.height}"
            )
    return replace(s, gt_box=box, image_size=out_size), canvas


class GeometrySampler:
    """Seeded source of random pad/resize specs."""

    def __init__(self, max_pad: int = 200, scale_range: Tuple[float, float] = (0.5, 1.5), seed: Optional[int] = None):
        low, high = scale_range
        if max_pad < 0 or not 0 < low <= high:
            raise ValueError(f"Invalid sampler ranges: max_pad={max_pad}, scale_range={scale_range}")
        self.max_pad = max_pad
        self.scale_range = (low, high)
        self._rng = random.Random(seed)

    def sample(self, size: ImageSize) -> GeometricAugmentSpec:
        pad = tuple(self._rng.randint(0, self.max_pad) for _ in range(4))
        scale = self._rng.uniform(*self.scale_range)
        padded_w = size.width + pad[0] + pad[2]
        padded_h = size.height + pad[1] + pad[3]
        target = ImageSize(max(1, round(padded_w * scale)), max(1, round(padded_h * scale)))
        return GeometricAugmentSpec(pad=pad, target_size=target)


def augment_instruction(
    s: Sample,
    backend: ChatBackend,
    variant_kinds: Sequence[Union[VariantKind, str]],
    templates: Mapping[str, str],
    image: Optional[Image.Image] = None,
) -> List[Sample]:
    """
    Ask an LLM for instruction variants of one sample.

    The source sample always comes first in the result, followed by one
    sample per variant that came back non-empty and different from the
    source. A failed request skips its kind with a warning.

    Args:
        s: Source sample
        backend: Chat backend that writes the variants
        variant_kinds: Kinds to request
        templates: Prompt template per kind name
        image: Screenshot; loaded from ``s.image_ref`` when omitted

    Returns:
        List[Sample]: The source sample and its variants
    """
    kinds = [VariantKind(k) for k in variant_kinds]
    results = [s]
    if not kinds:
        return results
    if image is None:
        with Image.open(s.image_ref) as opened:
            image = opened.convert("RGB")

    for kind in kinds:
        template = templates.get(kind.value)
        if template is None:
            raise ValueError(f"No augmentation template configured for '{kind.value}'")
        try:
            outcome = backend.complete(build_augmentation_prompt(template, s.instruction, image))
        except BackendError as e:
            logger.warning(f"Sample {s.sample_id}: {kind.value} variant failed, keeping source only: {e}")
            continue
        text = outcome.text.strip()
        if not text or text == s.instruction.strip():
            logger.warning(f"Sample {s.sample_id}: {kind.value} variant was empty or unchanged, skipped")
            continue
        results.append(
            replace(
                s,
                sample_id=f"{s.sample_id}-{kind.value}",
                instruction=text,
                variant_kind=kind,
                source_instruction=s.instruction,
                source_model=backend.model_name,
            )
        )
    return results
