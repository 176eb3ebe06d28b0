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
Grounding pipeline

One sample goes through these stages:

1. optional instruction refinement,
2. first grounding pass on the full screenshot,
3. if the first box is small (or zoom is forced), a second pass on a crop
   around the first click-point, resized back to the screenshot size,
4. second-pass coordinates mapped back into screenshot space.

A second pass that fails to parse or answers null falls back to the first
pass. There is never a third pass.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from PIL import Image

from .action_grammar import FormatError, GroundingAction, parse_grounding_output, serialize
from .backends import BackendConfig, BackendError, ChatBackend, create_backend
from .geometry import NULL_BOX, ORIGIN, ImageSize, PixelBox, PixelPoint, clamp_box, clamp_point
from .prompts import build_grounding_prompt, build_refinement_prompt
from .zoom import (
    ZoomConfig,
    ZoomMode,
    ZoomTransform,
    compute_zoom_window,
    crop_and_resize,
    map_box_to_original,
    map_point_to_original,
    save_zoom_crop,
    should_zoom,
)

logger = logging.getLogger(__name__)


class Fallback(str, Enum):
    REFINE_FAILED = "refine_failed"
    SECOND_PARSE_FAILED = "second_parse_failed"
    SECOND_NULL = "second_null"


@dataclass(frozen=True)
class PipelineConfig:
    """
    Pipeline switches.

    Attributes:
        zoom: Thresholds and ratio
        zoom_mode: ``conditional`` applies the size test, ``always`` zooms
            every parsed non-null answer, ``never`` is single-pass
        refinement_enabled: Run the refiner before grounding
        refiner: Refiner endpoint, required when refinement is enabled and
            backends are built from config
        grounder: Grounder endpoint
    """

    zoom: ZoomConfig = field(default_factory=ZoomConfig)
    zoom_mode: ZoomMode = ZoomMode.CONDITIONAL
    refinement_enabled: bool = True
    refiner: Optional[BackendConfig] = None
    grounder: Optional[BackendConfig] = None

    @property
    def zoom_enabled(self) -> bool:
        return self.zoom_mode is not ZoomMode.NEVER


@dataclass
class GroundingResult:
    """
    Outcome of one sample, always in original-screenshot coordinates.

    ``first_pass`` is None when the first response did not parse; the
    violation is then in ``first_pass_error`` and the final answer is null.
    """

    final_point: PixelPoint
    final_box: PixelBox
    first_pass: Optional[GroundingAction]
    first_pass_error: Optional[FormatError] = None
    second_pass: Optional[GroundingAction] = None
    second_pass_error: Optional[FormatError] = None
    zoom_applied: bool = False
    zoom_transform: Optional[ZoomTransform] = None
    refined_instruction: Optional[str] = None
    fallbacks: List[Fallback] = field(default_factory=list)
    timings_ms: Dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def unparseable(self) -> bool:
        return self.first_pass is None

    @property
    def is_null(self) -> bool:
        """True when the model answered with the null action."""
        return (
            self.first_pass is not None
            and self.final_point == ORIGIN
            and self.final_box == NULL_BOX
        )

    def to_dict(self) -> Dict[str, Any]:
        def action(a: Optional[GroundingAction]) -> Optional[Dict[str, Any]]:
            if a is None:
                return None
            return {
                "verb": a.verb.value,
                "point": a.point.to_list(),
                "box": a.box.to_list(),
                "raw_text": a.raw_text,
                "canonical": serialize(a),
            }

        def error(e: Optional[FormatError]) -> Optional[Dict[str, str]]:
            return None if e is None else {"kind": e.kind.value, "detail": e.detail}

        return {
            "final_point": self.final_point.to_list(),
            "final_box": self.final_box.to_list(),
            "first_pass": action(self.first_pass),
            "first_pass_error": error(self.first_pass_error),
            "second_pass": action(self.second_pass),
            "second_pass_error": error(self.second_pass_error),
            "zoom_applied": self.zoom_applied,
            "zoom_transform": self.zoom_transform.to_dict() if self.zoom_transform else None,
            "refined_instruction": self.refined_instruction,
            "fallbacks": [f.value for f in self.fallbacks],
            "timings_ms": dict(self.timings_ms),
            "unparseable": self.unparseable,
        }


class GroundingPipeline:
    """Two-stage grounding over pluggable backends."""

    def __init__(
        self,
        config: PipelineConfig,
        grounder: ChatBackend,
        refiner: Optional[ChatBackend] = None,
        dump_dir: Optional[Union[str, Path]] = None,
    ):
        """
        Args:
            config: Pipeline switches
            grounder: Backend answering grounding prompts
            refiner: Backend answering refinement prompts
            dump_dir: If set, zoomed crops are saved there as PNG
        """
        if config.refinement_enabled and refiner is None:
            raise ValueError("Refinement is enabled but no refiner backend was given")
        self.config = config
        self.grounder = grounder
        self.refiner = refiner
        self.dump_dir = Path(dump_dir) if dump_dir else None

    @classmethod
    def from_config(cls, config: PipelineConfig, dump_dir: Optional[Union[str, Path]] = None) -> "GroundingPipeline":
        """Build HTTP backends for the endpoints named in ``config``."""
        if config.grounder is None:
            raise ValueError("Pipeline config has no grounder backend")
        refiner = None
        if config.refinement_enabled:
            if config.refiner is None:
                raise ValueError("Refinement is enabled but no refiner backend is configured")
            refiner = create_backend(config.refiner)
        return cls(config, create_backend(config.grounder), refiner, dump_dir)

    def with_switches(self, zoom_mode: ZoomMode, refinement_enabled: bool) -> "GroundingPipeline":
        """A pipeline over the same backends with other zoom and refinement switches."""
        config = replace(self.config, zoom_mode=zoom_mode, refinement_enabled=refinement_enabled)
        return GroundingPipeline(config, self.grounder, self.refiner, self.dump_dir)

    def _refine(self, instruction: str, image: Image.Image, fallbacks: List[Fallback]) -> Optional[str]:
        try:
            outcome = self.refiner.complete(build_refinement_prompt(instruction, image))
        except BackendError as e:
            logger.warning(f"Refinement failed, grounding the original instruction: {e}")
            fallbacks.append(Fallback.REFINE_FAILED)
            return None
        refined = outcome.text.strip()
        if not refined:
            logger.warning("Refiner returned an empty instruction, grounding the original one")
            fallbacks.append(Fallback.REFINE_FAILED)
            return None
        return refined

    def _wants_zoom(self, action: GroundingAction) -> bool:
        if action.is_null:
            return False
        if self.config.zoom_mode is ZoomMode.ALWAYS:
            return True
        if self.config.zoom_mode is ZoomMode.CONDITIONAL:
            return should_zoom(action.box, self.config.zoom)
        return False

    def ground(self, instruction: str, image: Image.Image, sample_id: Optional[str] = None) -> GroundingResult:
        """
        Ground one instruction on one screenshot.

        Args:
            instruction: Natural-language task
            image: Screenshot
            sample_id: Used to name crop dumps

        Returns:
            GroundingResult: Final answer and per-stage details

        Raises:
            ValueError: If the instruction is empty
            BackendError: If a grounding request fails after retries
        """
        if not instruction or not instruction.strip():
            raise ValueError("Instruction must not be empty")
        size = ImageSize(*image.size)
        fallbacks: List[Fallback] = []
        timings: Dict[str, float] = {}

        refined = None
        if self.config.refinement_enabled:
            started = time.perf_counter()
            refined = self._refine(instruction, image, fallbacks)
            timings["refine"] = (time.perf_counter() - started) * 1000.0
        task = refined if refined is not None else instruction

        started = time.perf_counter()
        outcome = self.grounder.complete(build_grounding_prompt(task, image))
        timings["first_pass"] = (time.perf_counter() - started) * 1000.0
        first = parse_grounding_output(outcome.text)

        if isinstance(first, FormatError):
            logger.warning(f"First-pass answer unparseable ({first.kind.value}): {first.detail}")
            return GroundingResult(
                final_point=ORIGIN,
                final_box=NULL_BOX,
                first_pass=None,
                first_pass_error=first,
                refined_instruction=refined,
                fallbacks=fallbacks,
                timings_ms=timings,
            )

        result = GroundingResult(
            final_point=clamp_point(first.point, size),
            final_box=clamp_box(first.box, size),
            first_pass=first,
            refined_instruction=refined,
            fallbacks=fallbacks,
            timings_ms=timings,
        )
        if not self._wants_zoom(first):
            return result

        started = time.perf_counter()
        transform = compute_zoom_window(first.point, size, self.config.zoom)
        zoomed = crop_and_resize(image, transform)
        if self.dump_dir is not None:
            save_zoom_crop(zoomed, self.dump_dir, sample_id or f"zoom_{first.point.x}_{first.point.y}")
        outcome = self.grounder.complete(build_grounding_prompt(task, zoomed))
        timings["second_pass"] = (time.perf_counter() - started) * 1000.0
        second = parse_grounding_output(outcome.text)

        result.zoom_applied = True
        result.zoom_transform = transform
        if isinstance(second, FormatError):
            logger.warning(f"Second-pass answer unparseable ({second.kind.value}), keeping first pass")
            result.second_pass_error = second
            fallbacks.append(Fallback.SECOND_PARSE_FAILED)
            return result
        result.second_pass = second
        if second.is_null:
            logger.warning("Second pass answered null, keeping first pass")
            fallbacks.append(Fallback.SECOND_NULL)
            return result

        result.final_point = map_point_to_original(second.point, transform)
        result.final_box = map_box_to_original(second.box, transform)
        return result


def ground(
    instruction: str,
    image: Image.Image,
    cfg: PipelineConfig,
    dump_dir: Optional[Union[str, Path]] = None,
) -> GroundingResult:
    """Ground one sample with HTTP backends built from ``cfg``."""
    return GroundingPipeline.from_config(cfg, dump_dir).ground(instruction, image)
