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
Configuration loading

Settings come from the packaged ``data/default_config.yaml`` with an optional
user YAML file deep-merged on top. CLI flags are applied afterwards through
``Settings.with_overrides``.
"""

import copy
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from .backends import BackendConfig
from .evaluation import AblationArm, ablation_grid
from .pipeline import PipelineConfig
from .reward import RewardWeights
from .zoom import ZoomConfig, ZoomMode

logger = logging.getLogger(__name__)


def load_default_config() -> Dict[str, Any]:
    text = resources.files("zoomground").joinpath("data/default_config.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class AugmentationSettings:
    model_name: str = "refiner"
    max_pad: int = 200
    scale_range: Tuple[float, float] = (0.5, 1.5)
    templates: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Settings:
    """Everything a CLI command needs, parsed and validated."""

    pipeline: PipelineConfig
    reward: RewardWeights
    augmentation: AugmentationSettings
    workers: int = 4
    ablation: Tuple[AblationArm, ...] = ()

    def with_overrides(
        self,
        zoom_mode: Optional[str] = None,
        no_refine: bool = False,
        workers: Optional[int] = None,
    ) -> "Settings":
        pipeline = self.pipeline
        if zoom_mode is not None:
            pipeline = replace(pipeline, zoom_mode=ZoomMode(zoom_mode))
        if no_refine:
            pipeline = replace(pipeline, refinement_enabled=False)
        return replace(
            self,
            pipeline=pipeline,
            workers=workers if workers is not None else self.workers,
        )


def settings_from_dict(data: Mapping[str, Any]) -> Settings:
    """Validate a merged configuration mapping into Settings."""
    try:
        zoom = data.get("zoom", {})
        refinement = data.get("refinement", {})
        pipeline = PipelineConfig(
            zoom=ZoomConfig(
                alpha=int(zoom.get("alpha", 100)),
                beta=int(zoom.get("beta", 300)),
                ratio=float(zoom.get("ratio", 2.0)),
            ),
            zoom_mode=ZoomMode(zoom.get("mode", "conditional")),
            refinement_enabled=bool(refinement.get("enabled", True)),
            refiner=BackendConfig.from_dict(refinement["backend"]) if refinement.get("backend") else None,
            grounder=BackendConfig.from_dict(data["grounding"]["backend"]),
        )
        reward = data.get("reward", {})
        weights = RewardWeights(
            lam=float(reward.get("lambda", 0.5)),
            combination=reward.get("combination", "gated"),
        )
        aug = data.get("augmentation", {})
        low, high = aug.get("scale_range", (0.5, 1.5))
        augmentation = AugmentationSettings(
            model_name=str(aug.get("model_name", "refiner")),
            max_pad=int(aug.get("max_pad", 200)),
            scale_range=(float(low), float(high)),
            templates=dict(aug.get("templates", {})),
        )
        evaluation = data.get("evaluation", {})
        workers = int(evaluation.get("workers", 4))
        grid = evaluation.get("ablation", {})
        ablation = tuple(
            ablation_grid(
                [ZoomMode(mode) for mode in grid.get("zoom_modes", ["never", "conditional"])],
                [bool(refine) for refine in grid.get("refinement", [False, True])],
            )
        )
        if not ablation:
            raise ValueError("evaluation.ablation needs at least one zoom mode and one refinement setting")
    except KeyError as e:
        raise ValueError(f"Missing configuration key: {e}")
    return Settings(pipeline=pipeline, reward=weights, augmentation=augmentation, workers=workers, ablation=ablation)


def load_config(config_file: Optional[Union[str, Path]] = None) -> Settings:
    """
    Load settings from the packaged defaults and an optional YAML file.

    Args:
        config_file: Path to a YAML file overriding the defaults

    Returns:
        Settings: Validated configuration

    Raises:
        FileNotFoundError: If ``config_file`` does not exist
        ValueError: If a value fails validation
    """
    data = load_default_config()
    if config_file is not None:
        path = Path(config_file)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {config_file}")
        user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(user, Mapping):
            raise ValueError(f"Config file {config_file} must hold a mapping at top level")
        data = deep_merge(data, user)
        logger.debug(f"Loaded configuration overrides from {config_file}")
    return settings_from_dict(data)
