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
Benchmark evaluation

Runs the grounding pipeline over a dataset and reports point-in-box accuracy
broken down by category and UI type, in JSON, CSV and a plain-text table
with Text/Icon columns per domain and the average last. An ablation runs
the same samples under several zoom and refinement settings and renders
one labelled row per setting.
"""

import csv
import io
import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from PIL import Image

from .backends import BackendError
from .dataset import Sample, UIType
from .geometry import NULL_BOX, ORIGIN, PixelBox, PixelPoint, point_in_box
from .pipeline import GroundingPipeline, GroundingResult, PipelineConfig
from .zoom import ZoomMode

logger = logging.getLogger(__name__)

DOMAIN_ORDER = ("Development", "Creative", "CAD", "Scientific", "Office", "OS")
PLATFORM_ORDER = ("Mobile", "Desktop", "Web")
REPORT_FORMATS = ("json", "csv", "text")


@dataclass(frozen=True)
class EvalOutcome:
    """Per-sample verdict. A sample with an ``error`` is never correct."""

    sample_id: str
    category: str
    ui_type: UIType
    correct: bool
    final_point: PixelPoint = ORIGIN
    final_box: PixelBox = NULL_BOX
    zoom_applied: bool = False
    fallbacks: Tuple[str, ...] = ()
    error: Optional[str] = None
    unparseable: bool = False
    instruction: str = ""

    def __post_init__(self):
        if self.error is not None and self.correct:
            raise ValueError("an outcome with an error cannot be correct")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "category": self.category,
            "ui_type": self.ui_type.value,
            "instruction": self.instruction,
            "correct": self.correct,
            "final_point": self.final_point.to_list(),
            "final_box": self.final_box.to_list(),
            "zoom_applied": self.zoom_applied,
            "fallbacks": list(self.fallbacks),
            "unparseable": self.unparseable,
            "error": self.error,
        }


@dataclass
class CellStats:
    n: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


@dataclass
class EvalReport:
    """
    Aggregated accuracy.

    ``micro_avg`` is total correct over total samples; ``macro_avg`` is the
    mean of the per-cell accuracies. Both are None for an empty run.
    """

    cells: Dict[Tuple[str, str], CellStats] = field(default_factory=dict)
    micro_avg: Optional[float] = None
    macro_avg: Optional[float] = None
    zoom_rate: float = 0.0
    fallback_counts: Dict[str, int] = field(default_factory=dict)
    error_count: int = 0
    wall_time_s: float = 0.0

    @property
    def sample_count(self) -> int:
        return sum(cell.n for cell in self.cells.values())

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "sample_count": self.sample_count,
            "cells": [
                {"category": c, "ui_type": u, "n": s.n, "correct": s.correct, "accuracy": s.accuracy}
                for (c, u), s in sorted(self.cells.items())
            ],
            "zoom_rate": self.zoom_rate,
            "fallback_counts": dict(sorted(self.fallback_counts.items())),
            "error_count": self.error_count,
            "wall_time_s": self.wall_time_s,
        }
        if self.micro_avg is not None:
            data["micro_avg"] = self.micro_avg
        if self.macro_avg is not None:
            data["macro_avg"] = self.macro_avg
        return data


@dataclass
class EvalRun:
    report: EvalReport
    outcomes: List[EvalOutcome]


def is_correct(s: Sample, result: GroundingResult) -> bool:
    """
    Infeasible samples need the null answer; others need the click inside
    the target. A null or unparseable answer never hits a feasible target,
    even one whose box contains the origin.
    """
    if s.infeasible:
        return result.is_null
    if result.is_null or result.unparseable:
        return False
    return point_in_box(result.final_point, s.gt_box)


def build_report(outcomes: Sequence[EvalOutcome], wall_time_s: float = 0.0) -> EvalReport:
    """Aggregate outcomes. Only counts are summed, so order and sharding do not matter."""
    cells: Dict[Tuple[str, str], CellStats] = {}
    fallbacks: Counter = Counter()
    zoomed = errors = 0
    for outcome in outcomes:
        cell = cells.setdefault((outcome.category, outcome.ui_type.value), CellStats())
        cell.n += 1
        cell.correct += int(outcome.correct)
        zoomed += int(outcome.zoom_applied)
        errors += int(outcome.error is not None)
        fallbacks.update(outcome.fallbacks)

    report = EvalReport(cells=cells, fallback_counts=dict(fallbacks), error_count=errors, wall_time_s=wall_time_s)
    total = report.sample_count
    if total:
        report.micro_avg = sum(cell.correct for cell in cells.values()) / total
        report.macro_avg = sum(cell.accuracy for cell in cells.values()) / len(cells)
        report.zoom_rate = zoomed / total
    return report


class GroundingEvaluator:
    """Evaluate samples concurrently with a shared pipeline."""

    def __init__(self, pipeline: GroundingPipeline, workers: int = 1):
        if workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")
        self.pipeline = pipeline
        self.workers = workers

    def evaluate_sample(self, s: Sample) -> EvalOutcome:
        base = dict(sample_id=s.sample_id, category=s.category, ui_type=s.ui_type, instruction=s.instruction)
        try:
            with Image.open(s.image_ref) as opened:
                image = opened.convert("RGB")
        except OSError as e:
            logger.warning(f"Sample {s.sample_id}: unreadable image {s.image_ref}: {e}")
            return EvalOutcome(correct=False, error=f"unreadable image: {e}", **base)

        try:
            result = self.pipeline.ground(s.instruction, image, sample_id=s.sample_id)
        except BackendError as e:
            logger.warning(f"Sample {s.sample_id}: backend failure: {e}")
            return EvalOutcome(correct=False, error=f"backend failure: {e}", **base)

        return EvalOutcome(
            correct=is_correct(s, result),
            final_point=result.final_point,
            final_box=result.final_box,
            zoom_applied=result.zoom_applied,
            fallbacks=tuple(f.value for f in result.fallbacks),
            unparseable=result.unparseable,
            **base,
        )

    def run(self, samples: Iterable[Sample]) -> EvalRun:
        samples = list(samples)
        logger.info(f"Evaluating {len(samples)} samples with {self.workers} worker(s)")
        started = time.perf_counter()
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            outcomes = list(executor.map(self.evaluate_sample, samples))
        elapsed = time.perf_counter() - started
        report = build_report(outcomes, elapsed)
        if report.micro_avg is not None:
            logger.info(f"Accuracy {report.micro_avg:.4f} over {report.sample_count} samples in {elapsed:.1f}s")
        return EvalRun(report=report, outcomes=outcomes)


def evaluate(
    samples: Iterable[Sample],
    pipeline: Union[GroundingPipeline, PipelineConfig],
    workers: int = 1,
) -> EvalReport:
    """
    Evaluate a dataset and return the aggregated report.

    Args:
        samples: Validated samples
        pipeline: A ready pipeline, or a config to build HTTP backends from
        workers: Concurrent samples

    Returns:
        EvalReport: Accuracy per category and UI type
    """
    if isinstance(pipeline, PipelineConfig):
        pipeline = GroundingPipeline.from_config(pipeline)
    return GroundingEvaluator(pipeline, workers).run(samples).report


def _table_categories(reports: Sequence[EvalReport]) -> List[str]:
    """All six domains for a domain-split report, otherwise only the categories present."""
    present = {category for report in reports for category, _ in report.cells}
    if present & set(DOMAIN_ORDER):
        return list(DOMAIN_ORDER) + sorted(present - set(DOMAIN_ORDER))
    order = {name.lower(): i for i, name in enumerate(PLATFORM_ORDER)}
    return sorted(present, key=lambda c: (order.get(c.lower(), len(order)), c))


def _percent(cell: Optional[CellStats]) -> str:
    if cell is None or not cell.n:
        return "-"
    return f"{cell.accuracy * 100:.1f}"


def _render_table(rows: Sequence[Tuple[str, EvalReport]]) -> str:
    categories = _table_categories([report for _, report in rows])
    col = max(6, max((len(c) for c in categories), default=0) // 2 + 1)
    name_width = max([len("Model")] + [len(label) for label, _ in rows])
    top = " " * name_width + "".join(f" {c:^{2 * col + 1}}" for c in categories) + f" {'':>{col}}"
    sub = f"{'Model':<{name_width}}" + "".join(f" {'Text':>{col}} {'Icon':>{col}}" for _ in categories)
    sub += f" {'Avg.':>{col}}"
    lines = [top.rstrip(), sub, "-" * len(sub)]
    for label, report in rows:
        values = [
            _percent(report.cells.get((category, ui_type.value))) for category in categories for ui_type in UIType
        ]
        values.append("-" if report.micro_avg is None else f"{report.micro_avg * 100:.1f}")
        lines.append(f"{label:<{name_width}}" + "".join(f" {v:>{col}}" for v in values))
    return "\n".join(lines) + "\n"


def _write_csv(rows: Sequence[Tuple[str, EvalReport]], labelled: bool) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["category", "ui_type", "n", "correct", "accuracy"]
    writer.writerow(["config"] + header if labelled else header)
    for label, report in rows:
        for (category, ui_type), cell in sorted(report.cells.items()):
            values = [category, ui_type, cell.n, cell.correct, cell.accuracy]
            writer.writerow([label] + values if labelled else values)
    return buffer.getvalue()


def emit_report(report: EvalReport, fmt: str = "json", label: str = "zoomground") -> str:
    """
    Render a report.

    Args:
        report: Aggregated report
        fmt: ``json`` (full fidelity), ``csv`` (one row per cell) or ``text``
        label: Row label of the text table

    Returns:
        str: The rendered artifact
    """
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        return _write_csv([(label, report)], labelled=False)
    if fmt == "text":
        return _render_table([(label, report)])
    raise ValueError(f"Unknown report format: {fmt}. Use one of {', '.join(REPORT_FORMATS)}")


def emit_comparison(rows: Sequence[Tuple[str, EvalReport]], fmt: str = "json") -> str:
    """
    Render several labelled reports side by side.

    The text table has one row per label over a shared column set; the CSV
    gains a leading ``config`` column and the JSON holds a ``rows`` list.
    """
    if fmt == "json":
        return json.dumps({"rows": [dict(label=label, **report.to_dict()) for label, report in rows]}, indent=2) + "\n"
    if fmt == "csv":
        return _write_csv(rows, labelled=True)
    if fmt == "text":
        return _render_table(rows)
    raise ValueError(f"Unknown report format: {fmt}. Use one of {', '.join(REPORT_FORMATS)}")


def _write_outcomes(path: Path, outcomes: Iterable[EvalOutcome]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for outcome in outcomes:
            f.write(json.dumps(outcome.to_dict()) + "\n")


def write_report(run: EvalRun, out_dir: Union[str, Path], label: str = "zoomground") -> Dict[str, Path]:
    """Write report.json, report.csv, report.txt and outcomes.jsonl into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "report.json",
        "csv": out / "report.csv",
        "text": out / "report.txt",
        "outcomes": out / "outcomes.jsonl",
    }
    for fmt in REPORT_FORMATS:
        paths[fmt].write_text(emit_report(run.report, fmt, label), encoding="utf-8")
    _write_outcomes(paths["outcomes"], run.outcomes)
    logger.info(f"Report written to {out}")
    return paths


@dataclass(frozen=True)
class AblationArm:
    """One zoom mode and refinement setting of an ablation grid."""

    zoom_mode: ZoomMode
    refinement: bool

    @property
    def label(self) -> str:
        return self.zoom_mode.value + ("+refine" if self.refinement else "")

    @classmethod
    def parse(cls, text: str) -> "AblationArm":
        """Parse ``never``, ``conditional+refine`` and the like."""
        mode, plus, switch = text.strip().partition("+")
        if plus and switch != "refine":
            raise ValueError(f"Unknown switch '{switch}' in '{text}', expected '+refine'")
        return cls(ZoomMode(mode), bool(plus))


def ablation_grid(zoom_modes: Iterable[ZoomMode], refinement: Iterable[bool]) -> List[AblationArm]:
    """Every zoom mode without refinement first, then with it. Duplicates are dropped."""
    modes = list(zoom_modes)
    arms: List[AblationArm] = []
    for refine in refinement:
        for mode in modes:
            arm = AblationArm(mode, bool(refine))
            if arm not in arms:
                arms.append(arm)
    return arms


@dataclass
class AblationRun:
    runs: List[Tuple[AblationArm, EvalRun]]

    def rows(self, prefix: Optional[str] = None) -> List[Tuple[str, EvalReport]]:
        return [(f"{prefix} {arm.label}" if prefix else arm.label, run.report) for arm, run in self.runs]


def run_ablation(
    samples: Iterable[Sample],
    pipeline: GroundingPipeline,
    arms: Sequence[AblationArm],
    workers: int = 1,
) -> AblationRun:
    """
    Evaluate the same samples once per arm.

    Args:
        samples: Validated samples
        pipeline: Supplies the backends every arm shares; it needs a refiner
            when any arm refines
        arms: Configurations to compare, in table order
        workers: Concurrent samples within an arm

    Returns:
        AblationRun: One evaluation run per arm
    """
    if not arms:
        raise ValueError("An ablation needs at least one configuration")
    samples = list(samples)
    runs = []
    for arm in arms:
        logger.info(f"Ablation arm {arm.label}")
        evaluator = GroundingEvaluator(pipeline.with_switches(arm.zoom_mode, arm.refinement), workers)
        runs.append((arm, evaluator.run(samples)))
    return AblationRun(runs)


def write_ablation(result: AblationRun, out_dir: Union[str, Path], prefix: Optional[str] = None) -> Dict[str, Path]:
    """Write ablation.json, ablation.csv, ablation.txt and one outcomes file per arm."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = result.rows(prefix)
    paths = {"json": out / "ablation.json", "csv": out / "ablation.csv", "text": out / "ablation.txt"}
    for fmt in REPORT_FORMATS:
        paths[fmt].write_text(emit_comparison(rows, fmt), encoding="utf-8")
    for arm, run in result.runs:
        paths[f"outcomes:{arm.label}"] = out / f"outcomes-{arm.label}.jsonl"
        _write_outcomes(paths[f"outcomes:{arm.label}"], run.outcomes)
    logger.info(f"Ablation of {len(result.runs)} configuration(s) written to {out}")
    return paths
