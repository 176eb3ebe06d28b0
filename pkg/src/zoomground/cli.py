"""Command-line interface for zoomground."""

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
from dotenv import load_dotenv
from PIL import Image

from . import __version__
from .backends import create_backend
from .config import load_config
from .dataset import (
    AugmentationRejected,
    GeometricAugmentSpec,
    GeometrySampler,
    VariantKind,
    augment_geometry,
    augment_instruction,
    load_dataset,
    write_dataset,
)
from .evaluation import (
    AblationArm,
    GroundingEvaluator,
    emit_comparison,
    emit_report,
    run_ablation,
    write_ablation,
    write_report,
)
from .geometry import ImageSize
from .pipeline import GroundingPipeline
from .reward import Combination, RewardWeights, score_jsonl
from .zoom import ZoomMode

logger = logging.getLogger(__name__)

ZOOM_CHOICES = [mode.value for mode in ZoomMode]


def _parse_pad(ctx, param, value):
    if value is None:
        return None
    try:
        pad = tuple(int(v) for v in value.split(","))
    except ValueError:
        raise click.BadParameter("expected four integers 'left,top,right,bottom'")
    if len(pad) != 4 or any(p < 0 for p in pad):
        raise click.BadParameter("expected four non-negative integers 'left,top,right,bottom'")
    return pad


def _parse_resize(ctx, param, value):
    if value is None:
        return None
    try:
        width, height = (int(v) for v in value.lower().split("x"))
        return ImageSize(width, height)
    except ValueError:
        raise click.BadParameter("expected 'WIDTHxHEIGHT' with positive integers")


def _parse_variants(ctx, param, value):
    if not value:
        return []
    try:
        return [VariantKind(v.strip()) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"kinds must be among {', '.join(k.value for k in VariantKind)}")


def _parse_arms(ctx, param, value):
    try:
        return [AblationArm.parse(v) for item in value for v in item.split(",") if v.strip()]
    except ValueError as e:
        raise click.BadParameter(str(e))


@click.group()
@click.version_option(__version__, prog_name="zoomground")
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging")
def main(verbose):
    """zoomground - GUI grounding with conditional zoom-in."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    load_dotenv()


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Screenshot")
@click.option("--instruction", required=True, help="Natural-language task")
@click.option("--config", "config_file", type=click.Path(exists=True), help="YAML config file")
@click.option("--zoom", type=click.Choice(ZOOM_CHOICES), help="Override the zoom mode")
@click.option("--no-refine", is_flag=True, help="Skip instruction refinement")
@click.option("--dump-zoom-crops", type=click.Path(file_okay=False), help="Directory for zoomed crops")
@click.option("--json", "as_json", is_flag=True, help="Print the full result as JSON")
def ground(image_path, instruction, config_file, zoom, no_refine, dump_zoom_crops, as_json):
    """Ground one instruction on one screenshot."""
    try:
        settings = load_config(config_file).with_overrides(zoom_mode=zoom, no_refine=no_refine)
        pipeline = GroundingPipeline.from_config(settings.pipeline, dump_zoom_crops)
        with Image.open(image_path) as opened:
            image = opened.convert("RGB")
        result = pipeline.ground(instruction, image, sample_id=Path(image_path).stem)

        if as_json:
            click.echo(json.dumps(result.to_dict(), indent=2))
            return
        if result.unparseable:
            click.echo(f"Unparseable answer: {result.first_pass_error.detail}", err=True)
        p, b = result.final_point, result.final_box
        click.echo(f"Click: ({p.x}, {p.y})")
        click.echo(f"Box: ({b.x1}, {b.y1}), ({b.x2}, {b.y2})")
        if result.zoom_applied:
            click.echo("Zoom: applied")
        if result.refined_instruction:
            click.echo(f"Refined: {result.refined_instruction}")

    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


@main.command(name="eval")
@click.option("--dataset", "dataset_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "image_root", type=click.Path(exists=True, file_okay=False), help="Screenshot directory")
@click.option("--config", "config_file", type=click.Path(exists=True), help="YAML config file")
@click.option("--workers", type=click.IntRange(min=1), help="Concurrent samples")
@click.option("--zoom", type=click.Choice(ZOOM_CHOICES), help="Override the zoom mode")
@click.option("--no-refine", is_flag=True, help="Skip instruction refinement")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Report directory")
@click.option("--label", default="zoomground", help="Row label in the text table")
def evaluate(dataset_file, image_root, config_file, workers, zoom, no_refine, out_dir, label):
    """Evaluate grounding accuracy on an annotated dataset."""
    try:
        settings = load_config(config_file).with_overrides(zoom_mode=zoom, no_refine=no_refine, workers=workers)
        dataset = load_dataset(dataset_file, image_root)
        if dataset.errors:
            click.echo(f"Skipped {len(dataset.errors)} invalid annotation line(s)", err=True)
        if not len(dataset):
            click.echo("Error: no valid samples to evaluate", err=True)
            sys.exit(1)

        evaluator = GroundingEvaluator(GroundingPipeline.from_config(settings.pipeline), settings.workers)
        run = evaluator.run(dataset)
        write_report(run, out_dir, label)
        click.echo(emit_report(run.report, "text", label), nl=False)
        click.echo(f"Report written to {out_dir}")

    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


@main.command()
@click.option("--dataset", "dataset_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "image_root", type=click.Path(exists=True, file_okay=False), help="Screenshot directory")
@click.option("--config", "config_file", type=click.Path(exists=True), help="YAML config file")
@click.option("--workers", type=click.IntRange(min=1), help="Concurrent samples")
@click.option(
    "--arm", "arms", multiple=True, callback=_parse_arms,
    help="Configuration such as 'never' or 'conditional+refine'; repeatable, defaults to the configured grid",
)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Report directory")
@click.option("--label", help="Prefix for the row labels")
def ablate(dataset_file, image_root, config_file, workers, arms, out_dir, label):
    """Compare zoom and refinement settings on one dataset."""
    try:
        settings = load_config(config_file).with_overrides(workers=workers)
        arms = arms or list(settings.ablation)
        dataset = load_dataset(dataset_file, image_root)
        if dataset.errors:
            click.echo(f"Skipped {len(dataset.errors)} invalid annotation line(s)", err=True)
        if not len(dataset):
            click.echo("Error: no valid samples to evaluate", err=True)
            sys.exit(1)

        config = replace(settings.pipeline, refinement_enabled=any(arm.refinement for arm in arms))
        result = run_ablation(dataset, GroundingPipeline.from_config(config), arms, settings.workers)
        write_ablation(result, out_dir, label)
        click.echo(emit_comparison(result.rows(label), "text"), nl=False)
        click.echo(f"Ablation written to {out_dir}")

    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


@main.command()
@click.option("--in", "input_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_file", required=True, type=click.Path(dir_okay=False))
@click.option("--images", "image_root", type=click.Path(exists=True, file_okay=False), help="Screenshot directory")
@click.option("--pad", callback=_parse_pad, help="Padding 'left,top,right,bottom' in pixels")
@click.option("--resize", callback=_parse_resize, help="Target size 'WIDTHxHEIGHT'")
@click.option("--instruction-variants", callback=_parse_variants, help="Comma-separated variant kinds")
@click.option("--seed", type=int, help="Sample random padding and scale with this seed")
@click.option("--config", "config_file", type=click.Path(exists=True), help="YAML config file")
def augment(input_file, output_file, image_root, pad, resize, instruction_variants, seed, config_file):
    """Augment a dataset with padding/resizing and instruction variants."""
    try:
        settings = load_config(config_file)
        aug = settings.augmentation
        dataset = load_dataset(input_file, image_root)
        out_path = Path(output_file)
        image_dir = out_path.parent / f"{out_path.stem}_images"

        fixed = None
        sampler = None
        if pad is not None or resize is not None:
            fixed = GeometricAugmentSpec(pad=pad or (0, 0, 0, 0), target_size=resize)
        elif seed is not None:
            sampler = GeometrySampler(aug.max_pad, aug.scale_range, seed)

        backend = None
        if instruction_variants:
            if settings.pipeline.refiner is None:
                raise ValueError("Instruction variants need a refinement backend in the config")
            backend = create_backend(replace(settings.pipeline.refiner, model_name=aug.model_name))

        written = []
        rejected = 0
        for sample in dataset:
            with Image.open(sample.image_ref) as opened:
                image = opened.convert("RGB")
            if fixed is not None or sampler is not None:
                spec = fixed or sampler.sample(ImageSize(*image.size))
                try:
                    sample, image = augment_geometry(sample, image, spec)
                except AugmentationRejected as e:
                    logger.warning(str(e))
                    rejected += 1
                    continue
                image_dir.mkdir(parents=True, exist_ok=True)
                image_path = image_dir / f"{sample.sample_id}.png"
                image.save(image_path, format="PNG")
                sample = replace(sample, sample_id=f"{sample.sample_id}-geo", image_ref=image_path)
            if backend is not None:
                written.extend(augment_instruction(sample, backend, instruction_variants, aug.templates, image))
            else:
                written.append(sample)

        count = write_dataset(written, out_path, image_root=out_path.parent)
        click.echo(f"Wrote {count} samples to {output_file}")
        if rejected:
            click.echo(f"Rejected {rejected} sample(s) whose box collapsed", err=True)

    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


@main.command()
@click.option("--in", "input_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_file", required=True, type=click.Path(dir_okay=False))
@click.option("--lambda", "lam", type=click.FloatRange(0.0, 1.0), help="Weight of the point reward")
@click.option("--combination", type=click.Choice([c.value for c in Combination]), help="Format/content combination")
@click.option("--workers", type=click.IntRange(min=1), default=1, help="Concurrent scoring threads")
@click.option("--config", "config_file", type=click.Path(exists=True), help="YAML config file")
def score(input_file, output_file, lam, combination, workers, config_file):
    """Score model responses against ground-truth boxes."""
    try:
        weights = load_config(config_file).reward
        weights = RewardWeights(
            lam=weights.lam if lam is None else lam,
            combination=weights.combination if combination is None else combination,
        )
        count = score_jsonl(input_file, output_file, weights, workers)
        click.echo(f"Scored {count} responses to {output_file}")

    except Exception as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
