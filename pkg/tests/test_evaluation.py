"""
Tests for benchmark evaluation and report rendering.
"""

import csv
import io
import json
import random
import threading
from collections import defaultdict

import pytest

from zoomground.backends import BackendConfig, BackendProtocolError, MockBackend
from zoomground.dataset import Sample, UIType
from zoomground.evaluation import (
    DOMAIN_ORDER,
    AblationArm,
    CellStats,
    EvalOutcome,
    EvalReport,
    GroundingEvaluator,
    ablation_grid,
    build_report,
    emit_comparison,
    emit_report,
    evaluate,
    run_ablation,
    write_ablation,
    write_report,
)
from zoomground.geometry import NULL_BOX, PixelBox, box_center
from zoomground.pipeline import GroundingPipeline, PipelineConfig
from zoomground.zoom import ZoomConfig, ZoomMode


class ScriptedGrounder:
    """Answers per instruction, in call order, so first and second passes differ."""

    def __init__(self, answers):
        self.answers = answers
        self.calls = defaultdict(int)
        self._lock = threading.Lock()

    def __call__(self, bundle, ordinal):
        instruction = bundle.user_text.rsplit("Task: ", 1)[1]
        with self._lock:
            index = self.calls[instruction]
            self.calls[instruction] += 1
        return self.answers[instruction][index]


def _pipeline(answers, mode=ZoomMode.NEVER):
    cfg = PipelineConfig(zoom=ZoomConfig(), zoom_mode=mode, refinement_enabled=False)
    return GroundingPipeline(cfg, MockBackend(ScriptedGrounder(answers), max_parallel=4))


def _sample(image_ref, index, box, category="Office", ui_type=UIType.TEXT, infeasible=False):
    return Sample(
        sample_id=f"s{index}",
        image_ref=image_ref,
        instruction=f"task number {index}",
        gt_box=box,
        category=category,
        ui_type=ui_type,
        infeasible=infeasible,
    )


def _hit(answer, box):
    c = box_center(box)
    return answer(c.x, c.y, *box.to_list())


def _miss(answer, box):
    return answer(box.x2 + 20, box.y2 + 20, box.x2 + 10, box.y2 + 10, box.x2 + 30, box.y2 + 30)


class TestEvaluate:
    def test_perfect_oracle(self, screenshot_file, answer):
        samples = [
            _sample(screenshot_file, i, PixelBox(10 + i, 20, 60 + i, 70), category=DOMAIN_ORDER[i % 6], ui_type=list(UIType)[i % 2])
            for i in range(12)
        ]
        answers = {s.instruction: [_hit(answer, s.gt_box)] for s in samples}
        run = GroundingEvaluator(_pipeline(answers), workers=4).run(samples)

        assert run.report.micro_avg == 1.0
        assert run.report.macro_avg == 1.0
        assert all(cell.accuracy == 1.0 for cell in run.report.cells.values())
        assert run.report.sample_count == 12

    def test_three_of_ten_wrong(self, screenshot_file, answer):
        samples = [_sample(screenshot_file, i, PixelBox(50, 50, 150, 90)) for i in range(10)]
        answers = {
            s.instruction: [_miss(answer, s.gt_box) if i in (2, 5, 9) else _hit(answer, s.gt_box)]
            for i, s in enumerate(samples)
        }
        report = evaluate(samples, _pipeline(answers), workers=3)
        assert report.micro_avg == 0.7

    def test_conditional_zoom_beats_never_on_small_targets(self, screenshot_file, answer):
        gt = PixelBox(100, 100, 110, 110)
        samples = [_sample(screenshot_file, i, gt) for i in range(6)]

        def answers():
            # first pass lands beside the target; the zoomed answer maps back inside it
            return {s.instruction: [answer(130, 130, 125, 125, 135, 135), answer(150, 150, 140, 140, 160, 160)] for s in samples}

        conditional = evaluate(samples, _pipeline(answers(), ZoomMode.CONDITIONAL), workers=2)
        never = evaluate(samples, _pipeline(answers(), ZoomMode.NEVER), workers=2)
        assert conditional.micro_avg == 1.0
        assert never.micro_avg == 0.0
        assert conditional.zoom_rate == 1.0 and never.zoom_rate == 0.0

    def test_conditional_zoom_beats_always_on_large_targets(self, screenshot_file, answer):
        gt = PixelBox(125, 125, 275, 275)
        samples = [_sample(screenshot_file, i, gt) for i in range(6)]

        def answers():
            # zoomed-space answer (10,10) maps to (105,105), outside the target
            return {s.instruction: [answer(200, 200, *gt.to_list()), answer(10, 10, 5, 5, 15, 15)] for s in samples}

        conditional = evaluate(samples, _pipeline(answers(), ZoomMode.CONDITIONAL))
        always = evaluate(samples, _pipeline(answers(), ZoomMode.ALWAYS))
        assert conditional.micro_avg == 1.0
        assert always.micro_avg == 0.0

    def test_null_backend_scores_zero_without_infeasible_samples(self, screenshot_file, null_answer):
        # the origin lies inside these boxes, but a null answer is still a miss
        samples = [_sample(screenshot_file, i, PixelBox(0, 0, 50, 50)) for i in range(5)]
        answers = {s.instruction: [null_answer] for s in samples}
        assert evaluate(samples, _pipeline(answers, ZoomMode.CONDITIONAL)).micro_avg == 0.0

    def test_infeasible_samples(self, screenshot_file, answer, null_answer):
        samples = [
            _sample(screenshot_file, 0, NULL_BOX, infeasible=True),
            _sample(screenshot_file, 1, NULL_BOX, infeasible=True),
        ]
        answers = {samples[0].instruction: [null_answer], samples[1].instruction: [answer(5, 5, 0, 0, 10, 10)]}
        run = GroundingEvaluator(_pipeline(answers)).run(samples)
        assert [o.correct for o in run.outcomes] == [True, False]

    def test_unparseable_answer_is_incorrect_even_when_infeasible(self, screenshot_file):
        samples = [_sample(screenshot_file, 0, NULL_BOX, infeasible=True)]
        run = GroundingEvaluator(_pipeline({samples[0].instruction: ["no idea"]})).run(samples)
        assert not run.outcomes[0].correct
        assert run.outcomes[0].unparseable

    def test_overlong_coordinates_do_not_abort_the_run(self, screenshot_file, answer):
        box = PixelBox(10, 10, 60, 60)
        samples = [_sample(screenshot_file, i, box) for i in range(3)]
        overlong = "pyautogui.click(x=" + "9" * 40 + ", y=5), <|box_start|>(0,0),(10,10)<|box_end|>"
        answers = {s.instruction: [overlong if i == 1 else _hit(answer, box)] for i, s in enumerate(samples)}

        run = GroundingEvaluator(_pipeline(answers), workers=2).run(samples)
        assert [o.correct for o in run.outcomes] == [True, False, True]
        assert run.outcomes[1].unparseable
        assert run.outcomes[1].error is None
        assert run.report.sample_count == 3

    def test_failures_count_as_incorrect(self, tmp_path, screenshot_file, answer):
        box = PixelBox(10, 10, 60, 60)
        samples = [
            _sample(screenshot_file, 0, box),
            _sample(tmp_path / "missing.png", 1, box),
            _sample(screenshot_file, 2, box),
        ]
        (tmp_path / "broken.png").write_bytes(b"not a png")
        samples.append(_sample(tmp_path / "broken.png", 3, box))

        def script(bundle, ordinal):
            if bundle.user_text.endswith("task number 2"):
                raise BackendProtocolError("HTTP 500", 500, "req-2")
            return _hit(answer, box)

        pipeline = GroundingPipeline(PipelineConfig(zoom_mode=ZoomMode.NEVER, refinement_enabled=False), MockBackend(script))
        run = GroundingEvaluator(pipeline, workers=2).run(samples)

        assert [o.correct for o in run.outcomes] == [True, False, False, False]
        assert "unreadable image" in run.outcomes[1].error
        assert "backend failure" in run.outcomes[2].error
        assert "unreadable image" in run.outcomes[3].error
        assert run.report.error_count == 3
        assert run.report.sample_count == 4

    def test_fallbacks_and_zoom_rate(self, screenshot_file, answer):
        small = PixelBox(100, 100, 110, 110)
        large = PixelBox(125, 125, 275, 275)
        samples = [_sample(screenshot_file, 0, small), _sample(screenshot_file, 1, large)]
        answers = {
            samples[0].instruction: [answer(105, 105, 100, 100, 110, 110), "garbled"],
            samples[1].instruction: [answer(200, 200, *large.to_list())],
        }
        report = evaluate(samples, _pipeline(answers, ZoomMode.CONDITIONAL))
        assert report.zoom_rate == 0.5
        assert report.fallback_counts == {"second_parse_failed": 1}
        assert report.micro_avg == 1.0

    def test_builds_pipeline_from_config(self, mocker, screenshot_file, answer):
        box = PixelBox(10, 10, 60, 60)
        samples = [_sample(screenshot_file, 0, box)]
        mocker.patch(
            "zoomground.pipeline.create_backend",
            return_value=MockBackend(ScriptedGrounder({samples[0].instruction: [_hit(answer, box)]})),
        )
        cfg = PipelineConfig(
            zoom_mode=ZoomMode.NEVER,
            refinement_enabled=False,
            grounder=BackendConfig(endpoint="http://g", model_name="g"),
        )
        assert evaluate(samples, cfg).micro_avg == 1.0

    def test_workers_must_be_positive(self):
        with pytest.raises(ValueError):
            GroundingEvaluator(_pipeline({}), workers=0)


@pytest.mark.slow
class TestReportIntegrity:
    @pytest.mark.parametrize("workers", [1, 4, 16])
    def test_planted_errors(self, screenshot_file, answer, workers):
        rng = random.Random(27)
        wrong = set(rng.sample(range(100), 27))
        samples = []
        for i in range(100):
            box = PixelBox(10 + i, 10 + i, 60 + i, 40 + i)
            samples.append(_sample(screenshot_file, i, box, category=DOMAIN_ORDER[i % 6], ui_type=list(UIType)[i % 2]))
        answers = {s.instruction: [_miss(answer, s.gt_box) if i in wrong else _hit(answer, s.gt_box)] for i, s in enumerate(samples)}

        run = GroundingEvaluator(_pipeline(answers), workers=workers).run(samples)
        assert run.report.micro_avg == 0.73
        assert run.report.sample_count == 100
        assert [o.sample_id for o in run.outcomes] == [s.sample_id for s in samples]
        assert sum(not o.correct for o in run.outcomes) == 27


def _outcome(category, ui_type, correct, index=0, **kwargs):
    return EvalOutcome(sample_id=f"{category}-{index}", category=category, ui_type=ui_type, correct=correct, **kwargs)


class TestBuildReport:
    def test_cells_and_averages(self):
        outcomes = [
            _outcome("Office", UIType.TEXT, True, 0),
            _outcome("Office", UIType.TEXT, True, 1),
            _outcome("CAD", UIType.ICON, False, 0),
            _outcome("CAD", UIType.ICON, True, 1, zoom_applied=True, fallbacks=("second_null",)),
        ]
        report = build_report(outcomes, 1.5)
        assert report.cells[("Office", "text")] == CellStats(2, 2)
        assert report.cells[("CAD", "icon")].accuracy == 0.5
        assert report.micro_avg == 0.75
        assert report.macro_avg == 0.75
        assert report.zoom_rate == 0.25
        assert report.fallback_counts == {"second_null": 1}
        assert report.wall_time_s == 1.5

    def test_macro_differs_from_micro(self):
        outcomes = [_outcome("Office", UIType.TEXT, True, i) for i in range(3)] + [_outcome("OS", UIType.ICON, False)]
        report = build_report(outcomes)
        assert report.micro_avg == 0.75
        assert report.macro_avg == 0.5

    def test_order_invariant(self):
        rng = random.Random(5)
        outcomes = [
            _outcome(rng.choice(DOMAIN_ORDER), rng.choice(list(UIType)), rng.random() < 0.6, i) for i in range(200)
        ]
        shuffled = list(outcomes)
        rng.shuffle(shuffled)
        a, b = build_report(outcomes), build_report(shuffled)
        assert a.micro_avg == b.micro_avg
        assert a.cells == b.cells

    def test_error_outcome_cannot_be_correct(self):
        with pytest.raises(ValueError):
            _outcome("Office", UIType.TEXT, True, error="boom")


class TestEmitReport:
    def test_empty_json(self):
        data = json.loads(emit_report(build_report([]), "json"))
        assert data["cells"] == []
        assert "micro_avg" not in data
        assert "macro_avg" not in data
        assert data["sample_count"] == 0

    def test_csv_row(self):
        report = build_report([_outcome("Office", UIType.TEXT, True, 0), _outcome("Office", UIType.TEXT, True, 1)])
        lines = emit_report(report, "csv").splitlines()
        assert lines == ["category,ui_type,n,correct,accuracy", "Office,text,2,2,1.0"]

    def test_csv_one_row_per_cell(self):
        outcomes = [_outcome(c, u, True) for c in DOMAIN_ORDER for u in UIType]
        rows = list(csv.DictReader(io.StringIO(emit_report(build_report(outcomes), "csv"))))
        assert len(rows) == 12

    def test_text_table_columns(self):
        outcomes = []
        for c in DOMAIN_ORDER:
            for u in UIType:
                outcomes += [_outcome(c, u, True, 0), _outcome(c, u, False, 1)]
        text = emit_report(build_report(outcomes), "text", label="zoomground")
        row = text.splitlines()[-1].split()
        assert row[0] == "zoomground"
        assert len(row[1:]) == 13
        assert row[1:] == ["50.0"] * 13

        header = text.splitlines()[0]
        positions = [header.index(name) for name in DOMAIN_ORDER[:-1]]
        assert positions == sorted(positions)
        assert "Avg." in text.splitlines()[1]

    def test_text_table_empty_cells_and_extra_categories(self):
        report = build_report([_outcome("Office", UIType.TEXT, True), _outcome("Web", UIType.ICON, False)])
        row = emit_report(report, "text", label="m").splitlines()[-1].split()
        assert len(row[1:]) == 15
        assert row[1:].count("-") == 12
        assert row[9] == "100.0"
        assert row[-1] == "50.0"

    def test_text_table_platform_split_shows_only_present_categories(self):
        outcomes = [
            _outcome("web", UIType.TEXT, True, 0),
            _outcome("desktop", UIType.ICON, False, 0),
            _outcome("mobile", UIType.TEXT, True, 0),
            _outcome("mobile", UIType.ICON, False, 1),
        ]
        lines = emit_report(build_report(outcomes), "text", label="m").splitlines()
        row = lines[-1].split()
        assert len(row[1:]) == 7
        assert row[1:] == ["100.0", "0.0", "-", "0.0", "100.0", "-", "50.0"]
        assert lines[0].split() == ["mobile", "desktop", "web"]
        for name in DOMAIN_ORDER:
            assert name not in lines[0]

    def test_text_table_unknown_categories_are_sorted(self):
        report = build_report([_outcome("Zeta", UIType.TEXT, True), _outcome("Alpha", UIType.ICON, True)])
        assert emit_report(report, "text").splitlines()[0].split() == ["Alpha", "Zeta"]

    def test_text_table_empty_report(self):
        lines = emit_report(build_report([]), "text", label="m").splitlines()
        assert lines[-1].split() == ["m", "-"]

    def test_unknown_format(self):
        with pytest.raises(ValueError, match="Unknown report format"):
            emit_report(EvalReport(), "xml")


class TestWriteReport:
    def test_files(self, tmp_path, screenshot_file, answer):
        box = PixelBox(10, 10, 60, 60)
        samples = [_sample(screenshot_file, i, box) for i in range(3)]
        answers = {s.instruction: [_hit(answer, box)] for s in samples}
        run = GroundingEvaluator(_pipeline(answers)).run(samples)

        paths = write_report(run, tmp_path / "out", label="run-1")
        assert sorted(p.name for p in paths.values()) == ["outcomes.jsonl", "report.csv", "report.json", "report.txt"]
        assert json.loads(paths["json"].read_text())["micro_avg"] == 1.0
        lines = paths["outcomes"].read_text().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0])["final_point"] == [35, 35]
        assert "run-1" in paths["text"].read_text()


def _echo_refiner():
    return MockBackend(lambda bundle, ordinal: bundle.user_text.rsplit("Task: ", 1)[1])


class TestAblation:
    @pytest.fixture
    def small_targets(self, screenshot_file):
        return [_sample(screenshot_file, i, PixelBox(100, 100, 110, 110)) for i in range(6)]

    def test_grid_rows(self, small_targets, answer):
        first, zoomed = answer(130, 130, 125, 125, 135, 135), answer(150, 150, 140, 140, 160, 160)
        # arms run in order: never, conditional, never+refine, conditional+refine
        answers = {s.instruction: [first, first, zoomed, first, first, zoomed] for s in small_targets}
        refiner = _echo_refiner()
        pipeline = GroundingPipeline(
            PipelineConfig(zoom=ZoomConfig(), zoom_mode=ZoomMode.NEVER, refinement_enabled=False),
            MockBackend(ScriptedGrounder(answers), max_parallel=4),
            refiner,
        )
        arms = ablation_grid([ZoomMode.NEVER, ZoomMode.CONDITIONAL], [False, True])
        result = run_ablation(small_targets, pipeline, arms, workers=2)

        rows = result.rows()
        assert [label for label, _ in rows] == ["never", "conditional", "never+refine", "conditional+refine"]
        assert [report.micro_avg for _, report in rows] == [0.0, 1.0, 0.0, 1.0]
        assert [report.zoom_rate for _, report in rows] == [0.0, 1.0, 0.0, 1.0]
        assert refiner.call_count == 12
        assert pipeline.config.zoom_mode is ZoomMode.NEVER

    def test_refining_arm_needs_a_refiner(self, small_targets):
        with pytest.raises(ValueError, match="refiner"):
            run_ablation(small_targets, _pipeline({}), [AblationArm(ZoomMode.NEVER, True)])

    def test_needs_an_arm(self, small_targets):
        with pytest.raises(ValueError, match="at least one"):
            run_ablation(small_targets, _pipeline({}), [])

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("never", AblationArm(ZoomMode.NEVER, False)),
            ("conditional+refine", AblationArm(ZoomMode.CONDITIONAL, True)),
            (" always+refine ", AblationArm(ZoomMode.ALWAYS, True)),
        ],
    )
    def test_parse_arm(self, text, expected):
        arm = AblationArm.parse(text)
        assert arm == expected
        assert AblationArm.parse(arm.label) == arm

    @pytest.mark.parametrize("text", ["", "sometimes", "never+zoom", "never+"])
    def test_parse_bad_arm(self, text):
        with pytest.raises(ValueError):
            AblationArm.parse(text)

    def test_grid_drops_duplicates(self):
        arms = ablation_grid([ZoomMode.NEVER, ZoomMode.NEVER], [False, False, True])
        assert [arm.label for arm in arms] == ["never", "never+refine"]


class TestEmitComparison:
    @pytest.fixture
    def rows(self):
        base = build_report([_outcome("Office", UIType.TEXT, False, 0), _outcome("CAD", UIType.ICON, True, 0)])
        zoomed = build_report([_outcome("Office", UIType.TEXT, True, 0), _outcome("CAD", UIType.ICON, True, 0)])
        return [("never", base), ("conditional+refine", zoomed)]

    def test_text_one_row_per_config(self, rows):
        lines = emit_comparison(rows, "text").splitlines()
        assert len(lines) == 5
        assert lines[1].split()[0] == "Model"
        never, refined = lines[-2].split(), lines[-1].split()
        assert never[0] == "never" and refined[0] == "conditional+refine"
        assert len(never) == len(refined) == 14
        assert never[-1] == "50.0" and refined[-1] == "100.0"
        # value columns line up across rows
        assert lines[-2].rindex("50.0") + len("50.0") == lines[-1].rindex("100.0") + len("100.0")

    def test_csv_has_config_column(self, rows):
        lines = emit_comparison(rows, "csv").splitlines()
        assert lines[0] == "config,category,ui_type,n,correct,accuracy"
        assert lines[1:] == [
            "never,CAD,icon,1,1,1.0",
            "never,Office,text,1,0,0.0",
            "conditional+refine,CAD,icon,1,1,1.0",
            "conditional+refine,Office,text,1,1,1.0",
        ]

    def test_json_rows(self, rows):
        data = json.loads(emit_comparison(rows, "json"))
        assert [row["label"] for row in data["rows"]] == ["never", "conditional+refine"]
        assert [row["micro_avg"] for row in data["rows"]] == [0.5, 1.0]

    def test_unknown_format(self, rows):
        with pytest.raises(ValueError, match="Unknown report format"):
            emit_comparison(rows, "xml")


class TestWriteAblation:
    def test_files(self, tmp_path, screenshot_file, answer):
        box = PixelBox(10, 10, 60, 60)
        samples = [_sample(screenshot_file, i, box) for i in range(2)]
        answers = {s.instruction: [_hit(answer, box)] * 3 for s in samples}
        arms = [AblationArm(ZoomMode.NEVER, False), AblationArm(ZoomMode.ALWAYS, False)]
        result = run_ablation(samples, _pipeline(answers), arms)

        paths = write_ablation(result, tmp_path / "out", prefix="mock")
        assert sorted(p.name for p in paths.values()) == [
            "ablation.csv", "ablation.json", "ablation.txt", "outcomes-always.jsonl", "outcomes-never.jsonl",
        ]
        text = paths["text"].read_text().splitlines()
        assert [line.split()[:2] for line in text[-2:]] == [["mock", "never"], ["mock", "always"]]
        assert len(paths["outcomes:never"].read_text().splitlines()) == 2
