"""
Tests for prompt templates, pinned byte-for-byte by golden files.
"""

import pytest
from PIL import Image

from zoomground.prompts import (
    GROUNDING_SYSTEM_PROMPT,
    REFINEMENT_SYSTEM_PROMPT,
    build_augmentation_prompt,
    build_grounding_prompt,
    build_refinement_prompt,
)


@pytest.fixture
def tiny_image():
    return Image.new("RGB", (8, 8))


def _golden(directory, name):
    return (directory / name).read_bytes().decode("utf-8")


class TestGoldenFiles:
    def test_refinement_prompt(self, golden_directory, tiny_image):
        bundle = build_refinement_prompt("open the settings", tiny_image)
        assert bundle.system_text == _golden(golden_directory, "refinement_system.txt")
        expected = _golden(golden_directory, "refinement_user.txt").replace("{instruction}", "open the settings")
        assert bundle.user_text == expected
        assert bundle.image is tiny_image

    def test_grounding_prompt(self, golden_directory, tiny_image):
        bundle = build_grounding_prompt("Click the red square in the top-left area", tiny_image)
        assert bundle.system_text == _golden(golden_directory, "grounding_system.txt")
        expected = _golden(golden_directory, "grounding_user.txt").replace(
            "{instruction}", "Click the red square in the top-left area"
        )
        assert bundle.user_text == expected

    def test_grounding_system_keeps_null_action(self):
        assert "`pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>`" in GROUNDING_SYSTEM_PROMPT
        assert "bouding box" in GROUNDING_SYSTEM_PROMPT


class TestBuilders:
    @pytest.mark.parametrize("instruction", ["", "   ", "\n"])
    def test_empty_instruction(self, tiny_image, instruction):
        with pytest.raises(ValueError, match="empty"):
            build_grounding_prompt(instruction, tiny_image)
        with pytest.raises(ValueError, match="empty"):
            build_refinement_prompt(instruction, tiny_image)

    def test_braces_in_instruction_are_literal(self, tiny_image):
        bundle = build_grounding_prompt("type {name} into the box", tiny_image)
        assert bundle.user_text.endswith("Task: type {name} into the box")

    def test_augmentation_prompt(self, tiny_image):
        bundle = build_augmentation_prompt("Rewrite it.\nTask: {instruction}", "click save", tiny_image)
        assert bundle.system_text == REFINEMENT_SYSTEM_PROMPT
        assert bundle.user_text == "Rewrite it.\nTask: click save"

    def test_augmentation_template_needs_placeholder(self, tiny_image):
        with pytest.raises(ValueError, match="placeholder"):
            build_augmentation_prompt("Rewrite it.", "click save", tiny_image)
