"""
Pytest configuration and shared fixtures for zoomground tests.
"""

import json
import sys
from pathlib import Path

import pytest
from PIL import Image, ImageDraw

# Add src directory to path so we can import zoomground modules
src_dir = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_dir))

from zoomground.action_grammar import ActionVerb, GroundingAction, serialize  # noqa: E402
from zoomground.geometry import PixelBox, PixelPoint  # noqa: E402


def pytest_collection_modifyitems(config, items):
    """Tag end-to-end tests as integration tests."""
    for item in items:
        if "integration" in item.name or "workflow" in item.nodeid:
            item.add_marker(pytest.mark.integration)


@pytest.fixture(scope="session")
def test_data_directory():
    """Provide the test data directory path."""
    return Path(__file__).parent / "test_data"


@pytest.fixture(scope="session")
def golden_directory(test_data_directory):
    return test_data_directory / "golden"


@pytest.fixture
def screenshot():
    """A 400x400 synthetic screenshot with a few distinguishable widgets."""
    image = Image.new("RGB", (400, 400), (240, 240, 240))
    draw = ImageDraw.Draw(image)
    draw.rectangle((100, 100, 110, 110), fill=(200, 30, 30))
    draw.rectangle((125, 125, 275, 275), fill=(30, 30, 200))
    draw.rectangle((300, 20, 380, 40), fill=(30, 160, 30))
    return image


@pytest.fixture
def screenshot_file(tmp_path, screenshot):
    path = tmp_path / "screen.png"
    screenshot.save(path, format="PNG")
    return path


@pytest.fixture
def answer():
    """Build a canonical model answer from a point and box corners."""

    def _answer(x, y, x1, y1, x2, y2, verb=ActionVerb.CLICK):
        return serialize(GroundingAction(verb, PixelPoint(x, y), PixelBox(x1, y1, x2, y2)))

    return _answer


@pytest.fixture
def null_answer():
    return "pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>"


@pytest.fixture
def write_jsonl():
    """Write a list of dicts (or raw strings) as JSON Lines."""

    def _write(path, records):
        with open(path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(record if isinstance(record, str) else json.dumps(record))
                f.write("\n")
        return path

    return _write
