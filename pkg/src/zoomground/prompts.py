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
Prompt templates

The refinement and grounding templates are wire contracts with the models
they were written for and must stay byte-exact (including the misspelled
"bouding"); golden files under ``tests/test_data/golden`` pin them.
"""

from dataclasses import dataclass

from PIL import Image

REFINEMENT_SYSTEM_PROMPT = "You are a helpful GUI assistant."

REFINEMENT_USER_TEMPLATE = (
    "You are given a task description and a screenshot of a GUI. "
    "The task can be completed with only one click.\n"
    "You need to find out the target to click, and then refine the task "
    "description to let user easily locate the target on the screen.\n"
    "Possible refinements include adding location information, describing "
    "visual features (color, size, text, icon shape, ...), clarifying "
    "ambiguous terms, etc.\n"
    "\n"
    "Only reply with the refined description. Do not add explanations.\n"
    "\n"
    "Task: {instruction}"
)

GROUNDING_SYSTEM_PROMPT = (
    "You are a GUI agent. You are given a task and a screenshot of the screen. "
    "You need to perform pyautogui click/moveTo action to complete the task, "
    "and then provide the bouding box of the target object. The answer format "
    "is `pyautogui.click(x=?, y=?), <|box_start|>(x1,y1),(x2,y2)<|box_end|>`. "
    "If the task is infeasible (e.g., the task is already completed, the target "
    "does not exist in the image, or the instruction is unrelated to the "
    "screenshot), output a null action exactly as follows: "
    "`pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>`."
)

GROUNDING_USER_TEMPLATE = (
    "Please complete the following tasks by clicking using `pyautogui.click` "
    "and returning the bounding box:\n"
    "Task: {instruction}"
)


@dataclass(frozen=True)
class PromptBundle:
    """System text, user text and the screenshot for one chat request."""

    system_text: str
    user_text: str
    image: Image.Image


def _fill(template: str, instruction: str) -> str:
    if not instruction or not instruction.strip():
        raise ValueError("Instruction must not be empty")
    # str.format does not re-interpret braces inside the substituted value
    return template.format(instruction=instruction)


def build_refinement_prompt(instruction: str, image: Image.Image) -> PromptBundle:
    """Prompt asking the refiner to rewrite an instruction into an explicit target description."""
    return PromptBundle(
        system_text=REFINEMENT_SYSTEM_PROMPT,
        user_text=_fill(REFINEMENT_USER_TEMPLATE, instruction),
        image=image,
    )


def build_grounding_prompt(refined: str, image: Image.Image) -> PromptBundle:
    """Prompt asking the grounder for a click-point and element box."""
    return PromptBundle(
        system_text=GROUNDING_SYSTEM_PROMPT,
        user_text=_fill(GROUNDING_USER_TEMPLATE, refined),
        image=image,
    )


def build_augmentation_prompt(template: str, instruction: str, image: Image.Image) -> PromptBundle:
    """
    Prompt asking an LLM for one instruction variant.

    Args:
        template: Variant template from configuration, with an
            ``{instruction}`` placeholder
        instruction: Source instruction
        image: Screenshot the instruction refers to
    """
    if "{instruction}" not in template:
        raise ValueError("Augmentation template lacks an {instruction} placeholder")
    return PromptBundle(
        system_text=REFINEMENT_SYSTEM_PROMPT,
        user_text=_fill(template, instruction),
        image=image,
    )
