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
Grounding action grammar

Parses and serializes the grounding model's answer format::

    pyautogui.click(x=120, y=45), <|box_start|>(100,30),(140,60)<|box_end|>

Two modes are supported. Lenient mode (inference) tolerates surrounding
whitespace, one enclosing pair of backticks, whitespace around ``=`` and
``,`` and fractional numbers, and it normalizes swapped box corners. Strict
mode (format rewards) only accepts the canonical form that ``serialize``
emits.
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

from .geometry import NULL_BOX, ORIGIN, PixelBox, PixelPoint

logger = logging.getLogger(__name__)


class ActionVerb(str, Enum):
    """Pointer verbs the grounding prompt allows."""

    CLICK = "click"
    MOVE_TO = "moveTo"


class FormatErrorKind(str, Enum):
    MISSING_CLICK = "missing_click"
    BAD_COORDINATES = "bad_coordinates"
    MISSING_BOX = "missing_box"
    BAD_BOX = "bad_box"
    TRAILING_GARBAGE = "trailing_garbage"


@dataclass(frozen=True)
class GroundingAction:
    """One parsed model answer: click-point plus element box."""

    verb: ActionVerb
    point: PixelPoint
    box: PixelBox
    raw_text: str = ""

    @classmethod
    def null(cls, raw_text: str = "") -> "GroundingAction":
        return cls(ActionVerb.CLICK, ORIGIN, NULL_BOX, raw_text)

    @property
    def is_null(self) -> bool:
        return is_null(self)


@dataclass(frozen=True)
class FormatError:
    """
    A grammar violation, returned (not raised) by the parser.

    ``kind`` names the first violation found scanning left to right.
    """

    kind: FormatErrorKind
    detail: str


ParseResult = Union[GroundingAction, FormatError]

# ASCII digits only; str patterns would otherwise accept any Unicode digit.
_NUMBER_LENIENT = r"([0-9]+(?:\.[0-9]+)?)"
_NUMBER_STRICT = r"([0-9]+)"

# No screen is a billion pixels wide; longer numbers are rejected, not parsed.
MAX_COORDINATE_DIGITS = 9

# A verb head anywhere in the text; used to tell prose-wrapped answers from
# answers with no action at all.
_CLICK_ANYWHERE = re.compile(r"pyautogui\.(?:click|moveTo)\(")


class _Grammar:
    """Compiled segment patterns for one parser mode."""

    def __init__(self, strict: bool):
        num = _NUMBER_STRICT if strict else _NUMBER_LENIENT
        ws = "" if strict else r"\s*"
        sep = ", " if strict else r"\s*,\s*"
        self.strict = strict
        self.head = re.compile(r"pyautogui\.(click|moveTo)\(")
        if strict:
            self.coords = re.compile(rf"x={num}, y={num}\)")
        else:
            self.coords = re.compile(
                rf"{ws}x{ws}={ws}{num}{ws},{ws}y{ws}={ws}{num}{ws}\)"
            )
        self.box_open = re.compile(rf"{sep}<\|box_start\|>")
        pair = rf"\({ws}{num}{ws},{ws}{num}{ws}\)"
        self.box_body = re.compile(rf"{ws}{pair}{ws},{ws}{pair}{ws}<\|box_end\|>")


_LENIENT = _Grammar(strict=False)
_STRICT = _Grammar(strict=True)


def _to_int(token: str) -> Optional[int]:
    """Round a non-negative decimal token half-up, or None when it is too long."""
    whole, _, fraction = token.partition(".")
    whole = whole.lstrip("0") or "0"
    if len(whole) > MAX_COORDINATE_DIGITS:
        return None
    return int(whole) + (1 if fraction[:1] >= "5" else 0)


def _unwrap(text: str) -> str:
    body = text.strip()
    if len(body) >= 2 and body[0] == "`" and body[-1] == "`":
        inner = body[1:-1]
        # Only a single code span is tolerated; nested backticks mean prose.
        if "`" not in inner:
            return inner.strip()
    return body


def _scan_click(
    body: str, grammar: _Grammar
) -> Tuple[Optional[FormatError], int, Optional[Tuple[ActionVerb, PixelPoint]]]:
    head = grammar.head.match(body)
    if head is None:
        if _CLICK_ANYWHERE.search(body):
            return (
                FormatError(
                    FormatErrorKind.TRAILING_GARBAGE,
                    "text outside the action (action does not start the response)",
                ),
                0,
                None,
            )
        return (
            FormatError(FormatErrorKind.MISSING_CLICK, "no pyautogui.click/moveTo call found"),
            0,
            None,
        )
    coords = grammar.coords.match(body, head.end())
    if coords is None:
        return (
            FormatError(
                FormatErrorKind.BAD_COORDINATES,
                f"expected x=<num>, y=<num>) after {head.group(0)!r}",
            ),
            head.end(),
            None,
        )
    x, y = _to_int(coords.group(1)), _to_int(coords.group(2))
    if x is None or y is None:
        return (
            FormatError(
                FormatErrorKind.BAD_COORDINATES,
                f"coordinate longer than {MAX_COORDINATE_DIGITS} digits",
            ),
            head.end(),
            None,
        )
    point = PixelPoint(x, y)
    return None, coords.end(), (ActionVerb(head.group(1)), point)


def _scan_box(body: str, pos: int, grammar: _Grammar) -> Tuple[Optional[FormatError], int, Optional[PixelBox]]:
    opener = grammar.box_open.match(body, pos)
    if opener is None:
        return (
            FormatError(FormatErrorKind.MISSING_BOX, "expected ', <|box_start|>' after click"),
            pos,
            None,
        )
    match = grammar.box_body.match(body, opener.end())
    if match is None:
        return (
            FormatError(
                FormatErrorKind.BAD_BOX, "expected (x1,y1),(x2,y2)<|box_end|> inside box markers"
            ),
            opener.end(),
            None,
        )
    corners = [_to_int(match.group(i)) for i in range(1, 5)]
    if None in corners:
        return (
            FormatError(FormatErrorKind.BAD_BOX, f"box coordinate longer than {MAX_COORDINATE_DIGITS} digits"),
            opener.end(),
            None,
        )
    ax, ay, bx, by = corners
    if grammar.strict and (ax > bx or ay > by):
        return (
            FormatError(FormatErrorKind.BAD_BOX, "box corners are not top-left then bottom-right"),
            opener.end(),
            None,
        )
    return None, match.end(), PixelBox.from_corners(ax, ay, bx, by)


def parse_grounding_output(text: str, strict: bool = False) -> ParseResult:
    """
    Parse one grounding-model response.

    Args:
        text: Raw model output
        strict: Accept only the canonical serialized form

    Returns:
        GroundingAction on success, otherwise the first FormatError found
    """
    grammar = _STRICT if strict else _LENIENT
    body = text if strict else _unwrap(text)

    error, pos, click = _scan_click(body, grammar)
    if error is not None:
        return error
    error, pos, box = _scan_box(body, pos, grammar)
    if error is not None:
        return error
    if pos != len(body):
        return FormatError(
            FormatErrorKind.TRAILING_GARBAGE, f"unexpected text after <|box_end|>: {body[pos:pos + 40]!r}"
        )

    verb, point = click
    return GroundingAction(verb=verb, point=point, box=box, raw_text=text)


def parse_click_segment(text: str) -> Optional[PixelPoint]:
    """
    Strictly parse only the leading click segment.

    Returns:
        The click-point when ``text`` starts with a canonical
        ``pyautogui.<verb>(x=<int>, y=<int>)``, else None
    """
    error, _, click = _scan_click(text, _STRICT)
    if error is not None:
        return None
    return click[1]


def parse_box_segment(text: str) -> Optional[PixelBox]:
    """
    Strictly parse only the box segment, independent of the click segment.

    The segment must occur exactly once, be preceded by ``", "`` and end the
    text.
    """
    if text.count("<|box_start|>") != 1:
        return None
    start = text.index("<|box_start|>") - 2
    if start < 0:
        return None
    error, end, box = _scan_box(text, start, _STRICT)
    if error is not None or end != len(text):
        return None
    return box


def serialize(action: GroundingAction) -> str:
    """Emit the canonical wire form of an action."""
    p, b = action.point, action.box
    return (
        f"pyautogui.{action.verb.value}(x={p.x}, y={p.y}), "
        f"<|box_start|>({b.x1},{b.y1}),({b.x2},{b.y2})<|box_end|>"
    )


def is_null(action: GroundingAction) -> bool:
    """True for the infeasible-task answer: zero point and all-zero box."""
    return action.point == ORIGIN and action.box == NULL_BOX
