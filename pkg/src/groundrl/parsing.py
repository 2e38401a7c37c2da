"""Parsing of structured model completions.

A well-formed completion is, up to surrounding whitespace, exactly

    <think>...</think><answer>...</answer>

with each tag pair appearing exactly once and in that order.  The answer
body must be a single JSON object of the form

    {"bbox": [x1, y1, x2, y2], "points_1": [x, y], "points_2": [x, y]}

with no extra keys, numeric entries, x1 < x2, y1 < y2, and every
coordinate inside the image.  Parsing is total: malformed input yields
flags set to False, never an exception.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .geometry import BBox, PointXY

_ENVELOPE_RE = re.compile(
    r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*\Z", re.DOTALL
)
_TAGS = ("<think>", "</think>", "<answer>", "</answer>")
_ANSWER_KEYS = ("bbox", "points_1", "points_2")


@dataclass(frozen=True)
class GroundingAnswer:
    """The grounding payload of a completion: one box and two points."""

    bbox: BBox
    point_1: PointXY
    point_2: PointXY


@dataclass(frozen=True)
class ParsedRollout:
    """Outcome of parsing one completion.

    ``prompt_format_ok`` implies ``reasoning_format_ok`` and implies
    ``answer`` is present; the answer is only extracted from a completion
    whose envelope and schema both check out.
    """

    think_text: str
    answer: GroundingAnswer | None
    reasoning_format_ok: bool
    prompt_format_ok: bool


def parse_rollout(completion: str, image_width: float, image_height: float) -> ParsedRollout:
    """Parse one completion string; never raises on malformed input."""
    if not isinstance(completion, str):
        return ParsedRollout("", None, False, False)
    m = _ENVELOPE_RE.match(completion)
    if m is None or any(completion.count(tag) != 1 for tag in _TAGS):
        return ParsedRollout("", None, False, False)
    think_text = m.group(1)
    answer = _parse_answer_body(m.group(2), image_width, image_height)
    if answer is None:
        return ParsedRollout(think_text, None, True, False)
    return ParsedRollout(think_text, answer, True, True)


def render_answer(answer: GroundingAnswer) -> str:
    """Serialize an answer into the canonical schema."""
    b = answer.bbox
    payload = {
        "bbox": [b.x1, b.y1, b.x2, b.y2],
        "points_1": [answer.point_1.x, answer.point_1.y],
        "points_2": [answer.point_2.x, answer.point_2.y],
    }
    return json.dumps(payload, separators=(", ", ": "))


def render_completion(think_text: str, answer: GroundingAnswer) -> str:
    """Assemble a fully well-formed completion string."""
    return f"<think>{think_text}</think><answer>{render_answer(answer)}</answer>"


def _reject_constant(_: str) -> float:
    # json would otherwise accept NaN/Infinity literals.
    raise ValueError("non-finite JSON constant")


def _coords(value: object, n: int) -> list[float] | None:
    if not isinstance(value, list) or len(value) != n:
        return None
    out: list[float] = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            return None
        out.append(float(v))
    return out


def _parse_answer_body(body: str, width: float, height: float) -> GroundingAnswer | None:
    try:
        obj = json.loads(body, parse_constant=_reject_constant)
    except (ValueError, RecursionError):
        return None
    if not isinstance(obj, dict) or set(obj.keys()) != set(_ANSWER_KEYS):
        return None
    box = _coords(obj["bbox"], 4)
    p1 = _coords(obj["points_1"], 2)
    p2 = _coords(obj["points_2"], 2)
    if box is None or p1 is None or p2 is None:
        return None
    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        return None
    xs = (x1, x2, p1[0], p2[0])
    ys = (y1, y2, p1[1], p2[1])
    if not all(0.0 <= x <= width for x in xs) or not all(0.0 <= y <= height for y in ys):
        return None
    return GroundingAnswer(BBox(x1, y1, x2, y2), PointXY(p1[0], p1[1]), PointXY(p2[0], p2[1]))
