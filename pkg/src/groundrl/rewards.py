"""The five rule-based rewards for grounded completions.

Two format rewards gate three localization rewards: a completion that does
not parse into the canonical schema scores zero on every localization
component.  The total is the plain sum of the five components, so it lives
in [0, 5].
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import BBox, PointXY, box_iou, point_in_box
from .parsing import parse_rollout

IOU_THRESHOLD = 0.5
POINTS_THRESHOLD = 0.5
DISTANCE_CUTOFF = 0.5


@dataclass(frozen=True)
class GroundTruth:
    """Per-sample supervision: GT box, two GT points, and image size."""

    bbox: BBox
    point_1: PointXY
    point_2: PointXY
    image_width: float
    image_height: float

    def __post_init__(self) -> None:
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        for p in (self.point_1, self.point_2):
            if not (0.0 <= p.x <= self.image_width and 0.0 <= p.y <= self.image_height):
                raise ValueError(
                    f"ground-truth point {p} outside "
                    f"{self.image_width}x{self.image_height} image"
                )

    @property
    def side_min(self) -> float:
        return min(self.bbox.width, self.bbox.height)

    @property
    def side_max(self) -> float:
        return max(self.bbox.width, self.bbox.height)


@dataclass(frozen=True)
class RewardBreakdown:
    """The five reward components plus their sum."""

    reasoning_format: float
    prompt_format: float
    bbox_iou: float
    bbox_distance: float
    points_accuracy: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "reasoning_format": self.reasoning_format,
            "prompt_format": self.prompt_format,
            "bbox_iou": self.bbox_iou,
            "bbox_distance": self.bbox_distance,
            "points_accuracy": self.points_accuracy,
            "total": self.total,
        }


def reward_bbox_iou(pred: BBox, gt: BBox) -> float:
    """1 iff IoU strictly exceeds 0.5, else 0."""
    return 1.0 if box_iou(pred, gt) > IOU_THRESHOLD else 0.0


def reward_bbox_distance(pred: BBox, gt: BBox) -> float:
    """Linear decay in the scale-normalized center offset.

    d = (|cx_p - cx_g| / w_g + |cy_p - cy_g| / h_g) / 2; the reward is
    max(0, 1 - d / 0.5), reaching 0 once d >= 0.5.
    """
    cp, cg = pred.center, gt.center
    d = 0.5 * (abs(cp.x - cg.x) / gt.width + abs(cp.y - cg.y) / gt.height)
    return max(0.0, 1.0 - d / DISTANCE_CUTOFF)


def reward_points(pred_1: PointXY, pred_2: PointXY, gt: GroundTruth) -> float:
    """1 iff both predicted points lie in the GT box and the mean
    scale-normalized L1 error is strictly below 0.5.

    The first point is normalized by the shorter GT box side, the second
    by the longer one.
    """
    if not (point_in_box(pred_1, gt.bbox) and point_in_box(pred_2, gt.bbox)):
        return 0.0
    d1 = pred_1.l1_distance(gt.point_1) / gt.side_min
    d2 = pred_2.l1_distance(gt.point_2) / gt.side_max
    s = (d1 + d2) / 2.0
    return 1.0 if s < POINTS_THRESHOLD else 0.0


def score_completion(completion: str, gt: GroundTruth) -> RewardBreakdown:
    """Parse a completion and evaluate all five rewards against ``gt``."""
    parsed = parse_rollout(completion, gt.image_width, gt.image_height)
    reasoning = 1.0 if parsed.reasoning_format_ok else 0.0
    prompt = 1.0 if parsed.prompt_format_ok else 0.0
    if parsed.answer is None:
        iou = dist = points = 0.0
    else:
        iou = reward_bbox_iou(parsed.answer.bbox, gt.bbox)
        dist = reward_bbox_distance(parsed.answer.bbox, gt.bbox)
        points = reward_points(parsed.answer.point_1, parsed.answer.point_2, gt)
    total = reasoning + prompt + iou + dist + points
    return RewardBreakdown(reasoning, prompt, iou, dist, points, total)


def score_group(completions: list[str], gt: GroundTruth) -> list[RewardBreakdown]:
    """Score a group of completions, preserving input order."""
    return [score_completion(c, gt) for c in completions]


def total_rewards(breakdowns: list[RewardBreakdown]) -> list[float]:
    return [b.total for b in breakdowns]
