"""groundrl: verifiable grounding rewards, group-relative policy
optimization utilities, mask-to-sparse-prompt conversion, segmentation
metrics, and a line-delimited reward-scoring service."""

__version__ = "0.1.0"

from .geometry import (
    BBox,
    DimensionMismatchError,
    DistanceField,
    EmptyMaskError,
    MaskGrid,
    PointXY,
    box_iou,
    distance_transform,
    inscribed_center,
    mask_iou,
    mask_to_bbox,
    outer_ring_point,
    point_in_box,
)
from .grpo import (
    GroupLogProbs,
    GroupTooSmallError,
    GrpoConfig,
    LengthMismatchError,
    ToyPolicy,
    grpo_demo_train,
    grpo_gradient_check,
    grpo_objective,
    group_advantages,
    toy_rollout,
    two_action_policy,
)
from .metrics import (
    EmptyDatasetError,
    EvalPair,
    MetricsReport,
    box_ciou,
    box_giou,
    eval_ciou,
    eval_cumulative_iou,
    eval_giou,
    eval_miou,
    evaluate,
)
from .dataset import (
    QualityEntry,
    SupervisionRecord,
    convert_dataset,
    convert_mask,
    filter_pool,
)
from .parsing import GroundingAnswer, ParsedRollout, parse_rollout, render_answer, render_completion
from .rewards import (
    GroundTruth,
    RewardBreakdown,
    reward_bbox_distance,
    reward_bbox_iou,
    reward_points,
    score_completion,
    score_group,
)

__all__ = [
    "__version__",
    "BBox",
    "DimensionMismatchError",
    "DistanceField",
    "EmptyMaskError",
    "MaskGrid",
    "PointXY",
    "box_iou",
    "distance_transform",
    "inscribed_center",
    "mask_iou",
    "mask_to_bbox",
    "outer_ring_point",
    "point_in_box",
    "GroupLogProbs",
    "GroupTooSmallError",
    "GrpoConfig",
    "LengthMismatchError",
    "ToyPolicy",
    "grpo_demo_train",
    "grpo_gradient_check",
    "grpo_objective",
    "group_advantages",
    "toy_rollout",
    "two_action_policy",
    "EmptyDatasetError",
    "EvalPair",
    "MetricsReport",
    "box_ciou",
    "box_giou",
    "eval_ciou",
    "eval_cumulative_iou",
    "eval_giou",
    "eval_miou",
    "evaluate",
    "QualityEntry",
    "SupervisionRecord",
    "convert_dataset",
    "convert_mask",
    "filter_pool",
    "GroundingAnswer",
    "ParsedRollout",
    "parse_rollout",
    "render_answer",
    "render_completion",
    "GroundTruth",
    "RewardBreakdown",
    "reward_bbox_distance",
    "reward_bbox_iou",
    "reward_points",
    "score_completion",
    "score_group",
]
