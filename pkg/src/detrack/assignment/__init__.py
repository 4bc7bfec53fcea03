from .boxes import Box, giou, giou_grad, iou
from .hungarian import AssignmentResult, hungarian
from .matching import (
    EMPTY_QUERY,
    GroundTruth,
    Prediction,
    build_cost_matrix,
    match_detection,
    match_tracking,
)
from .losses import LossWeights, box_loss, box_loss_grad, total_loss, total_loss_grad, total_loss_terms

__all__ = [
    "AssignmentResult",
    "Box",
    "EMPTY_QUERY",
    "GroundTruth",
    "LossWeights",
    "Prediction",
    "box_loss",
    "box_loss_grad",
    "build_cost_matrix",
    "giou",
    "giou_grad",
    "hungarian",
    "iou",
    "match_detection",
    "match_tracking",
    "total_loss",
    "total_loss_grad",
    "total_loss_terms",
]
