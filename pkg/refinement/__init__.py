"""Distance recomputation (pruning) and topology reconstruction (edge addition)."""

from refinement.distance import (
    DistanceRecord,
    PruneFragment,
    lambda_schedule,
    percentile_threshold,
    prune_shells,
    semantic_distance,
)
from refinement.report import RefinementReport, VisitCounter
from refinement.topology import (
    CandidatePair,
    CandidateSet,
    contextual_alignment,
    knn_candidates,
    score_and_add,
    tr_loss,
    tr_loss_grad,
)

__all__ = [
    "CandidatePair",
    "CandidateSet",
    "DistanceRecord",
    "PruneFragment",
    "RefinementReport",
    "VisitCounter",
    "contextual_alignment",
    "knn_candidates",
    "lambda_schedule",
    "percentile_threshold",
    "prune_shells",
    "score_and_add",
    "semantic_distance",
    "tr_loss",
    "tr_loss_grad",
]
