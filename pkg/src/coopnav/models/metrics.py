"""Loss and evaluation metrics for the perception models.

Cells pool across both output channels under the mask rule: a believed-free
cell is scored on the add channel, a believed-wall cell on the remove
channel, so every map cell contributes exactly one position.
"""

from __future__ import annotations

import numpy as np

CLIP_EPS = 1e-7


def split_valid(belief_channel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(valid_add, valid_remove) boolean masks from the belief wall channel."""
    wall = belief_channel >= 0.5
    return ~wall, wall


def masked_bce(
    probs: np.ndarray,
    labels: np.ndarray,
    valid: np.ndarray,
    pos_weight: float = 1.0,
) -> float:
    """Mean of -[w*y*log(p) + (1-y)*log(1-p)] over the valid positions.

    `probs`, `labels`, `valid` are broadcast-compatible stacks covering both
    channels; probabilities are clipped to [eps, 1-eps] before the logs.
    """
    p = np.clip(probs, CLIP_EPS, 1.0 - CLIP_EPS)
    y = labels.astype(np.float64)
    terms = -(pos_weight * y * np.log(p) + (1.0 - y) * np.log1p(-p))
    total = float((terms * valid).sum())
    count = int(np.count_nonzero(valid))
    if count == 0:
        raise ValueError("no valid positions to score")
    return total / count


def bce_cell_sums(
    probs: np.ndarray, labels: np.ndarray, valid: np.ndarray
) -> tuple[float, int]:
    """(summed unweighted BCE, valid position count) for dataset pooling."""
    p = np.clip(probs, CLIP_EPS, 1.0 - CLIP_EPS)
    y = labels.astype(np.float64)
    terms = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float((terms * valid).sum()), int(np.count_nonzero(valid))


def mbce(pairs) -> float:
    """Unweighted mean BCE pooled over (probs, labels, valid) triples."""
    total = 0.0
    count = 0
    for probs, labels, valid in pairs:
        part, n = bce_cell_sums(probs, labels, valid)
        total += part
        count += n
    if count == 0:
        raise ValueError("empty evaluation set")
    return total / count


def iou_at(pairs, threshold: float) -> float:
    """Intersection-over-union of thresholded predictions vs true edits,
    pooled over the dataset and both channels. Perfect empty-vs-empty is 1."""
    inter = 0
    union = 0
    for probs, labels, valid in pairs:
        pred = (probs >= threshold) & valid
        true = labels.astype(bool) & valid
        inter += int(np.count_nonzero(pred & true))
        union += int(np.count_nonzero(pred | true))
    if union == 0:
        return 1.0
    return inter / union


def iou_sweep(pairs, thresholds) -> dict[float, float]:
    pairs = list(pairs)
    return {float(t): iou_at(pairs, float(t)) for t in thresholds}
