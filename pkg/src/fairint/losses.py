"""Loss terms and the joint training objective.

The joint objective combines four pieces:

  l0     task cross-entropy on the label
  l_sar  squared error of the reconstructed sensitive probability
  l_ifc  divergence between the groups' fused-embedding distributions
  l_fc   gap between the groups' mean cross-entropies

weighted as ``total = l0 + lambda_ifc * l_ifc + lambda_fc * l_fc + l_sar``.
Group membership everywhere comes from the reconstructed probability, not
the true sensitive column, so the fairness pressure works even where the
sensitive attribute is unavailable at inference time.

A weight of exactly 0 skips its term entirely: the term is not evaluated
and contributes no graph nodes, which keeps training dynamics bitwise
identical to a run where the term does not exist.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError, UsageError

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "ce_loss",
    "reconstruction_loss",
    "assign_groups",
    "group_divergence_loss",
    "group_gap_loss",
    "joint_loss",
]


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for the two fairness terms."""

    lambda_ifc: float = 0.0
    lambda_fc: float = 0.0

    def __post_init__(self):
        if self.lambda_ifc < 0 or self.lambda_fc < 0:
            raise ConfigError(
                f"loss weights must be non-negative, got ({self.lambda_ifc}, {self.lambda_fc})"
            )


@dataclass(frozen=True)
class LossBreakdown:
    """Float values of every term plus the weighted total for one batch."""

    l0: float
    l_sar: float
    l_ifc: float
    l_fc: float
    total: float

    def as_dict(self) -> dict:
        return {
            "l0": self.l0,
            "l_sar": self.l_sar,
            "l_ifc": self.l_ifc,
            "l_fc": self.l_fc,
            "total": self.total,
        }


def _as_column(values, n: int, what: str) -> Tensor:
    arr = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    if arr.shape[0] != n:
        raise ShapeError(f"{what} has {arr.shape[0]} rows, expected {n}")
    return Tensor(arr)


def _row_ce(pred: Tensor, y: Tensor) -> Tensor:
    # -log of the probability assigned to the correct class; for binary
    # labels this equals the usual two-term cross entropy but stays exact
    # when the model is confidently correct (p_correct == 1 -> 0).
    p_correct = y * pred + (1.0 - y) * (1.0 - pred)
    return ad.log(p_correct) * -1.0


def ce_loss(pred: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy; ``pred`` holds probabilities in (0, 1)."""
    n = pred.values.shape[0]
    if n == 0:
        raise UsageError("cross entropy of an empty batch")
    y = _as_column(labels, n, "labels")
    return ad.mean_all(_row_ce(pred, y))


def reconstruction_loss(pseudo_scalar: Tensor, sensitive) -> Tensor:
    """Mean squared error between reconstructed probability and true group."""
    n = pseudo_scalar.values.shape[0]
    if n == 0:
        raise UsageError("reconstruction loss of an empty batch")
    s = _as_column(sensitive, n, "sensitive values")
    diff = pseudo_scalar - s
    return ad.mean_all(diff * diff)


def assign_groups(pseudo_scalar) -> np.ndarray:
    """Threshold reconstructed probabilities into group ids.

    A probability of exactly 0.5 (the expected value of a balanced binary
    attribute) goes to group 1; everything below goes to group 0.
    """
    values = pseudo_scalar.values if isinstance(pseudo_scalar, Tensor) else np.asarray(pseudo_scalar)
    return (values.reshape(-1) >= 0.5).astype(np.int64)


def _group_masks(groups: np.ndarray) -> list[tuple[int, np.ndarray, int]]:
    out = []
    for g in np.unique(groups):
        rows = groups == g
        mask = np.zeros((1, groups.shape[0]))
        mask[0, rows] = 1.0
        out.append((int(g), mask, int(rows.sum())))
    return out


def group_divergence_loss(fused: Tensor, groups: np.ndarray) -> Tensor:
    """Symmetric KL divergence between per-group embedding distributions.

    Each group's fused embeddings are averaged and pushed through a
    softmax, giving one categorical distribution over embedding
    coordinates per group; the result is the sum of KL(p_i || p_j) over
    all ordered group pairs. Batches containing fewer than two groups
    contribute 0. Always non-negative, and 0 exactly when the group
    distributions coincide.
    """
    present = _group_masks(groups)
    if len(present) < 2:
        return Tensor(0.0)
    dists = []
    for _, mask, count in present:
        mean_embed = ad.matmul(Tensor(mask), fused) * (1.0 / count)
        dists.append(ad.softmax_lastdim(mean_embed))
    logs = [ad.log(p) for p in dists]
    total = None
    for i in range(len(dists)):
        for j in range(len(dists)):
            if i == j:
                continue
            term = ad.sum_all(dists[i] * (logs[i] - logs[j]))
            total = term if total is None else total + term
    return total


def group_gap_loss(pred: Tensor, labels, groups: np.ndarray) -> Tensor:
    """Sum of |CE_i - CE_j| over ordered group pairs.

    CE_g is the mean cross-entropy of the rows assigned to group g, so
    the value does not scale with batch size. With two groups this is
    2 * |CE_0 - CE_1|; with fewer than two groups it is 0. Invariant to
    relabeling the group ids.
    """
    n = pred.values.shape[0]
    y = _as_column(labels, n, "labels")
    present = _group_masks(groups)
    if len(present) < 2:
        return Tensor(0.0)
    rows = _row_ce(pred, y)
    means = [
        ad.sum_all(ad.matmul(Tensor(mask), rows)) * (1.0 / count) for _, mask, count in present
    ]
    total = None
    for i in range(len(means)):
        for j in range(len(means)):
            if i == j:
                continue
            term = (means[i] - means[j]).abs()
            total = term if total is None else total + term
    return total


def joint_loss(trace, labels, sensitive, weights: LossWeights):
    """Weighted sum of all terms for one forward trace.

    Returns ``(total, breakdown)``: the differentiable scalar to call
    backward on, and a float breakdown for logging. Terms whose weight is
    0 are skipped, never evaluated, and reported as 0.0.
    """
    l0 = ce_loss(trace.prediction, labels)
    l_sar = reconstruction_loss(trace.pseudo_scalar, sensitive)
    groups = assign_groups(trace.pseudo_scalar)

    total = l0
    l_ifc_value = 0.0
    if weights.lambda_ifc > 0.0:
        l_ifc = group_divergence_loss(trace.fused, groups)
        total = total + l_ifc * weights.lambda_ifc
        l_ifc_value = l_ifc.item()
    l_fc_value = 0.0
    if weights.lambda_fc > 0.0:
        l_fc = group_gap_loss(trace.prediction, labels, groups)
        total = total + l_fc * weights.lambda_fc
        l_fc_value = l_fc.item()
    total = total + l_sar

    breakdown = LossBreakdown(
        l0=l0.item(),
        l_sar=l_sar.item(),
        l_ifc=l_ifc_value,
        l_fc=l_fc_value,
        total=total.item(),
    )
    return total, breakdown
