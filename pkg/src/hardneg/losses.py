"""Metric-learning losses over a batch, plain and with optimal negatives.

The plain forms consume pairwise embedding distances; the modified forms
substitute the per-combination optimal distances from the table, which are
never larger than any endpoint distance, so every hinge term can only grow.
Similarities are s = 1 - d^2 / 2, the dot product for unit embeddings.

Totals are normalized by the number of summed terms by default; set
normalization="classes" to divide by the number of classes in the batch
instead (both normalizations are in circulation for these losses, so both
are supported).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .batch_engine import LabeledBatch, OptimalDistanceTable, build_pairs
from .errors import NoNegatives


@dataclass(frozen=True)
class LossConfig:
    """Margins and multi-similarity hyperparameters."""

    margin: float = 0.2
    ms_epsilon: float = 0.1
    ms_margin: float = 0.5
    ms_alpha: float = 2.0
    ms_beta: float = 50.0
    normalization: str = "terms"  # or "classes"

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.ms_alpha <= 0 or self.ms_beta <= 0:
            raise ValueError("ms_alpha and ms_beta must be positive")
        if not -1.0 < self.ms_margin < 1.0:
            raise ValueError("ms_margin must lie in (-1, 1)")
        if self.normalization not in ("terms", "classes"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class LossValue:
    """Total loss plus per-term contributions for diagnostics."""

    total: float
    per_term: tuple


def export_loss_csv(value: LossValue, path) -> None:
    """Write the per-term diagnostics as rows (term, contribution)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "contribution"])
        for term, contribution in value.per_term:
            writer.writerow([repr(term), repr(float(contribution))])


def pairwise(batch: LabeledBatch):
    """Distance and similarity matrices d and s = 1 - d^2 / 2."""
    gram = batch.embeddings @ batch.embeddings.T
    d_sq = np.clip(2.0 - 2.0 * gram, 0.0, None)
    np.fill_diagonal(d_sq, 0.0)
    dist = np.sqrt(d_sq)
    sim = 1.0 - d_sq / 2.0
    return dist, sim


def hinge(x: float) -> float:
    return x if x > 0.0 else 0.0


def _require_negatives(batch: LabeledBatch) -> None:
    if batch.num_classes() < 2:
        raise NoNegatives("batch has a single class")


def _finish(terms, batch: LabeledBatch, config: LossConfig) -> LossValue:
    if config.normalization == "classes":
        norm = batch.num_classes()
    else:
        norm = max(len(terms), 1)
    total = sum(value for _, value in terms) / norm
    return LossValue(total=float(total), per_term=tuple(terms))


def triplet(batch: LabeledBatch, config: LossConfig) -> LossValue:
    """Hinge over (positive pair, negative sample) tuples."""
    _require_negatives(batch)
    dist, _ = pairwise(batch)
    pairs = build_pairs(batch)
    m = config.margin
    terms = []
    for i, j in zip(pairs.idx1, pairs.idx2):
        d_pos = dist[i, j]
        for k in np.flatnonzero(batch.labels != batch.labels[i]):
            terms.append(((int(i), int(j), int(k)), hinge(d_pos - dist[i, k] + m)))
    return _finish(terms, batch, config)


def loop_triplet(
    batch: LabeledBatch, table: OptimalDistanceTable, config: LossConfig
) -> LossValue:
    """Triplet hinge with the negative distance replaced by the optimal one.

    Every combination contributes twice, once per side playing the positive
    pair, matching the sum over (positive pair, negative pair) tuples.
    """
    _require_negatives(batch)
    dist, _ = pairwise(batch)
    m = config.margin
    terms = []
    for (i, j, k, l), d_opt in table.per_combination.items():
        terms.append((((i, j), (k, l)), hinge(dist[i, j] - d_opt + m)))
        terms.append((((k, l), (i, j)), hinge(dist[k, l] - d_opt + m)))
    return _finish(terms, batch, config)


def _hardest_positive(dist, labels, i, j):
    """Farthest same-class distance seen from either pair member."""
    best = 0.0
    for anchor in (i, j):
        same = np.flatnonzero(labels == labels[anchor])
        same = same[same != anchor]
        if len(same):
            best = max(best, float(np.max(dist[anchor, same])))
    return best


def _hardest_negative(dist, labels, i, j):
    """Nearest different-class distance seen from either pair member."""
    best = np.inf
    for anchor in (i, j):
        diff = np.flatnonzero(labels != labels[anchor])
        if len(diff):
            best = min(best, float(np.min(dist[anchor, diff])))
    return best


def hphn_triplet(batch: LabeledBatch, config: LossConfig) -> LossValue:
    """Hard-positive hard-negative triplet: one term per positive pair."""
    _require_negatives(batch)
    dist, _ = pairwise(batch)
    pairs = build_pairs(batch)
    labels = batch.labels
    m = config.margin
    terms = []
    for i, j in zip(pairs.idx1, pairs.idx2):
        hp = _hardest_positive(dist, labels, i, j)
        hn = _hardest_negative(dist, labels, i, j)
        terms.append(((int(i), int(j)), hinge(hp + m - hn)))
    return _finish(terms, batch, config)


def loop_hphn(
    batch: LabeledBatch, table: OptimalDistanceTable, config: LossConfig
) -> LossValue:
    """HPHN with the mined negative replaced by the per-pair optimal minimum."""
    _require_negatives(batch)
    dist, _ = pairwise(batch)
    labels = batch.labels
    m = config.margin
    terms = []
    for i, j in table.positive_pairs:
        hp = _hardest_positive(dist, labels, i, j)
        hn = table.per_pair_min[(i, j)]
        terms.append(((i, j), hinge(hp + m - hn)))
    return _finish(terms, batch, config)


def lifted_structure(batch: LabeledBatch, config: LossConfig) -> LossValue:
    """Push each positive pair beyond the margin from its nearest negative."""
    _require_negatives(batch)
    dist, _ = pairwise(batch)
    pairs = build_pairs(batch)
    labels = batch.labels
    m = config.margin
    terms = []
    for i, j in zip(pairs.idx1, pairs.idx2):
        hn = _hardest_negative(dist, labels, i, j)
        terms.append(((int(i), int(j)), hinge(dist[i, j] + m - hn)))
    return _finish(terms, batch, config)


def loop_ls(
    batch: LabeledBatch, table: OptimalDistanceTable, config: LossConfig
) -> LossValue:
    """Lifted structure with the optimal per-pair minimum as the negative."""
    _require_negatives(batch)
    dist, _ = pairwise(batch)
    m = config.margin
    terms = []
    for i, j in table.positive_pairs:
        hn = table.per_pair_min[(i, j)]
        terms.append(((i, j), hinge(dist[i, j] + m - hn)))
    return _finish(terms, batch, config)


def ms_mining(batch: LabeledBatch, config: LossConfig) -> dict:
    """Plain multi-similarity mining: per anchor, kept positives/negatives.

    A negative j survives when s_ij > (min same-class similarity) - epsilon;
    a positive j survives when s_ij < (max different-class similarity) +
    epsilon. Ties on the strict inequalities are excluded.
    """
    _require_negatives(batch)
    _, sim = pairwise(batch)
    labels = batch.labels
    mined = {}
    for i in range(batch.batch_size):
        same = np.flatnonzero(labels == labels[i])
        same = same[same != i]
        diff = np.flatnonzero(labels != labels[i])
        if len(same) == 0 or len(diff) == 0:
            mined[i] = {"positives": (), "negatives": ()}
            continue
        neg_threshold = float(np.min(sim[i, same])) - config.ms_epsilon
        pos_threshold = float(np.max(sim[i, diff])) + config.ms_epsilon
        mined[i] = {
            "positives": tuple(int(j) for j in same if sim[i, j] < pos_threshold),
            "negatives": tuple(int(j) for j in diff if sim[i, j] > neg_threshold),
        }
    return mined


def _optimal_similarity_lookup(batch: LabeledBatch, table: OptimalDistanceTable):
    """s(i, k) = 1 - d_opt^2 / 2 for the pairs containing samples i and k."""
    pair_of_sample = {}
    for pos, (i, j) in enumerate(table.positive_pairs):
        pair_of_sample[i] = pos
        pair_of_sample[j] = pos
    by_positions = {}
    for (p, q), dist in zip(table.pair_positions, table.distances):
        by_positions[(int(p), int(q))] = float(dist)

    def lookup(i: int, k: int) -> float:
        p, q = pair_of_sample[i], pair_of_sample[k]
        d = by_positions[(p, q) if p < q else (q, p)]
        return 1.0 - d * d / 2.0

    return lookup


def loop_ms_mining(
    batch: LabeledBatch, table: OptimalDistanceTable, config: LossConfig
) -> dict:
    """Multi-similarity mining with the negative test on optimal similarity.

    Only the negative-selection criterion changes: the candidate's optimal
    similarity (from the pair-of-pairs distance) is compared against the
    plain threshold. Positive selection is untouched.
    """
    mined = ms_mining(batch, config)
    _, sim = pairwise(batch)
    labels = batch.labels
    lookup = _optimal_similarity_lookup(batch, table)
    for i in range(batch.batch_size):
        same = np.flatnonzero(labels == labels[i])
        same = same[same != i]
        diff = np.flatnonzero(labels != labels[i])
        if len(same) == 0 or len(diff) == 0:
            continue
        neg_threshold = float(np.min(sim[i, same])) - config.ms_epsilon
        mined[i]["negatives"] = tuple(
            int(k) for k in diff if lookup(i, int(k)) > neg_threshold
        )
    return mined


def _ms_weighting(batch: LabeledBatch, config: LossConfig, mined: dict) -> LossValue:
    """Log-sum-exp pair weighting over mined sets; empty sets contribute 0."""
    _, sim = pairwise(batch)
    lam = config.ms_margin
    terms = []
    for i in range(batch.batch_size):
        pos = np.asarray(mined[i]["positives"], dtype=int)
        neg = np.asarray(mined[i]["negatives"], dtype=int)
        value = 0.0
        if len(pos):
            value += np.log1p(
                np.sum(np.exp(-config.ms_alpha * (sim[i, pos] - lam)))
            ) / config.ms_alpha
        if len(neg):
            value += np.log1p(
                np.sum(np.exp(config.ms_beta * (sim[i, neg] - lam)))
            ) / config.ms_beta
        terms.append((i, float(value)))
    return _finish(terms, batch, config)


def ms_loss(batch: LabeledBatch, config: LossConfig) -> LossValue:
    """Multi-similarity loss: mine, then weight."""
    return _ms_weighting(batch, config, ms_mining(batch, config))


def loop_ms(
    batch: LabeledBatch, table: OptimalDistanceTable, config: LossConfig
) -> LossValue:
    """Multi-similarity loss over the optimally mined negative sets."""
    return _ms_weighting(batch, config, loop_ms_mining(batch, table, config))
