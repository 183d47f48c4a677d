"""Batch combination construction and the optimal-distance table.

Same-class samples are paired positionally (consecutive occurrences of a
class form a pair), every cross-class pair-of-pairs combination is solved,
and each positive pair keeps the minimum optimal distance over all its
negative pairs. For a balanced batch of size B with N samples per class
the number of combinations is B (B - N) / 8.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBatchShape, NoNegatives, OddClassCount, ParseError
from .vectorized import solve_arc_stack, solve_segment_stack


@dataclass
class LabeledBatch:
    """Unit-norm embeddings with class labels.

    samples_per_class is the common class size for balanced batches and
    None otherwise.
    """

    embeddings: np.ndarray
    labels: np.ndarray
    samples_per_class: int | None = None

    @classmethod
    def from_arrays(cls, embeddings, labels) -> "LabeledBatch":
        emb = np.asarray(embeddings, dtype=float)
        labels = np.asarray(labels)
        if emb.ndim != 2 or emb.shape[0] != labels.shape[0]:
            raise InvalidBatchShape(
                f"embeddings {emb.shape} do not match {labels.shape[0]} labels"
            )
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        if np.any(norms <= 1e-12):
            raise InvalidBatchShape("batch contains a near-zero embedding")
        emb = emb / norms
        counts = np.unique(labels, return_counts=True)[1]
        n = int(counts[0]) if np.all(counts == counts[0]) else None
        return cls(embeddings=emb, labels=labels, samples_per_class=n)

    @property
    def batch_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def num_classes(self) -> int:
        return len(np.unique(self.labels))


@dataclass(frozen=True)
class PairSet:
    """Aligned positive pairs: embedding index arrays and shared labels."""

    idx1: np.ndarray
    idx2: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.idx1)


def build_pairs(batch: LabeledBatch) -> PairSet:
    """Pair consecutive same-class samples, preserving batch order.

    For class-grouped batches this is exactly alternate-element pairing;
    interleaved batches pair the 1st/2nd, 3rd/4th, ... occurrences of each
    class. Raises OddClassCount when a class cannot be fully paired.
    """
    positions: dict = {}
    idx1, idx2, labels = [], [], []
    for i, label in enumerate(batch.labels):
        key = label.item() if hasattr(label, "item") else label
        if key in positions:
            idx1.append(positions.pop(key))
            idx2.append(i)
            labels.append(label)
        else:
            positions[key] = i
    if positions:
        bad = sorted(str(k) for k in positions)
        raise OddClassCount(f"classes with odd counts: {', '.join(bad)}")
    order = np.argsort(np.asarray(idx1), kind="stable")
    return PairSet(
        idx1=np.asarray(idx1)[order],
        idx2=np.asarray(idx2)[order],
        labels=np.asarray(labels)[order],
    )


def combination_count(batch_size: int, samples_per_class: int) -> int:
    """Number of cross-class pair-of-pairs combinations, B (B - N) / 8."""
    if samples_per_class < 2 or samples_per_class % 2 != 0:
        raise InvalidBatchShape(f"samples per class must be even, got {samples_per_class}")
    if batch_size % samples_per_class != 0:
        raise InvalidBatchShape(
            f"batch size {batch_size} not divisible by class size {samples_per_class}"
        )
    return batch_size * (batch_size - samples_per_class) // 8


@dataclass
class OptimalDistanceTable:
    """Per-combination optimal distances and their per-pair minima.

    combos holds rows (i, j, k, l) in lexicographic order; solution is the
    stacked solver output aligned with combos, kept for gradient formation.
    """

    positive_pairs: list
    per_combination: dict
    per_pair_min: dict
    combos: np.ndarray
    pair_positions: np.ndarray  # (C, 2) indices into positive_pairs
    distances: np.ndarray
    variant: str
    solution: object = field(repr=False, default=None)
    pairs: PairSet = field(repr=False, default=None)


def optimal_distance_table(batch: LabeledBatch, variant: str = "arc") -> OptimalDistanceTable:
    """Solve every cross-class combination and reduce per-pair minima.

    All instances are solved in one stacked call; reductions run in fixed
    lexicographic combination order, so the table is reproducible bit for
    bit for a given batch.
    """
    if variant not in ("arc", "segment"):
        raise ValueError(f"unknown variant {variant!r}")
    if batch.num_classes() < 2:
        raise NoNegatives("batch has a single class")
    pairs = build_pairs(batch)
    n_pairs = len(pairs)
    combo_rows = []
    pair_pos = []
    for p in range(n_pairs):
        for q in range(p + 1, n_pairs):
            if pairs.labels[p] == pairs.labels[q]:
                continue
            combo_rows.append(
                (pairs.idx1[p], pairs.idx2[p], pairs.idx1[q], pairs.idx2[q])
            )
            pair_pos.append((p, q))
    combos = np.asarray(combo_rows, dtype=int).reshape(-1, 4)
    pair_pos = np.asarray(pair_pos, dtype=int).reshape(-1, 2)

    emb = batch.embeddings
    solver = solve_arc_stack if variant == "arc" else solve_segment_stack
    solution = solver(
        emb[combos[:, 0]], emb[combos[:, 1]], emb[combos[:, 2]], emb[combos[:, 3]]
    )
    distances = solution.distance

    positive_pairs = [(int(i), int(j)) for i, j in zip(pairs.idx1, pairs.idx2)]
    per_combination = {}
    per_pair_min = {}
    for row, (p, q), dist in zip(combo_rows, pair_pos, distances):
        key = tuple(int(v) for v in row)
        per_combination[key] = float(dist)
        for side in (int(p), int(q)):
            pair_key = positive_pairs[side]
            if pair_key not in per_pair_min or dist < per_pair_min[pair_key]:
                per_pair_min[pair_key] = float(dist)
    return OptimalDistanceTable(
        positive_pairs=positive_pairs,
        per_combination=per_combination,
        per_pair_min=per_pair_min,
        combos=combos,
        pair_positions=pair_pos,
        distances=distances,
        variant=variant,
        solution=solution,
        pairs=pairs,
    )


def load_batch_csv(path) -> LabeledBatch:
    """Batch from CSV rows of: label, coordinate, coordinate, ..."""
    labels, rows = [], []
    try:
        with open(path, newline="") as fh:
            for record in csv.reader(fh):
                if not record:
                    continue
                labels.append(record[0])
                rows.append([float(v) for v in record[1:]])
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read batch CSV {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"batch CSV {path} is empty")
    return LabeledBatch.from_arrays(np.asarray(rows), np.asarray(labels))


def load_batch_json(path) -> LabeledBatch:
    """Batch from JSON {"labels": [...], "embeddings": [[...], ...]}."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
        return LabeledBatch.from_arrays(
            np.asarray(payload["embeddings"], dtype=float),
            np.asarray(payload["labels"]),
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read batch JSON {path}: {exc}") from exc


def export_table_csv(table: OptimalDistanceTable, path) -> None:
    """Write rows (i, j, k, l, distance) in combination order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "k", "l", "distance"])
        for row, dist in zip(table.combos, table.distances):
            writer.writerow([*(int(v) for v in row), repr(float(dist))])
