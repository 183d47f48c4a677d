import itertools
import math

import numpy as np
import pytest

from hardneg import (
    InvalidBatchShape,
    LabeledBatch,
    NoNegatives,
    OddClassCount,
    build_pairs,
    combination_count,
    optimal_distance_table,
)
from hardneg.batch_engine import export_table_csv, load_batch_csv, load_batch_json

from conftest import random_batch, unit_rows


def make_batch(labels, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(len(labels), dim))
    return LabeledBatch.from_arrays(emb, np.asarray(labels))


def test_build_pairs_grouped():
    pairs = build_pairs(make_batch(["A", "A", "B", "B"]))
    assert list(zip(pairs.idx1, pairs.idx2)) == [(0, 1), (2, 3)]
    assert list(pairs.labels) == ["A", "B"]


def test_build_pairs_four_of_one_class():
    pairs = build_pairs(make_batch(["A", "A", "A", "A"]))
    assert list(zip(pairs.idx1, pairs.idx2)) == [(0, 1), (2, 3)]


def test_build_pairs_interleaved():
    pairs = build_pairs(make_batch(["A", "B", "A", "B"]))
    assert list(zip(pairs.idx1, pairs.idx2)) == [(0, 2), (1, 3)]


def test_build_pairs_odd_class_count():
    with pytest.raises(OddClassCount):
        build_pairs(make_batch(["A", "A", "A"]))


def test_combination_count_examples():
    assert combination_count(32, 2) == 120
    assert combination_count(8, 4) == 4
    assert combination_count(16, 16) == 0


def test_combination_count_invalid_shapes():
    with pytest.raises(InvalidBatchShape):
        combination_count(12, 3)
    with pytest.raises(InvalidBatchShape):
        combination_count(10, 4)


def test_enumeration_matches_formula():
    # all valid (batch size, class size) combinations from the small grid
    for batch_size, per_class in itertools.product((8, 16, 32), (2, 4, 8)):
        if batch_size % per_class:
            continue
        labels = np.repeat(np.arange(batch_size // per_class), per_class)
        batch = make_batch(labels, dim=4, seed=batch_size + per_class)
        if batch.num_classes() < 2:
            continue
        table = optimal_distance_table(batch)
        assert len(table.combos) == combination_count(batch_size, per_class)


def test_single_class_table_rejected():
    with pytest.raises(NoNegatives):
        optimal_distance_table(make_batch(["A", "A", "A", "A"]))


def test_shared_endpoint_across_classes():
    shared = np.array([1.0, 0, 0])
    emb = np.stack([shared, [0, 1, 0], shared, [0, 0, 1]])
    batch = LabeledBatch.from_arrays(emb, np.array(["A", "A", "B", "B"]))
    table = optimal_distance_table(batch)
    assert table.per_pair_min[(0, 1)] < 1e-9
    assert table.per_pair_min[(2, 3)] < 1e-9


def test_orthogonal_planes_constant_distance():
    e = np.eye(4)
    batch = LabeledBatch.from_arrays(
        np.stack([e[0], e[1], e[2], e[3]]), np.array([0, 0, 1, 1])
    )
    table = optimal_distance_table(batch)
    assert abs(table.per_pair_min[(0, 1)] - math.sqrt(2)) < 1e-9


def test_per_pair_min_below_endpoint_distances(rng):
    batch = random_batch(rng, num_classes=4, per_class=4, dim=8)
    table = optimal_distance_table(batch)
    emb = batch.embeddings
    for (i, j, k, l), dist in table.per_combination.items():
        endpoint_min = min(
            np.linalg.norm(emb[a] - emb[b]) for a in (i, j) for b in (k, l)
        )
        assert dist <= endpoint_min + 1e-9
    for (i, j), dmin in table.per_pair_min.items():
        combo_dists = [
            d for key, d in table.per_combination.items()
            if (key[0], key[1]) == (i, j) or (key[2], key[3]) == (i, j)
        ]
        assert dmin == min(combo_dists)


def test_duplicate_embeddings_within_pair(rng):
    emb = unit_rows(rng, 4, 5)
    emb[1] = emb[0]  # collapsed positive pair
    batch = LabeledBatch.from_arrays(emb, np.array([0, 0, 1, 1]))
    table = optimal_distance_table(batch)
    assert len(table.combos) == 1
    assert np.isfinite(table.distances).all()


def test_identical_embeddings_across_classes(rng):
    emb = unit_rows(rng, 4, 5)
    emb[2] = emb[0]  # a maximally hard negative
    batch = LabeledBatch.from_arrays(emb, np.array([0, 0, 1, 1]))
    table = optimal_distance_table(batch)
    assert table.per_pair_min[(0, 1)] < 1e-9


def test_label_permutation_equivariance(rng):
    batch = random_batch(rng, num_classes=3, per_class=2, dim=6)
    table = optimal_distance_table(batch)
    perm = np.array([2, 3, 4, 5, 0, 1])  # rotate class blocks
    batch2 = LabeledBatch.from_arrays(batch.embeddings[perm], batch.labels[perm])
    table2 = optimal_distance_table(batch2)
    inverse = np.argsort(perm)
    for (i, j, k, l), d in table.per_combination.items():
        mapped = (inverse[i], inverse[j], inverse[k], inverse[l])
        key = mapped if mapped[0] < mapped[2] else (*mapped[2:], *mapped[:2])
        assert abs(table2.per_combination[tuple(int(v) for v in key)] - d) < 1e-12


def test_segment_variant_table(rng):
    batch = random_batch(rng, num_classes=2, per_class=2, dim=4)
    table = optimal_distance_table(batch, variant="segment")
    assert table.variant == "segment"
    # optimal segment points may leave the sphere, distances still bounded
    # by endpoint gaps
    emb = batch.embeddings
    for (i, j, k, l), dist in table.per_combination.items():
        endpoint_min = min(
            np.linalg.norm(emb[a] - emb[b]) for a in (i, j) for b in (k, l)
        )
        assert dist <= endpoint_min + 1e-9


def test_csv_and_json_io(tmp_path, rng):
    batch = random_batch(rng, num_classes=2, per_class=2, dim=3)
    csv_path = tmp_path / "batch.csv"
    with open(csv_path, "w") as fh:
        for label, row in zip(batch.labels, batch.embeddings):
            fh.write(",".join([str(label)] + [repr(float(v)) for v in row]) + "\n")
    loaded = load_batch_csv(csv_path)
    np.testing.assert_allclose(loaded.embeddings, batch.embeddings, atol=1e-12)

    json_path = tmp_path / "batch.json"
    json_path.write_text(
        '{"labels": %s, "embeddings": %s}'
        % (list(map(int, batch.labels)), batch.embeddings.tolist())
    )
    loaded = load_batch_json(json_path)
    np.testing.assert_allclose(loaded.embeddings, batch.embeddings, atol=1e-12)

    table = optimal_distance_table(batch)
    out = tmp_path / "table.csv"
    export_table_csv(table, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "i,j,k,l,distance"
    assert len(lines) == 1 + len(table.combos)
