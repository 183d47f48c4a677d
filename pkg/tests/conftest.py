import numpy as np
import pytest

from hardneg import ArcProblem, LabeledBatch


def unit_rows(rng, n, dim):
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def random_arc_problem(rng, dim):
    return ArcProblem.from_endpoints(*unit_rows(rng, 4, dim))


def random_batch(rng, num_classes=3, per_class=4, dim=6):
    emb = rng.normal(size=(num_classes * per_class, dim))
    labels = np.repeat(np.arange(num_classes), per_class)
    return LabeledBatch.from_arrays(emb, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
