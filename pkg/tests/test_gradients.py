import math

import numpy as np
import pytest

from hardneg import (
    ArcProblem,
    LabeledBatch,
    LossConfig,
    NondifferentiablePoint,
    analytic_loop_triplet_grad,
    finite_diff_grad,
    optimal_arc_distance,
)
from hardneg.arc_solver import active_set_margin
from hardneg.gradients import (
    arc_point_adjoints,
    evaluate_loss,
    loss_and_grad,
    project_tangent,
)
from hardneg.geometry import gram_schmidt_basis, point_on_arc

from conftest import random_batch, unit_rows


def numeric_fixed_angle_adjoints(x1, x2, alpha, delta, h=1e-7):
    def arc_point(u, v):
        return point_on_arc(gram_schmidt_basis(u, v), alpha)

    g1, g2 = np.zeros_like(x1), np.zeros_like(x2)
    for c in range(len(x1)):
        e = np.zeros_like(x1)
        e[c] = h
        g1[c] = delta @ (arc_point(x1 + e, x2) - arc_point(x1 - e, x2)) / (2 * h)
        g2[c] = delta @ (arc_point(x1, x2 + e) - arc_point(x1, x2 - e)) / (2 * h)
    return g1, g2


def test_adjoints_match_numeric_jacobians(rng):
    for _ in range(40):
        x1, x2 = unit_rows(rng, 2, 6)
        alpha = rng.uniform(0.1, 0.9) * math.acos(np.clip(x1 @ x2, -1, 1))
        delta = rng.normal(size=6)
        basis = gram_schmidt_basis(x1, x2)
        dot = float(x1 @ x2)
        res = float(np.linalg.norm(x2 - dot * x1))
        a1, a2 = arc_point_adjoints(x1, x2, basis.n2, dot, res, alpha, delta, False, False)
        n1, n2 = numeric_fixed_angle_adjoints(x1, x2, alpha, delta)
        np.testing.assert_allclose(a1, n1, atol=1e-6)
        np.testing.assert_allclose(a2, n2, atol=1e-6)


def tuple_loss(points, margin):
    problem = ArcProblem.from_endpoints(*points)
    sol = optimal_arc_distance(problem)
    value = float(np.sum((points[0] - points[1]) ** 2)) - sol.distance**2 + margin
    return max(value, 0.0)


def tuple_fd(points, margin, h=1e-6):
    grads = []
    for p in range(4):
        g = np.zeros(points.shape[1])
        for c in range(points.shape[1]):
            vals = []
            for sign in (1.0, -1.0):
                q = points.copy()
                row = q[p].copy()
                row[c] += sign * h
                q[p] = row / np.linalg.norm(row)
                vals.append(tuple_loss(q, margin))
            g[c] = (vals[0] - vals[1]) / (2 * h)
        grads.append(g)
    return grads


def test_tuple_gradient_inactive_hinge(rng):
    # tight positive pair far from the negatives: hinge strictly off
    x1 = np.array([1.0, 0.0, 0.0, 0.0])
    x2 = np.array([math.cos(0.05), math.sin(0.05), 0.0, 0.0])
    y1 = np.array([0.0, 0.0, 1.0, 0.0])
    y2 = np.array([0.0, 0.0, math.cos(0.3), math.sin(0.3)])
    problem = ArcProblem.from_endpoints(x1, x2, y1, y2)
    sol = optimal_arc_distance(problem)
    grads = analytic_loop_triplet_grad(problem, sol, margin=0.05)
    for g in grads.values():
        assert np.all(g == 0.0)


def test_tuple_gradient_corner_case_shapes():
    # corner winner with p1 = x1, p2 = y1: gradients reduce to endpoint forms
    x1 = np.array([1.0, 0.0, 0.0, 0.0])
    x2 = np.array([0.0, 1.0, 0.0, 0.0])
    y1 = np.array([0.95, -0.25, 0.19, 0.0])
    y2 = np.array([0.85, -0.40, 0.30, 0.15])
    y1, y2 = y1 / np.linalg.norm(y1), y2 / np.linalg.norm(y2)
    problem = ArcProblem.from_endpoints(x1, x2, y1, y2)
    sol = optimal_arc_distance(problem)
    assert sol.candidate.case_id == 5
    grads = analytic_loop_triplet_grad(problem, sol, margin=2.0)
    delta = sol.p1 - sol.p2
    np.testing.assert_allclose(grads["x1"], 2 * ((x1 - x2) - delta), atol=1e-12)
    np.testing.assert_allclose(grads["x2"], -2 * (x1 - x2), atol=1e-12)
    np.testing.assert_allclose(grads["y1"], 2 * delta, atol=1e-12)
    assert np.all(grads["y2"] == 0.0)


def test_tuple_gradient_matches_finite_differences(rng):
    checked = 0
    interior_checked = 0
    worst = 0.0
    while checked < 60:
        dim = int(rng.choice([4, 6, 8]))
        points = unit_rows(rng, 4, dim)
        problem = ArcProblem.from_endpoints(*points)
        sol = optimal_arc_distance(problem)
        margin = 0.3
        arg = float(np.sum((points[0] - points[1]) ** 2)) - sol.distance**2 + margin
        if arg < 1e-3 or active_set_margin(problem, sol) < 1e-4:
            continue
        analytic = analytic_loop_triplet_grad(problem, sol, margin)
        fd = tuple_fd(points, margin)
        flat_analytic = np.concatenate(
            [
                analytic[name] - (analytic[name] @ points[i]) * points[i]
                for i, name in enumerate(("x1", "x2", "y1", "y2"))
            ]
        )
        flat_fd = np.concatenate(fd)
        rel = np.linalg.norm(flat_analytic - flat_fd) / max(np.linalg.norm(flat_fd), 1e-12)
        worst = max(worst, rel)
        checked += 1
        interior_checked += sol.candidate.case_id == 0
    assert worst < 1e-3
    assert interior_checked > 0


def test_tuple_gradient_raises_at_hinge_kink(rng):
    points = unit_rows(rng, 4, 5)
    problem = ArcProblem.from_endpoints(*points)
    sol = optimal_arc_distance(problem)
    kink_margin = sol.distance**2 - float(np.sum((points[0] - points[1]) ** 2))
    if kink_margin >= 0:
        with pytest.raises(NondifferentiablePoint):
            analytic_loop_triplet_grad(problem, sol, kink_margin)


def test_finite_diff_constant_loss(rng):
    batch = random_batch(rng, num_classes=2, per_class=2, dim=4)
    grad = finite_diff_grad(lambda b: 1.25, batch, index=0)
    assert np.all(grad == 0.0)


@pytest.mark.parametrize(
    "name,tol",
    [
        ("triplet", 1e-4),
        ("hphn_triplet", 1e-4),
        ("lifted_structure", 1e-4),
        ("ms", 1e-4),
        ("loop_triplet", 1e-3),
        ("loop_hphn", 1e-3),
        ("loop_ls", 1e-3),
        ("loop_ms", 1e-3),
    ],
)
def test_batch_loss_gradients(name, tol, rng):
    cfg = LossConfig(margin=0.4)
    worst = 0.0
    for seed in range(3):
        batch = random_batch(np.random.default_rng(seed + 31), num_classes=3,
                             per_class=4, dim=6)
        _, grad = loss_and_grad(name, batch, cfg)
        tangent = project_tangent(batch.embeddings, grad)
        for idx in (0, 7):
            fd = finite_diff_grad(lambda b: evaluate_loss(name, b, cfg), batch, idx)
            denom = max(np.linalg.norm(fd), 1e-10)
            if denom > 1e-8:
                worst = max(worst, np.linalg.norm(tangent[idx] - fd) / denom)
    assert worst < tol


def test_zero_gradient_when_hinges_off():
    emb = np.array(
        [[1.0, 0.02, 0], [1.0, -0.02, 0], [-1.0, 0.02, 0], [-1.0, -0.02, 0]]
    )
    batch = LabeledBatch.from_arrays(emb, np.array([0, 0, 1, 1]))
    cfg = LossConfig(margin=0.1)
    loss, grad = loss_and_grad("loop_triplet", batch, cfg)
    assert loss.total == 0.0
    assert np.all(grad == 0.0)
