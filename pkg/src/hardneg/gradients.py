"""Analytic gradients of the losses, and finite-difference oracles.

Optimal distances are differentiated under the frozen-optimum (envelope)
convention: the winning case's active set is held fixed. An angle pinned
at 0 makes the optimal point the first endpoint (identity Jacobian), an
angle pinned at the arc extent makes it the second endpoint, and a free
angle is held at its stationary value, where the envelope theorem makes
the fixed-angle derivative exact. Sensitivities of the stationary angles
themselves are never formed.

Hinge subgradients at the kink are taken as 0 (terms contribute only when
strictly positive).
"""

from __future__ import annotations

import numpy as np

from .arc_solver import ArcProblem, KktSolution, active_set_margin
from .batch_engine import LabeledBatch, build_pairs, optimal_distance_table
from .errors import NondifferentiablePoint
from .losses import (
    LossConfig,
    loop_hphn,
    loop_ls,
    loop_ms,
    loop_ms_mining,
    loop_triplet,
    ms_mining,
    pairwise,
)
from .losses import hphn_triplet as _hphn_loss
from .losses import lifted_structure as _ls_loss
from .losses import ms_loss as _ms_loss
from .losses import triplet as _triplet_loss

# Distances below this are treated as kinks of the norm; their gradient
# contribution is dropped.
_TINY_DIST = 1e-12

_ALPHA_LOW_CASES = frozenset((1, 5, 6))
_ALPHA_HIGH_CASES = frozenset((2, 7, 8))
_BETA_LOW_CASES = frozenset((3, 5, 7))
_BETA_HIGH_CASES = frozenset((4, 6, 8))


def arc_point_adjoints(
    x1, x2, n2, endpoint_dot, residual_norm, angle, delta,
    pinned_low: bool, pinned_high: bool,
):
    """(dp/dx1)^T delta and (dp/dx2)^T delta for p = x1 cos(a) + n2 sin(a).

    With the angle pinned at 0 the point is x1; pinned at the extent it is
    x2. Otherwise the angle is held fixed and the Jacobians of the basis
    construction n2 = (x2 - (x1.x2) x1) / |...| are applied.
    """
    if pinned_low:
        return delta.copy(), np.zeros_like(delta)
    if pinned_high:
        return np.zeros_like(delta), delta.copy()
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    dt = delta - (delta @ n2) * n2
    dt_x1 = dt @ x1
    g_x1 = cos_a * delta + sin_a * (-(dt_x1) * x2 - endpoint_dot * dt) / residual_norm
    g_x2 = sin_a * (dt - dt_x1 * x1) / residual_norm
    return g_x1, g_x2


def optimal_distance_grad_stack(emb, combos, sol, weights) -> np.ndarray:
    """Sum of weighted optimal-distance gradients, scattered over a table.

    Accumulates sum_c weights[c] * d(optimal distance_c)/d(embedding) for
    every combination at once, applying per-combination pinning from the
    winning cases. Combinations with zero weight or a vanishing distance
    (a norm kink) contribute nothing.
    """
    grad = np.zeros_like(emb)
    sel = np.flatnonzero((np.asarray(weights) != 0) & (sol.distance > _TINY_DIST))
    if len(sel) == 0:
        return grad
    w = np.asarray(weights, dtype=float)[sel][:, None]
    delta_hat = (sol.p1[sel] - sol.p2[sel]) / sol.distance[sel][:, None]
    case = sol.case_id[sel]
    sides = (
        (0, 1, sol.n2x, sol.dot_x, sol.res_x, sol.alpha,
         (1, 5, 6), (2, 7, 8), sol.x_collapsed, delta_hat),
        (2, 3, sol.n2y, sol.dot_y, sol.res_y, sol.beta,
         (3, 5, 7), (4, 6, 8), sol.y_collapsed, -delta_hat),
    )
    for i_col, j_col, n2_all, c0_all, s_all, ang_all, low_cases, high_cases, col_all, dvec in sides:
        idx1 = combos[sel, i_col]
        idx2 = combos[sel, j_col]
        n2 = n2_all[sel]
        c0 = c0_all[sel][:, None]
        s = s_all[sel][:, None]
        ang = ang_all[sel][:, None]
        low = np.isin(case, low_cases) | col_all[sel]
        high = np.isin(case, high_cases) & ~low
        x1r, x2r = emb[idx1], emb[idx2]
        s_safe = np.where((low | high)[:, None], 1.0, s)
        dt = dvec - np.sum(dvec * n2, axis=1, keepdims=True) * n2
        dt_x1 = np.sum(dt * x1r, axis=1, keepdims=True)
        g1_free = np.cos(ang) * dvec + np.sin(ang) * (-dt_x1 * x2r - c0 * dt) / s_safe
        g2_free = np.sin(ang) * (dt - dt_x1 * x1r) / s_safe
        lowc, highc = low[:, None], high[:, None]
        g1 = np.where(lowc, dvec, np.where(highc, 0.0, g1_free))
        g2 = np.where(lowc, 0.0, np.where(highc, dvec, g2_free))
        np.add.at(grad, idx1, w * g1)
        np.add.at(grad, idx2, w * g2)
    return grad


def _unit_diff(emb, i, j, dist):
    d = dist[i, j]
    if d <= _TINY_DIST:
        return None
    return (emb[i] - emb[j]) / d


def _norm_factor(batch, config, n_terms):
    if config.normalization == "classes":
        return batch.num_classes()
    return max(n_terms, 1)


def triplet_grad(batch: LabeledBatch, config: LossConfig):
    """(loss, gradient) of the plain triplet loss."""
    loss = _triplet_loss(batch, config)
    dist, _ = pairwise(batch)
    emb = batch.embeddings
    labels = batch.labels
    pairs = build_pairs(batch)
    grad = np.zeros_like(emb)
    i_idx, j_idx = pairs.idx1, pairs.idx2
    neg_mask = labels[i_idx][:, None] != labels[None, :]
    d_pos = dist[i_idx, j_idx]
    active = neg_mask & (d_pos[:, None] - dist[i_idx, :] + config.margin > 0.0)
    # Positive-distance part: each active negative adds one unit vector.
    counts = active.sum(axis=1).astype(float)
    pos_ok = d_pos > _TINY_DIST
    u_pos = np.zeros_like(emb[i_idx])
    u_pos[pos_ok] = (emb[i_idx][pos_ok] - emb[j_idx][pos_ok]) / d_pos[pos_ok, None]
    np.add.at(grad, i_idx, counts[:, None] * u_pos)
    np.add.at(grad, j_idx, -counts[:, None] * u_pos)
    # Negative-distance part, one term per active (pair, negative sample).
    p_sel, k_sel = np.nonzero(active)
    anchors = i_idx[p_sel]
    d_neg = dist[anchors, k_sel]
    neg_ok = d_neg > _TINY_DIST
    anchors, k_sel, d_neg = anchors[neg_ok], k_sel[neg_ok], d_neg[neg_ok]
    u_neg = (emb[anchors] - emb[k_sel]) / d_neg[:, None]
    np.add.at(grad, anchors, -u_neg)
    np.add.at(grad, k_sel, u_neg)
    grad /= _norm_factor(batch, config, int(neg_mask.sum()))
    return loss, grad


def loop_triplet_grad(batch: LabeledBatch, table, config: LossConfig):
    """(loss, gradient) of the optimal-negative triplet loss."""
    loss = loop_triplet(batch, table, config)
    dist, _ = pairwise(batch)
    emb = batch.embeddings
    grad = np.zeros_like(emb)
    sol = table.solution
    combos = table.combos
    m = config.margin
    weights = np.zeros(len(combos))
    for cols in ((0, 1), (2, 3)):
        i_idx, j_idx = combos[:, cols[0]], combos[:, cols[1]]
        d_pos = dist[i_idx, j_idx]
        active = d_pos - sol.distance + m > 0.0
        weights += active
        sel = active & (d_pos > _TINY_DIST)
        u = (emb[i_idx[sel]] - emb[j_idx[sel]]) / d_pos[sel, None]
        np.add.at(grad, i_idx[sel], u)
        np.add.at(grad, j_idx[sel], -u)
    grad -= optimal_distance_grad_stack(emb, combos, sol, weights)
    grad /= _norm_factor(batch, config, 2 * len(combos))
    return loss, grad


def _hardest_positive_arg(dist, labels, i, j):
    best_val, best = -1.0, None
    for anchor in (int(i), int(j)):
        same = np.flatnonzero(labels == labels[anchor])
        same = same[same != anchor]
        if len(same):
            k = int(same[np.argmax(dist[anchor, same])])
            if dist[anchor, k] > best_val:
                best_val, best = float(dist[anchor, k]), (anchor, k)
    return best_val, best


def _hardest_negative_arg(dist, labels, i, j):
    best_val, best = np.inf, None
    for anchor in (int(i), int(j)):
        diff = np.flatnonzero(labels != labels[anchor])
        if len(diff):
            k = int(diff[np.argmin(dist[anchor, diff])])
            if dist[anchor, k] < best_val:
                best_val, best = float(dist[anchor, k]), (anchor, k)
    return best_val, best


def _pair_loss_grad(batch, config, use_table, table, positive_is_distance):
    """Shared gradient for HPHN (hardest positive) and LS (pair distance)."""
    dist, _ = pairwise(batch)
    emb = batch.embeddings
    labels = batch.labels
    grad = np.zeros_like(emb)
    m = config.margin
    pairs = build_pairs(batch)
    pair_list = list(zip(pairs.idx1, pairs.idx2))
    if use_table:
        argmin_combo = {}
        for c, (p, q) in enumerate(table.pair_positions):
            for side in (int(p), int(q)):
                key = table.positive_pairs[side]
                if key not in argmin_combo or table.distances[c] < table.distances[
                    argmin_combo[key]
                ]:
                    argmin_combo[key] = c
    n_terms = 0
    table_weights = np.zeros(len(table.combos)) if use_table else None
    for i, j in pair_list:
        i, j = int(i), int(j)
        n_terms += 1
        if positive_is_distance:
            hp = float(dist[i, j])
            hp_arg = (i, j)
        else:
            hp, hp_arg = _hardest_positive_arg(dist, labels, i, j)
        if use_table:
            hn = table.per_pair_min[(i, j)]
        else:
            hn, hn_arg = _hardest_negative_arg(dist, labels, i, j)
        if hp + m - hn <= 0.0:
            continue
        u = _unit_diff(emb, hp_arg[0], hp_arg[1], dist)
        if u is not None:
            grad[hp_arg[0]] += u
            grad[hp_arg[1]] -= u
        if use_table:
            table_weights[argmin_combo[(i, j)]] += 1.0
        else:
            u = _unit_diff(emb, hn_arg[0], hn_arg[1], dist)
            if u is not None:
                grad[hn_arg[0]] -= u
                grad[hn_arg[1]] += u
    if use_table:
        grad -= optimal_distance_grad_stack(emb, table.combos, table.solution, table_weights)
    grad /= _norm_factor(batch, config, n_terms)
    return grad


def hphn_grad(batch: LabeledBatch, config: LossConfig):
    loss = _hphn_loss(batch, config)
    return loss, _pair_loss_grad(batch, config, False, None, False)


def loop_hphn_grad(batch: LabeledBatch, table, config: LossConfig):
    loss = loop_hphn(batch, table, config)
    return loss, _pair_loss_grad(batch, config, True, table, False)


def ls_grad(batch: LabeledBatch, config: LossConfig):
    loss = _ls_loss(batch, config)
    return loss, _pair_loss_grad(batch, config, False, None, True)


def loop_ls_grad(batch: LabeledBatch, table, config: LossConfig):
    loss = loop_ls(batch, table, config)
    return loss, _pair_loss_grad(batch, config, True, table, True)


def _ms_grad_from_mined(batch, config, mined):
    """Weighting-stage gradient; the mined sets are frozen."""
    _, sim = pairwise(batch)
    emb = batch.embeddings
    grad = np.zeros_like(emb)
    lam = config.ms_margin
    for i in range(batch.batch_size):
        pos = np.asarray(mined[i]["positives"], dtype=int)
        neg = np.asarray(mined[i]["negatives"], dtype=int)
        if len(pos):
            w = np.exp(-config.ms_alpha * (sim[i, pos] - lam))
            w = -w / (1.0 + np.sum(w))
            grad[i] += w @ emb[pos]
            grad[pos] += np.outer(w, emb[i])
        if len(neg):
            w = np.exp(config.ms_beta * (sim[i, neg] - lam))
            w = w / (1.0 + np.sum(w))
            grad[i] += w @ emb[neg]
            grad[neg] += np.outer(w, emb[i])
    grad /= _norm_factor(batch, config, batch.batch_size)
    return grad


def ms_grad(batch: LabeledBatch, config: LossConfig):
    loss = _ms_loss(batch, config)
    return loss, _ms_grad_from_mined(batch, config, ms_mining(batch, config))


def loop_ms_grad(batch: LabeledBatch, table, config: LossConfig):
    loss = loop_ms(batch, table, config)
    return loss, _ms_grad_from_mined(batch, config, loop_ms_mining(batch, table, config))


# Losses available to the trainer: name -> (needs table, function).
LOSS_REGISTRY = {
    "triplet": (False, triplet_grad),
    "loop_triplet": (True, loop_triplet_grad),
    "hphn_triplet": (False, hphn_grad),
    "loop_hphn": (True, loop_hphn_grad),
    "lifted_structure": (False, ls_grad),
    "loop_ls": (True, loop_ls_grad),
    "ms": (False, ms_grad),
    "loop_ms": (True, loop_ms_grad),
}


def loss_and_grad(name: str, batch: LabeledBatch, config: LossConfig, variant="arc"):
    """Evaluate a loss by name, returning (LossValue, gradient)."""
    if name not in LOSS_REGISTRY:
        raise ValueError(f"unknown loss {name!r}")
    needs_table, fn = LOSS_REGISTRY[name]
    if needs_table:
        table = optimal_distance_table(batch, variant=variant)
        return fn(batch, table, config)
    return fn(batch, config)


def evaluate_loss(name: str, batch: LabeledBatch, config: LossConfig, variant="arc") -> float:
    """Loss value only; used by the finite-difference oracle."""
    return loss_and_grad(name, batch, config, variant)[0].total


def project_tangent(embeddings: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Remove radial components; what a renormalizing perturbation sees."""
    radial = np.sum(embeddings * grads, axis=1, keepdims=True)
    return grads - radial * embeddings


def finite_diff_grad(loss_fn, batch: LabeledBatch, index: int, h: float = 1e-5) -> np.ndarray:
    """Central differences w.r.t. one embedding, renormalizing perturbations.

    loss_fn maps a LabeledBatch to a float. The perturbed row is projected
    back to the sphere exactly as the training step does, so the result is
    the tangential gradient.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    base = batch.embeddings
    grad = np.zeros(base.shape[1])
    for coord in range(base.shape[1]):
        values = []
        for sign in (1.0, -1.0):
            row = base[index].copy()
            row[coord] += sign * h
            emb = base.copy()
            emb[index] = row / np.linalg.norm(row)
            values.append(
                loss_fn(LabeledBatch(embeddings=emb, labels=batch.labels,
                                     samples_per_class=batch.samples_per_class))
            )
        grad[coord] = (values[0] - values[1]) / (2.0 * h)
    return grad


def analytic_loop_triplet_grad(
    problem: ArcProblem,
    solution: KktSolution,
    margin: float,
    stability_margin: float = 1e-9,
):
    """Gradients of the squared-distance tuple loss with optimal negatives.

    The tuple loss is [ |x1 - x2|^2 - |p1 - p2|^2 + margin ]_+ with (p1, p2)
    the optimal pair. Returns a dict with keys x1, x2, y1, y2. Raises
    NondifferentiablePoint at hinge kinks and at active-set boundaries
    (where the winning case is about to change), detected within
    stability_margin.
    """
    pos_sq = float(np.sum((problem.x1 - problem.x2) ** 2))
    hinge_arg = pos_sq - solution.distance**2 + margin
    if abs(hinge_arg) < stability_margin:
        raise NondifferentiablePoint(f"hinge argument {hinge_arg:.3e} at the kink")
    zeros = {name: np.zeros_like(problem.x1) for name in ("x1", "x2", "y1", "y2")}
    if hinge_arg < 0.0:
        return zeros
    if active_set_margin(problem, solution) < stability_margin:
        raise NondifferentiablePoint("winning case at an active-set boundary")
    case = solution.candidate.case_id
    delta = solution.p1 - solution.p2
    a_low = case in _ALPHA_LOW_CASES or problem.x_collapsed
    a_high = case in _ALPHA_HIGH_CASES and not a_low
    b_low = case in _BETA_LOW_CASES or problem.y_collapsed
    b_high = case in _BETA_HIGH_CASES and not b_low
    res_x = float(np.sin(problem.alpha0))
    res_y = float(np.sin(problem.beta0))
    g_x1, g_x2 = arc_point_adjoints(
        problem.x1, problem.x2, problem.basis_x.n2, float(problem.x1 @ problem.x2),
        res_x, solution.candidate.alpha, delta, a_low, a_high,
    )
    # (dp2/dy)^T delta; it enters the loss with a plus sign.
    g_y1, g_y2 = arc_point_adjoints(
        problem.y1, problem.y2, problem.basis_y.n2, float(problem.y1 @ problem.y2),
        res_y, solution.candidate.beta, delta, b_low, b_high,
    )
    diff = problem.x1 - problem.x2
    return {
        "x1": 2.0 * (diff - g_x1),
        "x2": 2.0 * (-diff - g_x2),
        "y1": 2.0 * g_y1,
        "y2": 2.0 * g_y2,
    }
