"""Array-parallel arc and segment solvers.

Solves a stack of independent minimum-distance instances in one pass,
mirroring the scalar solvers candidate for candidate (same case order,
same feasibility masks, same tie-breaks), so batch construction can solve
every pair-of-pairs combination at once. The test suite pins scalar and
stacked results against each other on random and degenerate inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arc_solver import EPS_BOX, EPS_LAMBDA, EPS_QUAD
from .errors import DegenerateArc, DegenerateSegment
from .geometry import DEGENERACY_EPS
from .segment_solver import EPS_SEGMENT

# Candidate slot layout: two interior candidates then boundary cases 1..8.
_SLOT_CASE = np.array([0, 0, 1, 2, 3, 4, 5, 6, 7, 8])
_N_SLOTS = 10
_CORNER_SLOTS = np.zeros(_N_SLOTS, dtype=bool)
_CORNER_SLOTS[6:] = True


@dataclass
class ArcStackSolution:
    """Winning candidates for a stack of arc problems, plus basis data.

    The basis arrays (second basis vectors, endpoint dots, residual norms)
    are kept so envelope gradients can be formed without re-deriving the
    geometry.
    """

    case_id: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    alpha0: np.ndarray
    beta0: np.ndarray
    f_value: np.ndarray
    distance: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    multipliers: np.ndarray
    coeffs: np.ndarray  # (n, 4) rows (a, b, c, d)
    n2x: np.ndarray
    n2y: np.ndarray
    dot_x: np.ndarray
    dot_y: np.ndarray
    res_x: np.ndarray  # |x2 - (x1.x2) x1|, the Gram-Schmidt residual norm
    res_y: np.ndarray
    x_collapsed: np.ndarray
    y_collapsed: np.ndarray


def _row_normalize(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _fallback_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise deterministic unit vectors orthogonal to x."""
    n, dim = x.shape
    axis = np.argmin(np.abs(x), axis=1)
    e = np.zeros_like(x)
    e[np.arange(n), axis] = 1.0
    residual = e - (np.sum(x * e, axis=1, keepdims=True)) * x
    return _row_normalize(residual)


def _pair_basis_stack(u: np.ndarray, v: np.ndarray):
    """Vectorized Gram-Schmidt with collapse handling for one side."""
    dot = np.clip(np.sum(u * v, axis=1), -1.0, 1.0)
    collapsed = dot >= 1.0 - DEGENERACY_EPS
    if np.any(dot <= -1.0 + DEGENERACY_EPS):
        raise DegenerateArc("stack contains antiparallel endpoint pairs")
    residual = v - dot[:, None] * u
    res_norm = np.linalg.norm(residual, axis=1)
    safe = np.where(collapsed, 1.0, res_norm)
    n2 = residual / safe[:, None]
    if np.any(collapsed):
        n2[collapsed] = _fallback_rows(u[collapsed])
    extent = np.where(collapsed, 0.0, np.arccos(dot))
    return n2, dot, res_norm, extent, collapsed


def _grad_alpha(a, b, c, d, al, be):
    sa, ca = np.sin(al), np.cos(al)
    sb, cb = np.sin(be), np.cos(be)
    return a * ca * sb - b * sa * sb + c * ca * cb - d * sa * cb


def _grad_beta(a, b, c, d, al, be):
    sa, ca = np.sin(al), np.cos(al)
    sb, cb = np.sin(be), np.cos(be)
    return a * sa * cb + b * ca * cb - c * sa * sb - d * ca * sb


def _objective(a, b, c, d, al, be):
    sa, ca = np.sin(al), np.cos(al)
    sb, cb = np.sin(be), np.cos(be)
    return a * sa * sb + b * ca * sb + c * sa * cb + d * ca * cb


def _stationary_beta(a, b, c, d, al):
    sa, ca = np.sin(al), np.cos(al)
    return np.arctan2(a * sa + b * ca, c * sa + d * ca) % np.pi


def solve_arc_stack(x1, x2, y1, y2) -> ArcStackSolution:
    """Solve n arc problems given four (n, D) stacks of unit rows."""
    x1, x2, y1, y2 = (np.ascontiguousarray(m, dtype=float) for m in (x1, x2, y1, y2))
    n = x1.shape[0]
    n2x, dot_x, res_x, alpha0, x_col = _pair_basis_stack(x1, x2)
    n2y, dot_y, res_y, beta0, y_col = _pair_basis_stack(y1, y2)

    a = -np.sum(n2x * n2y, axis=1)
    b = -np.sum(x1 * n2y, axis=1)
    c = -np.sum(n2x * y1, axis=1)
    d = -np.sum(x1 * y1, axis=1)

    alpha_c = np.zeros((n, _N_SLOTS))
    beta_c = np.zeros((n, _N_SLOTS))
    lams = np.zeros((n, _N_SLOTS, 4))

    # Interior quadratic in tan(alpha); roots multiply to -1.
    lead = a * b + c * d
    big_a = a * a - b * b + c * c - d * d
    generic = np.abs(lead) >= EPS_QUAD
    linear = ~generic & (np.abs(big_a) >= EPS_QUAD)
    disc = np.hypot(big_a, 2.0 * lead)
    num = big_a + np.where(big_a >= 0.0, disc, -disc)
    safe_lead = np.where(generic, lead, 1.0)
    t_big = np.where(generic, num / (2.0 * safe_lead), 1.0)
    al_first = np.where(generic, np.arctan(t_big) % np.pi, 0.0)
    al_second = np.where(
        generic,
        np.arctan(-1.0 / t_big) % np.pi,
        np.where(linear, np.pi / 2.0, alpha0),
    )
    # Order the two interior candidates by (alpha, beta) for tie-breaking.
    be_first = _stationary_beta(a, b, c, d, al_first)
    be_second = _stationary_beta(a, b, c, d, al_second)
    swap = (al_first > al_second) | ((al_first == al_second) & (be_first > be_second))
    alpha_c[:, 0] = np.where(swap, al_second, al_first)
    alpha_c[:, 1] = np.where(swap, al_first, al_second)
    beta_c[:, 0] = np.where(swap, be_second, be_first)
    beta_c[:, 1] = np.where(swap, be_first, be_second)

    sa0, ca0 = np.sin(alpha0), np.cos(alpha0)
    sb0, cb0 = np.sin(beta0), np.cos(beta0)

    # Case 1: alpha = 0, beta stationary.
    beta_c[:, 2] = np.arctan2(b, d) % np.pi
    # Case 2: alpha = alpha0, beta stationary.
    alpha_c[:, 3] = alpha0
    beta_c[:, 3] = np.arctan2(a * sa0 + b * ca0, c * sa0 + d * ca0) % np.pi
    # Case 3: beta = 0, alpha stationary.
    alpha_c[:, 4] = np.arctan2(c, d) % np.pi
    # Case 4: beta = beta0, alpha stationary.
    alpha_c[:, 5] = np.arctan2(a * sb0 + c * cb0, b * sb0 + d * cb0) % np.pi
    beta_c[:, 5] = beta0
    # Corners 5..8.
    alpha_c[:, 7] = 0.0
    beta_c[:, 7] = beta0
    alpha_c[:, 8] = alpha0
    alpha_c[:, 9] = alpha0
    beta_c[:, 9] = beta0

    ga = _grad_alpha(a[:, None], b[:, None], c[:, None], d[:, None], alpha_c, beta_c)
    gb = _grad_beta(a[:, None], b[:, None], c[:, None], d[:, None], alpha_c, beta_c)
    for slot, case in enumerate(_SLOT_CASE):
        if case in (1, 5, 6):
            lams[:, slot, 0] = -ga[:, slot]
        if case in (2, 7, 8):
            lams[:, slot, 1] = ga[:, slot]
        if case in (3, 5, 7):
            lams[:, slot, 2] = -gb[:, slot]
        if case in (4, 6, 8):
            lams[:, slot, 3] = gb[:, slot]
    # Collapsed sides have structurally pinned angles; their multipliers
    # carry no information and must not veto candidates.
    lams[x_col, :, 0:2] = 0.0
    lams[y_col, :, 2:4] = 0.0

    f_c = _objective(a[:, None], b[:, None], c[:, None], d[:, None], alpha_c, beta_c)

    feasible = (
        np.all(lams <= EPS_LAMBDA, axis=2)
        & (alpha_c >= -EPS_BOX)
        & (alpha_c <= alpha0[:, None] + EPS_BOX)
        & (beta_c >= -EPS_BOX)
        & (beta_c <= beta0[:, None] + EPS_BOX)
    )
    eligible = feasible | _CORNER_SLOTS[None, :]
    # A collapsed arc restricts the candidate set to its 1-D subproblem.
    allowed = np.ones((n, _N_SLOTS), dtype=bool)
    both = x_col & y_col
    x_only = x_col & ~y_col
    y_only = y_col & ~x_col
    allowed[x_only] = False
    allowed[np.ix_(x_only, [2, 6, 7])] = True  # cases 1, 5, 6
    allowed[y_only] = False
    allowed[np.ix_(y_only, [4, 6, 8])] = True  # cases 3, 5, 7
    allowed[both] = False
    allowed[np.ix_(both, [6])] = True  # case 5
    eligible &= allowed

    f_masked = np.where(eligible, f_c, np.inf)
    winner = np.argmin(f_masked, axis=1)
    rows = np.arange(n)
    alpha_w = alpha_c[rows, winner]
    beta_w = beta_c[rows, winner]

    p1 = x1 * np.cos(alpha_w)[:, None] + n2x * np.sin(alpha_w)[:, None]
    p2 = y1 * np.cos(beta_w)[:, None] + n2y * np.sin(beta_w)[:, None]

    return ArcStackSolution(
        case_id=_SLOT_CASE[winner],
        alpha=alpha_w,
        beta=beta_w,
        alpha0=alpha0,
        beta0=beta0,
        f_value=f_c[rows, winner],
        distance=np.linalg.norm(p1 - p2, axis=1),
        p1=p1,
        p2=p2,
        multipliers=lams[rows, winner, :],
        coeffs=np.stack([a, b, c, d], axis=1),
        n2x=n2x,
        n2y=n2y,
        dot_x=dot_x,
        dot_y=dot_y,
        res_x=res_x,
        res_y=res_y,
        x_collapsed=x_col,
        y_collapsed=y_col,
    )


def arc_stack_residuals(sol: ArcStackSolution) -> np.ndarray:
    """Max stationarity residual per instance for the winning candidates.

    A collapsed side has its angle structurally pinned and carries no
    stationarity condition, so its residual is excluded.
    """
    a, b, c, d = sol.coeffs.T
    r1 = (
        _grad_alpha(a, b, c, d, sol.alpha, sol.beta)
        + sol.multipliers[:, 0]
        - sol.multipliers[:, 1]
    )
    r2 = (
        _grad_beta(a, b, c, d, sol.alpha, sol.beta)
        + sol.multipliers[:, 2]
        - sol.multipliers[:, 3]
    )
    r1 = np.where(sol.x_collapsed, 0.0, r1)
    r2 = np.where(sol.y_collapsed, 0.0, r2)
    return np.maximum(np.abs(r1), np.abs(r2))


@dataclass
class SegmentStackSolution:
    case_id: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    distance: np.ndarray
    p1: np.ndarray
    p2: np.ndarray


def solve_segment_stack(x1, x2, y1, y2) -> SegmentStackSolution:
    """Solve n segment problems given four (n, D) endpoint stacks.

    Rows where both segments collapse are rejected, matching the scalar
    solver; rows with one collapsed segment fall back to point-vs-segment.
    """
    x1, x2, y1, y2 = (np.ascontiguousarray(m, dtype=float) for m in (x1, x2, y1, y2))
    n = x1.shape[0]
    u = x1 - x2
    v = y1 - y2
    w = x1 - y1
    uu = np.sum(u * u, axis=1)
    vv = np.sum(v * v, axis=1)
    uv = np.sum(u * v, axis=1)
    uw = np.sum(u * w, axis=1)
    vw = np.sum(v * w, axis=1)
    x_col = np.sqrt(uu) <= EPS_SEGMENT
    y_col = np.sqrt(vv) <= EPS_SEGMENT
    if np.any(x_col & y_col):
        raise DegenerateSegment("stack contains doubly collapsed segments")

    ca, cb, cc = uu, -uv, -uw
    ca2, cb2, cc2 = -uv, vv, vw

    def g1(k1, k2):
        return ca[:, None] * k1 + cb[:, None] * k2 + cc[:, None]

    def g2(k1, k2):
        return ca2[:, None] * k1 + cb2[:, None] * k2 + cc2[:, None]

    k1_c = np.zeros((n, 9))
    k2_c = np.zeros((n, 9))
    safe_a = np.where(ca > 0.0, ca, 1.0)
    safe_b2 = np.where(cb2 > 0.0, cb2, 1.0)
    det = ca2 * cb - ca * cb2
    det_ok = (np.abs(det) >= EPS_SEGMENT * ca * cb2) & ~x_col & ~y_col
    safe_det = np.where(det_ok, det, 1.0)
    k1_c[:, 0] = (cb2 * cc - cb * cc2) / safe_det
    k2_c[:, 0] = (ca * cc2 - ca2 * cc) / safe_det
    k2_c[:, 1] = -cc2 / safe_b2
    k1_c[:, 2] = 1.0
    k2_c[:, 2] = -(ca2 + cc2) / safe_b2
    k1_c[:, 3] = -cc / safe_a
    k1_c[:, 4] = -(cb + cc) / safe_a
    k2_c[:, 4] = 1.0
    k2_c[:, 6] = 1.0
    k1_c[:, 7] = 1.0
    k1_c[:, 8] = 1.0
    k2_c[:, 8] = 1.0

    lams = np.zeros((n, 9, 4))
    g1v = g1(k1_c, k2_c)
    g2v = g2(k1_c, k2_c)
    for slot in range(9):
        case = slot
        if case in (1, 5, 6):
            lams[:, slot, 0] = -g1v[:, slot]
        if case in (2, 7, 8):
            lams[:, slot, 1] = g1v[:, slot]
        if case in (3, 5, 7):
            lams[:, slot, 2] = -g2v[:, slot]
        if case in (4, 6, 8):
            lams[:, slot, 3] = g2v[:, slot]
    lams[x_col, :, 0:2] = 0.0
    lams[y_col, :, 2:4] = 0.0

    feasible = (
        np.all(lams <= EPS_LAMBDA, axis=2)
        & (k1_c >= -EPS_BOX)
        & (k1_c <= 1.0 + EPS_BOX)
        & (k2_c >= -EPS_BOX)
        & (k2_c <= 1.0 + EPS_BOX)
    )
    corner = np.zeros(9, dtype=bool)
    corner[5:] = True
    eligible = feasible | corner[None, :]
    allowed = np.ones((n, 9), dtype=bool)
    allowed[~det_ok, 0] = False
    x_only = x_col & ~y_col
    y_only = y_col & ~x_col
    allowed[x_only] = False
    allowed[np.ix_(x_only, [1, 5, 6])] = True
    allowed[y_only] = False
    allowed[np.ix_(y_only, [3, 5, 7])] = True
    eligible &= allowed

    # Squared distance at each candidate, evaluated from the quadratic form.
    d2 = (
        np.sum(w * w, axis=1)[:, None]
        + k1_c * k1_c * uu[:, None]
        + k2_c * k2_c * vv[:, None]
        - 2.0 * k1_c * uw[:, None]
        + 2.0 * k2_c * vw[:, None]
        - 2.0 * k1_c * k2_c * uv[:, None]
    )
    d2_masked = np.where(eligible, d2, np.inf)
    winner = np.argmin(d2_masked, axis=1)
    rows = np.arange(n)
    k1_w = k1_c[rows, winner]
    k2_w = k2_c[rows, winner]
    p1 = (1.0 - k1_w)[:, None] * x1 + k1_w[:, None] * x2
    p2 = (1.0 - k2_w)[:, None] * y1 + k2_w[:, None] * y2
    dist = np.linalg.norm(p1 - p2, axis=1)
    return SegmentStackSolution(
        case_id=winner, k1=k1_w, k2=k2_w, distance=dist, p1=p1, p2=p2
    )
