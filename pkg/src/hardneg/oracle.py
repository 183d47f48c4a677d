"""Brute-force grid verification of both solvers.

Exhaustively evaluates the distance on a uniform grid over the feasible
box, endpoints always included. Stays independent of the case analysis:
no stationarity conditions, no multipliers, just dense evaluation. Ties
resolve to the first grid cell in row-major order.

The default evaluation exploits only the bilinearity of dot products (each
grid distance is still evaluated individually); ``explicit=True`` instead
materializes the curve points and takes Euclidean norms of differences,
which is slower but shares no algebra with the fast path. The two are
cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arc_solver import ArcProblem
from .geometry import point_on_arc
from .segment_solver import SegmentProblem

# Rows of the grid are processed in slabs of this many to bound memory.
_CHUNK = 4096

DEFAULT_RESOLUTION = 1e-3


@dataclass(frozen=True)
class GridResult:
    """Minimum over the evaluated grid and where it was attained."""

    best_params: tuple
    best_distance: float
    resolution: float
    evaluations: int


def _axis(extent: float, resolution: float) -> np.ndarray:
    """Grid 0, r, 2r, ... capped at extent, with the endpoint appended.

    Multiples of the step are exact floats, so halving the resolution
    yields a superset of the points and refinement is monotone by
    construction.
    """
    if extent <= 0.0:
        return np.zeros(1)
    points = np.arange(int(np.floor(extent / resolution)) + 1) * resolution
    if points[-1] >= extent:
        points[-1] = extent
    else:
        points = np.append(points, extent)
    return points


def _scan_min(rows_fn, n_rows: int, n_cols: int):
    """Row-chunked minimum of a matrix of squared distances.

    rows_fn(i0, i1) returns the squared-distance block for rows [i0, i1).
    Returns (flat row, col, min value) of the first minimal cell.
    """
    best = np.inf
    best_rc = (0, 0)
    for i0 in range(0, n_rows, _CHUNK):
        i1 = min(i0 + _CHUNK, n_rows)
        block = rows_fn(i0, i1)
        flat = int(np.argmin(block))
        val = float(block.flat[flat])
        if val < best:
            best = val
            best_rc = (i0 + flat // n_cols, flat % n_cols)
    return best_rc, best


def grid_min_arc(
    problem: ArcProblem, resolution: float = DEFAULT_RESOLUTION, explicit: bool = False
) -> GridResult:
    """Grid minimum of the chord distance over [0, alpha0] x [0, beta0]."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    alphas = _axis(problem.alpha0, resolution)
    betas = _axis(problem.beta0, resolution)
    if explicit:
        points_x = np.stack([point_on_arc(problem.basis_x, a) for a in alphas])
        points_y = np.stack([point_on_arc(problem.basis_y, b) for b in betas])

        def rows_fn(i0, i1):
            diff = points_x[i0:i1, None, :] - points_y[None, :, :]
            return np.sum(diff * diff, axis=2)

    else:
        n1, n2 = problem.basis_x.n1, problem.basis_x.n2
        n3, n4 = problem.basis_y.n1, problem.basis_y.n2
        g13, g23 = float(n1 @ n3), float(n2 @ n3)
        g14, g24 = float(n1 @ n4), float(n2 @ n4)
        cos_a, sin_a = np.cos(alphas), np.sin(alphas)
        cos_b, sin_b = np.cos(betas), np.sin(betas)
        # p1.p2 = u1(alpha) cos(beta) + u2(alpha) sin(beta)
        u1 = cos_a * g13 + sin_a * g23
        u2 = cos_a * g14 + sin_a * g24

        def rows_fn(i0, i1):
            dots = u1[i0:i1, None] * cos_b[None, :] + u2[i0:i1, None] * sin_b[None, :]
            return 2.0 - 2.0 * dots

    (ia, ib), d2 = _scan_min(rows_fn, len(alphas), len(betas))
    return GridResult(
        best_params=(float(alphas[ia]), float(betas[ib])),
        best_distance=float(np.sqrt(max(d2, 0.0))),
        resolution=resolution,
        evaluations=len(alphas) * len(betas),
    )


def grid_min_segment(
    problem: SegmentProblem,
    resolution: float = DEFAULT_RESOLUTION,
    explicit: bool = False,
) -> GridResult:
    """Grid minimum of |p1 - p2| over (k1, k2) in [0, 1]^2."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    k1s = _axis(1.0, resolution)
    k2s = _axis(1.0, resolution)
    if explicit:
        points_x = problem.x1[None, :] + np.outer(k1s, problem.x2 - problem.x1)
        points_y = problem.y1[None, :] + np.outer(k2s, problem.y2 - problem.y1)

        def rows_fn(i0, i1):
            diff = points_x[i0:i1, None, :] - points_y[None, :, :]
            return np.sum(diff * diff, axis=2)

    else:
        u, v, w = problem.u, problem.v, problem.w
        uu, vv, uv = float(u @ u), float(v @ v), float(u @ v)
        uw, vw, ww = float(u @ w), float(v @ w), float(w @ w)
        # |w - k1 u + k2 v|^2 split into row, column, and cross terms
        row = ww + k1s * k1s * uu - 2.0 * k1s * uw
        col = k2s * k2s * vv + 2.0 * k2s * vw
        cross = -2.0 * uv

        def rows_fn(i0, i1):
            return (
                row[i0:i1, None]
                + col[None, :]
                + cross * k1s[i0:i1, None] * k2s[None, :]
            )

    (i1_, i2_), d2 = _scan_min(rows_fn, len(k1s), len(k2s))
    return GridResult(
        best_params=(float(k1s[i1_]), float(k2s[i2_])),
        best_distance=float(np.sqrt(max(d2, 0.0))),
        resolution=resolution,
        evaluations=len(k1s) * len(k2s),
    )
