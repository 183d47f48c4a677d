"""Command-line entry points.

Subcommands: solve (one instance, closed form), oracle (grid search, or a
randomized solver-vs-oracle sweep), experiment (paired desk-scale training
runs), and cases (static SVG of the candidate landscape). All output is
JSON on stdout, CSV for tabular histories, SVG for figures. Exit codes:
0 success, 1 runtime failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .arc_solver import ArcProblem, check_kkt, enumerate_candidates, optimal_arc_distance
from .errors import (
    ConfigError,
    DegenerateArc,
    DegenerateSegment,
    DimensionMismatch,
    HardNegError,
    InvalidBatchShape,
    NearZeroVector,
    OddClassCount,
    ParseError,
)
from .geometry import evaluate_objective
from .losses import LossConfig
from .gradients import LOSS_REGISTRY
from .oracle import grid_min_arc, grid_min_segment
from .segment_solver import SegmentProblem, optimal_segment_distance
from .trainer import SyntheticSpec, evaluate, train

INPUT_ERRORS = (
    ParseError,
    ConfigError,
    DegenerateArc,
    DegenerateSegment,
    DimensionMismatch,
    NearZeroVector,
    InvalidBatchShape,
    OddClassCount,
)

SWEEP_DIMS = (3, 8, 64, 512)


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written next to any file outputs."""

    command: str
    config_path: str
    out_dir: str
    seed: int | None
    timestamp: str
    version: str = __version__


def _write_manifest(command, config_path, out_dir, seed):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=command,
        config_path=str(config_path),
        out_dir=str(out),
        seed=seed,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    with open(out / "manifest.json", "w") as fh:
        json.dump(asdict(manifest), fh, indent=2)
        fh.write("\n")
    return out


def _load_instance(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    try:
        points = tuple(
            np.asarray(payload[key], dtype=float) for key in ("x1", "x2", "y1", "y2")
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"instance must hold numeric x1, x2, y1, y2: {exc}") from exc
    return points, payload.get("variant", "arc")


def _emit(payload) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _solve_payload(points, variant):
    if variant == "segment":
        sol = optimal_segment_distance(SegmentProblem.from_endpoints(*points))
        return {
            "variant": "segment",
            "case_id": int(sol.case_id),
            "k1": float(sol.k1),
            "k2": float(sol.k2),
            "p1": sol.p1.tolist(),
            "p2": sol.p2.tolist(),
            "distance": float(sol.distance),
        }
    sol = optimal_arc_distance(ArcProblem.from_endpoints(*points))
    return {
        "variant": "arc",
        "case_id": int(sol.candidate.case_id),
        "alpha": float(sol.candidate.alpha),
        "beta": float(sol.candidate.beta),
        "p1": sol.p1.tolist(),
        "p2": sol.p2.tolist(),
        "distance": float(sol.distance),
    }


def cmd_solve(args) -> int:
    points, instance_variant = _load_instance(args.instance)
    variant = args.variant or instance_variant
    payload = _solve_payload(points, variant)
    _emit(payload)
    if args.out_dir:
        out = _write_manifest("solve", args.instance, args.out_dir, args.seed)
        with open(out / "solution.json", "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def _oracle_payload(points, variant, resolution):
    if variant == "segment":
        result = grid_min_segment(SegmentProblem.from_endpoints(*points), resolution)
    else:
        result = grid_min_arc(ArcProblem.from_endpoints(*points), resolution)
    return {
        "best_params": [float(v) for v in result.best_params],
        "best_distance": float(result.best_distance),
        "resolution": float(result.resolution),
        "evaluations": int(result.evaluations),
    }


def _random_instance(rng, dim, variant):
    points = rng.normal(size=(4, dim))
    if variant == "arc":
        points /= np.linalg.norm(points, axis=1, keepdims=True)
    return tuple(points)


def _run_sweep(args) -> int:
    out = _write_manifest("oracle-sweep", args.instance or "", args.out_dir, args.seed)
    rng = np.random.default_rng(args.seed)
    variant = args.variant or "arc"
    rows = []
    for idx in range(args.sweep):
        dim = SWEEP_DIMS[idx % len(SWEEP_DIMS)]
        points = _random_instance(rng, dim, variant)
        if variant == "segment":
            problem = SegmentProblem.from_endpoints(*points)
            solver_d = optimal_segment_distance(problem).distance
            oracle_d = grid_min_segment(problem, args.resolution).best_distance
            scale = float(np.linalg.norm(problem.u) + np.linalg.norm(problem.v))
        else:
            problem = ArcProblem.from_endpoints(*points)
            solver_d = optimal_arc_distance(problem).distance
            oracle_d = grid_min_arc(problem, args.resolution).best_distance
            scale = 1.0
        rows.append((idx, dim, solver_d, oracle_d, oracle_d - solver_d, scale))
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "dim", "solver", "oracle", "gap", "scale"])
        writer.writerows(rows)
    gaps = [r[4] for r in rows]
    summary = {
        "instances": len(rows),
        "variant": variant,
        "resolution": args.resolution,
        "max_gap": max(gaps),
        "mean_gap": float(np.mean(gaps)),
        "solver_above_oracle": int(sum(1 for g in gaps if g < -1e-9)),
        "gap_above_tolerance": int(
            sum(1 for r in rows if r[4] > 2e-3 * r[5])
        ),
    }
    with open(out / "sweep_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _emit(summary)
    return 0


def cmd_oracle(args) -> int:
    if args.sweep:
        return _run_sweep(args)
    if not args.instance:
        raise ParseError("oracle needs an instance file or --sweep N")
    points, instance_variant = _load_instance(args.instance)
    variant = args.variant or instance_variant
    payload = _oracle_payload(points, variant, args.resolution)
    _emit(payload)
    if args.out_dir:
        out = _write_manifest("oracle", args.instance, args.out_dir, args.seed)
        with open(out / "oracle.json", "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def _load_experiment_config(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    try:
        spec = SyntheticSpec(**payload.get("spec", {}))
        losses = payload["losses"]
        config = LossConfig(**payload.get("loss_config", {}))
        steps = int(payload.get("steps", 100))
        lr = float(payload.get("learning_rate", 0.05))
        seeds = [int(s) for s in payload.get("seeds", [0])]
        variant = payload.get("variant", "arc")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc
    unknown = [name for name in losses if name not in LOSS_REGISTRY]
    if unknown:
        raise ConfigError(f"unknown losses {unknown}; available: {sorted(LOSS_REGISTRY)}")
    if steps < 0:
        raise ConfigError("steps must be nonnegative")
    return spec, losses, config, steps, lr, seeds, variant


def cmd_experiment(args) -> int:
    spec, losses, config, steps, lr, seeds, variant = _load_experiment_config(args.config)
    out = _write_manifest("experiment", args.config, args.out_dir, seeds[0] if seeds else None)
    summary = {"spec": asdict(spec), "steps": steps, "learning_rate": lr, "runs": []}
    finals: dict = {name: [] for name in losses}
    for name in losses:
        for seed in seeds:
            state = train(spec, name, config, steps, learning_rate=lr,
                          seed=seed, variant=variant)
            history_path = out / f"history_{name}_seed{seed}.csv"
            with open(history_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["step", "loss", "recall_at_1"])
                writer.writerows(state.history)
            report = evaluate(state.embeddings)
            final_recall = state.history[-1][2]
            finals[name].append(final_recall)
            summary["runs"].append(
                {
                    "loss": name,
                    "seed": seed,
                    "final_loss": state.history[-1][1],
                    "final_recall_at_1": final_recall,
                    "recall_at_k": {str(k): v for k, v in report.recall_at_k.items()},
                    "nmi": report.nmi,
                    "f1": report.f1,
                    "history_csv": history_path.name,
                }
            )
    summary["median_final_recall_at_1"] = {
        name: statistics.median(vals) for name, vals in finals.items() if vals
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _emit(summary)
    return 0


def _svg_color(value: float) -> str:
    """Map a normalized objective value in [0, 1] to a blue-to-white ramp."""
    level = int(round(255 * min(max(value, 0.0), 1.0)))
    return f"rgb({level},{level},255)"


def render_cases_svg(problem: ArcProblem, grid: int = 80) -> str:
    """SVG of the objective over the feasible box with all case candidates.

    Feasible candidates are filled, infeasible outlined, the winner ringed.
    Degenerate boxes (collapsed arcs) get a hairline extent so the figure
    stays well formed.
    """
    winner = optimal_arc_distance(problem)
    cands = enumerate_candidates(problem)
    a0 = max(problem.alpha0, 1e-6)
    b0 = max(problem.beta0, 1e-6)
    size, margin = 420, 45
    cell = size / grid
    values = np.empty((grid, grid))
    for i in range(grid):
        for j in range(grid):
            values[i, j] = evaluate_objective(
                problem.coeffs, (i + 0.5) * a0 / grid, (j + 0.5) * b0 / grid
            )
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0

    def sx(alpha):
        return margin + (alpha / a0) * size

    def sy(beta):
        return margin + size - (beta / b0) * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * margin}" '
        f'height="{size + 2 * margin}" viewBox="0 0 {size + 2 * margin} {size + 2 * margin}">',
        f'<rect x="0" y="0" width="{size + 2 * margin}" height="{size + 2 * margin}" fill="white"/>',
    ]
    for i in range(grid):
        for j in range(grid):
            shade = _svg_color((values[i, j] - lo) / span)
            parts.append(
                f'<rect x="{margin + i * cell:.2f}" y="{margin + size - (j + 1) * cell:.2f}" '
                f'width="{cell + 0.5:.2f}" height="{cell + 0.5:.2f}" fill="{shade}"/>'
            )
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{size}" height="{size}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    )
    for cand in cands:
        feasible = cand.case_id in (5, 6, 7, 8) or check_kkt(cand, problem.alpha0, problem.beta0)
        fill = "#1a6e1a" if feasible else "none"
        parts.append(
            f'<circle cx="{sx(cand.alpha):.2f}" cy="{sy(cand.beta):.2f}" r="5" '
            f'fill="{fill}" stroke="#333333" stroke-width="1.5">'
            f"<title>case {cand.case_id}: f={cand.f_value:.6f}</title></circle>"
        )
    best = winner.candidate
    parts.append(
        f'<circle cx="{sx(best.alpha):.2f}" cy="{sy(best.beta):.2f}" r="9" '
        'fill="none" stroke="#cc2222" stroke-width="2.5"/>'
    )
    parts.append(
        f'<text x="{margin}" y="{margin - 12}" font-size="13" font-family="monospace">'
        f"winner: case {best.case_id}, distance {winner.distance:.6f}</text>"
    )
    parts.append(
        f'<text x="{margin + size / 2 - 30}" y="{size + 2 * margin - 8}" '
        'font-size="12" font-family="monospace">alpha</text>'
    )
    parts.append(
        f'<text x="8" y="{margin + size / 2}" font-size="12" font-family="monospace">beta</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_cases(args) -> int:
    points, _ = _load_instance(args.instance)
    problem = ArcProblem.from_endpoints(*points)
    svg = render_cases_svg(problem)
    if args.out_dir:
        out = _write_manifest("cases", args.instance, args.out_dir, args.seed)
        path = out / "cases.svg"
        path.write_text(svg)
        _emit({"svg": str(path)})
    else:
        sys.stdout.write(svg + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hardneg",
        description="Optimal hard-negative distances between arcs or segments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one instance in closed form")
    solve.add_argument("instance")
    solve.add_argument("--variant", choices=["arc", "segment"], default=None)
    solve.add_argument("--out-dir", default=None)
    solve.add_argument("--seed", type=int, default=0)
    solve.set_defaults(func=cmd_solve)

    oracle = sub.add_parser("oracle", help="grid-search an instance or sweep")
    oracle.add_argument("instance", nargs="?", default=None)
    oracle.add_argument("--variant", choices=["arc", "segment"], default=None)
    oracle.add_argument("--resolution", type=float, default=1e-3)
    oracle.add_argument("--sweep", type=int, default=0, metavar="N")
    oracle.add_argument("--out-dir", default=None)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.set_defaults(func=cmd_oracle)

    experiment = sub.add_parser("experiment", help="paired desk-scale training")
    experiment.add_argument("config")
    experiment.add_argument("--out-dir", required=True)
    experiment.set_defaults(func=cmd_experiment)

    cases = sub.add_parser("cases", help="SVG of the nine candidate cases")
    cases.add_argument("instance")
    cases.add_argument("--out-dir", default=None)
    cases.add_argument("--seed", type=int, default=0)
    cases.set_defaults(func=cmd_cases)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "sweep", 0) and not args.out_dir:
        _error_payload(ParseError("--sweep requires --out-dir"))
        return 2
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        _error_payload(exc)
        return 2
    except HardNegError as exc:
        _error_payload(exc)
        return 1


def _error_payload(exc) -> None:
    _emit({"error": type(exc).__name__, "message": str(exc)})


if __name__ == "__main__":
    sys.exit(main())
