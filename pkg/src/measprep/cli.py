"""Command-line front end.

Subcommands ``guided``, ``three-axis``, ``sic-walk`` and ``plan`` each write
their data files (CSV or JSON) plus a ``manifest.json`` into ``--out``.
Parameter precedence is defaults < ``--config`` JSON < flags; a manifest
written by an earlier run is accepted as a config file.  Angles accept
plain radians or multiples of pi such as ``0.25pi``, ``pi/4`` or ``-pi``.

Exit codes: 0 success, 2 usage error, 3 planner failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__, harness, kernels
from . import protocols as proto
from .planner import PlannerError, joint_probability, plan_sic_sequence, replay_plan
from .qubit_state import InvalidArgumentError, PureState, angular_distance, from_angles

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PLANNER = 3
EXIT_IO = 4

_PI_RE = re.compile(r"^([+-])?\s*((?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)?\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*|\.\d+))?$")


class UsageError(Exception):
    pass


def parse_number(text) -> float:
    """Float or multiple of pi (``0.5pi``, ``pi/4``, ``-pi``); locale independent."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    m = _PI_RE.match(s)
    if m:
        sign, coef, den = m.groups()
        value = (float(coef) if coef else 1.0) * math.pi
        if den:
            value /= float(den)
        return -value if sign == "-" else value
    try:
        return float(s)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None


def parse_pair(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    if len(parts) != 2:
        raise UsageError(f"expected 'theta,phi', got {text!r}")
    return parse_number(parts[0]), parse_number(parts[1])


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict
    seed: int
    outputs: list
    version: str
    backend: str
    threads: int
    duration_s: float


# defaults per subcommand; None marks a required parameter
DEFAULTS = {
    "guided": {"n_max": None, "trajectories": 100_000, "initial": "0,0", "target": "pi,0"},
    "three-axis": {"theta_t": "pi/4", "phi_t": "pi/4", "delta": 1e-6, "trajectories": 100_000,
                   "max_steps": proto.THREE_AXIS_MAX_STEPS},
    "sic-walk": {"epsilon": None, "mode": "walk", "steps": 100_000, "sample_every": 250,
                 "burn_in": harness.DEFAULT_BURN_IN, "delta": 0.3, "trajectories": 10_000, "targets": 100,
                 "target": None, "initial": "0,0", "max_steps": proto.SIC_WALK_MAX_STEPS},
    "plan": {"initial": None, "target": None, "max_depth": 3, "grid": 1e-3, "batch": 0},
}
COMMON = {"seed": 0, "out": "measprep-out", "format": "csv", "threads": None}
# never echoed into data files: they must not change the bytes written
_NOT_IN_DATA = {"out", "format", "threads", "config"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="output directory (default ./measprep-out)")
    p.add_argument("--format", choices=["csv", "json"], help="data file format (default csv)")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--config", help="JSON config file (or a previous run's manifest)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="measprep", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"measprep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("guided", help="guided projective sequence: success rate vs N")
    g.add_argument("--n-max", type=int, help="largest number of steps N (required)")
    g.add_argument("--trajectories", type=int)
    g.add_argument("--initial", help="initial state as theta,phi (default 0,0)")
    g.add_argument("--target", help="target state as theta,phi; orthogonalized against the initial state")
    _add_common(g)

    t = sub.add_parser("three-axis", help="adaptive three-axis protocol hitting-time histogram")
    t.add_argument("--theta-t")
    t.add_argument("--phi-t")
    t.add_argument("--delta")
    t.add_argument("--trajectories", type=int)
    t.add_argument("--max-steps", type=int)
    _add_common(t)

    s = sub.add_parser("sic-walk", help="SIC-POVM random walk: steady-state samples or hitting times")
    s.add_argument("--epsilon", help="measurement strength in (0, 1]")
    s.add_argument("--mode", choices=["walk", "hitting"])
    s.add_argument("--steps", type=int, help="walk: measurement steps after burn-in")
    s.add_argument("--sample-every", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--initial", help="initial state as theta,phi (default 0,0)")
    s.add_argument("--delta", help="hitting: acceptance angle (default 0.3)")
    s.add_argument("--trajectories", type=int, help="hitting: number of trajectories")
    s.add_argument("--targets", type=int, help="hitting: number of random targets when --target is absent")
    s.add_argument("--target", help="hitting: fixed target as theta,phi")
    s.add_argument("--max-steps", type=int)
    _add_common(s)

    p = sub.add_parser("plan", help="shortest tuned SIC-POVM plan between two states")
    p.add_argument("--initial", help="theta,phi")
    p.add_argument("--target", help="theta,phi")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--grid", help="strength grid resolution (default 1e-3)")
    p.add_argument("--batch", type=int, help="plan this many random (initial, target) pairs instead")
    _add_common(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    params = dict(COMMON)
    params.update(DEFAULTS[args.command])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except ValueError as e:
            raise UsageError(f"config file is not valid JSON: {e}") from None
        if isinstance(cfg, dict) and "parameters" in cfg and "subcommand" in cfg:
            cfg = dict(cfg["parameters"], seed=cfg.get("seed", 0))
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in params:
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            params[key] = value
    for key in params:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    missing = [k for k, v in params.items() if v is None and k not in ("threads", "target", "initial")]
    if missing:
        raise UsageError("missing required parameter(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return params


def _write(out_dir: Path, name: str, text: str) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8", newline="")
    return str(path)


def _metadata(command: str, params: dict) -> dict:
    return {
        "subcommand": command,
        "version": __version__,
        "seed": params["seed"],
        "parameters": {k: v for k, v in params.items() if k not in _NOT_IN_DATA},
    }


def cmd_guided(params: dict, threads: int, backend: str, out: Path) -> tuple[int, list]:
    n_max = int(params["n_max"])
    trajectories = int(params["trajectories"])
    if n_max < 1 or trajectories < 1:
        raise UsageError("--n-max and --trajectories must be >= 1")
    rows = harness.guided_table(range(1, n_max + 1), trajectories, int(params["seed"]), threads, backend,
                                initial=parse_pair(params["initial"]), target=parse_pair(params["target"]))
    print(f"{'N':>4} {'analytic':>10} {'monte_carlo':>12} {'stderr':>9} {'z':>7}")
    for r in rows:
        print(f"{r['n']:>4} {r['analytic']:>10.6f} {r['monte_carlo']:>12.6f} {r['stderr']:>9.2e} {r['z_score']:>7.2f}")
    fmt = params["format"]
    text = harness.render(harness.TABLE_SCHEMA, _metadata("guided", params), rows, harness.GUIDED_FIELDS, fmt)
    return EXIT_OK, [_write(out, f"guided.{fmt}", text)]


def cmd_three_axis(params: dict, threads: int, backend: str, out: Path) -> tuple[int, list]:
    theta = parse_number(params["theta_t"])
    phi = parse_number(params["phi_t"])
    delta = parse_number(params["delta"])
    if not (0.0 <= theta <= math.pi):
        raise UsageError("--theta-t must lie in [0, pi]")
    if not (0.0 < delta <= math.pi):
        raise UsageError("--delta must lie in (0, pi]")
    cfg = harness.EnsembleConfig("three_axis", {"theta_t": theta, "phi_t": phi, "delta": delta},
                                 int(params["trajectories"]), int(params["seed"]), int(params["max_steps"]))
    res = harness.run_ensemble(cfg, threads=threads, backend=backend)
    h = res.histogram
    print(f"trajectories {h.total_runs}  successes {h.successes}")
    print(f"mean steps {h.mean_steps:.4f} +- {h.mean_stderr():.4f}")
    print(f"P(steps < 20) {h.prob_below(20):.4f} +- {h.prob_below_stderr(20):.4f}")
    meta = _metadata("three-axis", params)
    meta["summary"] = h.summary()
    fmt = params["format"]
    text = harness.render(harness.HISTOGRAM_SCHEMA, meta, h.rows(), harness.HISTOGRAM_FIELDS, fmt)
    return EXIT_OK, [_write(out, f"histogram.{fmt}", text)]


def cmd_sic_walk(params: dict, threads: int, backend: str, out: Path) -> tuple[int, list]:
    eps = parse_number(params["epsilon"])
    mode = params["mode"]
    if not (0.0 < eps <= 1.0):
        raise UsageError("--epsilon must lie in (0, 1]")
    initial = from_angles(*parse_pair(params["initial"]))
    fmt = params["format"]
    meta = _metadata("sic-walk", params)
    if mode == "walk":
        steps, every, burn = int(params["steps"]), int(params["sample_every"]), int(params["burn_in"])
        if every < 1 or steps < every or burn < 0:
            raise UsageError("need --steps >= --sample-every >= 1 and --burn-in >= 0")
        w = harness.run_sic_walk(eps, steps, every, int(params["seed"]), burn, initial, backend=backend)
        capture = harness.cluster_capture_fraction(w.states, harness.sic_cluster_centers(eps))
        cells = harness.grid_counts(*w.theta_phi)
        print(f"samples {len(w.states)}  (every {every} steps after {burn} burn-in steps)")
        print(f"fraction within {harness.CLUSTER_RADIUS} rad of the 16 cluster centers: {capture:.4f}")
        print(f"equal-area grid cells visited: {int((cells > 0).sum())}/{cells.size}")
        meta["summary"] = {"cluster_capture": capture, "cells_visited": int((cells > 0).sum())}
        text = harness.render(harness.SAMPLES_SCHEMA, meta, w.rows(), harness.SAMPLE_FIELDS, fmt)
        return EXIT_OK, [_write(out, f"samples.{fmt}", text)]
    if eps >= 1.0:
        raise UsageError("hitting mode needs epsilon < 1: a projective SIC-POVM only ever produces its four states")
    delta = parse_number(params["delta"])
    if not (0.0 < delta <= math.pi):
        raise UsageError("--delta must lie in (0, pi]")
    targets = None
    if params["target"] is not None:
        targets = [from_angles(*parse_pair(params["target"]))]
    survey = harness.hitting_time_survey(eps, delta, int(params["trajectories"]), int(params["seed"]),
                                         n_targets=int(params["targets"]), initial=initial, targets=targets,
                                         max_steps=int(params["max_steps"]), threads=threads, backend=backend)
    h = survey.histogram
    print(f"trajectories {h.total_runs}  successes {h.successes}  targets {len(survey.targets)}")
    print(f"mean hitting time {h.mean_steps:.2f} +- {h.mean_stderr():.2f} steps")
    print(f"4/delta^2 estimate {survey.estimate:.2f}  ratio {survey.ratio:.3f}")
    meta["summary"] = dict(h.summary(), estimate=survey.estimate, ratio=survey.ratio)
    text = harness.render(harness.HISTOGRAM_SCHEMA, meta, h.rows(), harness.HISTOGRAM_FIELDS, fmt)
    return EXIT_OK, [_write(out, f"hitting.{fmt}", text)]


def _plan_rows(index: int, initial: PureState, target: PureState, plan) -> list[dict]:
    final = replay_plan(initial, plan)
    common = {"pair": index, "depth": len(plan), "joint_probability": joint_probability(plan),
              "final_distance": angular_distance(final, target)}
    if not plan:
        return [dict(common, step=0, strength="", required_outcome="", success_probability="")]
    return [dict(common, step=i + 1, **s.to_dict()) for i, s in enumerate(plan)]


def cmd_plan(params: dict, threads: int, backend: str, out: Path) -> tuple[int, list]:
    depth = int(params["max_depth"])
    grid = parse_number(params["grid"])
    if not (0 <= depth <= 3):
        raise UsageError("--max-depth must be between 0 and 3")
    if not (0.0 < grid <= 0.5):
        raise UsageError("--grid must lie in (0, 0.5]")
    batch = int(params["batch"])
    if batch > 0:
        states = harness.random_states(int(params["seed"]), 2 * batch)
        pairs = list(zip(states[0::2], states[1::2]))
    else:
        if params["initial"] is None or params["target"] is None:
            raise UsageError("plan needs --initial and --target (or --batch N)")
        pairs = [(from_angles(*parse_pair(params["initial"])), from_angles(*parse_pair(params["target"])))]

    def solve(pair):
        try:
            return plan_sic_sequence(pair[0], pair[1], depth, grid, backend=backend)
        except PlannerError:
            return None

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            plans = list(pool.map(solve, pairs))
    else:
        plans = [solve(p) for p in pairs]
    rows, failures = [], 0
    for i, ((a, b), plan) in enumerate(zip(pairs, plans)):
        if plan is None:
            failures += 1
            print(f"pair {i}: no plan of depth <= {depth}")
            continue
        rows.extend(_plan_rows(i, a, b, plan))
        desc = ", ".join(f"eps={s.strength:.6f} -> outcome {s.required_outcome} (p={s.success_probability:.4f})"
                         for s in plan) or "already at target"
        print(f"pair {i}: depth {len(plan)}  joint p={joint_probability(plan):.5f}  "
              f"error {angular_distance(replay_plan(a, plan), b):.2e} rad  [{desc}]")
    if batch > 0:
        depths = [len(p) for p in plans if p is not None]
        print(f"{len(depths)}/{len(pairs)} pairs planned; max depth {max(depths) if depths else '-'}")
    fmt = params["format"]
    meta = _metadata("plan", params)
    meta["summary"] = {"pairs": len(pairs), "failures": failures}
    text = harness.render("measprep.plan/1", meta, rows, harness.PLAN_FIELDS, fmt)
    files = [_write(out, f"plan.{fmt}", text)]
    return (EXIT_PLANNER if failures else EXIT_OK), files


COMMANDS = {"guided": cmd_guided, "three-axis": cmd_three_axis, "sic-walk": cmd_sic_walk, "plan": cmd_plan}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        params = resolve(args)
        threads = int(params["threads"] or harness.default_threads())
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        params["seed"] = int(params["seed"])
        backend = kernels.default_backend()
        out = Path(params["out"])
        code, files = COMMANDS[args.command](params, threads, backend, out)
        manifest = RunManifest(args.command, {k: v for k, v in params.items() if k not in _NOT_IN_DATA},
                               params["seed"], files, __version__, backend, threads,
                               round(time.perf_counter() - start, 6))
        files.append(_write(out, "manifest.json", harness.dumps(asdict(manifest))))
    except (UsageError, InvalidArgumentError) as e:
        parser.print_usage(sys.stderr)
        print(f"measprep {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"measprep {args.command}: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
