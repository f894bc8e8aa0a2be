"""Shortest SIC-POVM measurement plans with tuned strengths.

A plan is a list of (strength, required outcome) pairs.  Requiring outcome
``k`` of the tetrahedral SIC-POVM moves the Bloch vector along the great
circle toward the k-th tetrahedron vertex, by an amount set by the
strength, so a plan of depth d is a chain of d such arcs.  The search
tries depths 1, 2, 3 in turn; for every outcome sequence the last strength
is solved in closed form (closest point of the final arc to the target)
and the earlier strengths are swept over a grid, then refined locally with
scipy.  Candidate plans are checked by replaying them through the Kraus
operators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import kernels
from . import measurement as meas
from .qubit_state import PureState, angular_distance, to_bloch

PLAN_TOLERANCE = 1e-6
_N_STARTS = 4


class PlannerError(RuntimeError):
    """No plan within the requested depth reaches the target."""


@dataclass(frozen=True)
class PlanStep:
    strength: float
    required_outcome: int
    success_probability: float

    def to_dict(self) -> dict:
        return {
            "strength": self.strength,
            "required_outcome": self.required_outcome,
            "success_probability": self.success_probability,
        }


SIC_AXES = np.stack([to_bloch(s).as_array() for s in meas.SIC_STATES])
_AXES = [tuple(float(c) for c in a) for a in SIC_AXES]


def joint_probability(plan: list[PlanStep]) -> float:
    return math.prod(s.success_probability for s in plan)


def replay_plan(initial: PureState, plan: list[PlanStep]) -> PureState:
    """Apply the plan's measurements, forcing the required outcomes."""
    state = initial
    for step in plan:
        state = meas.apply_outcome(meas.sic_povm(step.strength), state, step.required_outcome - 1).post_state
    return state


def _sequences(depth: int):
    # repeating an outcome only moves further along the same arc, which one
    # stronger measurement already covers
    for seq in itertools.product(range(4), repeat=depth):
        if all(a != b for a, b in zip(seq, seq[1:])):
            yield seq


def _step(r, n, e):
    rn = r[0] * n[0] + r[1] * n[1] + r[2] * n[2]
    den = 1.0 + e * rn
    along = (rn + e) / den
    shrink = math.sqrt(max(1.0 - e * e, 0.0)) / den
    return tuple(along * n[c] + (r[c] - rn * n[c]) * shrink for c in range(3))


def _last_step(s, n, t):
    """Closest approach to ``t`` of the arc from ``s`` toward ``n``: (chord^2, strength)."""
    c = s[0] * n[0] + s[1] * n[1] + s[2] * n[2]
    u = [n[i] - c * s[i] for i in range(3)]
    un = math.sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
    if un < 1e-14:
        return sum((s[i] - t[i]) ** 2 for i in range(3)), 0.0
    u = [x / un for x in u]
    total = math.atan2(un, c)
    alpha = math.atan2(t[0] * u[0] + t[1] * u[1] + t[2] * u[2], t[0] * s[0] + t[1] * s[1] + t[2] * s[2])
    alpha = min(max(alpha, 0.0), total)
    ca, sa = math.cos(alpha), math.sin(alpha)
    chord2 = sum((ca * s[i] + sa * u[i] - t[i]) ** 2 for i in range(3))
    cp = math.cos(total - alpha)
    den = 1.0 - cp * c
    eps = 1.0 if den <= 0.0 else min(max((cp - c) / den, 0.0), 1.0)
    return chord2, eps


def _chain(r0, seq, strengths, t):
    """Apply the free strengths, then the closed-form last step: (chord^2, all strengths)."""
    r = r0
    for k, e in zip(seq[:-1], strengths):
        r = _step(r, _AXES[k], e)
    chord2, last = _last_step(r, _AXES[seq[-1]], t)
    return chord2, [float(e) for e in strengths] + [last]


def _build_steps(initial: PureState, seq, strengths) -> tuple[list[PlanStep], PureState]:
    steps = []
    state = initial
    for k, e in zip(seq, strengths):
        out = meas.apply_outcome(meas.sic_povm(e), state, k)
        steps.append(PlanStep(e, k + 1, out.probability))
        state = out.post_state
    return steps, state


def _candidate_starts(values: np.ndarray, grid: np.ndarray) -> list[tuple]:
    flat = values.ravel()
    n = min(_N_STARTS, flat.size)
    best = np.argpartition(flat, n - 1)[:n]
    best = best[np.argsort(flat[best])]
    return [tuple(grid[i] for i in np.unravel_index(b, values.shape)) for b in best]


def _line_solve(f, x0, step):
    lo, hi = max(x0 - step, 0.0), min(x0 + step, 1.0)
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-15})
    return float(res.x), float(res.fun)


def _refine3(r0, t, seq, start, step, good):
    e1, e2 = start
    # the zero set is a curve in the (e1, e2) plane: solve along one coordinate
    e2b, f = _line_solve(lambda e: _chain(r0, seq, [e1, e], t)[0], e2, step)
    if f <= good:
        return [e1, e2b]
    e1b, f = _line_solve(lambda e: _chain(r0, seq, [e, e2], t)[0], e1, step)
    if f <= good:
        return [e1b, e2]
    obj = lambda v: _chain(r0, seq, np.clip(v, 0.0, 1.0), t)[0]  # noqa: E731
    simplex = np.array([start, (start[0] + step, start[1]), (start[0], start[1] + step)])
    res = minimize(obj, np.array(start), method="Nelder-Mead",
                   options={"xatol": 1e-14, "fatol": good / 10, "maxiter": 2000, "initial_simplex": simplex})
    return list(np.clip(res.x, 0.0, 1.0))


def _solve_sequence(r0, t, seq, grid, backend, tolerance):
    """Candidate strength vectors for one outcome sequence, best first."""
    depth = len(seq)
    if depth == 1:
        return [_chain(r0, seq, [], t)[1]]
    values = kernels.plan_grid(r0, [SIC_AXES[k] for k in seq], t, grid, backend=backend)
    step = grid[1] - grid[0] if grid.size > 1 else grid[0]
    # chord^2 target well inside the angular tolerance
    good = (0.1 * tolerance) ** 2
    found = []
    for start in _candidate_starts(values, grid):
        if depth == 2:
            x = [_line_solve(lambda e: _chain(r0, seq, [e], t)[0], start[0], step)[0]]
        else:
            x = _refine3(r0, t, seq, start, step, good)
        chord2, strengths = _chain(r0, seq, x, t)
        found.append(strengths)
        if chord2 <= good:
            break
    return found


def plan_sic_sequence(initial: PureState, target: PureState, max_depth: int = 3,
                      strength_grid: float = 1e-3, backend: str | None = None,
                      tolerance: float = PLAN_TOLERANCE) -> list[PlanStep]:
    """Shortest tuned-strength SIC plan taking ``initial`` to within ``tolerance`` of ``target``.

    Among plans of the minimal depth the one with the largest joint
    success probability wins; ties keep the lexicographically first
    outcome sequence.  Raises :class:`PlannerError` if none exists up to
    ``max_depth``.
    """
    if max_depth < 0 or max_depth > 3:
        raise ValueError("max_depth must be between 0 and 3")
    if not (0.0 < strength_grid <= 0.5):
        raise ValueError("strength_grid must lie in (0, 0.5]")
    if angular_distance(initial, target) <= tolerance:
        return []
    r0 = tuple(to_bloch(initial).as_array())
    t = tuple(to_bloch(target).as_array())
    n_grid = int(round(1.0 / strength_grid))
    grid = np.arange(1, n_grid + 1) * (1.0 / n_grid)
    for depth in range(1, max_depth + 1):
        best = None
        for seq in _sequences(depth):
            for strengths in _solve_sequence(r0, t, seq, grid, backend, tolerance):
                steps, final = _build_steps(initial, seq, strengths)
                if angular_distance(final, target) > tolerance:
                    continue
                p = joint_probability(steps)
                if best is None or p > best[0]:
                    best = (p, steps)
        if best is not None:
            return best[1]
    raise PlannerError(f"no plan of depth <= {max_depth} reaches the target")
