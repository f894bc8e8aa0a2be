"""Measurement-only state preparation protocols.

Three policies are implemented:

* :func:`guided_sequence` - N projective measurements whose "follow"
  outcome interpolates from the initial to an orthogonal target state.
* :func:`three_axis_prepare` - adaptive spin measurements along three
  axes with tuned strengths: a phase stage that lands the state on the
  half great circle through the polar axis and the target, then a polar
  stage that lands on the target; unfavorable outcomes trigger a strong
  reset along the second axis.
* :func:`sic_walk_prepare` - repeated fixed-strength SIC-POVM until the
  tracked state is within tolerance of the target.

Each policy consumes randomness only through measurement sampling.  The
functions here are the readable reference versions that return a full
:class:`MeasurementRecord`; :func:`three_axis_automaton` and friends
compile the same decisions into tables executed by :mod:`measprep.kernels`
for large ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import measurement as meas
from .kernels import STOP_FAIL, STOP_HALT
from .measurement import MeasurementSpec, Povm
from .qubit_state import (
    BlochVector,
    InvalidArgumentError,
    PureState,
    UP,
    angular_distance,
    from_angles,
    from_bloch,
    inner,
    to_bloch,
)

DEFAULT_DELTA = 1e-6
THREE_AXIS_MAX_STEPS = 1_000
SIC_WALK_MAX_STEPS = 100_000

_ZERO_STRENGTH = 1e-12
STANDARD_AXES = (
    np.array([1.0, 0.0, 0.0]),
    np.array([0.0, 1.0, 0.0]),
    np.array([0.0, 0.0, 1.0]),
)


@dataclass(frozen=True)
class TargetSpec:
    theta_t: float
    phi_t: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not (0.0 <= self.theta_t <= math.pi):
            raise InvalidArgumentError("theta_t must lie in [0, pi]")
        if not (0.0 < self.delta <= math.pi):
            raise InvalidArgumentError("delta must lie in (0, pi]")
        if not math.isfinite(self.phi_t):
            raise InvalidArgumentError("phi_t must be finite")

    @classmethod
    def from_state(cls, state: PureState, delta: float = DEFAULT_DELTA) -> TargetSpec:
        theta, phi = state.angles()
        return cls(theta, phi, delta)

    def state(self) -> PureState:
        return from_angles(self.theta_t, self.phi_t)


@dataclass(frozen=True)
class RecordEntry:
    measurement: MeasurementSpec
    outcome_index: int
    label: object
    probability: float

    def to_dict(self) -> dict:
        return {
            "measurement": self.measurement.to_dict(),
            "outcome": self.label,
            "outcome_index": self.outcome_index,
            "probability": self.probability,
        }


@dataclass
class MeasurementRecord:
    entries: list[RecordEntry] = field(default_factory=list)

    def append(self, povm: Povm, outcome: meas.Outcome) -> None:
        self.entries.append(RecordEntry(povm.spec, outcome.index, outcome.label, outcome.probability))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def replay(self, initial: PureState) -> PureState:
        """Re-apply every recorded (measurement, outcome) pair to ``initial``."""
        state = initial
        for e in self.entries:
            state = meas.apply_outcome(e.measurement.povm(), state, e.outcome_index).post_state
        return state


@dataclass
class ProtocolResult:
    success: bool
    steps: int
    final_state: PureState
    record: MeasurementRecord
    trajectory: Optional[list[BlochVector]] = None


@dataclass(frozen=True)
class Automaton:
    """Table form of a measurement policy, executed by :func:`kernels.run_automaton`.

    Mode ``s`` applies measurement ``mode_meas[s]``; outcome ``i`` moves to
    ``mode_next[s, i]`` (``STOP_FAIL``/``STOP_HALT`` end the trajectory).
    """

    ops: np.ndarray
    n_out: np.ndarray
    mode_meas: np.ndarray
    mode_next: np.ndarray
    init_mode: int
    mode_names: tuple = ()


class _AutomatonBuilder:
    def __init__(self):
        self._povms: list[Povm] = []
        self._keys: dict = {}
        self.modes: list[tuple[str, int, dict]] = []

    def measurement(self, key, povm: Povm) -> int:
        if key not in self._keys:
            self._keys[key] = len(self._povms)
            self._povms.append(povm)
        return self._keys[key]

    def build(self, names: list[str], meas_of: dict, next_of: dict, init: str) -> Automaton:
        index = {name: i for i, name in enumerate(names)}
        index["FAIL"] = STOP_FAIL
        index["HALT"] = STOP_HALT
        k = max(len(p) for p in self._povms)
        ops = np.zeros((len(self._povms), k, 2, 2), dtype=np.complex128)
        for i, p in enumerate(self._povms):
            ops[i, : len(p)] = p.operators
        n_out = np.array([len(p) for p in self._povms], dtype=np.int64)
        mode_meas = np.array([meas_of[n] for n in names], dtype=np.int64)
        mode_next = np.full((len(names), k), STOP_FAIL, dtype=np.int64)
        for s, n in enumerate(names):
            for i, target in enumerate(next_of[n]):
                mode_next[s, i] = index[target]
        return Automaton(ops, n_out, mode_meas, mode_next, index[init], tuple(names))


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _bloch_step(r: np.ndarray, n: np.ndarray, eps: float) -> np.ndarray:
    """Bloch vector after the outcome pulling toward ``n`` of a strength-``eps`` measurement."""
    rn = float(r @ n)
    den = 1.0 + eps * rn
    return ((rn + eps) / den) * n + (r - rn * n) * (math.sqrt(max(1.0 - eps * eps, 0.0)) / den)


# ---------------------------------------------------------------------------
# guided projective sequence

def orthogonalize_target(initial: PureState, target: PureState) -> PureState:
    """Gram-Schmidt ``target`` against ``initial``; falls back to the orthogonal state."""
    v = target.as_vector() - inner(initial, target) * initial.as_vector()
    if np.linalg.norm(v) < 1e-12:
        return initial.orthogonal()
    return PureState.from_vector(v)


def guided_states(initial: PureState, target: PureState, n_steps: int) -> list[PureState]:
    if n_steps < 1:
        raise InvalidArgumentError("n_steps must be a positive integer")
    if abs(inner(initial, target)) > 1e-9:
        raise InvalidArgumentError("initial and target must be orthogonal")
    vi, vt = initial.as_vector(), target.as_vector()
    return [
        PureState.from_vector(math.cos(math.pi * i / (2 * n_steps)) * vi + math.sin(math.pi * i / (2 * n_steps)) * vt)
        for i in range(1, n_steps + 1)
    ]


def guided_success_probability(n_steps: int) -> float:
    return math.cos(math.pi / (2 * n_steps)) ** (2 * n_steps)


def _projector_onto(state: PureState) -> Povm:
    # outcome "+" projects on ``state``, "-" on its orthogonal complement
    return meas.axis_measurement(to_bloch(state), 1.0)


def guided_sequence(initial: PureState, target: PureState, n_steps: int, rng_stream,
                    record_trajectory: bool = False) -> ProtocolResult:
    waypoints = guided_states(initial, target, n_steps)
    state = initial
    record = MeasurementRecord()
    traj = [to_bloch(state)] if record_trajectory else None
    success = True
    for waypoint in waypoints:
        povm = _projector_onto(waypoint)
        out = meas.apply(povm, state, rng_stream.uniform())
        record.append(povm, out)
        state = out.post_state
        if traj is not None:
            traj.append(to_bloch(state))
        if out.index != 0:
            success = False
            break
    return ProtocolResult(success, len(record), state, record, traj)


def guided_automaton(initial: PureState, target: PureState, n_steps: int) -> Automaton:
    b = _AutomatonBuilder()
    names, meas_of, next_of = [], {}, {}
    for i, waypoint in enumerate(guided_states(initial, target, n_steps)):
        name = f"P{i + 1}"
        names.append(name)
        meas_of[name] = b.measurement(name, _projector_onto(waypoint))
        next_of[name] = (f"P{i + 2}" if i + 1 < n_steps else "HALT", "FAIL")
    return b.build(names, meas_of, next_of, "P1")


# ---------------------------------------------------------------------------
# three-axis adaptive protocol

@dataclass(frozen=True)
class TunedMove:
    """A tuned measurement along ``axis``; outcome sign ``sign`` is favorable."""

    axis: int
    sign: int
    strength: float
    landing: np.ndarray


class ThreeAxisGeometry:
    """Stage decisions of the three-axis protocol for one target.

    ``axes`` is ``(a1, a2, a3)``: a1 and a2 steer the phase stage (a2 is
    also the reset axis and the initial eigenstate is ``+a2``), a3 is the
    polar axis.  Axes need only be linearly independent.  For the standard
    ``(x, y, z)`` triple the tuned strengths come from closed forms,
    otherwise from root finding on the single-measurement Bloch update.
    """

    def __init__(self, target: PureState, axes=None):
        if axes is None:
            axes = STANDARD_AXES
        self.axes = tuple(_unit(a) for a in axes)
        if len(self.axes) != 3 or abs(float(np.linalg.det(np.stack(self.axes)))) < 1e-9:
            raise InvalidArgumentError("three linearly independent axes are required")
        self.standard = all(np.allclose(a, s, atol=0, rtol=0) for a, s in zip(self.axes, STANDARD_AXES))
        self.target_state = target
        self.t = to_bloch(target).as_array()
        a3 = self.axes[2]
        perp = self.t - (self.t @ a3) * a3
        self.polar_only = float(np.linalg.norm(perp)) < 1e-12
        if not self.polar_only:
            self.h = perp / np.linalg.norm(perp)
            self.w = _unit(np.cross(a3, self.h))

    def reset_vector(self, axis: int, sign: int) -> np.ndarray:
        return sign * self.axes[axis]

    def on_half_circle(self, r: np.ndarray) -> bool:
        return abs(float(r @ self.w)) < 1e-12 and float(r @ self.h) > 1e-12

    def phase_move(self, axis: int, sign: int) -> Optional[TunedMove]:
        """Tuned move of the other phase axis from reset state ``sign * axes[axis]``, if one exists."""
        other = 1 - axis
        s = self.reset_vector(axis, sign)
        if self.standard:
            return self._phase_move_closed(s, other)
        return self._phase_move_root(s, other)

    def _phase_move_closed(self, s: np.ndarray, other: int) -> Optional[TunedMove]:
        phi_c = math.atan2(s[1], s[0])
        phi_t = math.atan2(self.h[1], self.h[0])
        d = math.remainder(phi_t - phi_c, 2 * math.pi)
        if abs(d) > math.pi / 2 + 1e-12:
            return None
        eps = min(abs(math.sin(d)), 1.0)
        e_perp = np.array([-math.sin(phi_c), math.cos(phi_c), 0.0])
        orient = 1 if float(self.axes[other] @ e_perp) > 0 else -1
        sign = orient if d >= 0 else -orient
        return TunedMove(other, sign, eps, _bloch_step(s, sign * self.axes[other], eps))

    def _phase_move_root(self, s: np.ndarray, other: int) -> Optional[TunedMove]:
        if self.on_half_circle(s):
            return TunedMove(other, 1, 0.0, s.copy())
        a = self.axes[other]
        for sign in (1, -1):
            n = sign * a
            g0 = float(s @ self.w)
            g1 = float(n @ self.w)
            if abs(g1) < 1e-15:
                eps = 1.0
            elif g0 * g1 > 0:
                continue
            else:
                eps = brentq(lambda e: float(_bloch_step(s, n, e) @ self.w), 0.0, 1.0, xtol=1e-15)
            landing = _bloch_step(s, n, eps)
            if float(landing @ self.h) > 1e-12:
                return TunedMove(other, sign, eps, landing)
        return None

    def polar_move(self, q: np.ndarray) -> TunedMove:
        """Tuned polar-axis move from ``q`` (on the target half circle) onto the target."""
        a3 = self.axes[2]
        r = float(q @ a3)
        tz = float(self.t @ a3)
        sign = 1 if tz >= r else -1
        den = 1.0 - r * tz
        eps = 1.0 if den <= 0 else min(abs(tz - r) / den, 1.0)
        return TunedMove(2, sign, eps, _bloch_step(q, sign * a3, eps))

    def pole_sign(self) -> int:
        return 1 if float(self.t @ self.axes[2]) > 0 else -1

    def povm(self, axis: int, strength: float) -> Povm:
        return meas.axis_measurement(self.axes[axis], strength)

    @staticmethod
    def outcome_sign(outcome: meas.Outcome) -> int:
        return 1 if outcome.index == 0 else -1


def three_axis_initial(axes=None) -> PureState:
    a2 = STANDARD_AXES[1] if axes is None else _unit(axes[1])
    return from_bloch(a2)


def three_axis_prepare(target: TargetSpec, rng_stream, max_steps: int = THREE_AXIS_MAX_STEPS,
                       axes=None, record_trajectory: bool = False) -> ProtocolResult:
    """Adaptive three-axis preparation starting from the ``+a2`` eigenstate.

    One POVM application is one step, resets included.  Stops when within
    ``target.delta`` of the target or after ``max_steps`` steps.
    """
    goal = target.state()
    geo = ThreeAxisGeometry(goal, axes)
    state = three_axis_initial(axes)
    record = MeasurementRecord()
    traj = [to_bloch(state)] if record_trajectory else None
    where: tuple = ("POLE",) if geo.polar_only else ("R", 1, 1)

    def measure(axis: int, strength: float) -> int:
        nonlocal state
        povm = geo.povm(axis, strength)
        out = meas.apply(povm, state, rng_stream.uniform())
        record.append(povm, out)
        state = out.post_state
        if traj is not None:
            traj.append(to_bloch(state))
        return geo.outcome_sign(out)

    while angular_distance(state, goal) > target.delta and len(record) < max_steps:
        kind = where[0]
        if kind == "R":
            _, axis, sign = where
            move = geo.phase_move(axis, sign)
            if move is None:
                got = measure(1 - axis, 1.0)
                where = ("R", 1 - axis, got)
            elif move.strength < _ZERO_STRENGTH:
                where = ("Q", move.landing)
            elif measure(move.axis, move.strength) == move.sign:
                where = ("Q", move.landing)
            else:
                where = ("RESET",)
        elif kind == "Q":
            move = geo.polar_move(where[1])
            if move.strength < _ZERO_STRENGTH:
                break
            if measure(2, move.strength) == move.sign:
                # landed on the target up to rounding; loop condition decides
                where = ("DONE",)
            else:
                where = ("RESET",)
        elif kind == "RESET":
            where = ("POLE",) if geo.polar_only else ("R", 1, measure(1, 1.0))
        elif kind == "POLE":
            if measure(2, 1.0) != geo.pole_sign():
                where = ("POLE_RESET",)
        elif kind == "POLE_RESET":
            measure(1, 1.0)
            where = ("POLE",)
        else:
            break
    success = angular_distance(state, goal) <= target.delta
    return ProtocolResult(success, len(record), state, record, traj)


def three_axis_automaton(target: TargetSpec, axes=None) -> Automaton:
    geo = ThreeAxisGeometry(target.state(), axes)
    b = _AutomatonBuilder()
    meas_of: dict = {}
    next_of: dict = {}

    if geo.polar_only:
        names = ["POLE", "POLE_RESET"]
        meas_of["POLE"] = b.measurement(("strong", 2), geo.povm(2, 1.0))
        fav = geo.pole_sign()
        next_of["POLE"] = ("HALT", "POLE_RESET") if fav > 0 else ("POLE_RESET", "HALT")
        meas_of["POLE_RESET"] = b.measurement(("strong", 1), geo.povm(1, 1.0))
        next_of["POLE_RESET"] = ("POLE", "POLE")
        return b.build(names, meas_of, next_of, "POLE")

    resets = [(axis, sign) for axis in (1, 0) for sign in (1, -1)]
    rname = {r: f"R{'xy'[r[0]] if geo.standard else r[0] + 1}{'+' if r[1] > 0 else '-'}" for r in resets}
    names: list[str] = []
    redirect: dict = {}
    for r in resets:
        axis, sign = r
        name = rname[r]
        qname = "Q" + name[1:]
        move = geo.phase_move(axis, sign)
        if move is None:
            other = 1 - axis
            names.append(name)
            meas_of[name] = b.measurement(("strong", other), geo.povm(other, 1.0))
            next_of[name] = (rname[(other, 1)], rname[(other, -1)])
            continue
        pmove = geo.polar_move(move.landing)
        if pmove.strength < _ZERO_STRENGTH:
            after_phase = "HALT"
        else:
            after_phase = qname
            names.append(qname)
            meas_of[qname] = b.measurement(("tuned", 2, pmove.strength), geo.povm(2, pmove.strength))
            next_of[qname] = ("HALT", "RESET") if pmove.sign > 0 else ("RESET", "HALT")
        if move.strength < _ZERO_STRENGTH:
            redirect[name] = after_phase
            continue
        names.append(name)
        meas_of[name] = b.measurement(("tuned", move.axis, move.strength), geo.povm(move.axis, move.strength))
        next_of[name] = (after_phase, "RESET") if move.sign > 0 else ("RESET", after_phase)
    names.append("RESET")
    meas_of["RESET"] = b.measurement(("strong", 1), geo.povm(1, 1.0))
    next_of["RESET"] = (rname[(1, 1)], rname[(1, -1)])
    # zero-strength stages take no step: route around them
    next_of = {n: tuple(redirect.get(t, t) for t in targets) for n, targets in next_of.items()}
    init = redirect.get(rname[(1, 1)], rname[(1, 1)])
    if init == "HALT":
        # target sits on the initial state's half circle with no polar move left
        names.append("DONE")
        meas_of["DONE"] = b.measurement(("strong", 1), geo.povm(1, 1.0))
        next_of["DONE"] = ("HALT", "HALT")
        init = "DONE"
    return b.build(names, meas_of, next_of, init)


# ---------------------------------------------------------------------------
# SIC-POVM random walk

def hitting_time_estimate(delta: float) -> float:
    """Mean steps for a uniformly random state to land within ``delta``: 4 / delta^2."""
    if not (0.0 < delta <= math.pi):
        raise InvalidArgumentError("delta must lie in (0, pi]")
    return 4.0 / (delta * delta)


def _check_walk_strength(strength: float) -> float:
    if not (0.0 < strength < 1.0):
        raise InvalidArgumentError("SIC walk preparation needs 0 < epsilon < 1; epsilon = 1 only reaches four states")
    return float(strength)


def sic_walk_prepare(target: TargetSpec, strength: float, rng_stream, max_steps: int = SIC_WALK_MAX_STEPS,
                     initial: PureState = UP, record_trajectory: bool = False) -> ProtocolResult:
    eps = _check_walk_strength(strength)
    povm = meas.sic_povm(eps)
    goal = target.state()
    state = initial
    record = MeasurementRecord()
    traj = [to_bloch(state)] if record_trajectory else None
    while angular_distance(state, goal) > target.delta and len(record) < max_steps:
        out = meas.apply(povm, state, rng_stream.uniform())
        record.append(povm, out)
        state = out.post_state
        if traj is not None:
            traj.append(to_bloch(state))
    return ProtocolResult(angular_distance(state, goal) <= target.delta, len(record), state, record, traj)


def sic_automaton(strength: float) -> Automaton:
    b = _AutomatonBuilder()
    m = b.measurement("sic", meas.sic_povm(strength))
    return b.build(["SIC"], {"SIC": m}, {"SIC": ("SIC",) * 4}, "SIC")
