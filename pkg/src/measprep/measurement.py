"""Generalized measurements on a single qubit.

A :class:`Povm` holds an ordered stack of 2x2 Kraus operators.  Primitive
measurements (axis measurements and the tetrahedral SIC-POVM) are built in
minimally disturbing form, ``M_i = sqrt(E_i)``, so a Kraus operator is a
positive matrix diagonal in the eigenbasis of its POVM element.  Sampling
is inverse-CDF over the Born probabilities in operator order, driven by a
single uniform draw, which keeps trajectories reproducible for a given
random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf, erfinv

from .qubit_state import BlochVector, InvalidArgumentError, PureState

PROB_FLOOR = 1e-15
COMPLETENESS_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)

X_AXIS = BlochVector(1.0, 0.0, 0.0)
Y_AXIS = BlochVector(0.0, 1.0, 0.0)
Z_AXIS = BlochVector(0.0, 0.0, 1.0)

# tetrahedral states |psi_1..4>, outcome labels 1..4
SIC_STATES = (
    PureState(1.0 + 0j, 0j),
    PureState(complex(math.sqrt(1 / 3)), complex(math.sqrt(2 / 3))),
    PureState(complex(math.sqrt(1 / 3)), math.sqrt(2 / 3) * complex(math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3))),
    PureState(complex(math.sqrt(1 / 3)), math.sqrt(2 / 3) * complex(math.cos(2 * math.pi / 3), -math.sin(2 * math.pi / 3))),
)
SIC_LABELS = (1, 2, 3, 4)


class MeasurementError(RuntimeError):
    """Internal inconsistency during sampling (e.g. every outcome impossible)."""


class UnreachableFidelityError(ValueError):
    pass


def _check_strength(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not (0.0 <= epsilon <= 1.0):
        raise InvalidArgumentError(f"measurement strength must lie in [0, 1], got {epsilon}")
    return epsilon


@dataclass(frozen=True)
class MeasurementSpec:
    """Serializable description of a primitive measurement.

    ``kind`` is ``"axis"`` (two outcomes ``+``/``-`` along ``axis``) or
    ``"sic"`` (four tetrahedral outcomes ``1..4``).
    """

    kind: str
    strength: float
    axis: tuple[float, float, float] | None = None

    def povm(self) -> Povm:
        if self.kind == "axis":
            return axis_measurement(BlochVector(*self.axis), self.strength)
        if self.kind == "sic":
            return sic_povm(self.strength)
        raise InvalidArgumentError(f"unknown measurement kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "strength": self.strength}
        if self.axis is not None:
            d["axis"] = list(self.axis)
        return d


@dataclass(frozen=True)
class Povm:
    operators: np.ndarray
    labels: tuple
    spec: MeasurementSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=np.complex128)
        if ops.ndim != 3 or ops.shape[1:] != (2, 2) or ops.shape[0] < 2:
            raise InvalidArgumentError("a POVM needs at least two 2x2 Kraus operators")
        if len(self.labels) != ops.shape[0]:
            raise InvalidArgumentError("one label per Kraus operator required")
        ops.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", tuple(self.labels))
        err = completeness_error(self)
        if err > COMPLETENESS_TOL:
            raise InvalidArgumentError(f"Kraus operators are not complete (error {err:.3g})")

    def __len__(self) -> int:
        return self.operators.shape[0]

    def elements(self) -> np.ndarray:
        """POVM elements ``M_i^dagger M_i``."""
        return np.einsum("kji,kjl->kil", self.operators.conj(), self.operators)


@dataclass(frozen=True)
class Outcome:
    index: int
    label: object
    probability: float
    post_state: PureState


def completeness_error(povm: Povm) -> float:
    total = povm.elements().sum(axis=0)
    return float(np.linalg.norm(total - IDENTITY, ord=2))


def _unit_axis(axis) -> np.ndarray:
    v = np.asarray(axis.as_array() if isinstance(axis, BlochVector) else axis, dtype=float)
    if v.shape != (3,) or abs(float(np.linalg.norm(v)) - 1.0) > 1e-9:
        raise InvalidArgumentError("measurement axis must be a unit 3-vector")
    return v


def axis_projectors(axis) -> tuple[np.ndarray, np.ndarray]:
    n = _unit_axis(axis)
    n_sigma = n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z
    return (IDENTITY + n_sigma) / 2, (IDENTITY - n_sigma) / 2


def axis_measurement(axis, strength: float) -> Povm:
    """Two-outcome measurement of the spin along ``axis`` with strength ``strength``.

    Outcome ``+`` applies ``sqrt((1+e)/2) P_+ + sqrt((1-e)/2) P_-`` where
    ``P_+-`` project on the axis eigenstates; ``-`` swaps the weights.
    """
    eps = _check_strength(strength)
    n = _unit_axis(axis)
    p_plus, p_minus = axis_projectors(n)
    hi = math.sqrt((1 + eps) / 2)
    lo = math.sqrt((1 - eps) / 2)
    ops = np.stack([hi * p_plus + lo * p_minus, lo * p_plus + hi * p_minus])
    return Povm(ops, ("+", "-"), MeasurementSpec("axis", eps, tuple(float(c) for c in n)))


def sic_povm(strength: float) -> Povm:
    eps = _check_strength(strength)
    hi = math.sqrt(1 + eps) / 2
    lo = math.sqrt(1 - eps) / 2
    ops = []
    for psi in SIC_STATES:
        v = psi.as_vector()
        proj = np.outer(v, v.conj())
        ops.append(hi * proj + lo * (IDENTITY - proj))
    return Povm(np.stack(ops), SIC_LABELS, MeasurementSpec("sic", eps))


def trivial_povm() -> Povm:
    """Two-outcome measurement that never disturbs the state (strength 0 along z)."""
    return axis_measurement(Z_AXIS, 0.0)


def born_probabilities(povm: Povm, state: PureState) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized post-states ``M_i|psi>`` and their probabilities."""
    images = povm.operators @ state.as_vector()
    probs = np.einsum("ki,ki->k", images.conj(), images).real
    return images, probs


def _post_state(op: np.ndarray, image: np.ndarray, prob: float) -> PureState:
    if prob >= PROB_FLOOR:
        return PureState.from_vector(image / math.sqrt(prob))
    # impossible outcome: report the direction the operator maps into
    u, _, _ = np.linalg.svd(op)
    return PureState.from_vector(u[:, 0])


def apply_outcome(povm: Povm, state: PureState, index: int) -> Outcome:
    """Apply the Kraus operator ``index`` regardless of its probability."""
    images, probs = born_probabilities(povm, state)
    p = float(probs[index])
    return Outcome(index, povm.labels[index], p, _post_state(povm.operators[index], images[index], p))


def select_outcome(probs: Sequence[float], draw: float) -> int:
    """Inverse CDF in operator order; outcomes below ``PROB_FLOOR`` are never chosen."""
    cum = 0.0
    last = -1
    for i, p in enumerate(probs):
        if p < PROB_FLOOR:
            continue
        last = i
        cum += p
        if draw < cum:
            return i
    if last < 0:
        raise MeasurementError("no outcome has nonzero probability")
    return last


def apply(povm: Povm, state: PureState, random_draw: float) -> Outcome:
    images, probs = born_probabilities(povm, state)
    i = select_outcome(probs, random_draw)
    p = float(probs[i])
    return Outcome(i, povm.labels[i], p, PureState.from_vector(images[i] / math.sqrt(p)))


def enumerate_outcomes(povm: Povm, state: PureState) -> list[Outcome]:
    images, probs = born_probabilities(povm, state)
    return [
        Outcome(i, povm.labels[i], float(probs[i]), _post_state(povm.operators[i], images[i], float(probs[i])))
        for i in range(len(povm))
    ]


def compose(a: Povm, b: Povm) -> Povm:
    """Measurement ``a`` followed by ``b``; outcome ``(i, j)`` has operator ``M^b_j M^a_i``."""
    ops = np.einsum("jkl,ilm->ijkm", b.operators, a.operators).reshape(-1, 2, 2)
    labels = tuple((la, lb) for la in a.labels for lb in b.labels)
    return Povm(ops, labels)


def fidelity_from_repetitions(strength: float, n: int) -> float:
    """Discrimination fidelity of ``n`` repeated measurements of strength ``strength``.

    Uses ``erf(e * sqrt(n pi) / 2)``, floored at ``e`` itself: a single
    measurement of strength ``e`` already has fidelity ``e`` and repetition
    never hurts.  The floor only matters for strong measurements at small
    ``n`` (for instance it makes a projective measurement perfect).
    """
    eps = _check_strength(strength)
    if n < 0:
        raise InvalidArgumentError("number of repetitions must be non-negative")
    if n == 0:
        return 0.0
    f = float(erf(eps * math.sqrt(n * math.pi) / 2))
    return min(max(f, eps, 0.0), 1.0)


def fidelity_exponential_approx(strength: float, n: int) -> float:
    """Rough ``1 - exp(-n e)`` estimate; documentation helper, not used internally."""
    return 1.0 - math.exp(-n * _check_strength(strength))


def repetitions_for_fidelity(strength: float, target_f: float) -> int:
    """Smallest ``n >= 1`` with ``fidelity_from_repetitions(strength, n) >= target_f``."""
    eps = _check_strength(strength)
    if eps == 0.0:
        raise InvalidArgumentError("strength must be positive")
    if not (0.0 <= target_f <= 1.0):
        raise InvalidArgumentError("target fidelity must lie in [0, 1]")
    if eps >= target_f:
        return 1
    if target_f >= 1.0:
        raise UnreachableFidelityError("fidelity 1 needs a projective measurement")
    # closed-form inverse, then correct for rounding with the forward map
    n = max(1, math.ceil((2.0 * float(erfinv(target_f)) / eps) ** 2 / math.pi))
    while n > 1 and fidelity_from_repetitions(eps, n - 1) >= target_f:
        n -= 1
    while fidelity_from_repetitions(eps, n) < target_f:
        n += 1
    return n
