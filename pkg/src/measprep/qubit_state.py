"""Pure qubit states and their Bloch-sphere geometry.

States use the half-angle phase split

    |psi> = cos(theta/2) e^{-i phi/2} |up> + sin(theta/2) e^{+i phi/2} |down>

so that the Bloch vector is (sin t cos p, sin t sin p, cos t).  Every
constructed state is normalized and its global phase is fixed (the first
non-negligible amplitude is real and non-negative), which makes equality
checks in tests stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_PHASE_EPS = 1e-12


class InvalidArgumentError(ValueError):
    """Raised when an input violates an operation's precondition."""


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def theta(self) -> float:
        return math.atan2(math.hypot(self.x, self.y), self.z)

    @property
    def phi(self) -> float:
        p = math.atan2(self.y, self.x)
        # atan2 returns [-pi, pi]; keep the half-open interval (-pi, pi]
        return math.pi if p == -math.pi else p

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def dot(self, other: BlochVector) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    @classmethod
    def from_array(cls, v) -> BlochVector:
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class PureState:
    """Normalized qubit state with canonical global phase.

    Construct through :meth:`from_amplitudes` (or :func:`from_angles`);
    the raw constructor trusts its inputs.
    """

    amp_up: complex
    amp_down: complex

    @classmethod
    def from_amplitudes(cls, up, down) -> PureState:
        up = complex(up)
        down = complex(down)
        if not all(math.isfinite(v) for v in (up.real, up.imag, down.real, down.imag)):
            raise InvalidArgumentError("state amplitudes must be finite")
        norm = math.sqrt(abs(up) ** 2 + abs(down) ** 2)
        if norm == 0.0:
            raise InvalidArgumentError("zero vector is not a state")
        up /= norm
        down /= norm
        if abs(up) > _PHASE_EPS:
            phase = up / abs(up)
        else:
            phase = down / abs(down)
        up /= phase
        down /= phase
        # kill the residual imaginary part of the reference amplitude exactly
        if abs(up) > _PHASE_EPS:
            up = complex(abs(up), 0.0)
        else:
            down = complex(abs(down), 0.0)
        return cls(up, down)

    @classmethod
    def from_vector(cls, v) -> PureState:
        return cls.from_amplitudes(v[0], v[1])

    def as_vector(self) -> np.ndarray:
        return np.array([self.amp_up, self.amp_down], dtype=np.complex128)

    def orthogonal(self) -> PureState:
        """The unique (up to phase) state orthogonal to this one."""
        return PureState.from_amplitudes(-self.amp_down.conjugate(), self.amp_up.conjugate())

    def angles(self) -> tuple[float, float]:
        b = to_bloch(self)
        return b.theta, b.phi

    def __repr__(self) -> str:
        return f"PureState({self.amp_up:.6g}, {self.amp_down:.6g})"


UP = PureState(1.0 + 0j, 0j)
DOWN = PureState(0j, 1.0 + 0j)


def from_angles(theta: float, phi: float) -> PureState:
    if math.isnan(theta) or not math.isfinite(phi):
        raise InvalidArgumentError("theta must not be NaN and phi must be finite")
    theta = min(max(float(theta), 0.0), math.pi)
    phi = math.remainder(float(phi), 2.0 * math.pi)
    half_t = theta / 2.0
    half_p = phi / 2.0
    up = math.cos(half_t) * complex(math.cos(half_p), -math.sin(half_p))
    down = math.sin(half_t) * complex(math.cos(half_p), math.sin(half_p))
    return PureState.from_amplitudes(up, down)


def from_bloch(vec) -> PureState:
    v = np.asarray(vec.as_array() if isinstance(vec, BlochVector) else vec, dtype=float)
    n = float(np.linalg.norm(v))
    if not math.isfinite(n) or n == 0.0:
        raise InvalidArgumentError("Bloch vector must be finite and nonzero")
    v = v / n
    theta = math.atan2(math.hypot(v[0], v[1]), v[2])
    phi = math.atan2(v[1], v[0])
    return from_angles(theta, phi)


def to_bloch(state: PureState) -> BlochVector:
    a, b = state.amp_up, state.amp_down
    cross = a.conjugate() * b
    return BlochVector(
        2.0 * cross.real,
        2.0 * cross.imag,
        abs(a) ** 2 - abs(b) ** 2,
    )


def inner(a: PureState, b: PureState) -> complex:
    """<a|b>."""
    return a.amp_up.conjugate() * b.amp_up + a.amp_down.conjugate() * b.amp_down


def overlap2(a: PureState, b: PureState) -> float:
    return min(max(abs(inner(a, b)) ** 2, 0.0), 1.0)


def angular_distance(a: PureState, b: PureState) -> float:
    """Great-circle angle between the Bloch vectors of ``a`` and ``b``.

    Computed as ``2 atan2(|<a_perp|b>|, |<a|b>|)``, which keeps full
    relative precision for nearly identical states where ``arccos`` of
    the Bloch dot product would lose half the digits.
    """
    along = abs(inner(a, b))
    across = abs(a.amp_up * b.amp_down - a.amp_down * b.amp_up)
    return 2.0 * math.atan2(across, along)


def random_state(rng: np.random.Generator) -> PureState:
    """Haar-random pure state (uniform on the Bloch sphere)."""
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return PureState.from_vector(v)
