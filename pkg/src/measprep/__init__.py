"""Qubit state preparation driven only by measurement back-action."""

from .measurement import (
    Outcome,
    Povm,
    apply,
    axis_measurement,
    compose,
    enumerate_outcomes,
    fidelity_from_repetitions,
    repetitions_for_fidelity,
    sic_povm,
)
from .planner import PlanStep, PlannerError, plan_sic_sequence
from .protocols import (
    ProtocolResult,
    TargetSpec,
    guided_sequence,
    hitting_time_estimate,
    sic_walk_prepare,
    three_axis_prepare,
)
from .qubit_state import BlochVector, InvalidArgumentError, PureState, angular_distance, from_angles, overlap2, to_bloch
from .rng import RandomStream

__version__ = "0.1.0"

__all__ = [
    "BlochVector",
    "InvalidArgumentError",
    "Outcome",
    "PlanStep",
    "PlannerError",
    "Povm",
    "ProtocolResult",
    "PureState",
    "RandomStream",
    "TargetSpec",
    "angular_distance",
    "apply",
    "axis_measurement",
    "compose",
    "enumerate_outcomes",
    "fidelity_from_repetitions",
    "from_angles",
    "guided_sequence",
    "hitting_time_estimate",
    "overlap2",
    "plan_sic_sequence",
    "repetitions_for_fidelity",
    "sic_povm",
    "sic_walk_prepare",
    "three_axis_prepare",
    "to_bloch",
]
