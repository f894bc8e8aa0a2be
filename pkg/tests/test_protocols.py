import math

import numpy as np
import pytest

from measprep import measurement as meas
from measprep import protocols as proto
from measprep.qubit_state import (
    UP,
    InvalidArgumentError,
    angular_distance,
    from_angles,
    from_bloch,
    overlap2,
    to_bloch,
)
from measprep.rng import RandomStream


class FixedDraws:
    """Stream that replays a fixed list of uniforms."""

    def __init__(self, draws):
        self.draws = list(draws)

    def uniform(self):
        return self.draws.pop(0)


# target spec and guided sequence

def test_target_spec_validation():
    with pytest.raises(InvalidArgumentError):
        proto.TargetSpec(-0.1, 0.0)
    with pytest.raises(InvalidArgumentError):
        proto.TargetSpec(1.0, 0.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        proto.TargetSpec(1.0, float("nan"))
    t = proto.TargetSpec.from_state(from_angles(0.4, -2.0), 0.1)
    assert (t.theta_t, t.phi_t, t.delta) == pytest.approx((0.4, -2.0, 0.1))


def test_guided_single_step_never_succeeds():
    assert proto.guided_success_probability(1) == pytest.approx(0.0, abs=1e-30)
    for seed in range(20):
        res = proto.guided_sequence(UP, UP.orthogonal(), 1, RandomStream.from_seed(seed))
        assert not res.success and res.steps == 1


def test_guided_closed_form_values():
    assert proto.guided_success_probability(10) == pytest.approx(math.cos(math.pi / 20) ** 20)
    assert proto.guided_success_probability(10) == pytest.approx(0.780546, abs=1e-6)
    probs = [proto.guided_success_probability(n) for n in (1, 2, 5, 10, 100, 10_000)]
    assert probs == sorted(probs) and probs[-1] > 0.9997


def test_guided_rejects_non_orthogonal_endpoints():
    with pytest.raises(InvalidArgumentError):
        proto.guided_sequence(UP, from_angles(1.0, 0.0), 5, RandomStream(1))


def test_guided_waypoints_interpolate():
    target = from_angles(math.pi / 2, 0.3)
    initial = from_angles(math.pi / 2, 0.3 + math.pi)
    pts = proto.guided_states(initial, target, 4)
    assert overlap2(pts[-1], target) == pytest.approx(1.0)
    for i, p in enumerate(pts, start=1):
        assert angular_distance(initial, p) == pytest.approx(math.pi * i / 4, abs=1e-12)


def test_guided_success_follows_every_waypoint():
    target = UP.orthogonal()
    for seed in range(200):
        res = proto.guided_sequence(UP, target, 8, RandomStream.from_seed(seed, 3), record_trajectory=True)
        if res.success:
            assert res.steps == 8
            assert overlap2(res.final_state, target) == pytest.approx(1.0, abs=1e-12)
        assert len(res.trajectory) == res.steps + 1


def test_orthogonalize_target():
    a, b = from_angles(0.3, 0.1), from_angles(1.7, 2.0)
    c = proto.orthogonalize_target(a, b)
    assert overlap2(a, c) < 1e-24
    assert overlap2(proto.orthogonalize_target(a, a), a) < 1e-24


# three-axis protocol

def test_three_axis_target_equals_initial():
    res = proto.three_axis_prepare(proto.TargetSpec(math.pi / 2, math.pi / 2, 0.5), RandomStream(3))
    assert res.success and res.steps == 0 and len(res.record) == 0


def test_phase_move_oracle_from_plus_y():
    # x-measurement of strength e from +y, favorable outcome: x' = e, y' = sqrt(1 - e^2)
    for phi_t in (0.2, math.pi / 4, 1.3, math.pi / 2 + 0.9):
        geo = proto.ThreeAxisGeometry(from_angles(math.pi / 4, phi_t))
        move = geo.phase_move(1, 1)
        eps = abs(math.cos(phi_t))
        assert move.strength == pytest.approx(eps, abs=1e-15)
        out = meas.apply_outcome(geo.povm(0, eps), from_angles(math.pi / 2, math.pi / 2), 0 if move.sign > 0 else 1)
        r = to_bloch(out.post_state)
        assert abs(r.x) == pytest.approx(eps, abs=1e-12)
        assert r.y == pytest.approx(math.sqrt(1 - eps * eps), abs=1e-12)
        assert math.remainder(r.phi - phi_t, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)
        assert out.probability == pytest.approx(0.5, abs=1e-12)


def test_phase_move_unreachable_from_plus_y():
    # more than a quarter turn of azimuth away from +y
    assert proto.ThreeAxisGeometry(from_angles(1.0, -0.4)).phase_move(1, 1) is None


def test_favorable_branch_is_exact():
    rng = np.random.default_rng(5)
    for _ in range(200):
        theta_t = rng.uniform(0.05, math.pi - 0.05)
        phi_t = rng.uniform(-math.pi, math.pi)
        geo = proto.ThreeAxisGeometry(from_angles(theta_t, phi_t))
        move = geo.phase_move(1, 1)
        if move is None:
            # unreachable from +y: strong x first, then a tuned y move from the x reset
            sign = 1 if math.cos(phi_t) > 0 else -1
            move = geo.phase_move(0, sign)
            start = from_bloch([sign, 0, 0])
        else:
            start = from_bloch([0, 1, 0])
        out = meas.apply_outcome(geo.povm(move.axis, move.strength), start, 0 if move.sign > 0 else 1)
        assert out.probability == pytest.approx(0.5, abs=1e-12)
        _, phi = out.post_state.angles()
        assert abs(math.remainder(phi - phi_t, 2 * math.pi)) < 1e-9
        polar = geo.polar_move(to_bloch(out.post_state).as_array())
        done = meas.apply_outcome(geo.povm(2, polar.strength), out.post_state, 0 if polar.sign > 0 else 1)
        assert abs(done.post_state.angles()[0] - theta_t) < 1e-9
        assert done.probability == pytest.approx(0.5, abs=1e-12)


def test_polar_move_closed_form():
    geo = proto.ThreeAxisGeometry(from_angles(math.pi / 4, math.pi / 4))
    move = geo.polar_move(to_bloch(from_angles(math.pi / 2, math.pi / 4)).as_array())
    assert move.strength == pytest.approx(math.cos(math.pi / 4), abs=1e-15)
    assert move.sign == 1


def test_favorable_branch_frequency():
    geo = proto.ThreeAxisGeometry(from_angles(math.pi / 4, math.pi / 4))
    move = geo.phase_move(1, 1)
    povm = geo.povm(move.axis, move.strength)
    start = from_angles(math.pi / 2, math.pi / 2)
    stream = RandomStream.from_seed(21)
    n = 100_000
    fav = sum((meas.apply(povm, start, stream.uniform()).index == 0) == (move.sign > 0) for _ in range(n))
    assert abs(fav / n - 0.5) < 4 * math.sqrt(0.25 / n)


def test_three_axis_success_lands_on_target():
    target = proto.TargetSpec(math.pi / 4, math.pi / 4)
    goal = target.state()
    for seed in range(100):
        res = proto.three_axis_prepare(target, RandomStream.from_seed(seed))
        assert res.success
        assert angular_distance(res.final_state, goal) <= target.delta
        assert res.steps == len(res.record)
        assert angular_distance(res.record.replay(proto.three_axis_initial()), res.final_state) < 1e-12


def test_three_axis_reaches_any_target():
    rng = np.random.default_rng(6)
    for k in range(200):
        target = proto.TargetSpec(rng.uniform(0, math.pi), rng.uniform(-math.pi, math.pi))
        res = proto.three_axis_prepare(target, RandomStream.from_seed(7, k))
        assert res.success, (target, res.steps)


@pytest.mark.parametrize("theta", [0.0, math.pi])
def test_three_axis_pole_targets(theta):
    target = proto.TargetSpec(theta, 0.7)
    for seed in range(30):
        res = proto.three_axis_prepare(target, RandomStream.from_seed(seed))
        assert res.success
        assert all(e.measurement.strength == 1.0 for e in res.record)


def test_three_axis_equatorial_target_at_minus_y():
    # target -y: no x-move reaches it from +y, so the protocol goes around through x
    target = proto.TargetSpec(math.pi / 2, -math.pi / 2)
    res = proto.three_axis_prepare(target, RandomStream.from_seed(8))
    assert res.success and res.steps >= 2


def test_three_axis_max_steps():
    res = proto.three_axis_prepare(proto.TargetSpec(math.pi / 4, math.pi / 4), FixedDraws([1 - 1e-12] * 50),
                                   max_steps=3)
    assert res.steps <= 3


def skewed_axes():
    a1 = np.array([1.0, 0.2, 0.1])
    a2 = np.array([-0.1, 1.0, 0.3])
    a3 = np.array([0.2, -0.3, 1.0])
    return tuple(a / np.linalg.norm(a) for a in (a1, a2, a3))


def test_root_finding_matches_closed_form_on_standard_axes():
    rng = np.random.default_rng(9)
    for _ in range(100):
        geo = proto.ThreeAxisGeometry(from_angles(rng.uniform(0.1, 3.0), rng.uniform(-math.pi, math.pi)))
        for axis, sign in ((1, 1), (1, -1), (0, 1), (0, -1)):
            closed = geo._phase_move_closed(geo.reset_vector(axis, sign), 1 - axis)
            root = geo._phase_move_root(geo.reset_vector(axis, sign), 1 - axis)
            assert (closed is None) == (root is None)
            if closed is not None and closed.strength > 1e-9:
                assert root.strength == pytest.approx(closed.strength, abs=1e-9)
                assert root.sign == closed.sign
                assert root.landing == pytest.approx(closed.landing, abs=1e-9)


def test_non_orthogonal_axes():
    axes = skewed_axes()
    rng = np.random.default_rng(10)
    for k in range(60):
        target = proto.TargetSpec(rng.uniform(0.05, 3.1), rng.uniform(-math.pi, math.pi))
        res = proto.three_axis_prepare(target, RandomStream.from_seed(11, k), axes=axes)
        assert res.success
        assert angular_distance(res.record.replay(proto.three_axis_initial(axes)), res.final_state) < 1e-12


def test_dependent_axes_are_rejected():
    with pytest.raises(InvalidArgumentError):
        proto.ThreeAxisGeometry(UP, axes=([1, 0, 0], [0, 1, 0], [1, 1, 0]))


def test_three_axis_record_entries():
    res = proto.three_axis_prepare(proto.TargetSpec(1.0, 2.0), RandomStream.from_seed(12), record_trajectory=True)
    assert len(res.trajectory) == res.steps + 1
    for e in res.record:
        d = e.to_dict()
        assert d["measurement"]["kind"] == "axis"
        assert 0 < d["probability"] <= 1
        assert d["outcome"] in ("+", "-")


# SIC walk

def test_hitting_time_estimate_values():
    assert proto.hitting_time_estimate(2.0) == 1.0
    assert proto.hitting_time_estimate(0.3) == pytest.approx(44.444444444, abs=1e-8)
    assert proto.hitting_time_estimate(0.1) == pytest.approx(400.0)
    with pytest.raises(InvalidArgumentError):
        proto.hitting_time_estimate(0.0)


def test_sic_walk_rejects_projective_strength():
    with pytest.raises(InvalidArgumentError):
        proto.sic_walk_prepare(proto.TargetSpec(1.0, 1.0, 0.3), 1.0, RandomStream(1))
    with pytest.raises(InvalidArgumentError):
        proto.sic_walk_prepare(proto.TargetSpec(1.0, 1.0, 0.3), 0.0, RandomStream(1))


def test_sic_walk_target_equals_initial():
    res = proto.sic_walk_prepare(proto.TargetSpec(0.0, 0.0, 0.01), 0.5, RandomStream(1))
    assert res.success and res.steps == 0


def test_sic_walk_replay_is_bit_exact():
    target = proto.TargetSpec(2.2, -0.7, 0.3)
    for seed in range(10):
        res = proto.sic_walk_prepare(target, 0.5, RandomStream.from_seed(seed))
        assert res.success
        replayed = res.record.replay(UP)
        assert replayed == res.final_state
        assert angular_distance(res.final_state, target.state()) <= target.delta


def test_sic_walk_other_initial_state():
    res = proto.sic_walk_prepare(proto.TargetSpec(0.0, 0.0, 0.3), 0.5, RandomStream.from_seed(2),
                                 initial=meas.SIC_STATES[2])
    assert res.success
    assert res.record.replay(meas.SIC_STATES[2]) == res.final_state
