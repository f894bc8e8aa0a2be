"""Seeded Monte Carlo ensembles, histograms and Bloch-sphere statistics.

Trajectory ``k`` of an ensemble draws from the counter-based stream keyed
by ``(master_seed, k)``, and ensembles are cut into fixed-size chunks
before being handed to worker threads, so results do not depend on the
thread count or on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import chi2_contingency

from . import kernels
from . import measurement as meas
from . import protocols as proto
from .qubit_state import UP, InvalidArgumentError, PureState, from_angles
from .rng import draw_uniform, stream_key, stream_keys

CHUNK = 4096
GRID_PHI = 8
GRID_V = 4
CLUSTER_RADIUS = 0.15
CLUSTER_CAPTURE = 0.95
DEFAULT_BURN_IN = 1000

HISTOGRAM_SCHEMA = "measprep.histogram/1"
SAMPLES_SCHEMA = "measprep.samples/1"
TABLE_SCHEMA = "measprep.guided/1"


@dataclass(frozen=True)
class EnsembleConfig:
    """What to simulate.

    ``protocol`` is ``"three_axis"``, ``"sic_walk"`` or ``"guided"``;
    ``params`` holds its parameters (angles in radians):

    * three_axis: ``theta_t``, ``phi_t``, optional ``delta``, ``axes``
    * sic_walk: ``epsilon``, ``theta_t``, ``phi_t``, ``delta``, optional
      ``initial`` as ``(theta, phi)``
    * guided: ``n_steps``, optional ``initial`` and ``target`` as
      ``(theta, phi)`` (the target is Gram-Schmidt orthogonalized)
    """

    protocol: str
    params: dict
    trajectories: int = 1
    master_seed: int = 0
    max_steps: int | None = None
    sample_every: int = 1
    burn_in: int = 0

    def __post_init__(self):
        if self.trajectories < 1:
            raise InvalidArgumentError("trajectories must be >= 1")
        if self.sample_every < 1:
            raise InvalidArgumentError("sample_every must be >= 1")
        if self.burn_in < 0:
            raise InvalidArgumentError("burn_in must be >= 0")
        if self.protocol not in ("three_axis", "sic_walk", "guided"):
            raise InvalidArgumentError(f"unknown protocol {self.protocol!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Histogram:
    steps: np.ndarray
    counts: np.ndarray
    total_runs: int
    successes: int
    mean_steps: float

    @classmethod
    def from_runs(cls, steps: np.ndarray, success: np.ndarray) -> Histogram:
        ok = np.asarray(steps)[np.asarray(success, dtype=bool)]
        top = int(ok.max()) if ok.size else 0
        counts = np.bincount(ok, minlength=top + 1).astype(np.int64)
        mean = float(ok.mean()) if ok.size else float("nan")
        return cls(np.arange(top + 1), counts, int(len(steps)), int(ok.size), mean)

    @property
    def success_rate(self) -> float:
        return self.successes / self.total_runs

    def probabilities(self) -> np.ndarray:
        return self.counts / self.total_runs

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.counts) / self.total_runs

    def prob_below(self, n: int) -> float:
        """Fraction of all runs that succeeded in fewer than ``n`` steps."""
        return float(self.counts[: max(n, 0)].sum()) / self.total_runs

    def prob_below_stderr(self, n: int) -> float:
        p = self.prob_below(n)
        return math.sqrt(p * (1 - p) / self.total_runs)

    def mean_stderr(self) -> float:
        if self.successes < 2:
            return float("nan")
        var = float((self.counts * (self.steps - self.mean_steps) ** 2).sum()) / (self.successes - 1)
        return math.sqrt(var / self.successes)

    def rows(self) -> list[dict]:
        prob = self.probabilities()
        cum = self.cumulative()
        return [
            {"steps": int(s), "count": int(c), "probability": float(p), "cumulative_probability": float(q)}
            for s, c, p, q in zip(self.steps, self.counts, prob, cum)
        ]

    def summary(self) -> dict:
        return {
            "total_runs": self.total_runs,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "mean_steps": self.mean_steps,
            "mean_steps_stderr": self.mean_stderr(),
            "p_below_20": self.prob_below(20),
            "p_below_20_stderr": self.prob_below_stderr(20),
        }


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    histogram: Histogram
    steps: np.ndarray
    success: np.ndarray
    final_states: np.ndarray


@dataclass(frozen=True)
class SphereSample:
    step: int
    theta: float
    phi: float
    u: float
    v: float


def _angles_param(value, default: PureState) -> PureState:
    if value is None:
        return default
    if isinstance(value, PureState):
        return value
    theta, phi = value
    return from_angles(theta, phi)


def build_protocol(config: EnsembleConfig):
    """Resolve a config into (automaton, initial state, target state, delta, max_steps)."""
    p = config.params
    if config.protocol == "three_axis":
        target = proto.TargetSpec(p["theta_t"], p["phi_t"], p.get("delta", proto.DEFAULT_DELTA))
        axes = p.get("axes")
        auto = proto.three_axis_automaton(target, axes)
        return (auto, proto.three_axis_initial(axes), target.state(), target.delta,
                config.max_steps or proto.THREE_AXIS_MAX_STEPS)
    if config.protocol == "sic_walk":
        eps = proto._check_walk_strength(p["epsilon"])
        target = proto.TargetSpec(p["theta_t"], p["phi_t"], p["delta"])
        initial = _angles_param(p.get("initial"), UP)
        return (proto.sic_automaton(eps), initial, target.state(), target.delta,
                config.max_steps or proto.SIC_WALK_MAX_STEPS)
    n = int(p["n_steps"])
    initial = _angles_param(p.get("initial"), UP)
    target = proto.orthogonalize_target(initial, _angles_param(p.get("target"), initial.orthogonal()))
    return proto.guided_automaton(initial, target, n), initial, target, proto.DEFAULT_DELTA, n


def default_threads() -> int:
    return os.cpu_count() or 1


def run_ensemble(config: EnsembleConfig, threads: int | None = None, backend: str | None = None) -> EnsembleResult:
    auto, initial, target, delta, max_steps = build_protocol(config)
    n = config.trajectories
    keys = stream_keys(config.master_seed, n)
    steps = np.zeros(n, dtype=np.int64)
    success = np.zeros(n, dtype=bool)
    final = np.zeros((n, 2), dtype=np.complex128)
    psi0 = initial.as_vector()
    tgt = target.as_vector()

    def work(start: int) -> None:
        stop = min(start + CHUNK, n)
        s, ok, f = kernels.run_automaton(auto, psi0, tgt, delta, keys[start:stop], max_steps, backend=backend)
        steps[start:stop] = s
        success[start:stop] = ok
        final[start:stop] = f

    starts = range(0, n, CHUNK)
    threads = threads or default_threads()
    if threads <= 1 or n <= CHUNK:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return EnsembleResult(config, Histogram.from_runs(steps, success), steps, success, final)


def guided_table(n_values, trajectories: int, seed: int, threads: int | None = None,
                 backend: str | None = None, initial=None, target=None) -> list[dict]:
    """Monte Carlo vs closed-form success probability of the guided sequence for each N."""
    rows = []
    for n in n_values:
        params = {"n_steps": int(n), "initial": initial, "target": target}
        # one independent seed family per N keeps rows reproducible one by one
        res = run_ensemble(EnsembleConfig("guided", params, trajectories, stream_key(seed, int(n))),
                           threads=threads, backend=backend)
        exact = proto.guided_success_probability(int(n))
        mc = res.histogram.success_rate
        sigma = math.sqrt(max(exact * (1 - exact), 1e-300) / trajectories)
        rows.append({
            "n": int(n),
            "analytic": exact,
            "monte_carlo": mc,
            "stderr": math.sqrt(mc * (1 - mc) / trajectories),
            "z_score": (mc - exact) / sigma if exact * (1 - exact) > 0 else (0.0 if mc == exact else math.inf),
        })
    return rows


def random_states(seed: int, n: int) -> list[PureState]:
    """``n`` uniformly distributed pure states from the counter streams of ``seed``."""
    out = []
    for i in range(n):
        key = stream_key(seed, i)
        z = 2.0 * draw_uniform(key, 0) - 1.0
        phi = 2.0 * math.pi * draw_uniform(key, 1) - math.pi
        out.append(from_angles(math.acos(z), phi))
    return out


@dataclass
class HittingSurvey:
    strength: float
    delta: float
    histogram: Histogram
    targets: list[PureState]
    target_means: np.ndarray

    @property
    def estimate(self) -> float:
        return proto.hitting_time_estimate(self.delta)

    @property
    def ratio(self) -> float:
        return self.histogram.mean_steps / self.estimate


def hitting_time_survey(strength: float, delta: float, trajectories: int, seed: int, n_targets: int = 100,
                        initial: PureState = UP, targets: list[PureState] | None = None,
                        max_steps: int | None = None, threads: int | None = None,
                        backend: str | None = None) -> HittingSurvey:
    """SIC-walk hitting times toward ``n_targets`` uniformly random targets (or the given ones).

    ``trajectories`` are split evenly over the targets; target ``j`` uses
    master seed ``stream_key(seed, j)``.
    """
    if targets is None:
        targets = random_states(stream_key(seed, 1 << 32), n_targets)
    per = max(trajectories // len(targets), 1)
    steps, success, means = [], [], []
    for j, tgt in enumerate(targets):
        theta, phi = tgt.angles()
        cfg = EnsembleConfig("sic_walk", {"epsilon": strength, "theta_t": theta, "phi_t": phi, "delta": delta,
                                          "initial": initial}, per, stream_key(seed, j), max_steps)
        res = run_ensemble(cfg, threads=threads, backend=backend)
        steps.append(res.steps)
        success.append(res.success)
        means.append(res.histogram.mean_steps)
    hist = Histogram.from_runs(np.concatenate(steps), np.concatenate(success))
    return HittingSurvey(strength, delta, hist, list(targets), np.array(means))


# ---------------------------------------------------------------------------
# steady-state sampling and sphere statistics

def project_equal_area(theta, phi):
    """Lambert cylindrical equal-area map: ``(u, v) = (phi, cos theta)``."""
    phi = np.asarray(phi, dtype=float)
    u = np.where(phi <= -np.pi, phi + 2 * np.pi, phi)
    v = np.clip(np.cos(np.asarray(theta, dtype=float)), -1.0, 1.0)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def states_to_angles(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = states[:, 0], states[:, 1]
    cross = np.conj(a) * b
    x, y = 2 * cross.real, 2 * cross.imag
    z = np.abs(a) ** 2 - np.abs(b) ** 2
    theta = np.arctan2(np.hypot(x, y), z)
    phi = np.arctan2(y, x)
    phi = np.where(phi <= -np.pi, np.pi, phi)
    return theta, phi


def grid_counts(theta, phi, n_phi: int = GRID_PHI, n_v: int = GRID_V) -> np.ndarray:
    """Occupancy of an ``n_phi x n_v`` equal-area grid on (phi, cos theta)."""
    u, v = project_equal_area(np.asarray(theta), np.asarray(phi))
    iu = np.clip(((np.asarray(u) + np.pi) / (2 * np.pi) * n_phi).astype(int), 0, n_phi - 1)
    iv = np.clip(((np.asarray(v) + 1.0) / 2.0 * n_v).astype(int), 0, n_v - 1)
    counts = np.zeros((n_phi, n_v), dtype=np.int64)
    np.add.at(counts, (iu, iv), 1)
    return counts


@dataclass
class WalkSamples:
    strength: float
    states: np.ndarray
    steps: np.ndarray
    outcomes: np.ndarray

    @property
    def theta_phi(self) -> tuple[np.ndarray, np.ndarray]:
        return states_to_angles(self.states)

    def sphere_samples(self) -> list[SphereSample]:
        theta, phi = self.theta_phi
        u, v = project_equal_area(theta, phi)
        return [SphereSample(int(s), float(t), float(p), float(a), float(b))
                for s, t, p, a, b in zip(self.steps, theta, phi, u, v)]

    def rows(self) -> list[dict]:
        return [asdict(s) for s in self.sphere_samples()]


def run_sic_walk(strength: float, total_steps: int, sample_every: int, seed: int,
                 burn_in: int = DEFAULT_BURN_IN, initial: PureState = UP, chain: int = 0,
                 backend: str | None = None) -> WalkSamples:
    if not (0.0 < strength <= 1.0):
        raise InvalidArgumentError("epsilon must lie in (0, 1]")
    if sample_every < 1 or total_steps < sample_every:
        raise InvalidArgumentError("need total_steps >= sample_every >= 1")
    if burn_in < 0:
        raise InvalidArgumentError("burn_in must be >= 0")
    ops = meas.sic_povm(strength).operators
    states, outcomes = kernels.run_walk(ops, initial.as_vector(), stream_key(seed, chain), burn_in,
                                        total_steps, sample_every, backend=backend)
    steps = np.arange(1, states.shape[0] + 1) * sample_every
    return WalkSamples(strength, states, steps, outcomes)


def steady_state_samples(strength: float, total_steps: int, sample_every: int, seed: int,
                         burn_in: int = DEFAULT_BURN_IN, initial: PureState = UP,
                         backend: str | None = None) -> list[SphereSample]:
    """States of one long SIC walk, every ``sample_every`` steps after ``burn_in`` steps."""
    return run_sic_walk(strength, total_steps, sample_every, seed, burn_in, initial, backend=backend).sphere_samples()


def sic_cluster_centers(strength: float) -> list[PureState]:
    """The sixteen states ``M_i |psi_j>`` (normalized) for all outcome pairs i, j."""
    povm = meas.sic_povm(strength)
    return [meas.apply_outcome(povm, psi, i).post_state for i in range(4) for psi in meas.SIC_STATES]


def cluster_capture_fraction(states: np.ndarray, centers: list[PureState], radius: float = CLUSTER_RADIUS) -> float:
    c = np.stack([s.as_vector() for s in centers])
    along = np.abs(states.conj() @ c.T)
    across = np.abs(states[:, None, 0] * c[None, :, 1] - states[:, None, 1] * c[None, :, 0])
    dist = 2 * np.arctan2(across, along)
    return float((dist.min(axis=1) <= radius).mean())


@dataclass
class IndependenceResult:
    statistic: float
    dof: int
    p_value: float
    counts_a: np.ndarray
    counts_b: np.ndarray

    def consistent(self, alpha: float = 0.0027) -> bool:
        """Same distribution at the 3-sigma level."""
        return self.p_value > alpha


def chi2_two_sample(counts_a: np.ndarray, counts_b: np.ndarray) -> IndependenceResult:
    a = np.asarray(counts_a).ravel()
    b = np.asarray(counts_b).ravel()
    keep = (a + b) > 0
    if np.array_equal(a, b) or keep.sum() < 2:
        return IndependenceResult(0.0, max(int(keep.sum()) - 1, 0), 1.0, counts_a, counts_b)
    stat, p, dof, _ = chi2_contingency(np.stack([a[keep], b[keep]]), correction=False)
    return IndependenceResult(float(stat), int(dof), float(p), counts_a, counts_b)


def pooled_walk_counts(strength: float, seed: int, initial: PureState, chains: int, samples_per_chain: int,
                       sample_every: int, burn_in: int, backend: str | None = None) -> np.ndarray:
    counts = np.zeros((GRID_PHI, GRID_V), dtype=np.int64)
    for c in range(chains):
        w = run_sic_walk(strength, samples_per_chain * sample_every, sample_every, seed, burn_in, initial,
                         chain=c, backend=backend)
        counts += grid_counts(*w.theta_phi)
    return counts


def initial_state_independence_check(strength: float, seed_a: int, seed_b: int | None = None,
                                     initial_a: PureState = UP, initial_b: PureState = meas.SIC_STATES[1],
                                     chains: int = 4, samples_per_chain: int = 500, sample_every: int = 250,
                                     burn_in: int = DEFAULT_BURN_IN, backend: str | None = None) -> IndependenceResult:
    """Chi-square comparison of equal-area grid occupancy for walks from two initial states."""
    if chains * samples_per_chain < 1000 or burn_in < 1000:
        raise InvalidArgumentError("need >= 1000 samples per run and burn_in >= 1000")
    seed_b = seed_a if seed_b is None else seed_b
    a = pooled_walk_counts(strength, seed_a, initial_a, chains, samples_per_chain, sample_every, burn_in, backend)
    b = pooled_walk_counts(strength, seed_b, initial_b, chains, samples_per_chain, sample_every, burn_in, backend)
    return chi2_two_sample(a, b)


# ---------------------------------------------------------------------------
# file output

def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, PureState):
        return [[o.amp_up.real, o.amp_up.imag], [o.amp_down.real, o.amp_down.imag]]
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def render_csv(schema: str, metadata: dict, rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    buf.write(f"# {schema}\n")
    buf.write(f"# metadata: {json.dumps(metadata, sort_keys=True, default=_json_default)}\n")
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def render(schema: str, metadata: dict, rows: list[dict], fields: list[str], fmt: str) -> str:
    if fmt == "csv":
        return render_csv(schema, metadata, rows, fields)
    if fmt == "json":
        return dumps({"schema": schema, "metadata": metadata, "fields": fields, "rows": rows})
    raise InvalidArgumentError(f"unknown format {fmt!r}")


HISTOGRAM_FIELDS = ["steps", "count", "probability", "cumulative_probability"]
SAMPLE_FIELDS = ["step", "theta", "phi", "u", "v"]
GUIDED_FIELDS = ["n", "analytic", "monte_carlo", "stderr", "z_score"]
PLAN_FIELDS = ["pair", "depth", "step", "strength", "required_outcome", "success_probability", "joint_probability",
               "final_distance"]
