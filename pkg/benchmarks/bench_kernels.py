"""Compare the numba and numpy kernels on the hot paths.

Run ``python benchmarks/bench_kernels.py``.  Each kernel is timed after
one warm-up call (which also triggers numba compilation), and the
outputs of the two backends are checked for equality.
"""

import argparse
import math
import time

import numpy as np

from measprep import kernels
from measprep import measurement as meas
from measprep import protocols as proto
from measprep.planner import SIC_AXES
from measprep.qubit_state import UP, from_angles, to_bloch
from measprep.rng import stream_key, stream_keys


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def cases(scale: float):
    target = proto.TargetSpec(math.pi / 4, math.pi / 4)
    three = proto.three_axis_automaton(target)
    keys = stream_keys(1, int(100_000 * scale))
    yield ("three-axis ensemble", f"{keys.size} trajectories",
           lambda b: kernels.run_automaton(three, proto.three_axis_initial().as_vector(), target.state().as_vector(),
                                           target.delta, keys, 1000, backend=b))

    walk_target = proto.TargetSpec(2.0, 1.0, 0.3)
    sic = proto.sic_automaton(0.5)
    wkeys = stream_keys(2, int(10_000 * scale))
    yield ("SIC hitting times", f"{wkeys.size} trajectories",
           lambda b: kernels.run_automaton(sic, UP.as_vector(), walk_target.state().as_vector(), walk_target.delta,
                                           wkeys, 100_000, backend=b))

    ops = meas.sic_povm(0.99).operators
    n_steps = int(100_000 * scale)
    yield ("SIC steady-state walk", f"{n_steps} steps",
           lambda b: kernels.run_walk(ops, UP.as_vector(), stream_key(3, 0), 1000, n_steps, 250, backend=b))

    r0 = to_bloch(from_angles(0.4, 1.0)).as_array()
    t = to_bloch(from_angles(2.5, -2.0)).as_array()
    grid = np.arange(1, 1001) * 1e-3
    yield ("planner grid (depth 3)", "1000 x 1000",
           lambda b: kernels.plan_grid(r0, [SIC_AXES[0], SIC_AXES[2], SIC_AXES[3]], t, grid, backend=b))


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b) or np.allclose(a, b, rtol=0, atol=1e-12)


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes by this factor")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<24} {'size':<20} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}  match")
    for name, size, run in cases(args.scale):
        t_nb, r_nb = best_of(lambda: run("numba"), args.repeat)
        t_np, r_np = best_of(lambda: run("numpy"), args.repeat)
        print(f"{name:<24} {size:<20} {t_nb:>10.4f} {t_np:>10.4f} {t_np / t_nb:>7.1f}x  {same(r_nb, r_np)}")


if __name__ == "__main__":
    main()
