"""Hot loops: trajectory automata, long SIC walks and the planner grid.

Each kernel exists twice.  The numba version is a scalar loop compiled
with ``@njit(nogil=True)`` so the harness can run chunks on a thread pool.
The numpy version advances all live trajectories in lockstep (or, for the
single-chain walk, loops over pre-drawn uniforms).  Both consume the same
counter-based draws in the same order and use the same floating-point
expression order, so they produce the same trajectories.

Backend selection: ``MEASPREP_DISABLE_NUMBA=1`` forces numpy; numba is
also skipped when it cannot be imported.  Every public entry point takes
an explicit ``backend=`` override.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .rng import GAMMA, MUL1, MUL2, TO_UNIT, draw_uniform_array

PROB_FLOOR = 1e-15

# automaton stop codes stored in ``mode_next``
STOP_FAIL = -1
STOP_HALT = -2

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("MEASPREP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend


def tan_half(delta: float) -> float:
    """Acceptance threshold: within ``delta`` iff ``|across| <= tan(delta/2) |along|``."""
    return math.inf if delta >= math.pi else math.tan(delta / 2.0)


# ---------------------------------------------------------------------------
# numba kernels

if HAVE_NUMBA:
    _G = np.uint64(GAMMA)
    _M1 = np.uint64(MUL1)
    _M2 = np.uint64(MUL2)

    @njit(cache=True, nogil=True)
    def _uniform_nb(key, counter):
        z = key + (np.uint64(counter) + np.uint64(1)) * _G
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
        return np.float64(z >> np.uint64(11)) * TO_UNIT

    @njit(cache=True, nogil=True)
    def _within_nb(a0, a1, t0, t1, thd):
        if thd == np.inf:
            return True
        along = abs(t0.conjugate() * a0 + t1.conjugate() * a1)
        across = abs(t0 * a1 - t1 * a0)
        return across <= thd * along

    @njit(cache=True, nogil=True)
    def _measure_nb(ops, m, nout, a0, a1, u):
        """Sample one outcome of measurement ``m``; returns (index, new a0, new a1)."""
        cum = 0.0
        last = -1
        l0 = a0
        l1 = a1
        lp = 1.0
        for i in range(nout):
            i0 = ops[m, i, 0, 0] * a0 + ops[m, i, 0, 1] * a1
            i1 = ops[m, i, 1, 0] * a0 + ops[m, i, 1, 1] * a1
            p = (i0.real * i0.real + i0.imag * i0.imag) + (i1.real * i1.real + i1.imag * i1.imag)
            if p < PROB_FLOOR:
                continue
            cum += p
            last = i
            l0 = i0
            l1 = i1
            lp = p
            if u < cum:
                break
        # scale by the reciprocal: complex/real division differs between numba and numpy
        inv = 1.0 / math.sqrt(lp)
        return last, complex(l0.real * inv, l0.imag * inv), complex(l1.real * inv, l1.imag * inv)

    @njit(cache=True, nogil=True)
    def _automaton_nb(ops, n_out, mode_meas, mode_next, init_mode, psi0, target, thd, keys, max_steps,
                      steps_out, success_out, final_out):
        t0 = target[0]
        t1 = target[1]
        for k in range(keys.shape[0]):
            key = keys[k]
            a0 = psi0[0]
            a1 = psi0[1]
            mode = init_mode
            steps = 0
            ok = _within_nb(a0, a1, t0, t1, thd)
            while not ok and steps < max_steps and mode >= 0:
                m = mode_meas[mode]
                u = _uniform_nb(key, steps)
                i, a0, a1 = _measure_nb(ops, m, n_out[m], a0, a1, u)
                if i < 0:
                    mode = STOP_FAIL
                    break
                steps += 1
                mode = mode_next[mode, i]
                ok = _within_nb(a0, a1, t0, t1, thd)
            steps_out[k] = steps
            success_out[k] = ok
            final_out[k, 0] = a0
            final_out[k, 1] = a1

    @njit(cache=True, nogil=True)
    def _walk_nb(ops, nout, psi0, key, burn_in, total_steps, sample_every, samples_out, outcomes_out):
        a0 = psi0[0]
        a1 = psi0[1]
        j = 0
        for step in range(burn_in + total_steps):
            u = _uniform_nb(key, step)
            i, a0, a1 = _measure_nb(ops, 0, nout, a0, a1, u)
            outcomes_out[step] = i
            done = step + 1 - burn_in
            if done > 0 and done % sample_every == 0:
                samples_out[j, 0] = a0
                samples_out[j, 1] = a1
                j += 1

    @njit(cache=True, nogil=True)
    def _bloch_step_nb(r, n, eps, out):
        rn = r[0] * n[0] + r[1] * n[1] + r[2] * n[2]
        den = 1.0 + eps * rn
        along = (rn + eps) / den
        shrink = math.sqrt(max(1.0 - eps * eps, 0.0)) / den
        for c in range(3):
            out[c] = along * n[c] + (r[c] - rn * n[c]) * shrink

    @njit(cache=True, nogil=True)
    def _last_step_nb(s, n, t):
        """Best final move of ``s`` toward ``n`` to approach ``t``: (chord^2, strength)."""
        c = s[0] * n[0] + s[1] * n[1] + s[2] * n[2]
        u0 = n[0] - c * s[0]
        u1 = n[1] - c * s[1]
        u2 = n[2] - c * s[2]
        un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        if un < 1e-14:
            d0 = s[0] - t[0]
            d1 = s[1] - t[1]
            d2 = s[2] - t[2]
            return d0 * d0 + d1 * d1 + d2 * d2, 0.0
        u0 /= un
        u1 /= un
        u2 /= un
        total = math.atan2(un, c)
        alpha = math.atan2(t[0] * u0 + t[1] * u1 + t[2] * u2, t[0] * s[0] + t[1] * s[1] + t[2] * s[2])
        alpha = min(max(alpha, 0.0), total)
        ca = math.cos(alpha)
        sa = math.sin(alpha)
        d0 = ca * s[0] + sa * u0 - t[0]
        d1 = ca * s[1] + sa * u1 - t[1]
        d2 = ca * s[2] + sa * u2 - t[2]
        cp = math.cos(total - alpha)
        den = 1.0 - cp * c
        eps = 1.0 if den <= 0.0 else min(max((cp - c) / den, 0.0), 1.0)
        return d0 * d0 + d1 * d1 + d2 * d2, eps

    @njit(cache=True, nogil=True)
    def _grid2_nb(r0, n1, n2, t, grid, out):
        r1 = np.empty(3)
        for a in range(grid.shape[0]):
            _bloch_step_nb(r0, n1, grid[a], r1)
            out[a] = _last_step_nb(r1, n2, t)[0]

    @njit(cache=True, nogil=True)
    def _grid3_nb(r0, n1, n2, n3, t, grid, out):
        r1 = np.empty(3)
        r2 = np.empty(3)
        for a in range(grid.shape[0]):
            _bloch_step_nb(r0, n1, grid[a], r1)
            for b in range(grid.shape[0]):
                _bloch_step_nb(r1, n2, grid[b], r2)
                out[a, b] = _last_step_nb(r2, n3, t)[0]


# ---------------------------------------------------------------------------
# numpy kernels

def _within_np(a0, a1, t0, t1, thd):
    if thd == math.inf:
        return np.ones(np.shape(a0), dtype=bool)
    along = np.abs(np.conj(t0) * a0 + np.conj(t1) * a1)
    across = np.abs(t0 * a1 - t1 * a0)
    return across <= thd * along


def _measure_np(ops_sel, nout_sel, a0, a1, u):
    """Vectorized counterpart of ``_measure_nb`` over rows of ``ops_sel`` (n, K, 2, 2)."""
    i0 = ops_sel[:, :, 0, 0] * a0[:, None] + ops_sel[:, :, 0, 1] * a1[:, None]
    i1 = ops_sel[:, :, 1, 0] * a0[:, None] + ops_sel[:, :, 1, 1] * a1[:, None]
    p = (i0.real * i0.real + i0.imag * i0.imag) + (i1.real * i1.real + i1.imag * i1.imag)
    k_idx = np.arange(p.shape[1])
    valid = (p >= PROB_FLOOR) & (k_idx[None, :] < nout_sel[:, None])
    p = np.where(valid, p, 0.0)
    cum = np.cumsum(p, axis=1)
    hit = valid & (u[:, None] < cum)
    any_hit = hit.any(axis=1)
    last_valid = np.where(valid.any(axis=1), p.shape[1] - 1 - np.argmax(valid[:, ::-1], axis=1), -1)
    choice = np.where(any_hit, np.argmax(hit, axis=1), last_valid)
    rows = np.arange(p.shape[0])
    safe = np.maximum(choice, 0)
    inv = 1.0 / np.sqrt(np.where(choice >= 0, p[rows, safe], 1.0))
    return choice, _scale(i0[rows, safe], inv), _scale(i1[rows, safe], inv)


def _scale(z, inv):
    out = np.empty_like(z)
    out.real = z.real * inv
    out.imag = z.imag * inv
    return out


def _automaton_np(ops, n_out, mode_meas, mode_next, init_mode, psi0, target, thd, keys, max_steps,
                  steps_out, success_out, final_out):
    n = keys.shape[0]
    t0, t1 = target[0], target[1]
    a0 = np.full(n, psi0[0], dtype=np.complex128)
    a1 = np.full(n, psi0[1], dtype=np.complex128)
    mode = np.full(n, init_mode, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    ok = _within_np(a0, a1, t0, t1, thd)
    live = np.flatnonzero(~ok & (steps < max_steps) & (mode >= 0))
    while live.size:
        m = mode_meas[mode[live]]
        u = draw_uniform_array(keys[live], steps[live])
        choice, b0, b1 = _measure_np(ops[m], n_out[m], a0[live], a1[live], u)
        dead = choice < 0
        moved = ~dead
        idx = live[moved]
        a0[idx] = b0[moved]
        a1[idx] = b1[moved]
        steps[idx] += 1
        mode[idx] = mode_next[mode[idx], choice[moved]]
        mode[live[dead]] = STOP_FAIL
        ok[idx] = _within_np(a0[idx], a1[idx], t0, t1, thd)
        still = ~ok[live] & (steps[live] < max_steps) & (mode[live] >= 0)
        live = live[still]
    steps_out[:] = steps
    success_out[:] = ok
    final_out[:, 0] = a0
    final_out[:, 1] = a1


def _walk_np(ops, nout, psi0, key, burn_in, total_steps, sample_every, samples_out, outcomes_out):
    n_total = burn_in + total_steps
    draws = draw_uniform_array(np.full(n_total, key, dtype=np.uint64), np.arange(n_total))
    m = [[(complex(ops[0, i, r, 0]), complex(ops[0, i, r, 1])) for r in range(2)] for i in range(nout)]
    a0 = complex(psi0[0])
    a1 = complex(psi0[1])
    j = 0
    for step in range(n_total):
        u = float(draws[step])
        cum = 0.0
        last = -1
        l0 = l1 = 0j
        lp = 1.0
        for i in range(nout):
            (m00, m01), (m10, m11) = m[i]
            i0 = m00 * a0 + m01 * a1
            i1 = m10 * a0 + m11 * a1
            p = (i0.real * i0.real + i0.imag * i0.imag) + (i1.real * i1.real + i1.imag * i1.imag)
            if p < PROB_FLOOR:
                continue
            cum += p
            last, l0, l1, lp = i, i0, i1, p
            if u < cum:
                break
        inv = 1.0 / math.sqrt(lp)
        a0, a1 = complex(l0.real * inv, l0.imag * inv), complex(l1.real * inv, l1.imag * inv)
        outcomes_out[step] = last
        done = step + 1 - burn_in
        if done > 0 and done % sample_every == 0:
            samples_out[j, 0] = a0
            samples_out[j, 1] = a1
            j += 1


def bloch_step_np(r, n, eps):
    """Outcome-toward-``n`` update of Bloch vectors; broadcasts over leading axes of ``r`` and ``eps``."""
    r = np.asarray(r, dtype=float)
    eps = np.asarray(eps, dtype=float)[..., None]
    rn = (r * n).sum(axis=-1, keepdims=True)
    den = 1.0 + eps * rn
    along = (rn + eps) / den
    shrink = np.sqrt(np.maximum(1.0 - eps * eps, 0.0)) / den
    return along * n + (r - rn * n) * shrink


def last_step_np(s, n, t):
    """Vectorized ``_last_step_nb``: returns (chord^2, strength) arrays."""
    s = np.asarray(s, dtype=float)
    c = (s * n).sum(axis=-1)
    u = n - c[..., None] * s
    un = np.linalg.norm(u, axis=-1)
    degenerate = un < 1e-14
    u = u / np.where(degenerate, 1.0, un)[..., None]
    total = np.arctan2(un, c)
    alpha = np.arctan2((t * u).sum(axis=-1), (t * s).sum(axis=-1))
    alpha = np.minimum(np.maximum(alpha, 0.0), total)
    alpha = np.where(degenerate, 0.0, alpha)
    p = np.cos(alpha)[..., None] * s + np.sin(alpha)[..., None] * u
    d = p - t
    chord2 = (d * d).sum(axis=-1)
    cp = np.cos(total - alpha)
    den = 1.0 - cp * c
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(den <= 0.0, 1.0, np.clip((cp - c) / den, 0.0, 1.0))
    eps = np.where(degenerate, 0.0, eps)
    return chord2, eps


# ---------------------------------------------------------------------------
# public entry points

def run_automaton(automaton, psi0, target, delta, keys, max_steps, backend=None):
    """Run one trajectory per key through a measurement automaton.

    ``automaton`` provides ``ops`` (M, K, 2, 2), ``n_out`` (M,),
    ``mode_meas`` (S,), ``mode_next`` (S, K) and ``init_mode``; a
    trajectory stops when it is within ``delta`` of ``target``, when
    ``max_steps`` is hit, or when it enters a negative mode.
    Returns ``(steps, success, final_states)``.
    """
    backend = resolve_backend(backend)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    n = keys.shape[0]
    steps = np.zeros(n, dtype=np.int64)
    success = np.zeros(n, dtype=np.bool_)
    final = np.zeros((n, 2), dtype=np.complex128)
    fn = _automaton_nb if backend == "numba" else _automaton_np
    fn(automaton.ops, automaton.n_out, automaton.mode_meas, automaton.mode_next, np.int64(automaton.init_mode),
       np.asarray(psi0, dtype=np.complex128), np.asarray(target, dtype=np.complex128),
       float(tan_half(delta)), keys, np.int64(max_steps), steps, success, final)
    return steps, success, final


def run_walk(ops, psi0, key, burn_in, total_steps, sample_every, backend=None):
    """Single trajectory of repeated applications of one POVM ``ops`` (K, 2, 2).

    Returns the sampled states (every ``sample_every`` steps after the
    burn-in) and the full outcome-index record.
    """
    backend = resolve_backend(backend)
    ops = np.ascontiguousarray(np.asarray(ops, dtype=np.complex128)[None])
    n_samples = total_steps // sample_every
    samples = np.zeros((n_samples, 2), dtype=np.complex128)
    outcomes = np.zeros(burn_in + total_steps, dtype=np.int64)
    fn = _walk_nb if backend == "numba" else _walk_np
    fn(ops, np.int64(ops.shape[1]), np.asarray(psi0, dtype=np.complex128), np.uint64(key),
       np.int64(burn_in), np.int64(total_steps), np.int64(sample_every), samples, outcomes)
    return samples, outcomes


def plan_grid(r0, axes, target, grid, backend=None):
    """Squared chord distance to ``target`` after moves toward ``axes``.

    All moves but the last sweep ``grid``; the last move uses its optimal
    strength in closed form.  ``len(axes)`` must be 2 (returns shape
    ``(G,)``) or 3 (returns ``(G, G)``).
    """
    backend = resolve_backend(backend)
    r0 = np.asarray(r0, dtype=float)
    target = np.asarray(target, dtype=float)
    grid = np.ascontiguousarray(grid, dtype=float)
    axes = [np.asarray(a, dtype=float) for a in axes]
    g = grid.shape[0]
    if len(axes) == 2:
        if backend == "numba":
            out = np.empty(g)
            _grid2_nb(r0, axes[0], axes[1], target, grid, out)
            return out
        r1 = bloch_step_np(np.broadcast_to(r0, (g, 3)), axes[0], grid)
        return last_step_np(r1, axes[1], target)[0]
    if len(axes) == 3:
        if backend == "numba":
            out = np.empty((g, g))
            _grid3_nb(r0, axes[0], axes[1], axes[2], target, grid, out)
            return out
        r1 = bloch_step_np(np.broadcast_to(r0, (g, 3)), axes[0], grid)
        r2 = bloch_step_np(r1[:, None, :], axes[1], grid[None, :])
        return last_step_np(r2, axes[2], target)[0]
    raise ValueError("plan_grid handles two or three moves")
