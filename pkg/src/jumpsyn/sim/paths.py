"""Exact-event sampling of mode and observation paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import check_generator


@dataclass(frozen=True, eq=False)
class JumpPath:
    """Right-continuous piecewise-constant path on ``[0, horizon]``.

    ``times[e]`` is the instant the path enters ``states[e]``. States are
    zero-based.
    """

    init: int
    times: np.ndarray
    states: np.ndarray
    horizon: float
    n_states: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=np.int64)
        if t.shape != s.shape or t.ndim != 1:
            raise ValueError("times and states must be 1-D arrays of equal length")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > self.horizon):
            raise ValueError("event times must increase strictly within [0, horizon]")
        full = np.concatenate([[self.init], s])
        if np.any((full < 0) | (full >= self.n_states)):
            raise ValueError("state out of range")
        if np.any(full[1:] == full[:-1]):
            raise ValueError("consecutive states must differ")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def n_events(self) -> int:
        return self.times.size

    def state_at(self, t):
        t = np.asarray(t, dtype=float)
        full = np.concatenate([[self.init], self.states])
        return full[np.searchsorted(self.times, t, side="right")]

    def segments(self):
        """``(start, end, state)`` triples covering ``[0, horizon]``."""
        starts = np.concatenate([[0.0], self.times])
        ends = np.concatenate([self.times, [self.horizon]])
        states = np.concatenate([[self.init], self.states])
        return starts, ends, states

    def occupation_times(self, t0: float = 0.0, t1: float | None = None) -> np.ndarray:
        """Time spent in each state within ``[t0, t1]``."""
        t1 = self.horizon if t1 is None else t1
        starts, ends, states = self.segments()
        lengths = np.clip(np.minimum(ends, t1) - np.maximum(starts, t0), 0.0, None)
        return np.bincount(states, weights=lengths, minlength=self.n_states)

    def holding_times(self) -> tuple[np.ndarray, np.ndarray]:
        """Completed sojourns as ``(state, duration)`` arrays (the censored last one is dropped)."""
        starts, ends, states = self.segments()
        return states[:-1], (ends - starts)[:-1]


def _jump_tables(Q):
    Q = check_generator(Q)
    rates = -np.diag(Q).copy()
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum = np.cumsum(off, axis=1) / rates[:, None]
    return rates, cum


def sample_ctmc_path(Q, init: int, horizon: float, rng: np.random.Generator) -> JumpPath:
    """Exact-event (Gillespie) sample of the chain with generator ``Q``.

    Holding time in ``i`` is Exponential(``-Q[i, i]``); the next state is
    ``j`` with probability ``Q[i, j] / -Q[i, i]``. States with zero
    outflow are absorbing. Draws are sequential, so extending ``horizon``
    with the same generator state extends the same path.
    """
    rates, cum = _jump_tables(Q)
    n = rates.size
    if not 0 <= init < n:
        raise ValueError(f"initial state {init} outside 0..{n - 1}")
    times, states = [], []
    t, s = 0.0, int(init)
    while rates[s] > 0:
        t += rng.exponential(1.0 / rates[s])
        if t > horizon:
            break
        # scaling by the row total absorbs round-off; zero-width intervals are skipped
        nxt = int(np.searchsorted(cum[s], rng.random() * cum[s, -1], side="right"))
        times.append(t)
        states.append(nxt)
        s = nxt
    return JumpPath(int(init), np.array(times), np.array(states, dtype=np.int64), float(horizon), n)


def sample_observation_path(r_path: JumpPath, G, robs0: int, rng: np.random.Generator) -> JumpPath:
    """Observed-mode path driven by the true-mode path.

    Whenever the true mode moves to ``j`` (or, at ``t = 0``, differs from
    the observation) while the observation reads ``jo != j``, a lag
    ``h ~ Exponential(G[jo, j])`` is drawn; the observation jumps to ``j``
    at ``t + h`` unless the true mode switches first, in which case the
    pending observation is discarded and a fresh lag is drawn for the new
    mode.
    """
    G = np.asarray(G, dtype=float)
    starts, ends, states = r_path.segments()
    times, obs = [], []
    cur = int(robs0)
    for a, b, j in zip(starts, ends, states):
        j = int(j)
        if j == cur:
            continue
        t = a + rng.exponential(1.0 / G[cur, j])
        if t < b:
            times.append(t)
            obs.append(j)
            cur = j
    return JumpPath(int(robs0), np.array(times), np.array(obs, dtype=np.int64), r_path.horizon,
                    r_path.n_states)


def sample_joint_path_augmented(kappa, s0: int, horizon: float, rng: np.random.Generator) -> JumpPath:
    """Sample the joint (true, observed) chain directly on its N^2 states."""
    return sample_ctmc_path(kappa, s0, horizon, rng)


def _collapse(init, times, states, horizon, n) -> JumpPath:
    keep = np.concatenate([[init], states])
    change = keep[1:] != keep[:-1]
    return JumpPath(int(init), times[change], states[change], horizon, n)


def decode_augmented(path: JumpPath, N: int) -> tuple[JumpPath, JumpPath]:
    """Split an augmented path into true-mode and observed-mode paths."""
    r_init, o_init = divmod(path.init, N)
    r_states, o_states = np.divmod(path.states, N)
    return (_collapse(r_init, path.times, r_states, path.horizon, N),
            _collapse(o_init, path.times, o_states, path.horizon, N))


def joint_path(r_path: JumpPath, robs_path: JumpPath) -> JumpPath:
    """Augmented path ``k = r * N + robs`` from the two component paths."""
    N = r_path.n_states
    times = np.union1d(r_path.times, robs_path.times)
    states = r_path.state_at(times) * N + robs_path.state_at(times)
    return _collapse(int(r_path.init * N + robs_path.init), times, states, r_path.horizon, N * N)


def rng_streams(seed: int, run: int, count: int = 2) -> list[np.random.Generator]:
    """Independent generators for one Monte Carlo run.

    Derived from ``SeedSequence(seed, spawn_key=(run,))`` so any run can
    be regenerated alone, in any order, on any worker.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(run,))
    return [np.random.default_rng(child) for child in ss.spawn(count)]
