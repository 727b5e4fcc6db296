"""Monte Carlo estimates of the performance functionals, the stability
diagnostic, and chain statistics used as test oracles."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import RangeError, Reducible
from .model import Scenario, check_generator
from .sim.integrator import Trajectory, integrate_closed_loop
from .sim.paths import JumpPath, rng_streams, sample_ctmc_path, sample_observation_path
from .sim.signals import DisturbanceSignal, make_delay_signal, make_disturbance

log = logging.getLogger(__name__)

TAIL_WINDOW = 0.1


@dataclass
class RunningMoments:
    """``(count, sum, sum of squares)``; merging is associative."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, v: float) -> "RunningMoments":
        self.count += 1
        self.total += v
        self.total_sq += v * v
        return self

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        return RunningMoments(self.count + other.count, self.total + other.total,
                              self.total_sq + other.total_sq)

    @classmethod
    def of(cls, values) -> "RunningMoments":
        out = cls()
        for v in values:
            out.add(float(v))
        return out

    @property
    def mean(self) -> float:
        return self.total / self.count

    @property
    def se(self) -> float:
        if self.count < 2:
            return 0.0
        var = (self.total_sq - self.count * self.mean ** 2) / (self.count - 1)
        return float(np.sqrt(max(var, 0.0) / self.count))


@dataclass
class McEstimate:
    mean: float
    se: float
    runs: int
    horizon: float
    tail_fraction: float = 0.0
    note: str = ""

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("an estimate needs at least one run")
        if self.se < 0:
            raise ValueError("standard error must be non-negative")

    def within(self, bound: float, k: float = 2.0) -> bool:
        """``mean <= bound + k * se``."""
        return self.mean <= bound + k * self.se

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "se": self.se, "runs": self.runs, "horizon": self.horizon,
                "tail_fraction": self.tail_fraction, "note": self.note}


def _estimate(values: Sequence[float], tails: Sequence[float], horizon: float, note: str = "") -> McEstimate:
    mom = RunningMoments.of(values)
    total = float(np.sum(np.abs(values)))
    tail = float(np.sum(np.abs(tails))) / total if total > 0 else 0.0
    return McEstimate(mom.mean, mom.se, mom.count, horizon, tail, note)


# ---------------------------------------------------------------------------
# running simulations


def simulate_run(scenario: Scenario, gains, run: int, *, seed: int | None = None,
                 horizon: float | None = None, dt: float | None = None,
                 disturbance: DisturbanceSignal | None = None, delay_signal=None) -> Trajectory:
    """Simulate run ``run`` of the scenario's Monte Carlo experiment.

    The mode and observation paths come from their own child streams of
    ``SeedSequence(seed, spawn_key=(run,))``; they do not depend on the
    gains, the disturbance or ``dt``, and a longer horizon extends the
    same paths.
    """
    sim = scenario.sim
    seed = sim.seed if seed is None else seed
    horizon = sim.horizon if horizon is None else horizon
    dt = sim.dt if dt is None else dt
    if disturbance is None:
        disturbance = make_disturbance(sim.disturbance, scenario.model.q)
    if delay_signal is None:
        desc = dict(sim.delay_signal)
        delay_signal = make_delay_signal(scenario.delay, desc.pop("kind"), **desc)
    rng_r, rng_o = rng_streams(seed, run)
    r_path = sample_ctmc_path(scenario.model.Pi, sim.r0, horizon, rng_r)
    o_path = sample_observation_path(r_path, scenario.obs.G, sim.robs0, rng_o)
    return integrate_closed_loop(scenario.model, gains, r_path, o_path, delay_signal, disturbance,
                                 scenario.perf.phi, dt)


def run_monte_carlo(scenario: Scenario, gains, reducer: Callable[[Trajectory], Any], *,
                    runs: int | None = None, workers: int = 1, **kwargs) -> list[Any]:
    """Apply ``reducer`` to each run's trajectory; results in run order.

    Runs are independent (own streams and buffers), so ``workers > 1``
    dispatches them to a thread pool; the integrator kernel releases
    the GIL. The result does not depend on ``workers``.
    """
    runs = scenario.sim.runs if runs is None else runs
    if runs < 1:
        raise RangeError(f"runs must be >= 1, got {runs}")

    def one(k):
        return reducer(simulate_run(scenario, gains, k, **kwargs))

    if workers <= 1:
        return [one(k) for k in range(runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(runs)))


def _split_tail(tr: Trajectory, per_step: np.ndarray, horizon: float) -> tuple[float, float]:
    tail = tr.t[:-1] >= (1.0 - TAIL_WINDOW) * horizon
    return float(per_step.sum()), float(per_step[tail].sum())


def estimate_h2(scenario: Scenario, gains, runs: int | None = None, *, seed: int | None = None,
                workers: int = 1, **kwargs) -> McEstimate:
    """Mean of ``int_0^T z^T z dt`` with the disturbance forced to zero.

    ``tail_fraction`` is the share of the total collected in the last 10%
    of the window, a gauge of how much the truncation at ``T`` misses.
    """
    m = scenario.model
    horizon = kwargs.get("horizon") or scenario.sim.horizon

    def reducer(tr):
        return _split_tail(tr, tr.step_quadrature(m.C), horizon)

    out = run_monte_carlo(scenario, gains, reducer, runs=runs, workers=workers, seed=seed,
                          disturbance=DisturbanceSignal.zero(m.q), **kwargs)
    vals, tails = zip(*out)
    return _estimate(vals, tails, horizon, "w = 0; truncated at the horizon")


def estimate_hinf_functional(scenario: Scenario, gains, disturbance: DisturbanceSignal | None = None,
                             runs: int | None = None, *, seed: int | None = None, workers: int = 1,
                             **kwargs) -> McEstimate:
    """Mean of ``int_0^T (y^T y - gamma^2 w^T w) dt`` for one given disturbance.

    This evaluates the functional for that ``w`` only; it is not the
    supremum over all disturbances.
    """
    m = scenario.model
    gamma = scenario.perf.gamma
    horizon = kwargs.get("horizon") or scenario.sim.horizon
    if disturbance is None:
        disturbance = make_disturbance(scenario.sim.disturbance, m.q)

    def reducer(tr):
        per_step = tr.step_quadrature(m.J, m.Phi) - gamma ** 2 * tr.step_quadrature(
            np.zeros((m.N, m.q, m.n)), np.broadcast_to(np.eye(m.q), (m.N, m.q, m.q)))
        return _split_tail(tr, per_step, horizon)

    out = run_monte_carlo(scenario, gains, reducer, runs=runs, workers=workers, seed=seed,
                          disturbance=disturbance, **kwargs)
    vals, tails = zip(*out)
    return _estimate(vals, tails, horizon, f"disturbance {disturbance.kind}; truncated at the horizon")


@dataclass
class StabilityReport:
    horizons: list[float]
    estimates: list[McEstimate]
    verdict: str
    final_state_energy: McEstimate
    initial_energy: float
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"horizons": self.horizons, "estimates": [e.to_dict() for e in self.estimates],
                "verdict": self.verdict, "final_state_energy": self.final_state_energy.to_dict(),
                "initial_energy": self.initial_energy, **self.extra}


def classify_growth(horizons: Sequence[float], values: Sequence[float], rel: float = 0.05) -> str:
    """Verdict for a cumulative, non-decreasing energy curve.

    ``saturating`` if the last increment is at most ``rel`` of the final
    value; ``diverging`` if the increment per unit time keeps growing
    (segment rates, the first measured from ``t = 0``, increase
    throughout); otherwise ``inconclusive``.
    """
    h = np.asarray(horizons, dtype=float)
    v = np.asarray(values, dtype=float)
    if v[-1] == 0 or v[-1] - v[-2] <= rel * abs(v[-1]):
        return "saturating"
    rates = np.diff(np.concatenate([[0.0], v])) / np.diff(np.concatenate([[0.0], h]))
    if np.all(np.diff(rates) > 0):
        return "diverging"
    return "inconclusive"


def stability_diagnostic(scenario: Scenario, gains, horizons: Sequence[float], runs: int | None = None, *,
                         seed: int | None = None, workers: int = 1, **kwargs) -> StabilityReport:
    """Estimate ``E int_0^T |x|^2 dt`` at each horizon and classify the trend.

    Each run is simulated once to the longest horizon; shorter horizons
    are prefixes of the same runs. Also reports ``E |x(T)|^2`` at the
    longest horizon against ``|phi(0)|^2``.
    """
    h = [float(v) for v in horizons]
    if len(h) < 2 or any(b <= a for a, b in zip(h, h[1:])) or h[0] <= 0:
        raise RangeError(f"need at least two increasing positive horizons, got {list(horizons)}")

    def reducer(tr):
        cum = np.concatenate([[0.0], np.cumsum(tr.step_quadrature())])
        at = [float(np.interp(T, tr.t, cum)) for T in h]
        return at, float(tr.x[-1] @ tr.x[-1])

    out = run_monte_carlo(scenario, gains, reducer, runs=runs, workers=workers, seed=seed,
                          horizon=h[-1], **kwargs)
    per_h = np.array([o[0] for o in out])
    ests = [_estimate(per_h[:, c], np.zeros(len(out)), T) for c, T in enumerate(h)]
    final = _estimate([o[1] for o in out], np.zeros(len(out)), h[-1], "|x(T)|^2")
    verdict = classify_growth(h, [e.mean for e in ests])
    phi0 = scenario.perf.phi.phi0
    return StabilityReport(h, ests, verdict, final, float(phi0 @ phi0))


# ---------------------------------------------------------------------------
# chain statistics


def is_irreducible(Q) -> bool:
    Q = np.asarray(Q, dtype=float)
    if Q.shape[0] == 1:
        return True
    graph = (np.abs(Q) > 0) & ~np.eye(Q.shape[0], dtype=bool)
    count, _ = connected_components(graph, directed=True, connection="strong")
    return count == 1


def stationary_distribution(Q) -> np.ndarray:
    """Solve ``p^T Q = 0, sum p = 1`` for an irreducible generator."""
    Q = check_generator(Q)
    if not is_irreducible(Q):
        raise Reducible("generator is not irreducible; the stationary distribution is not unique")
    n = Q.shape[0]
    M = Q.T.copy()
    M[-1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    p = np.linalg.solve(M, rhs)
    return np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()


def occupation_statistics(path: JumpPath, batches: int = 20, burn_in: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Occupation-time fractions per state with batch-means standard errors.

    ``[burn_in, horizon]`` is split into ``batches`` equal windows; the
    spread of the per-window fractions gives the SE of their mean.
    """
    edges = np.linspace(burn_in, path.horizon, batches + 1)
    fr = np.array([path.occupation_times(a, b) / (b - a) for a, b in zip(edges[:-1], edges[1:])])
    return fr.mean(axis=0), fr.std(axis=0, ddof=1) / np.sqrt(batches)
