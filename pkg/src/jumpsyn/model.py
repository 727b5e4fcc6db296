"""Open-loop jump system, observation-delay rates, delay bounds and
performance data.

All containers are immutable after construction: array fields are
copied and flagged read-only. Mode indices are zero-based throughout the
library; the scenario file and CSV output use one-based modes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, GeneratorInvalid, ParseError, RangeError

MATRIX_NAMES = ("A", "B", "C", "J", "E", "Psi", "Phi")


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def check_generator(Q, name="generator") -> np.ndarray:
    """Validate a CTMC generator and return it as a float array.

    Row sums must vanish to within ``1e-12 * max|entry|``; off-diagonal
    rates must be non-negative and diagonal entries non-positive.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise GeneratorInvalid(f"{name} has non-finite entries")
    scale = np.abs(Q).max() if Q.size else 0.0
    off = Q - np.diag(np.diag(Q))
    for i in range(Q.shape[0]):
        if np.any(off[i] < 0):
            j = int(np.argmin(off[i]))
            raise GeneratorInvalid(f"{name}[{i + 1},{j + 1}] = {Q[i, j]} is a negative rate")
        if Q[i, i] > 0:
            raise GeneratorInvalid(f"{name}[{i + 1},{i + 1}] = {Q[i, i]} is positive")
        s = Q[i].sum()
        if abs(s) > 1e-12 * scale:
            raise GeneratorInvalid(f"row {i + 1} of {name} sums to {s:g}, not 0")
    return Q


@dataclass(frozen=True, eq=False)
class MjlsModel:
    """Per-mode system matrices stacked along a leading mode axis.

    Shapes: A (N,n,n), B (N,n,m), C (N,l,n), J (N,l,n), E (N,n,q),
    Psi (N,l,q), Phi (N,l,q), Pi (N,N).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    J: np.ndarray
    E: np.ndarray
    Psi: np.ndarray
    Phi: np.ndarray
    Pi: np.ndarray

    def __post_init__(self):
        for name in MATRIX_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 3:
                raise DimensionMismatch(f"{name} must be a stack of matrices, got ndim={arr.ndim}")
            object.__setattr__(self, name, _frozen(arr))
        object.__setattr__(self, "Pi", _frozen(check_generator(self.Pi, "generator")))
        N, n, m = self.B.shape
        l, q = self.Psi.shape[1:]
        expected = {
            "A": (N, n, n), "B": (N, n, m), "C": (N, l, n), "J": (N, l, n),
            "E": (N, n, q), "Psi": (N, l, q), "Phi": (N, l, q),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.Pi.shape != (N, N):
            raise DimensionMismatch(f"generator has shape {self.Pi.shape}, expected {(N, N)}")

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    @property
    def l(self) -> int:  # noqa: E743
        return self.C.shape[1]

    @property
    def q(self) -> int:
        return self.E.shape[2]

    def with_matrices(self, **changes) -> "MjlsModel":
        data = {name: getattr(self, name) for name in MATRIX_NAMES + ("Pi",)}
        data.update(changes)
        return MjlsModel(**data)


def _as_matrix(value, where) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"not a numeric matrix ({exc})", where) from None
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ParseError(f"expected a 2-D row-major array, got ndim={arr.ndim}", where)
    return arr


def validate_model(doc: Mapping[str, Any]) -> MjlsModel:
    """Build an :class:`MjlsModel` from raw scenario content.

    ``doc`` needs ``modes`` (list of objects with keys A, B, C, J, E, Psi,
    Phi) and ``generator``. Shapes are fixed by mode 1; any later mode
    that disagrees raises :class:`DimensionMismatch` naming the matrix.
    """
    modes = doc.get("modes")
    if not isinstance(modes, Sequence) or isinstance(modes, (str, bytes)) or not modes:
        raise ParseError("'modes' must be a non-empty array", "/modes")
    if "generator" not in doc:
        raise ParseError("missing key", "/generator")
    stacks: dict[str, list[np.ndarray]] = {name: [] for name in MATRIX_NAMES}
    for idx, mode in enumerate(modes):
        for name in MATRIX_NAMES:
            where = f"/modes/{idx}/{name}"
            if name not in mode:
                raise ParseError("missing key", where)
            mat = _as_matrix(mode[name], where)
            if stacks[name] and mat.shape != stacks[name][0].shape:
                raise DimensionMismatch(
                    f"{name}_{idx + 1} has shape {mat.shape} but {name}_1 has shape "
                    f"{stacks[name][0].shape}")
            stacks[name].append(mat)
    Pi = _as_matrix(doc["generator"], "/generator")
    return MjlsModel(**{k: np.stack(v) for k, v in stacks.items()}, Pi=Pi)


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """Rates ``G[i, j]`` of the exponential delay for the observation to
    move from observed mode ``i`` to true mode ``j``. Diagonal unused."""

    G: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionMismatch(f"observation_rates must be square, got {G.shape}")
        off = ~np.eye(G.shape[0], dtype=bool)
        if np.any(~np.isfinite(G[off])) or np.any(G[off] <= 0):
            bad = np.argwhere(off & ~(G > 0))[0]
            raise RangeError(
                f"observation rate g[{bad[0] + 1},{bad[1] + 1}] must be > 0")
        np.fill_diagonal(G, 0.0)
        object.__setattr__(self, "G", _frozen(G))

    @classmethod
    def uniform(cls, N: int, rate: float) -> "ObservationModel":
        return cls(np.full((N, N), float(rate)) * (1 - np.eye(N)))


@dataclass(frozen=True)
class DelaySpec:
    """Bounds on the feedback delay: ``0 <= tau(t) <= tau0`` and
    ``0 <= d tau/dt <= tau_plus``."""

    tau0: float
    tau_plus: float

    def __post_init__(self):
        if not (np.isfinite(self.tau0) and self.tau0 > 0):
            raise RangeError(f"tau0 must be > 0, got {self.tau0}")
        if not (0 < self.tau_plus <= 1):
            raise RangeError(f"tau_plus must lie in (0, 1], got {self.tau_plus}")


@dataclass(frozen=True, eq=False)
class InitialHistory:
    """Initial function on ``[-tau0, 0]`` sampled on a grid and linearly
    interpolated between samples."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 2 or v.shape[0] != t.size:
            raise DimensionMismatch("history needs >= 2 grid times and one value row per time")
        if np.any(np.diff(t) <= 0):
            raise ParseError("history times must be strictly increasing", "/performance/phi/times")
        if t[-1] != 0.0:
            raise ParseError("history grid must end at t = 0", "/performance/phi/times")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def constant(cls, phi0, tau0: float) -> "InitialHistory":
        phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
        return cls(np.array([-float(tau0), 0.0]), np.vstack([phi0, phi0]))

    @property
    def phi0(self) -> np.ndarray:
        return self.values[-1]

    @property
    def tau0(self) -> float:
        return -float(self.times[0])

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[-1]))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.column_stack([np.interp(t.ravel(), self.times, self.values[:, c])
                               for c in range(self.values.shape[1])])
        return out.reshape(t.shape + (self.values.shape[1],))

    def quadratic_integral(self, Q=None) -> float:
        """Trapezoid rule for the integral of phi^T Q phi over the grid."""
        v = self.values
        f = np.einsum("ti,ti->t", v, v) if Q is None else np.einsum("ti,ij,tj->t", v, Q, v)
        return float(np.trapezoid(f, self.times))

    def norm(self) -> float:
        """sqrt of the integral of |phi|^2 (surrogate for the X scalar)."""
        return float(np.sqrt(self.quadratic_integral()))


@dataclass(frozen=True, eq=False)
class PerformanceSpec:
    gamma: float
    f2: float
    f_inf: float
    L: np.ndarray  # (N^2, n, n), L_k = inverse of the Lyapunov weight Q_k
    X: float
    phi: InitialHistory

    def __post_init__(self):
        for name in ("gamma", "f2", "f_inf"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise RangeError(f"{name} must be > 0, got {val}")
        if not (np.isfinite(self.X) and self.X >= 0):
            raise RangeError(f"X must be >= 0, got {self.X}")
        L = np.asarray(self.L, dtype=float)
        if L.ndim != 3 or L.shape[1] != L.shape[2]:
            raise DimensionMismatch(f"L must be a stack of square matrices, got {L.shape}")
        for k, Lk in enumerate(L):
            if not np.allclose(Lk, Lk.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Lk).max())):
                raise RangeError(f"L_{k + 1} is not symmetric")
            if np.linalg.eigvalsh(Lk).min() <= 0:
                raise RangeError(f"L_{k + 1} is not positive definite")
        object.__setattr__(self, "L", _frozen(L))

    @property
    def Q(self) -> np.ndarray:
        return np.linalg.inv(self.L)

    def with_values(self, **changes) -> "PerformanceSpec":
        data = dict(gamma=self.gamma, f2=self.f2, f_inf=self.f_inf, L=self.L, X=self.X, phi=self.phi)
        data.update(changes)
        return PerformanceSpec(**data)


def check_history_consistency(perf: PerformanceSpec, rtol: float = 1e-6) -> float:
    """Compare ``X`` with the trapezoid value of sqrt(int phi^T phi).

    Returns the computed value and emits a ``UserWarning`` on mismatch.
    X is normally supplied independently of phi, so a mismatch is not an
    error.
    """
    computed = perf.phi.norm()
    if not np.isclose(computed, perf.X, rtol=rtol, atol=1e-12):
        warnings.warn(
            f"X = {perf.X:g} differs from sqrt(int phi^T phi) = {computed:g}", UserWarning,
            stacklevel=2)
    return computed


@dataclass(frozen=True)
class SimSettings:
    r0: int = 0  # zero-based
    robs0: int = 0  # zero-based
    horizon: float = 30.0
    dt: float = 1e-3
    seed: int = 0
    runs: int = 200
    disturbance: Mapping[str, Any] = field(default_factory=lambda: {"kind": "zero"})
    delay_signal: Mapping[str, Any] = field(default_factory=lambda: {"kind": "ramp", "tau_init": 0.0})

    def __post_init__(self):
        if not (self.dt > 0):
            raise RangeError(f"dt must be > 0, got {self.dt}")
        if not (self.horizon > 0):
            raise RangeError(f"horizon must be > 0, got {self.horizon}")
        if self.runs < 1:
            raise RangeError(f"runs must be >= 1, got {self.runs}")
        if self.seed < 0:
            raise RangeError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class Scenario:
    model: MjlsModel
    obs: ObservationModel
    delay: DelaySpec
    perf: PerformanceSpec
    sim: SimSettings
    name: str = ""
    reference: Mapping[str, Any] | None = None

    def __post_init__(self):
        N, n = self.model.N, self.model.n
        if self.obs.G.shape != (N, N):
            raise DimensionMismatch(f"observation_rates has shape {self.obs.G.shape}, expected {(N, N)}")
        if self.perf.L.shape != (N * N, n, n):
            raise DimensionMismatch(f"L has shape {self.perf.L.shape}, expected {(N * N, n, n)}")
        if self.perf.phi.values.shape[1] != n:
            raise DimensionMismatch(f"phi has dimension {self.perf.phi.values.shape[1]}, expected {n}")
        if not np.isclose(self.perf.phi.tau0, self.delay.tau0):
            raise RangeError(
                f"history must cover [-tau0, 0]; starts at {-self.perf.phi.tau0} but tau0 = {self.delay.tau0}")
        for name in ("r0", "robs0"):
            v = getattr(self.sim, name)
            if not 0 <= v < N:
                raise RangeError(f"{name} = {v + 1} is not a mode in 1..{N}")

    def replace(self, **changes) -> "Scenario":
        data = dict(model=self.model, obs=self.obs, delay=self.delay, perf=self.perf, sim=self.sim,
                    name=self.name, reference=self.reference)
        data.update(changes)
        return Scenario(**data)
