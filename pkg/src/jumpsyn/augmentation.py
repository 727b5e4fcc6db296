"""Joint (true mode, observed mode) process as a single N^2-state chain.

The pair ``(i, j)`` (true mode i, observed mode j) is mapped
lexicographically, true mode major. ``mode_pair_index`` and ``mode_pair``
use one-based modes like the scenario file; everything else is
zero-based, so augmented state ``k`` corresponds to ``divmod(k, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange
from .model import MjlsModel, ObservationModel, check_generator


def mode_pair_index(i: int, j: int, N: int) -> int:
    """One-based index ``(i - 1) * N + j`` of the mode pair ``(i, j)``."""
    if not (1 <= i <= N and 1 <= j <= N):
        raise IndexOutOfRange(f"mode pair ({i}, {j}) outside 1..{N}")
    return (i - 1) * N + j


def mode_pair(k: int, N: int) -> tuple[int, int]:
    """Inverse of :func:`mode_pair_index`."""
    if not 1 <= k <= N * N:
        raise IndexOutOfRange(f"augmented index {k} outside 1..{N * N}")
    i, j = divmod(k - 1, N)
    return i + 1, j + 1


def build_augmented_generator(Pi, G) -> np.ndarray:
    """Generator of the joint chain.

    From ``(i1, j1)`` the true mode jumps to ``i2`` at rate ``Pi[i1, i2]``
    while the observation stays frozen; if ``j1 != i1`` the observation
    catches up, moving to ``(i1, i1)`` at rate ``G[j1, i1]``. An already
    correct observation contributes no transition.
    """
    Pi = check_generator(Pi, "generator")
    G = np.asarray(G, dtype=float)
    N = Pi.shape[0]
    kappa = np.zeros((N * N, N * N))
    for i1 in range(N):
        for j1 in range(N):
            row = i1 * N + j1
            for i2 in range(N):
                if i2 != i1:
                    kappa[row, i2 * N + j1] = Pi[i1, i2]
            if j1 != i1:
                kappa[row, i1 * N + i1] = G[j1, i1]
            kappa[row, row] = -kappa[row].sum()
    return kappa


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    """Standard-form delayed jump system over the joint chain.

    ``true_mode[k]`` selects the plant matrices of state ``k`` and
    ``gain_index[k]`` (the observed mode) selects the feedback gain.
    """

    model: MjlsModel
    kappa: np.ndarray
    true_mode: np.ndarray
    gain_index: np.ndarray

    @property
    def N(self) -> int:
        return self.model.N

    @property
    def size(self) -> int:
        return self.kappa.shape[0]

    def pair(self, k: int) -> tuple[int, int]:
        """Zero-based ``(i, j)`` of augmented state ``k``."""
        return int(self.true_mode[k]), int(self.gain_index[k])

    def index(self, i: int, j: int) -> int:
        return i * self.N + j

    def hat(self, name: str) -> np.ndarray:
        """Stack of the true-mode matrices ``name`` (e.g. ``"A"``) per augmented state."""
        return getattr(self.model, name)[self.true_mode]

    def check(self, gains) -> np.ndarray:
        """Stack of observed-mode gains per augmented state."""
        return np.asarray(gains, dtype=float)[self.gain_index]

    def index_map(self) -> list[dict[str, int]]:
        """One-based ``k -> (i, j)`` table, for reports."""
        return [{"k": k + 1, "true_mode": int(i) + 1, "observed_mode": int(j) + 1}
                for k, (i, j) in enumerate(zip(self.true_mode, self.gain_index))]


def build_augmented_model(model: MjlsModel, obs: ObservationModel) -> AugmentedModel:
    N = model.N
    kappa = build_augmented_generator(model.Pi, obs.G)
    k = np.arange(N * N)
    true_mode, gain_index = np.divmod(k, N)
    for arr in (kappa, true_mode, gain_index):
        arr.setflags(write=False)
    return AugmentedModel(model=model, kappa=kappa, true_mode=true_mode, gain_index=gain_index)
