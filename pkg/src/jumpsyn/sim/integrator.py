"""Closed-loop integration of the delayed jump system.

    dx/dt = A_r x(t) + B_r K_robs x(t - tau(t)) + E_r w(t)
    z = C_r x + Psi_r w,   y = J_r x + Phi_r w

Classical RK4 on a uniform grid refined at every jump time of ``r`` and
``robs``, so the coefficients are constant inside each step. The delayed
state is read from the stored trajectory (method of steps) by linear
interpolation; a read that falls inside the current step interpolates
between the step's start and the current stage value instead of
extrapolating.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import NonFinite, StepTooLarge
from ..model import InitialHistory, MjlsModel
from .paths import JumpPath
from .signals import DelaySignal, DisturbanceSignal

# merge a jump time into a grid point closer than this fraction of dt
_SNAP = 1e-9


@numba.njit(cache=True, nogil=True)
def _delayed(s, a, t, x, hist_t, hist_v, t_cur, x_cur, out):
    n = out.shape[0]
    if s <= 0.0:
        for c in range(n):
            out[c] = np.interp(s, hist_t, hist_v[:, c])
    elif s <= t[a]:
        b = np.searchsorted(t[: a + 1], s)
        if b == 0:
            b = 1
        w = (s - t[b - 1]) / (t[b] - t[b - 1])
        for c in range(n):
            out[c] = (1.0 - w) * x[b - 1, c] + w * x[b, c]
    else:
        w = (s - t[a]) / (t_cur - t[a])
        for c in range(n):
            out[c] = (1.0 - w) * x[a, c] + w * x_cur[c]


@numba.njit(cache=True, nogil=True)
def _rhs(A, BK, Ew, xs, xd, out):
    n = xs.shape[0]
    for r in range(n):
        acc = Ew[r]
        for c in range(n):
            acc += A[r, c] * xs[c] + BK[r, c] * xd[c]
        out[r] = acc


@numba.njit(cache=True, nogil=True)
def _rk4_kernel(t, x, r_step, o_step, A, BK, E, w_grid, w_mid, tau_grid, tau_mid, hist_t, hist_v):
    """Fill ``x[1:]``; returns the first step index producing a non-finite
    state, or -1."""
    M = t.size - 1
    n = x.shape[1]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xs = np.empty(n)
    xd = np.empty(n)
    Ew = np.empty(n)
    for a in range(M):
        h = t[a + 1] - t[a]
        i = r_step[a]
        Ai = A[i]
        BKi = BK[i, o_step[a]]
        Ei = E[i]
        tm = t[a] + 0.5 * h

        # stage 1 at t_a
        Ew[:] = Ei @ w_grid[a]
        _delayed(t[a] - tau_grid[a], a, t, x, hist_t, hist_v, t[a], x[a], xd)
        _rhs(Ai, BKi, Ew, x[a], xd, k1)
        # stages 2, 3 at the midpoint
        Ew[:] = Ei @ w_mid[a]
        for c in range(n):
            xs[c] = x[a, c] + 0.5 * h * k1[c]
        _delayed(tm - tau_mid[a], a, t, x, hist_t, hist_v, tm, xs, xd)
        _rhs(Ai, BKi, Ew, xs, xd, k2)
        for c in range(n):
            xs[c] = x[a, c] + 0.5 * h * k2[c]
        _delayed(tm - tau_mid[a], a, t, x, hist_t, hist_v, tm, xs, xd)
        _rhs(Ai, BKi, Ew, xs, xd, k3)
        # stage 4 at t_b
        Ew[:] = Ei @ w_grid[a + 1]
        for c in range(n):
            xs[c] = x[a, c] + h * k3[c]
        _delayed(t[a + 1] - tau_grid[a + 1], a, t, x, hist_t, hist_v, t[a + 1], xs, xd)
        _rhs(Ai, BKi, Ew, xs, xd, k4)

        ok = True
        for c in range(n):
            v = x[a, c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            x[a + 1, c] = v
            if not np.isfinite(v):
                ok = False
        if not ok:
            return a
    return -1


def build_grid(horizon: float, dt: float, *jump_times) -> np.ndarray:
    """Uniform grid on ``[0, horizon]`` with the jump times inserted."""
    M = int(np.floor(horizon / dt + 1e-9))
    base = np.arange(M + 1) * dt
    if horizon - base[-1] > _SNAP * dt:
        base = np.append(base, horizon)
    base[-1] = horizon
    jumps = np.concatenate([np.asarray(j, dtype=float) for j in jump_times]) if jump_times else np.empty(0)
    jumps = jumps[(jumps > 0) & (jumps < horizon)]
    if jumps.size:
        near = np.abs(base[np.clip(np.rint(jumps / dt).astype(np.int64), 0, base.size - 1)] - jumps)
        jumps = jumps[near > _SNAP * dt]
    return np.union1d(base, jumps)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled closed loop. Modes are zero-based; ``step_r``/``step_robs``
    hold the modes in force on each step ``[t[a], t[a+1]]``."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    y: np.ndarray
    r: np.ndarray
    robs: np.ndarray
    tau: np.ndarray
    w: np.ndarray
    step_r: np.ndarray
    step_robs: np.ndarray

    def state(self, s) -> np.ndarray:
        """Linear interpolation of ``x`` at times ``s`` in ``[0, horizon]``."""
        s = np.asarray(s, dtype=float)
        return np.stack([np.interp(s, self.t, self.x[:, c]) for c in range(self.x.shape[1])], axis=-1)

    def step_quadrature(self, C: np.ndarray | None = None, D: np.ndarray | None = None) -> np.ndarray:
        """Per-step trapezoid values of ``|C_r x + D_r w|^2``.

        ``C`` and ``D`` are per-mode stacks; the mode of each step is used
        at both of its endpoints, so an output jump at a mode switch is
        integrated exactly. ``C=None`` means the identity (state energy);
        ``D=None`` omits the disturbance term.
        """
        h = np.diff(self.t)
        ends = []
        for idx in (slice(None, -1), slice(1, None)):
            v = self.x[idx] if C is None else np.einsum("aij,aj->ai", C[self.step_r], self.x[idx])
            if D is not None:
                v = v + np.einsum("aij,aj->ai", D[self.step_r], self.w[idx])
            ends.append(np.einsum("ai,ai->a", v, v))
        return 0.5 * h * (ends[0] + ends[1])

    def integral(self, C=None, D=None) -> float:
        return float(self.step_quadrature(C, D).sum())

    def to_csv(self, stride: int = 1) -> str:
        n, m, l, q = self.x.shape[1], self.u.shape[1], self.z.shape[1], self.w.shape[1]
        header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                  + [f"z{i + 1}" for i in range(l)] + [f"y{i + 1}" for i in range(l)]
                  + ["r", "robs", "tau"] + [f"w{i + 1}" for i in range(q)])
        idx = np.arange(0, self.t.size, stride)
        if idx[-1] != self.t.size - 1:
            idx = np.append(idx, self.t.size - 1)
        cols = np.column_stack([self.t[idx], self.x[idx], self.u[idx], self.z[idx], self.y[idx],
                                self.r[idx] + 1, self.robs[idx] + 1, self.tau[idx], self.w[idx]])
        fmt = ["%.17g"] * (1 + n + m + 2 * l) + ["%d", "%d"] + ["%.17g"] * (1 + q)
        buf = io.StringIO()
        np.savetxt(buf, cols, fmt=fmt, delimiter=",", header=",".join(header), comments="")
        return buf.getvalue()


def integrate_closed_loop(model: MjlsModel, gains, r_path: JumpPath, robs_path: JumpPath,
                          delay: DelaySignal, disturbance: DisturbanceSignal, phi: InitialHistory,
                          dt: float) -> Trajectory:
    """Integrate one sample path of the closed loop up to ``r_path.horizon``.

    Raises :class:`StepTooLarge` if ``dt`` exceeds ``tau0`` while the
    delay is non-zero, and :class:`NonFinite` when the state overflows.
    """
    K = np.asarray(gains, dtype=float).reshape(model.N, model.m, model.n)
    horizon = r_path.horizon
    t = build_grid(horizon, dt, r_path.times, robs_path.times)
    mid = 0.5 * (t[:-1] + t[1:])
    tau_grid, tau_mid = delay(t), delay(mid)
    if dt > delay.spec.tau0 and (tau_grid.max() > 0 or tau_mid.max() > 0):
        raise StepTooLarge(f"dt = {dt} exceeds tau0 = {delay.spec.tau0}; the delayed state would be "
                           "read from the step being computed")
    if phi.values.shape[1] != model.n:
        raise ValueError(f"initial function has dimension {phi.values.shape[1]}, expected {model.n}")

    w_grid = np.ascontiguousarray(disturbance(t).reshape(t.size, model.q))
    w_mid = np.ascontiguousarray(disturbance(mid).reshape(mid.size, model.q))
    step_r = r_path.state_at(mid)
    step_robs = robs_path.state_at(mid)
    BK = np.einsum("inm,jmk->ijnk", model.B, K)

    x = np.zeros((t.size, model.n))
    x[0] = phi.phi0
    bad = _rk4_kernel(t, x, step_r, step_robs, np.ascontiguousarray(model.A), np.ascontiguousarray(BK),
                      np.ascontiguousarray(model.E), w_grid, w_mid, tau_grid, tau_mid,
                      np.ascontiguousarray(phi.times), np.ascontiguousarray(phi.values))
    if bad >= 0:
        raise NonFinite(f"state became non-finite at t = {t[bad + 1]:.6g} (step {bad}, "
                        f"true mode {step_r[bad] + 1}, observed mode {step_robs[bad] + 1}); "
                        "the closed loop is likely unstable")

    r = r_path.state_at(t)
    robs = robs_path.state_at(t)
    s = t - tau_grid
    xd = np.where((s <= 0)[:, None], phi(np.minimum(s, 0.0)),
                  np.stack([np.interp(s, t, x[:, c]) for c in range(model.n)], axis=-1))
    u = np.einsum("aij,aj->ai", K[robs], xd)
    z = np.einsum("aij,aj->ai", model.C[r], x) + np.einsum("aij,aj->ai", model.Psi[r], w_grid)
    y = np.einsum("aij,aj->ai", model.J[r], x) + np.einsum("aij,aj->ai", model.Phi[r], w_grid)
    return Trajectory(t=t, x=x, u=u, z=z, y=y, r=r, robs=robs, tau=tau_grid, w=w_grid,
                      step_r=step_r, step_robs=step_robs)
