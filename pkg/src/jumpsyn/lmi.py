"""Mixed H2/Hinf gain synthesis and fixed-gain analysis as LMI programs.

Synthesis unknowns are ``Y_j`` (symmetric, one per observed mode),
``Z_j`` (m x n), and the scalars ``lam`` and ``Lam``; the gain is
``K_j = Z_j Y_j^{-1}`` and the Lyapunov matrix of augmented state
``k = (i, j)`` is ``P_k = Y_j^{-1}``. Analysis unknowns are one
``P_k`` per augmented state.

Two variants exist for the delayed-state diagonal block of the two big
LMIs:

``corrected``
    ``L_k / (1 - tau_plus) - 2 Y_j``. Because
    ``-Y Qh Y <= Qh^{-1} - 2 Y`` for any ``Qh > 0``, feasibility implies
    the nonlinear Lyapunov conditions checked by :func:`check_certificate`.
``as-printed``
    ``+I_n``. A positive constant diagonal block; kept only as a
    diagnostic, it is always structurally infeasible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

from .augmentation import AugmentedModel
from .errors import CertificateInvalid, Infeasible, RangeError, SolverFailure
from .model import InitialHistory, PerformanceSpec
from .sdp import DEFAULT_SOLVER, ConicProgram, bmat, block_diag, solve_feasibility

log = logging.getLogger(__name__)

VARIANTS = ("corrected", "as-printed")


class Status(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    SOLVER_FAILURE = "solver_failure"


def default_eps(aug: AugmentedModel, perf: PerformanceSpec | None = None, extra=()) -> float:
    """Strictness margin ``1e-7 * (1 + largest input magnitude)``."""
    m = aug.model
    data = [m.A, m.B, m.C, m.J, m.E, m.Psi, m.Phi, aug.kappa, *[np.asarray(e) for e in extra]]
    if perf is not None:
        data += [perf.L, perf.phi.values, np.array([perf.X, perf.gamma])]
    biggest = max(float(np.abs(d).max()) for d in data if np.size(d))
    return 1e-7 * (1.0 + biggest)


def _check_tau_plus(tau_plus: float) -> float:
    if not 0 <= tau_plus < 1:
        raise RangeError(
            f"tau_plus must lie in [0, 1) for the LMI conditions, got {tau_plus}; "
            "at tau_plus = 1 the delayed-state weight (1 - tau_plus) Q vanishes")
    return float(tau_plus)


def _stack(Q, count: int, n: int) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 0:
        Q = Q.reshape(1, 1)
    if Q.ndim == 2:
        Q = np.broadcast_to(Q, (count, n, n))
    if Q.shape != (count, n, n):
        raise ValueError(f"expected {count} matrices of size {n}x{n}, got shape {Q.shape}")
    return Q


# ---------------------------------------------------------------------------
# synthesis


def assemble_synthesis_program(aug: AugmentedModel, tau_plus: float, perf: PerformanceSpec, *,
                               variant: str = "corrected", eps: float | None = None) -> ConicProgram:
    """Build the synthesis feasibility program.

    Per augmented state ``k = (i, j)``: one H2 block
    (rows ``U, L, C, delay, coupling``) and one Hinf block
    (rows ``U, L, J, delay, coupling, w``). Per observed mode: the
    ``lam`` Schur block and ``Y_j > 0``. Scalar constraints bound
    ``Lam`` from below by ``X^2 lambda_max(L_k^{-1})`` and the budget
    ``lam + Lam <= min(f2, f_inf)``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    tau_plus = _check_tau_plus(tau_plus)
    m = aug.model
    N, n, l, q = m.N, m.n, m.l, m.q
    S = aug.size
    if perf.L.shape != (S, n, n):
        raise ValueError(f"L must hold {S} matrices of size {n}x{n}")
    eps = default_eps(aug, perf) if eps is None else float(eps)
    kappa = aug.kappa

    prog = ConicProgram(f"synthesis[{variant}]")
    Y = [prog.symmetric(f"Y{j + 1}", n) for j in range(N)]
    Z = [prog.rectangular(f"Z{j + 1}", m.m, n) for j in range(N)]
    lam = prog.scalar("lambda")
    Lam = prog.scalar("Lambda")

    In, Il, Iq = np.eye(n), np.eye(l), np.eye(q)
    labels_h2 = ("U", "-L_k", "-I_l", "delayed-state block", "coupling")
    for k in range(S):
        i, j = aug.pair(k)
        A, B, C, J = m.A[i], m.B[i], m.C[i], m.J[i]
        E, Phi = m.E[i], m.Phi[i]
        Yj, Zj = Y[j], Z[j]
        Lk = perf.L[k]
        others = [kk for kk in range(S) if kk != k]
        U = Yj @ A.T + A @ Yj + kappa[k, k] * Yj
        if variant == "corrected":
            d44 = Lk / (1.0 - tau_plus) - 2.0 * Yj
            d44_label = "delayed-state block L_k/(1-tau_plus) - 2 Y_j"
        else:
            d44 = np.eye(n)
            d44_label = "delayed-state block +I_n"
        BZ = B @ Zj
        tag = dict(k=k + 1, true_mode=i + 1, observed_mode=j + 1)

        if others:
            aleph = bmat([[np.sqrt(kappa[k, kk]) * Yj for kk in others]])[0]
            Ycal = block_diag([Y[aug.gain_index[kk]] for kk in others])
        rows_h2 = [
            [U, Yj, Yj @ C.T, BZ] + ([aleph] if others else []),
            [Yj, -Lk, None, None] + ([None] if others else []),
            [C @ Yj, None, -Il, None] + ([None] if others else []),
            [BZ.T, None, None, d44] + ([None] if others else []),
        ]
        if others:
            rows_h2.append([aleph.T, None, None, None, -Ycal])
        M, sizes = bmat(rows_h2)
        prog.add(f"H2[k={k + 1}]", M, margin=eps, blocks=sizes, kind="h2",
                 block_labels=labels_h2[:3] + (d44_label, "coupling"), **tag)

        c6 = E + Yj @ J.T @ Phi
        corner = -(perf.gamma ** 2) * Iq + Phi.T @ Phi
        z = [None] if others else []
        rows_hinf = [
            [U, Yj, Yj @ J.T, BZ] + ([aleph] if others else []) + [c6],
            [Yj, -Lk, None, None] + z + [None],
            [J @ Yj, None, -Il, None] + z + [None],
            [BZ.T, None, None, d44] + z + [None],
        ]
        if others:
            rows_hinf.append([aleph.T, None, None, None, -Ycal, None])
        rows_hinf.append([c6.T, None, None, None] + z + [corner])
        M, sizes = bmat(rows_hinf)
        prog.add(f"Hinf[k={k + 1}]", M, margin=eps, blocks=sizes, kind="hinf",
                 block_labels=("U", "-L_k", "-I_l", d44_label)
                 + (("coupling",) if others else ()) + ("-gamma^2 I + Phi^T Phi",), **tag)

    phi0 = perf.phi.phi0.reshape(n, 1)
    for j in range(N):
        M, sizes = bmat([[-lam, phi0.T], [phi0, -Y[j]]])
        prog.add(f"lambda-Schur[j={j + 1}]", M, strict=False, blocks=sizes, is_matrix=True,
                 kind="lambda_schur", observed_mode=j + 1)
    for j in range(N):
        prog.add(f"Y{j + 1}>0", -Y[j], margin=eps, is_matrix=True, kind="positivity", observed_mode=j + 1)
    for k in range(S):
        bound = perf.X ** 2 * np.linalg.eigvalsh(np.linalg.inv(perf.L[k]))[-1]
        prog.add(f"Lambda-bound[k={k + 1}]", bound - Lam, strict=False, kind="Lambda_bound", k=k + 1)
    prog.add("lambda>0", -lam, margin=eps, kind="positive")
    prog.add("Lambda>0", -Lam, margin=eps, kind="positive")
    prog.add("budget", lam + Lam - min(perf.f2, perf.f_inf), strict=False, kind="budget")
    return prog


def lyapunov_obstructions(aug: AugmentedModel) -> list[str]:
    """Proven obstructions to the corrected synthesis program.

    With ``P_k`` shared by all augmented states of one observed mode, the
    H2 block of ``k = (i, j)`` implies that ``A_i + (c_k / 2) I`` is
    Hurwitz, where ``c_k = kappa_kk + sum of kappa_kk'`` over the other
    states with the same observed mode. Equivalently
    ``c_k = -G[j, i]`` for ``i != j`` and ``0`` for ``i == j``; in
    particular every open-loop ``A_i`` must be Hurwitz. Every other term
    of the block's Schur complement is positive semidefinite.
    """
    msgs = []
    for k in range(aug.size):
        i, j = aug.pair(k)
        same = [kk for kk in range(aug.size) if kk != k and aug.gain_index[kk] == j]
        c = aug.kappa[k, k] + aug.kappa[k, same].sum()
        abscissa = float(np.linalg.eigvals(aug.model.A[i]).real.max() + 0.5 * c)
        if abscissa >= 0:
            msgs.append(
                f"H2[k={k + 1}] (true mode {i + 1}, observed mode {j + 1}) requires A_{i + 1} "
                f"{'+ %.6g I ' % (0.5 * c) if c else ''}to be Hurwitz, but its spectral abscissa is "
                f"{abscissa:.6g} >= 0; the feedback enters only through the delayed-state coupling, "
                "which adds a positive semidefinite term")
    return msgs


@dataclass
class SynthesisResult:
    status: Status
    variant: str
    eps: float
    Y: list[np.ndarray] = field(default_factory=list)
    Z: list[np.ndarray] = field(default_factory=list)
    lam: float | None = None
    Lam: float | None = None
    gains: list[np.ndarray] = field(default_factory=list)
    margins: dict[str, float] = field(default_factory=dict)
    report: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE

    @property
    def bound(self) -> float | None:
        return None if self.lam is None else self.lam + self.Lam

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"status": self.status.value, "variant": self.variant, "eps": self.eps}
        if self.feasible:
            out.update({
                "gains": [K.tolist() for K in self.gains],
                "Y": [Y.tolist() for Y in self.Y],
                "Z": [Z.tolist() for Z in self.Z],
                "lambda": self.lam, "Lambda": self.Lam, "bound": self.bound,
                "margins": self.margins,
            })
        out["report"] = self.report
        return out


def synthesize(aug: AugmentedModel, tau_plus: float, perf: PerformanceSpec, *,
               variant: str = "corrected", eps: float | None = None, solver: str = DEFAULT_SOLVER,
               precheck: bool = True) -> SynthesisResult:
    """Solve the synthesis program and recover ``K_j = Z_j Y_j^{-1}``.

    ``Lam`` is lowered to its smallest admissible value
    ``max(X^2 max_k lambda_max(L_k^{-1}), eps)`` after the solve. With
    ``precheck`` the program is first screened for constant diagonal
    blocks that cannot be negative and for :func:`lyapunov_obstructions`;
    either one is reported as infeasible without calling the solver.
    """
    prog = assemble_synthesis_program(aug, tau_plus, perf, variant=variant, eps=eps)
    eps = default_eps(aug, perf) if eps is None else float(eps)
    res = SynthesisResult(status=Status.INFEASIBLE, variant=variant, eps=eps)
    if precheck:
        report = [str(i) for i in prog.structural_issues()]
        if variant == "corrected":
            report += lyapunov_obstructions(aug)
        if report:
            res.report = ["structurally infeasible: " + r for r in report]
            log.info("synthesis[%s] structurally infeasible (%d obstructions)", variant, len(report))
            return res
    try:
        sol = solve_feasibility(prog, solver=solver, check_structure=False)
    except Infeasible as exc:
        res.report = [str(exc)] + exc.report
        return res
    except SolverFailure as exc:
        res.status = Status.SOLVER_FAILURE
        res.report = [str(exc)]
        return res

    N = aug.N
    values = dict(sol.values)
    lam_min = perf.X ** 2 * max(np.linalg.eigvalsh(np.linalg.inv(Lk))[-1] for Lk in perf.L)
    values["Lambda"] = max(lam_min, eps)
    theta = prog.pack(values)
    res.Y = [values[f"Y{j + 1}"] for j in range(N)]
    res.Z = [values[f"Z{j + 1}"] for j in range(N)]
    res.lam = float(values["lambda"])
    res.Lam = float(values["Lambda"])
    res.gains = [np.linalg.solve(Yj.T, Zj.T).T for Yj, Zj in zip(res.Y, res.Z)]
    res.margins = prog.margins(theta)
    res.status = Status.FEASIBLE
    res.report = [f"solver status: {sol.status}"]
    return res


# ---------------------------------------------------------------------------
# fixed-gain analysis


def _gain_stack(aug: AugmentedModel, gains) -> np.ndarray:
    K = np.asarray(gains, dtype=float)
    if K.ndim == 2:
        K = K[None]
    m = aug.model
    if K.shape != (m.N, m.m, m.n):
        raise ValueError(f"gains must have shape {(m.N, m.m, m.n)}, got {K.shape}")
    return K


def _weighted_sum(w, mats):
    out = w[0] * mats[0]
    for wk, M in zip(w[1:], mats[1:]):
        out = out + wk * M
    return out


def h2_block(aug: AugmentedModel, k: int, P, K, Q, tau_plus: float):
    """Nonlinear H2 block of augmented state ``k`` for fixed matrices.

    ``P`` and ``Q`` are stacks over augmented states, ``K`` over observed
    modes. Works with numpy arrays or :class:`~jumpsyn.sdp.Affine` ``P``.
    """
    m = aug.model
    i, j = aug.pair(k)
    A, B, C = m.A[i], m.B[i], m.C[i]
    coupling = _weighted_sum(aug.kappa[k], P)
    eth = A.T @ P[k] + P[k] @ A + Q[k] + coupling + C.T @ C
    PBK = P[k] @ (B @ K[j])
    return bmat([[eth, PBK], [PBK.T, -(1.0 - tau_plus) * Q[k]]])


def hinf_block(aug: AugmentedModel, k: int, P, K, Q, tau_plus: float, gamma: float):
    m = aug.model
    i, j = aug.pair(k)
    A, B, J, E, Phi = m.A[i], m.B[i], m.J[i], m.E[i], m.Phi[i]
    coupling = _weighted_sum(aug.kappa[k], P)
    re = A.T @ P[k] + P[k] @ A + Q[k] + coupling + J.T @ J
    PBK = P[k] @ (B @ K[j])
    low = E.T @ P[k] + Phi.T @ J
    n, qd = m.n, m.q
    return bmat([[re, PBK, low.T],
                 [PBK.T, -(1.0 - tau_plus) * Q[k], np.zeros((n, qd))],
                 [low, np.zeros((qd, n)), -(gamma ** 2) * np.eye(qd) + Phi.T @ Phi]])


def _dense(expr) -> np.ndarray:
    return expr.const if not expr.terms else expr.value(np.zeros(max(expr.terms) + 1))


@dataclass
class AnalysisResult:
    status: Status
    kind: str
    P: list[np.ndarray] = field(default_factory=list)
    margins: dict[str, float] = field(default_factory=dict)
    bound: float | None = None
    report: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"status": self.status.value, "kind": self.kind}
        if self.feasible:
            out.update({"P": [P.tolist() for P in self.P], "margins": self.margins, "bound": self.bound})
        out["report"] = self.report
        return out


def _analysis(kind: str, aug, gains, Q, tau_plus, gamma, phi, s0, eps, solver) -> AnalysisResult:
    tau_plus = _check_tau_plus(tau_plus)
    m = aug.model
    S, n = aug.size, m.n
    K = _gain_stack(aug, gains)
    Q = _stack(Q, S, n)
    for k, Qk in enumerate(Q):
        if np.linalg.eigvalsh(0.5 * (Qk + Qk.T))[0] <= 0:
            raise RangeError(f"Q_{k + 1} must be positive definite")
    eps = default_eps(aug, extra=(K, Q)) if eps is None else float(eps)

    prog = ConicProgram(f"{kind}-analysis")
    P = [prog.symmetric(f"P{k + 1}", n) for k in range(S)]
    for k in range(S):
        prog.add(f"P{k + 1}>0", -P[k], margin=eps, is_matrix=True, kind="positivity")
    for k in range(S):
        if kind == "h2":
            M, sizes = h2_block(aug, k, P, K, Q, tau_plus)
            labels = ("eth", "-(1-tau_plus) Q_k")
        else:
            M, sizes = hinf_block(aug, k, P, K, Q, tau_plus, gamma)
            labels = ("R", "-(1-tau_plus) Q_k", "-gamma^2 I + Phi^T Phi")
        prog.add(f"{kind}[k={k + 1}]", M, margin=eps, blocks=sizes, block_labels=labels, kind=kind)
    if phi is not None:
        x0 = phi.phi0
        prog.minimize(x0 @ P[s0] @ x0.reshape(-1, 1))

    res = AnalysisResult(status=Status.INFEASIBLE, kind=kind)
    try:
        sol = solve_feasibility(prog, solver=solver)
    except Infeasible as exc:
        res.report = [str(exc)] + exc.report
        return res
    except SolverFailure as exc:
        res.status = Status.SOLVER_FAILURE
        res.report = [str(exc)]
        return res
    res.status = Status.FEASIBLE
    res.P = [sol.values[f"P{k + 1}"] for k in range(S)]
    res.margins = sol.margins
    res.report = [f"solver status: {sol.status}"]
    if phi is not None:
        res.bound = performance_bound(res.P[s0], Q[s0], phi)
    return res


def verify_h2_analysis(aug: AugmentedModel, gains, Q, tau_plus: float, *,
                       phi: InitialHistory | None = None, s0: int = 0, eps: float | None = None,
                       solver: str = DEFAULT_SOLVER) -> AnalysisResult:
    """Search ``P_k > 0`` making every fixed-gain H2 block negative definite.

    With ``phi`` given, ``phi(0)^T P_{s0} phi(0)`` is minimized and the
    resulting H2 bound is reported (``s0`` is the zero-based initial
    augmented state).
    """
    return _analysis("h2", aug, gains, Q, tau_plus, None, phi, s0, eps, solver)


def verify_hinf_analysis(aug: AugmentedModel, gains, Q, tau_plus: float, gamma: float, *,
                         phi: InitialHistory | None = None, s0: int = 0, eps: float | None = None,
                         solver: str = DEFAULT_SOLVER) -> AnalysisResult:
    if not gamma > 0:
        raise RangeError(f"gamma must be > 0, got {gamma}")
    return _analysis("hinf", aug, gains, Q, tau_plus, float(gamma), phi, s0, eps, solver)


def performance_bound(P, Q, phi, tau0: float | None = None) -> float:
    """``phi(0)^T P phi(0) + int_{-tau0}^0 phi^T Q phi``.

    ``phi`` is an :class:`InitialHistory`, or a constant vector together
    with ``tau0``. The integral uses the trapezoid rule on phi's grid.
    """
    if not isinstance(phi, InitialHistory):
        if tau0 is None:
            raise ValueError("tau0 is required for a constant initial function")
        phi = InitialHistory.constant(phi, tau0)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    x0 = phi.phi0
    return float(x0 @ P @ x0) + phi.quadratic_integral(Q)


# ---------------------------------------------------------------------------
# certificate


@dataclass
class CertificateReport:
    margins: dict[str, float]
    bounds: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.margins.values())

    @property
    def failing(self) -> list[str]:
        return [name for name, v in self.margins.items() if not v < -self.tolerance]

    def to_dict(self) -> dict[str, Any]:
        return {"margins": self.margins, "bounds": self.bounds, "worst": self.worst,
                "tolerance": self.tolerance}


def certificate_blocks(aug: AugmentedModel, Y: Sequence, Z: Sequence, tau_plus: float,
                       perf: PerformanceSpec) -> dict[str, np.ndarray]:
    """Dense matrices that must be negative definite for ``(Y, Z)``.

    Rebuilds ``P_k = Y_j^{-1}``, ``K_j = Z_j Y_j^{-1}`` and
    ``Q_k = L_k^{-1}`` and evaluates the nonlinear H2 and Hinf blocks
    directly, independent of the LMI assembly.
    """
    Y = [np.asarray(y, dtype=float) for y in Y]
    P = np.array([np.linalg.inv(Y[j]) for j in aug.gain_index])
    K = np.array([np.asarray(z, dtype=float) @ np.linalg.inv(y) for y, z in zip(Y, Z)])
    Q = np.linalg.inv(perf.L)
    out = {f"Y{j + 1}>0": -Yj for j, Yj in enumerate(Y)}
    for k in range(aug.size):
        out[f"h2[k={k + 1}]"] = _dense(h2_block(aug, k, P, K, Q, tau_plus)[0])
        out[f"hinf[k={k + 1}]"] = _dense(hinf_block(aug, k, P, K, Q, tau_plus, perf.gamma)[0])
    return out


def check_certificate(aug: AugmentedModel, result: SynthesisResult, tau_plus: float,
                      perf: PerformanceSpec, tolerance: float = 0.0) -> CertificateReport:
    """Verify a synthesis result by dense eigenvalue computation.

    Every block from :func:`certificate_blocks` must have max eigenvalue
    below ``-tolerance`` (strictly below 0 when ``tolerance == 0``).
    The non-strict scalar bounds on ``lam``, ``Lam`` and the budget are
    reported separately in ``bounds`` (value <= 0 means satisfied).
    Raises :class:`CertificateInvalid` listing the failing blocks.
    """
    if not result.Y:
        raise CertificateInvalid("result carries no variable values", ["(no values)"])
    margins = {}
    for name, M in certificate_blocks(aug, result.Y, result.Z, tau_plus, perf).items():
        margins[name] = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    x0 = perf.phi.phi0
    bounds = {}
    for j, Yj in enumerate(result.Y):
        try:
            bounds[f"lambda>=phi0'P_{j + 1}phi0"] = float(x0 @ np.linalg.solve(Yj, x0) - result.lam)
        except np.linalg.LinAlgError:
            bounds[f"lambda>=phi0'P_{j + 1}phi0"] = float("inf")
    lam_min = perf.X ** 2 * max(np.linalg.eigvalsh(np.linalg.inv(Lk))[-1] for Lk in perf.L)
    bounds["Lambda>=X^2 lmax(L^-1)"] = float(lam_min - result.Lam)
    bounds["budget"] = float(result.lam + result.Lam - min(perf.f2, perf.f_inf))
    rep = CertificateReport(margins, bounds, float(tolerance))
    if rep.failing:
        raise CertificateInvalid(
            "certificate check failed for " + ", ".join(
                f"{n} (max eig {margins[n]:.3e})" for n in rep.failing), rep.failing)
    return rep


def gains_from_reference(reference: Mapping[str, Any]) -> np.ndarray:
    return np.array(reference["gains"], dtype=float)
