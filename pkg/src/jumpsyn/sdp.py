"""Semidefinite feasibility layer.

A :class:`ConicProgram` holds scalar unknowns ``theta`` (the free entries
of declared matrix variables) and constraints of the form

    F(theta) = F0 + sum_p theta_p F_p  <=  -margin * I

with every ``F_p`` symmetric. Expressions are built with :class:`Affine`,
a small dense affine-matrix type, so a program can be evaluated, checked
block by block, dumped in SDPA format, or handed to cvxpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import Infeasible, SolverFailure

log = logging.getLogger(__name__)

DEFAULT_SOLVER = "CLARABEL"
SOLVER_TOL = 1e-8


class Affine:
    """Matrix-valued affine function of the program unknowns.

    ``const`` is the constant part; ``terms`` maps an unknown's index to
    its coefficient matrix.
    """

    __slots__ = ("const", "terms")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, const, terms: Mapping[int, np.ndarray] | None = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = dict(terms or {})

    @property
    def shape(self):
        return self.const.shape

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, {p: c.T for p, c in self.terms.items()})

    def is_constant(self) -> bool:
        return all(not np.any(c) for c in self.terms.values())

    def __add__(self, other):
        other = as_affine(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        terms = dict(self.terms)
        for p, c in other.terms.items():
            terms[p] = terms[p] + c if p in terms else c
        return Affine(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, {p: -c for p, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-as_affine(other))

    def __rsub__(self, other):
        return as_affine(other) - self

    def __mul__(self, s):
        s = float(s)
        return Affine(s * self.const, {p: s * c for p, c in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M, {p: c @ M for p, c in self.terms.items()})

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const, {p: M @ c for p, c in self.terms.items()})

    def value(self, theta) -> np.ndarray:
        out = self.const.copy()
        for p, c in self.terms.items():
            out += theta[p] * c
        return out

    def scaled(self, s: float) -> "Affine":
        return self * s


def as_affine(x) -> Affine:
    return x if isinstance(x, Affine) else Affine(x)


def bmat(grid: Sequence[Sequence[Any]]) -> tuple[Affine, tuple[int, ...]]:
    """Assemble a block matrix; ``None`` entries are zero blocks.

    Returns the assembled expression and the row-block sizes. Every block
    row and column must contain at least one sized entry.
    """
    rows = [[None if b is None else as_affine(b) for b in row] for row in grid]
    heights = [next(b.shape[0] for b in row if b is not None) for row in rows]
    widths = [next(row[c].shape[1] for row in rows if row[c] is not None)
              for c in range(len(rows[0]))]
    r_off = np.concatenate([[0], np.cumsum(heights)])
    c_off = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((r_off[-1], c_off[-1]))
    terms: dict[int, np.ndarray] = {}
    for r, row in enumerate(rows):
        for c, b in enumerate(row):
            if b is None:
                continue
            if b.shape != (heights[r], widths[c]):
                raise ValueError(f"block ({r}, {c}) has shape {b.shape}, expected {(heights[r], widths[c])}")
            rs, cs = slice(r_off[r], r_off[r + 1]), slice(c_off[c], c_off[c + 1])
            const[rs, cs] = b.const
            for p, coef in b.terms.items():
                if p not in terms:
                    terms[p] = np.zeros_like(const)
                terms[p][rs, cs] += coef
    return Affine(const, terms), tuple(heights)


def block_diag(blocks: Sequence[Any]) -> Affine:
    n = len(blocks)
    return bmat([[blocks[r] if r == c else _zeros_like_pair(blocks[r], blocks[c]) for c in range(n)]
                 for r in range(n)])[0]


def _zeros_like_pair(a, b):
    return np.zeros((as_affine(a).shape[0], as_affine(b).shape[1]))


@dataclass(frozen=True)
class VariableHandle:
    name: str
    kind: str  # "symmetric" | "rectangular" | "scalar"
    shape: tuple[int, int]
    offset: int
    size: int

    def unpack(self, theta) -> np.ndarray | float:
        vals = np.asarray(theta[self.offset:self.offset + self.size], dtype=float)
        if self.kind == "scalar":
            return float(vals[0])
        if self.kind == "rectangular":
            return vals.reshape(self.shape)
        n = self.shape[0]
        out = np.zeros((n, n))
        out[np.triu_indices(n)] = vals
        return out + np.triu(out, 1).T

    def pack(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        if self.kind == "scalar":
            return value.reshape(1)
        if self.kind == "rectangular":
            return value.reshape(-1)
        return value[np.triu_indices(self.shape[0])]


@dataclass
class Constraint:
    """``expr <= -margin * I`` (a scalar inequality when ``expr`` is 1x1
    and ``is_matrix`` is False)."""

    name: str
    expr: Affine
    margin: float
    strict: bool
    is_matrix: bool
    blocks: tuple[int, ...] | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.expr.shape[0]

    def max_eig(self, theta) -> float:
        F = self.expr.value(theta)
        return float(np.linalg.eigvalsh(0.5 * (F + F.T))[-1])


@dataclass
class StructuralIssue:
    constraint: str
    block: int  # zero-based diagonal block
    max_eig: float
    required: float
    label: str = ""

    def __str__(self):
        where = f"diagonal block ({self.block + 1},{self.block + 1})"
        if self.label:
            where += f" [{self.label}]"
        return (f"{self.constraint}: {where} is constant with max eigenvalue {self.max_eig:.6g} "
                f"> {self.required:.3g}; no choice of variables can satisfy it")


@dataclass
class Assignment:
    theta: np.ndarray
    values: dict[str, Any]
    margins: dict[str, float]
    status: str
    objective: float | None = None

    def __getitem__(self, name):
        return self.values[name]


class ConicProgram:
    """Declared variables plus affine semidefinite/scalar constraints."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: dict[str, VariableHandle] = {}
        self.constraints: list[Constraint] = []
        self.objective: Affine | None = None
        self.n_scalars = 0

    def _declare(self, name, kind, shape, size) -> VariableHandle:
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        h = VariableHandle(name, kind, shape, self.n_scalars, size)
        self.variables[name] = h
        self.n_scalars += size
        return h

    def symmetric(self, name: str, n: int) -> Affine:
        h = self._declare(name, "symmetric", (n, n), n * (n + 1) // 2)
        terms = {}
        p = h.offset
        for r, c in zip(*np.triu_indices(n)):
            E = np.zeros((n, n))
            E[r, c] = E[c, r] = 1.0
            terms[p] = E
            p += 1
        return Affine(np.zeros((n, n)), terms)

    def rectangular(self, name: str, m: int, n: int) -> Affine:
        h = self._declare(name, "rectangular", (m, n), m * n)
        terms = {}
        for idx in range(m * n):
            E = np.zeros((m, n))
            E.flat[idx] = 1.0
            terms[h.offset + idx] = E
        return Affine(np.zeros((m, n)), terms)

    def scalar(self, name: str) -> Affine:
        h = self._declare(name, "scalar", (1, 1), 1)
        return Affine(np.zeros((1, 1)), {h.offset: np.ones((1, 1))})

    def add(self, name: str, expr: Affine, *, margin: float = 0.0, strict: bool = True,
            blocks: Sequence[int] | None = None, is_matrix: bool | None = None, **meta) -> Constraint:
        """Require ``expr <= -margin * I``."""
        expr = as_affine(expr)
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"constraint {name!r} is not square: {expr.shape}")
        for p in expr.terms:
            if not 0 <= p < self.n_scalars:
                raise ValueError(f"constraint {name!r} references an undeclared unknown {p}")
        asym = max([np.abs(expr.const - expr.const.T).max()]
                   + [np.abs(c - c.T).max() for c in expr.terms.values()])
        if asym > 1e-12 * (1 + np.abs(expr.const).max()):
            raise ValueError(f"constraint {name!r} is not symmetric (asymmetry {asym:g})")
        if is_matrix is None:
            is_matrix = expr.shape[0] > 1
        con = Constraint(name, expr, float(margin if strict else 0.0), strict, is_matrix,
                         tuple(blocks) if blocks is not None else None, dict(meta))
        self.constraints.append(con)
        return con

    def minimize(self, expr: Affine) -> None:
        self.objective = as_affine(expr)

    @property
    def matrix_constraints(self) -> list[Constraint]:
        return [c for c in self.constraints if c.is_matrix]

    @property
    def scalar_constraints(self) -> list[Constraint]:
        return [c for c in self.constraints if not c.is_matrix]

    def constraint(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def unpack(self, theta) -> dict[str, Any]:
        return {name: h.unpack(theta) for name, h in self.variables.items()}

    def pack(self, values: Mapping[str, Any]) -> np.ndarray:
        theta = np.zeros(self.n_scalars)
        for name, h in self.variables.items():
            theta[h.offset:h.offset + h.size] = h.pack(values[name])
        return theta

    def margins(self, theta) -> dict[str, float]:
        return {c.name: c.max_eig(theta) for c in self.constraints}

    def scaled(self, factor: float) -> "ConicProgram":
        """Copy with all constraint data (and margins) multiplied by ``factor``."""
        out = ConicProgram(self.name)
        out.variables = dict(self.variables)
        out.n_scalars = self.n_scalars
        out.objective = self.objective
        for c in self.constraints:
            out.constraints.append(Constraint(c.name, c.expr * factor, c.margin * factor, c.strict,
                                              c.is_matrix, c.blocks, dict(c.meta)))
        return out

    def structural_issues(self) -> list[StructuralIssue]:
        """Diagonal blocks free of unknowns that already violate their bound."""
        issues = []
        for c in self.constraints:
            sizes = c.blocks or (c.size,)
            off = 0
            for b, s in enumerate(sizes):
                sl = slice(off, off + s)
                off += s
                if any(np.any(coef[sl, sl]) for coef in c.expr.terms.values()):
                    continue
                blk = c.expr.const[sl, sl]
                top = float(np.linalg.eigvalsh(0.5 * (blk + blk.T))[-1])
                required = -c.margin
                if top > required:
                    labels = c.meta.get("block_labels", ())
                    issues.append(StructuralIssue(c.name, b, top, required,
                                                  labels[b] if b < len(labels) else ""))
        return issues


def _cvxpy_problem(program: ConicProgram):
    import cvxpy as cp

    theta = cp.Variable(program.n_scalars)
    cons = []
    for c in program.constraints:
        s = c.size
        if s == 1 and not c.is_matrix:
            row = np.zeros(program.n_scalars)
            for p, coef in c.expr.terms.items():
                row[p] = coef[0, 0]
            cons.append(row @ theta + c.expr.const[0, 0] <= -c.margin)
            continue
        G = sp.lil_matrix((s * s, program.n_scalars))
        for p, coef in c.expr.terms.items():
            G[:, p] = coef.reshape(-1, 1)
        expr = cp.reshape(sp.csr_matrix(G) @ theta, (s, s), order="C") + c.expr.const
        cons.append(expr << -c.margin * np.eye(s))
    if program.objective is None:
        obj = cp.Minimize(0)
    else:
        row = np.zeros(program.n_scalars)
        for p, coef in program.objective.terms.items():
            row[p] = coef[0, 0]
        obj = cp.Minimize(row @ theta + program.objective.const[0, 0])
    return cp.Problem(obj, cons), theta


def solve_feasibility(program: ConicProgram, *, solver: str = DEFAULT_SOLVER,
                      tol: float = SOLVER_TOL, check_structure: bool = True,
                      solver_options: Mapping[str, Any] | None = None) -> Assignment:
    """Find a point satisfying every constraint of ``program``.

    Raises :class:`Infeasible` (structural obstruction or solver
    certificate) or :class:`SolverFailure`. A returned assignment has
    been re-checked by dense eigenvalue computation: each constraint
    holds to within ``10 * tol`` relative to its data scale.
    """
    import cvxpy as cp

    if check_structure:
        issues = program.structural_issues()
        if issues:
            raise Infeasible(f"{program.name} is structurally infeasible", [str(i) for i in issues])
    problem, theta = _cvxpy_problem(program)
    try:
        problem.solve(solver=solver, **dict(solver_options or {}))
    except cp.error.SolverError as exc:
        raise SolverFailure(f"{solver} failed on {program.name}: {exc}") from exc
    status = problem.status
    log.debug("%s: solver status %s", program.name, status)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible(f"{program.name} is infeasible", [f"solver status: {status}"])
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or theta.value is None:
        raise SolverFailure(f"{solver} returned status {status!r} on {program.name}")
    x = np.asarray(theta.value, dtype=float)
    margins = program.margins(x)
    bad = []
    for c in program.constraints:
        scale = 1.0 + max([np.abs(c.expr.const).max()]
                          + [np.abs(coef).max() * abs(x[p]) for p, coef in c.expr.terms.items()])
        if margins[c.name] > -c.margin + 10 * tol * scale:
            bad.append(f"{c.name}: max eigenvalue {margins[c.name]:.3e} exceeds {-c.margin:.3e}")
    if bad:
        raise SolverFailure(f"{solver} solution fails the dense re-check on {program.name}: "
                            + "; ".join(bad))
    obj = None if program.objective is None else float(program.objective.value(x)[0, 0])
    return Assignment(theta=x, values=program.unpack(x), margins=margins, status=status, objective=obj)


def write_sdpa(program: ConicProgram, path) -> None:
    """Dump in SDPA sparse format (``F_1 x_1 + ... - F_0 >= 0`` per block)."""
    lines = [f'"{program.name}: each block encodes -(F0 + margin*I) - sum x_p F_p >= 0"',
             str(program.n_scalars), str(len(program.constraints))]
    lines.append(" ".join(str(c.size) if c.is_matrix else f"-{c.size}" for c in program.constraints))
    cvec = np.zeros(program.n_scalars)
    if program.objective is not None:
        for p, coef in program.objective.terms.items():
            cvec[p] = coef[0, 0]
    lines.append(" ".join(repr(float(v)) for v in cvec))

    def emit(mat_no, blk_no, M):
        for r, c in zip(*np.nonzero(np.triu(M))):
            lines.append(f"{mat_no} {blk_no} {r + 1} {c + 1} {float(M[r, c])!r}")

    for b, c in enumerate(program.constraints, start=1):
        emit(0, b, c.expr.const + c.margin * np.eye(c.size))
        for p in sorted(c.expr.terms):
            emit(p + 1, b, -c.expr.terms[p])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def eig_margins(blocks: Iterable[tuple[str, np.ndarray]]) -> dict[str, float]:
    """Max eigenvalue of each named symmetric matrix."""
    return {name: float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1]) for name, M in blocks}
