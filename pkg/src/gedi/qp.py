"""Euclidean projection onto polyhedra.

Solves ``min 1/2 ||z - y0||^2`` subject to ``C z = d``, ``A z <= b``,
optional L1-norm blocks ``||B z||_1 <= c`` and optional box bounds.

Without box bounds the problem is solved exactly by the dual active-set
method of Goldfarb and Idnani specialised to an identity Hessian. It starts
at the unconstrained minimiser ``y0`` and adds violated constraints one at a
time, so it needs no feasible starting point and detects infeasibility. An
L1 block stands for all ``2^k`` facet inequalities ``s^T B z <= c``
(``s`` a sign vector); only the most violated facet ``sign(B z)`` is ever
generated.

Box bounds would make the active set as large as ``n``, so they are split
off with ADMM whose ``z``-step is the exact polyhedral projection above.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import Infeasible, MaxIterations, SpecError

log = logging.getLogger(__name__)

_DEP_TOL = 1e-10


@dataclass
class QpProblem:
    anchor: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    l1_blocks: list[tuple[np.ndarray, float]] = field(default_factory=list)
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float).ravel()
        n = self.anchor.size
        self.eq_matrix, self.eq_rhs = _rows(self.eq_matrix, self.eq_rhs, n, "equality")
        self.ineq_matrix, self.ineq_rhs = _rows(self.ineq_matrix, self.ineq_rhs, n, "inequality")
        blocks = []
        for mat, c in self.l1_blocks:
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            if mat.shape[1] != n:
                raise SpecError(f"L1 block has {mat.shape[1]} columns, expected {n}")
            if c < 0:
                raise SpecError("L1 block bound must be non-negative")
            blocks.append((mat, float(c)))
        self.l1_blocks = blocks
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy())
        if self.lower is not None and self.upper is not None and np.any(self.lower > self.upper):
            raise Infeasible("box bounds are empty")

    @property
    def n(self) -> int:
        return self.anchor.size

    @property
    def has_box(self) -> bool:
        return self.lower is not None or self.upper is not None

    def objective(self, z: np.ndarray) -> float:
        return 0.5 * float(np.sum((z - self.anchor) ** 2))

    def max_violation(self, z: np.ndarray) -> float:
        """Largest absolute constraint violation of ``z`` (0 when feasible)."""
        worst = 0.0
        if len(self.eq_rhs):
            worst = max(worst, float(np.max(np.abs(self.eq_matrix @ z - self.eq_rhs))))
        if len(self.ineq_rhs):
            worst = max(worst, float(np.max(self.ineq_matrix @ z - self.ineq_rhs)))
        for mat, c in self.l1_blocks:
            worst = max(worst, float(np.abs(mat @ z).sum() - c))
        if self.lower is not None:
            worst = max(worst, float(np.max(self.lower - z)))
        if self.upper is not None:
            worst = max(worst, float(np.max(z - self.upper)))
        return worst


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    max_violation: float
    method: str
    n_active: int = 0


def _rows(mat, rhs, n, what):
    if mat is None:
        return np.zeros((0, n)), np.zeros(0)
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    if mat.shape != (rhs.size, n):
        raise SpecError(f"{what} system has shape {mat.shape} with {rhs.size} right-hand sides for n={n}")
    return mat, rhs


def _normalise(mat, rhs):
    norms = np.linalg.norm(mat, axis=1)
    zero = norms == 0
    norms = np.where(zero, 1.0, norms)
    return mat / norms[:, None], rhs / norms, zero


def _independent_equalities(mat, rhs):
    """Drop linearly dependent equality rows (warning), detecting inconsistency."""
    if mat.shape[0] == 0:
        return mat, rhs
    _, r, piv = qr(mat.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    keep = piv[diag > _DEP_TOL * max(diag[0], 1.0)] if diag.size else piv[:0]
    if keep.size < mat.shape[0]:
        warnings.warn(
            f"dropped {mat.shape[0] - keep.size} linearly dependent equality row(s)", stacklevel=3
        )
        kept = np.sort(keep)
        # Dependent rows must be consistent with the kept ones.
        sol, *_ = np.linalg.lstsq(mat[kept], rhs[kept], rcond=None)
        if np.max(np.abs(mat @ sol - rhs)) > 1e-8 * max(1.0, np.max(np.abs(rhs))):
            raise Infeasible("equality constraints are inconsistent")
        return mat[kept], rhs[kept]
    return mat, rhs


class _ActiveSet:
    """Working set of constraint normals with a QR factorization."""

    def __init__(self, n: int):
        self.n = n
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.is_eq: list[bool] = []
        self.keys: list[object] = []
        self.u = np.zeros(0)
        self._q = np.zeros((n, 0))
        self._r = np.zeros((0, 0))

    def __len__(self):
        return len(self.rows)

    def _refactor(self):
        if self.rows:
            self._q, self._r = np.linalg.qr(np.column_stack(self.rows))
        else:
            self._q, self._r = np.zeros((self.n, 0)), np.zeros((0, 0))

    def directions(self, normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Primal step ``d`` (normal projected off the active span) and dual step ``r``."""
        if not self.rows:
            return normal.copy(), np.zeros(0)
        proj = self._q.T @ normal
        d = normal - self._q @ proj
        r = solve_triangular(self._r, proj)
        return d, r

    def add(self, row, rhs, is_eq, key, u_new):
        self.rows.append(row)
        self.rhs.append(rhs)
        self.is_eq.append(is_eq)
        self.keys.append(key)
        self.u = np.append(self.u, u_new)
        self._refactor()

    def drop(self, j):
        for seq in (self.rows, self.rhs, self.is_eq, self.keys):
            del seq[j]
        self.u = np.delete(self.u, j)
        self._refactor()


def _polyhedral_projection(
    y0: np.ndarray,
    eq: tuple[np.ndarray, np.ndarray],
    ineq: tuple[np.ndarray, np.ndarray],
    blocks: list[tuple[np.ndarray, float]],
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, _ActiveSet, int]:
    n = y0.size
    z = y0.copy()
    act = _ActiveSet(n)
    iters = 0
    eq_m, eq_b = eq
    in_m, in_b = ineq

    def add_constraint(normal, rhs, is_eq, key):
        nonlocal z, iters
        u_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise MaxIterations(f"active-set method exceeded {max_iter} iterations")
            slack = float(normal @ z - rhs)
            d, r = act.directions(normal)
            dd = float(d @ d)
            t1 = slack / dd if dd > _DEP_TOL**2 else np.inf
            t2, drop = np.inf, None
            for j in range(len(act)):
                if not act.is_eq[j] and r[j] > _DEP_TOL:
                    ratio = act.u[j] / r[j]
                    if ratio < t2:
                        t2, drop = ratio, j
            if not np.isfinite(t1) and not np.isfinite(t2):
                raise Infeasible("constraints are infeasible")
            t = min(t1, t2)
            t = max(t, 0.0)
            if np.isfinite(t1):
                z = z - t * d
            if len(act):
                act.u = act.u - t * r
            u_p += t
            if t1 <= t2:
                act.add(normal, rhs, is_eq, key, u_p)
                return
            act.u[drop] = 0.0
            act.drop(drop)

    for i in range(eq_b.size):
        normal, rhs = eq_m[i], eq_b[i]
        if normal @ z - rhs < 0:
            normal, rhs = -normal, -rhs
        add_constraint(normal, rhs, True, ("eq", i))

    while True:
        best, best_item = tol, None
        if in_b.size:
            slack = in_m @ z - in_b
            for key in act.keys:
                if key[0] == "in":
                    slack[key[1]] = -np.inf
            i = int(np.argmax(slack))
            if slack[i] > best:
                best, best_item = slack[i], (in_m[i], in_b[i], ("in", i))
        for bi, (mat, c) in enumerate(blocks):
            w = mat @ z
            signs = np.where(w >= 0, 1.0, -1.0)
            row = signs @ mat
            norm = np.linalg.norm(row)
            if norm == 0:
                continue
            viol = (np.abs(w).sum() - c) / norm
            key = ("l1", bi, tuple(signs))
            if viol > best and key not in act.keys:
                best, best_item = viol, (row / norm, c / norm, key)
        if best_item is None:
            return z, act, iters
        add_constraint(best_item[0], best_item[1], False, best_item[2])


def _kkt_residual(problem: QpProblem, z: np.ndarray, act: _ActiveSet) -> float:
    """Max of primal violation, negative multipliers, stationarity and complementarity."""
    primal = max(problem.max_violation(z), 0.0)
    if len(act):
        normals = np.column_stack(act.rows)
        station = float(np.max(np.abs(z - problem.anchor + normals @ act.u)))
        ineq_u = act.u[~np.asarray(act.is_eq)]
        dual = float(max(0.0, -ineq_u.min())) if ineq_u.size else 0.0
        slack = normals.T @ z - np.asarray(act.rhs)
        comp = float(np.max(np.abs(act.u * slack)))
    else:
        station = float(np.max(np.abs(z - problem.anchor))) if z.size else 0.0
        dual = comp = 0.0
    return max(primal, station, dual, comp)


def solve_constrained_ls(problem: QpProblem, tol: float = 1e-10, max_iter: int = 10_000) -> QpSolution:
    """Project ``problem.anchor`` onto the feasible set.

    Raises :class:`Infeasible` when the constraints have no common point and
    :class:`MaxIterations` when the iteration budget is exhausted.
    """
    eq_m, eq_b, eq_zero = _normalise(problem.eq_matrix, problem.eq_rhs)
    if np.any(eq_zero & (np.abs(problem.eq_rhs) > tol)):
        raise Infeasible("equality row 0 = d with d != 0")
    eq_m, eq_b = eq_m[~eq_zero], eq_b[~eq_zero]
    eq_m, eq_b = _independent_equalities(eq_m, eq_b)
    in_m, in_b, in_zero = _normalise(problem.ineq_matrix, problem.ineq_rhs)
    if np.any(in_zero & (problem.ineq_rhs < -tol)):
        raise Infeasible("inequality row 0 <= b with b < 0")
    in_m, in_b = in_m[~in_zero], in_b[~in_zero]
    blocks = problem.l1_blocks

    if not problem.has_box:
        z, act, iters = _polyhedral_projection(problem.anchor, (eq_m, eq_b), (in_m, in_b), blocks, tol, max_iter)
        return QpSolution(
            z=z,
            objective=problem.objective(z),
            iterations=iters,
            kkt_residual=_kkt_residual(problem, z, act),
            max_violation=problem.max_violation(z),
            method="dual-active-set",
            n_active=len(act),
        )
    return _admm_box(problem, (eq_m, eq_b), (in_m, in_b), blocks, tol, max_iter)


def _admm_box(problem, eq, ineq, blocks, tol, max_iter, rho: float = 1.0) -> QpSolution:
    lo = problem.lower if problem.lower is not None else np.full(problem.n, -np.inf)
    hi = problem.upper if problem.upper is not None else np.full(problem.n, np.inf)
    y0 = problem.anchor
    has_poly = eq[1].size or ineq[1].size or blocks
    if not has_poly:
        z = np.clip(y0, lo, hi)
        return QpSolution(z, problem.objective(z), 1, 0.0, problem.max_violation(z), "clip")
    v = np.clip(y0, lo, hi)
    u = np.zeros_like(y0)
    # Tolerances are on the scale of the data; keep them meaningful for large anchors.
    scale = max(1.0, float(np.max(np.abs(y0))))
    for it in range(1, max_iter + 1):
        point = (y0 + rho * (v - u)) / (1.0 + rho)
        z, _, _ = _polyhedral_projection(point, eq, ineq, blocks, 1e-12, 10_000)
        v_old = v
        v = np.clip(z + u, lo, hi)
        u = u + z - v
        primal = float(np.max(np.abs(z - v)))
        dual = rho * float(np.max(np.abs(v - v_old)))
        if primal <= tol * scale and dual <= tol * scale:
            break
    else:
        raise MaxIterations(f"ADMM did not converge in {max_iter} iterations (primal {primal:.2e})")
    # Stationarity of the splitting: y0 - v = rho * u up to the residuals.
    kkt = max(primal, dual, problem.max_violation(v))
    log.debug("ADMM converged after %d iterations (kkt %.2e)", it, kkt)
    return QpSolution(v, problem.objective(v), it, kkt, problem.max_violation(v), "admm")
