"""Minimal target adjustments that satisfy a GeDI constraint.

Regression targets are projected in the squared-error sense with the exact
active-set solver. Classification targets are projected on the ``[0, 1]``
relaxation, rounded along the null space of the coefficient map, and then
repaired by greedy flips and nearby swaps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .constraints import (
    COARSE,
    EXCLUSIVE,
    FINE,
    ConstraintReport,
    ConstraintSpec,
    evaluate_constraint,
    violations_from_alpha,
)
from .errors import RepairFailed, SpecError
from .indicators import CoefficientMap, _pair
from .kernel import DEFAULT_RTOL, POLYNOMIAL
from .qp import QpProblem, solve_constrained_ls

log = logging.getLogger(__name__)


@dataclass
class ProjectionResult:
    z: np.ndarray
    objective: float
    violation: float
    iterations: int
    report: ConstraintReport
    hamming: int | None = None
    relaxed: np.ndarray | None = None
    bound: float | tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        out = {
            "objective": float(self.objective),
            "violation": float(self.violation),
            "iterations": int(self.iterations),
            "satisfied": bool(self.report.satisfied),
            "alpha_tilde": [float(a) for a in self.report.alpha_tilde],
        }
        if self.hamming is not None:
            out["hamming"] = int(self.hamming)
        if self.bound is not None:
            out["bound"] = list(self.bound) if isinstance(self.bound, tuple) else float(self.bound)
        return out


def constraint_problem(x: np.ndarray, anchor: np.ndarray, cs: ConstraintSpec, cmap: CoefficientMap) -> QpProblem:
    """Linear encoding of an absolute-bound constraint around ``anchor``.

    Coarse mode becomes an L1 block ``||M z||_1 <= q`` where ``M`` maps targets
    to coefficients. Fine mode bounds each row of ``M``. Polynomial exclusive
    mode uses the covariance equalities
    ``cov(x^j, x) cov(x, z) = cov(x^j, z) var(x)`` for ``j = 2..k`` together
    with ``|cov(x, z)| <= q1 var(x)``, which avoids ``M`` entirely.
    """
    if cs.relative:
        raise SpecError("resolve relative bounds before building the projection problem")
    n = x.size
    if cs.mode == COARSE:
        return QpProblem(anchor, l1_blocks=[(cmap.matrix, cs.bound)])
    if cs.mode == FINE:
        m = cmap.matrix
        q = cs.bounds
        return QpProblem(anchor, ineq_matrix=np.vstack([m, -m]), ineq_rhs=np.concatenate([q, q]))
    # exclusive
    q1 = cs.bound
    if cs.kernel.family == POLYNOMIAL and not cs.kernel.standardize:
        xc = x - x.mean()
        var = float(xc @ xc) / n
        rows = []
        for j in range(2, cs.kernel.order + 1):
            pj = x**j
            pjc = pj - pj.mean()
            cov_jx = float(pjc @ xc) / n
            rows.append((cov_jx * xc - var * pjc) / n)
        eq = np.vstack(rows) if rows else None
        rhs = np.zeros(len(rows)) if rows else None
        lin = xc / n
        return QpProblem(
            anchor,
            eq_matrix=eq,
            eq_rhs=rhs,
            ineq_matrix=np.vstack([lin, -lin]),
            ineq_rhs=np.array([q1 * var, q1 * var]),
        )
    m = cmap.matrix
    return QpProblem(
        anchor,
        eq_matrix=m[1:] if cs.kernel.order > 1 else None,
        eq_rhs=np.zeros(cs.kernel.order - 1) if cs.kernel.order > 1 else None,
        ineq_matrix=np.vstack([m[0], -m[0]]),
        ineq_rhs=np.array([q1, q1]),
    )


def _prepare(x, y, cs: ConstraintSpec, reference, rtol):
    x, y = _pair(x, y)
    if cs.relative:
        cs = cs.resolve(x, y if reference is None else reference)
    cmap = CoefficientMap.from_data(x, cs.kernel, rtol)
    return x, y, cs, cmap


def project_regression(
    x,
    y,
    cs: ConstraintSpec,
    reference=None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    rtol: float = DEFAULT_RTOL,
) -> ProjectionResult:
    """Closest ``z`` to ``y`` (squared error) satisfying ``cs``.

    Relative bounds are resolved against ``reference`` (defaults to ``y``).
    """
    x, y, cs, cmap = _prepare(x, y, cs, reference, rtol)
    # z = mean(y) is always feasible, so the problem below always has a solution.
    sol = solve_constrained_ls(constraint_problem(x, y, cs, cmap), tol=tol, max_iter=max_iter)
    z = sol.z
    report = evaluate_constraint(x, z, cs, rtol=rtol)
    if not report.satisfied:
        log.warning("projection left violation %.3g (tolerance %.1g)", report.total_violation, cs.tol)
    return ProjectionResult(
        z=z,
        objective=float(np.sum((z - y) ** 2)),
        violation=report.total_violation,
        iterations=sol.iterations,
        report=report,
        bound=cs.bound,
    )


def _total_violation(alpha: np.ndarray, cs: ConstraintSpec) -> float:
    return float(violations_from_alpha(alpha, cs).sum())


def _best_move(alpha, z, m, cs, order, window):
    """Best single flip or windowed swap by resulting total violation.

    A swap flips two entries with different values that are at most
    ``window`` apart in the ``x`` ordering; their coefficient columns nearly
    cancel, which gives much finer steps than single flips.
    """
    delta = 1.0 - 2.0 * z  # +1 for 0 -> 1, -1 for 1 -> 0
    step = m * delta[None, :]
    single = violations_from_alpha(alpha[:, None] + step, cs).sum(axis=0)
    i = int(np.argmin(single))
    best_v, best = float(single[i]), (i,)
    zs = z[order]
    step_s = step[:, order]
    for off in range(1, min(window, z.size - 1) + 1):
        diff = zs[:-off] != zs[off:]
        if not diff.any():
            continue
        a_idx = np.flatnonzero(diff)
        cand = alpha[:, None] + step_s[:, a_idx] + step_s[:, a_idx + off]
        v = violations_from_alpha(cand, cs).sum(axis=0)
        j = int(np.argmin(v))
        if v[j] < best_v:
            best_v, best = float(v[j]), (int(order[a_idx[j]]), int(order[a_idx[j] + off]))
    return best_v, best


def iterated_rounding(relaxed: np.ndarray, y: np.ndarray, m: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Make all but at most ``k`` entries of ``relaxed`` integral without changing ``m @ z``.

    Repeatedly takes ``k + 1`` fractional entries, moves them along a null
    vector of the corresponding columns of ``m`` until one hits 0 or 1, and
    picks the direction that does not increase ``sum |z - y|`` (linear along
    the segment).
    """
    k = m.shape[0]
    z = np.clip(relaxed, 0.0, 1.0).copy()
    z[z <= eps] = 0.0
    z[z >= 1.0 - eps] = 1.0
    sign = 1.0 - 2.0 * y  # d|z - y| / dz for binary y
    while True:
        frac = np.flatnonzero((z > 0.0) & (z < 1.0))
        if frac.size <= k:
            return z
        s = frac[: k + 1]
        _, _, vt = np.linalg.svd(m[:, s])
        d = vt[-1]
        d[np.abs(d) < 1e-15] = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(d > 0, (1.0 - z[s]) / d, np.where(d < 0, -z[s] / d, np.inf))
            down = np.where(d > 0, z[s] / d, np.where(d < 0, (z[s] - 1.0) / d, np.inf))
        t_up, t_down = float(np.min(up)), float(np.min(down))
        gain_up, gain_down = t_up * float(sign[s] @ d), -t_down * float(sign[s] @ d)
        t = t_up if gain_up <= gain_down else -t_down
        z[s] = z[s] + t * d
        z[s] = np.where(z[s] <= eps, 0.0, np.where(z[s] >= 1.0 - eps, 1.0, z[s]))
        hit = np.argmin(up) if t > 0 else np.argmin(down)
        z[s[hit]] = np.round(z[s[hit]])


def _walk_to_constant(z, alpha, m, cs, tol, y):
    """Fallback repair: flip entries towards a constant vector until feasible.

    Constant vectors have zero coefficients and so satisfy every constraint;
    each step flips the entry whose flip leaves the smallest violation, and
    the walk stops at the first point within ``tol``. Both constants are
    tried and the result closer to ``y`` wins.
    """
    best = None
    for c in (0.0, 1.0):
        zc, ac = z.copy(), alpha.copy()
        v = _total_violation(ac, cs)
        while v > tol:
            idx = np.flatnonzero(zc != c)
            if idx.size == 0:
                break
            step = m[:, idx] * (2.0 * c - 1.0)
            cand = violations_from_alpha(ac[:, None] + step, cs).sum(axis=0)
            j = int(np.argmin(cand))
            zc[idx[j]] = c
            ac = ac + step[:, j]
            v = float(cand[j])
        key = (v > tol, int(np.sum(zc != y)))
        if best is None or key < best[0]:
            best = (key, zc, ac, v)
    _, z, alpha, viol = best
    return z, alpha, viol


def round_and_repair(
    y: np.ndarray,
    relaxed: np.ndarray,
    cs: ConstraintSpec,
    cmap: CoefficientMap,
    tol: float,
    x: np.ndarray | None = None,
    window: int = 32,
    max_moves: int | None = None,
) -> tuple[np.ndarray, float]:
    """Round a relaxed projection to ``{0, 1}`` and repair it greedily.

    :func:`iterated_rounding` fixes all but ``k`` entries while keeping the
    coefficients of the relaxed solution. The remaining entries are rounded
    largest margin ``|z - 0.5|`` first, each to the value with the smaller
    violation. While the violation exceeds ``tol`` the single flip or nearby
    swap that reduces it most is applied; if that stalls, the vector is walked
    towards a constant (always feasible). Finally, flips away from ``y`` are
    undone (closest to ``y`` in the relaxation first) whenever the constraint
    stays within ``tol``.
    """
    m = cmap.matrix
    z = iterated_rounding(relaxed, y, m)
    frac = np.flatnonzero((z > 0.0) & (z < 1.0))
    for i in frac[np.argsort(-np.abs(z[frac] - 0.5), kind="stable")]:
        lo, hi = z.copy(), z.copy()
        lo[i], hi[i] = 0.0, 1.0
        z = lo if _total_violation(m @ lo, cs) <= _total_violation(m @ hi, cs) else hi
    alpha = m @ z
    viol = _total_violation(alpha, cs)
    order = np.argsort(x, kind="stable") if x is not None else np.arange(z.size)

    for _ in range(max_moves or 2 * z.size):
        if viol <= tol:
            break
        new_v, move = _best_move(alpha, z, m, cs, order, window)
        if new_v >= viol:
            break
        for i in move:
            z[i] = 1.0 - z[i]
            alpha = alpha + m[:, i] * (2.0 * z[i] - 1.0)
        viol = _total_violation(alpha, cs)

    if viol > tol:
        z, alpha, viol = _walk_to_constant(z, alpha, m, cs, tol, y)

    if viol <= tol:
        margin = np.abs(relaxed - y)
        changed = True
        while changed:
            changed = False
            flipped = np.flatnonzero(z != y)
            for i in flipped[np.argsort(margin[flipped], kind="stable")]:
                trial = alpha + m[:, i] * (2.0 * y[i] - 1.0)
                if _total_violation(trial, cs) <= tol:
                    z[i] = y[i]
                    alpha = trial
                    changed = True
        viol = _total_violation(alpha, cs)
    return z, viol


def project_classification(
    x,
    y,
    cs: ConstraintSpec,
    reference=None,
    tol: float = 1e-8,
    max_iter: int = 20_000,
    rtol: float = DEFAULT_RTOL,
    repair_factor: float = 10.0,
) -> ProjectionResult:
    """Binary ``z`` close to ``y`` in Hamming distance satisfying ``cs``.

    The ``[0, 1]`` relaxation is solved exactly up to ADMM accuracy; the
    rounding step is a heuristic, so the achieved violation is reported and
    :class:`RepairFailed` is raised when it exceeds ``repair_factor * cs.tol``.
    """
    x, y, cs, cmap = _prepare(x, y, cs, reference, rtol)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise SpecError("classification targets must be 0/1")
    alpha = cmap(y)
    if _total_violation(alpha, cs) <= cs.tol:
        report = evaluate_constraint(x, y, cs, rtol=rtol)
        return ProjectionResult(y.copy(), 0.0, report.total_violation, 0, report, 0, y.copy(), cs.bound)

    problem = constraint_problem(x, y, cs, cmap)
    problem.lower = np.zeros(y.size)
    problem.upper = np.ones(y.size)
    sol = solve_constrained_ls(problem, tol=tol, max_iter=max_iter)
    relaxed = sol.z
    z, viol = round_and_repair(y, relaxed, cs, cmap, cs.tol, x=x)
    hamming = int(np.sum(z != y))
    if viol > repair_factor * cs.tol:
        raise RepairFailed(
            f"rounding left violation {viol:.3g} > {repair_factor:g} x tolerance {cs.tol:g}",
            z=z,
            violation=viol,
        )
    report = evaluate_constraint(x, z, cs, rtol=rtol)
    return ProjectionResult(
        z=z,
        objective=float(hamming),
        violation=report.total_violation,
        iterations=sol.iterations,
        report=report,
        hamming=hamming,
        relaxed=relaxed,
        bound=cs.bound,
    )


def project_relaxed(
    x,
    anchor,
    cs: ConstraintSpec,
    tol: float = 1e-8,
    max_iter: int = 20_000,
    rtol: float = DEFAULT_RTOL,
) -> ProjectionResult:
    """Squared-error projection of ``anchor`` onto ``cs`` intersected with ``[0, 1]^n``."""
    x, anchor = _pair(x, anchor)
    if cs.relative:
        raise SpecError("resolve relative bounds before projecting a relaxed target")
    cmap = CoefficientMap.from_data(x, cs.kernel, rtol)
    problem = constraint_problem(x, anchor, cs, cmap)
    problem.lower = np.zeros(anchor.size)
    problem.upper = np.ones(anchor.size)
    sol = solve_constrained_ls(problem, tol=tol, max_iter=max_iter)
    report = evaluate_constraint(x, sol.z, cs, rtol=rtol)
    return ProjectionResult(
        z=sol.z,
        objective=float(np.sum((sol.z - anchor) ** 2)),
        violation=report.total_violation,
        iterations=sol.iterations,
        report=report,
        bound=cs.bound,
    )
