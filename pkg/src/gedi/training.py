"""Constraint-enforcing training: Moving Targets and a Lagrangian-dual penalty.

Moving Targets alternates a master step, which projects a blend of the
current predictions and the original targets onto the constraint, with a
learner step that refits the model on the projected targets.

The penalty method descends the model parameters on
``loss + lambda^T P`` and raises the multipliers by ``rho * P`` once per
epoch. The map from predictions to kernel coefficients is linear
(``alpha = M yhat``), so the penalty gradient is available in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .constraints import COARSE, ConstraintSpec, violations_from_alpha
from .errors import NonDifferentiableLearner, SpecError
from .indicators import CLASSIFICATION, REGRESSION, CoefficientMap, gedi
from .kernel import DEFAULT_RTOL, as_vector
from .learners import GRAD_TOL, LOGISTIC, LearnerModel, LearnerSpec, _check, expand, fit, predict
from .projection import project_regression, project_relaxed
from .report import metric

log = logging.getLogger(__name__)

HARMONIC = "harmonic"
CONSTANT = "constant"
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MtConfig:
    iterations: int = 10
    alpha_schedule: str = HARMONIC
    alpha: float = 1.0
    tol: float = 1e-8
    learner: LearnerSpec = field(default_factory=LearnerSpec)

    def __post_init__(self):
        if self.iterations < 1:
            raise SpecError("Moving Targets needs at least one iteration")
        if self.alpha_schedule not in (HARMONIC, CONSTANT):
            raise SpecError(f"unknown alpha schedule {self.alpha_schedule!r}")
        if not self.alpha > 0:
            raise SpecError("alpha must be positive")

    def alpha_at(self, i: int) -> float:
        return 1.0 / i if self.alpha_schedule == HARMONIC else self.alpha


@dataclass(frozen=True)
class SbrConfig:
    """Settings of the penalty method.

    ``lr`` is the Adam step size for the model parameters and ``rho`` the
    multiplier step. With ``decay="sqrt"`` the step at epoch ``t`` is
    ``lr / sqrt(t)``; a constant step keeps oscillating around the kink of
    ``|alpha|``. The model starts from the unconstrained fit.
    """

    rho: float = 1.0
    lr: float = 0.05
    epochs: int = 2000
    tol: float = 1e-6
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    beta1: float = 0.9
    beta2: float = 0.999
    decay: str = "sqrt"

    def __post_init__(self):
        if not self.rho > 0:
            raise SpecError("multiplier step rho must be positive")
        if not self.lr > 0:
            raise SpecError("learning rate must be positive")
        if self.epochs < 1:
            raise SpecError("epochs must be >= 1")
        if self.decay not in ("sqrt", "none"):
            raise SpecError(f"unknown step decay {self.decay!r}")


@dataclass
class TrainResult:
    model: LearnerModel
    trace: list[dict]
    constraint: ConstraintSpec
    converged: bool = True
    lam: np.ndarray | None = None


def _setup(X, x_prot, y, cs: ConstraintSpec, task: str):
    X, y = _check(X, y)
    x_prot = as_vector(x_prot, "x_prot")
    if x_prot.size != y.size:
        raise SpecError(f"protected attribute has {x_prot.size} entries, targets {y.size}")
    if task not in (REGRESSION, CLASSIFICATION):
        raise SpecError(f"unknown task {task!r}")
    return X, x_prot, y, cs.resolve(x_prot, y)


def moving_targets(
    X, x_prot, y, cs: ConstraintSpec, mt: MtConfig = MtConfig(), task: str = REGRESSION
) -> TrainResult:
    """Train with Moving Targets.

    Relative bounds are resolved on the original ``y``. The master step
    minimises ``||z - p||^2 + a_i ||z - y||^2``, which is the projection of
    ``(p + a_i y) / (1 + a_i)``. Classification masters work on the
    ``[0, 1]`` relaxation and the learner is refit on the relaxed targets.
    """
    X, x_prot, y, cs = _setup(X, x_prot, y, cs, task)
    model = fit(mt.learner, X, y, task)
    trace = []
    for i in range(1, mt.iterations + 1):
        p = predict(model, X)
        a = mt.alpha_at(i)
        anchor = (p + a * y) / (1.0 + a)
        if task == REGRESSION:
            proj = project_regression(x_prot, anchor, cs, tol=mt.tol * 1e-2)
        else:
            proj = project_relaxed(x_prot, anchor, cs, tol=mt.tol)
        z = proj.z
        master = float(np.sum((z - p) ** 2) + a * np.sum((z - y) ** 2))
        model = fit(mt.learner, X, z, task)
        pred = predict(model, X)
        g = gedi(x_prot, pred, cs.kernel)
        viol = float(violations_from_alpha(g.alpha_tilde, cs).sum())
        trace.append(
            {
                "iteration": i,
                "alpha": a,
                "master_objective": master,
                "master_violation": float(proj.violation),
                "metric": metric(task, pred, y),
                "gedi": g.value,
                "violation": viol,
            }
        )
        log.debug("mt iteration %d: gedi %.4g, violation %.3g", i, g.value, viol)
    return TrainResult(model, trace, cs, converged=trace[-1]["violation"] <= cs.tol)


def penalty_vector(yhat, x_prot, cs: ConstraintSpec, cmap: CoefficientMap | None = None) -> np.ndarray:
    """Violations ``P`` of ``yhat``: one entry for coarse mode, ``k`` otherwise."""
    if cs.relative:
        raise SpecError("resolve relative bounds before computing penalties")
    cmap = cmap or CoefficientMap.from_data(x_prot, cs.kernel, DEFAULT_RTOL)
    return violations_from_alpha(cmap(np.asarray(yhat, dtype=float)), cs)


def penalty_gradient(
    yhat, x_prot, cs: ConstraintSpec, weights=None, cmap: CoefficientMap | None = None
) -> np.ndarray:
    """Gradient of ``weights^T P(yhat)`` with respect to ``yhat``.

    ``alpha = M yhat`` is linear, so an active coarse term contributes
    ``M^T sign(alpha)`` and an active per-coefficient term ``sign(alpha_j) M_j``.
    Inactive terms contribute 0 and ``sign(0) = 0`` at kinks.
    """
    if cs.relative:
        raise SpecError("resolve relative bounds before computing penalties")
    cmap = cmap or CoefficientMap.from_data(x_prot, cs.kernel, DEFAULT_RTOL)
    m = cmap.matrix
    alpha = cmap(np.asarray(yhat, dtype=float))
    viol = violations_from_alpha(alpha, cs)
    w = np.ones(viol.size) if weights is None else np.asarray(weights, dtype=float)
    if cs.mode == COARSE:
        coef = np.sign(alpha) * (w[0] if viol[0] > 0 else 0.0)
    else:
        coef = np.sign(alpha) * np.where(viol > 0, w, 0.0)
    return m.T @ coef


def sbr_train(
    X, x_prot, y, cs: ConstraintSpec, sc: SbrConfig = SbrConfig(), task: str = REGRESSION
) -> TrainResult:
    """Train a linear model with multiplier-weighted GeDI penalties.

    Each epoch takes one full-batch Adam step on ``loss + lambda^T P`` and
    then one ascent step ``lambda += rho * P``. Classification uses predicted
    probabilities inside the indicator. The loss is the mean squared error
    (regression) or the mean cross-entropy (classification) plus the
    learner's ``l2 / 2 ||w||^2`` term.
    """
    if not sc.learner.differentiable:
        raise NonDifferentiableLearner(f"learner {sc.learner.kind!r} has no gradient")
    X, x_prot, y, cs = _setup(X, x_prot, y, cs, task)
    if sc.learner.kind == LOGISTIC and task != CLASSIFICATION:
        raise SpecError("the logistic learner needs a classification task")
    cmap = CoefficientMap.from_data(x_prot, cs.kernel, DEFAULT_RTOL)
    base = fit(sc.learner, X, y, task)
    d = X.shape[1]
    X = expand(X, sc.learner.degree)
    logistic = task == CLASSIFICATION
    n = y.size

    # Optimise on standardized features for a well-scaled Adam step.
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    theta = np.concatenate([base.coef * sd, [base.intercept + mu @ base.coef]])
    A = np.hstack([Z, np.ones((n, 1))])
    l2 = sc.learner.l2

    def forward(th):
        s = A @ th
        return expit(s) if logistic else s

    def loss_and_grad(th, lam):
        f = forward(th)
        if logistic:
            fc = np.clip(f, 1e-12, 1 - 1e-12)
            loss = -np.mean(y * np.log(fc) + (1 - y) * np.log(1 - fc))
            dscore = (f - y) / n
        else:
            loss = np.mean((f - y) ** 2)
            dscore = 2.0 * (f - y) / n
        reg = 0.5 * l2 * float(th[:-1] @ th[:-1])
        g = A.T @ dscore
        g[:-1] += l2 * th[:-1]
        dpen = penalty_gradient(f, x_prot, cs, weights=lam, cmap=cmap)
        if logistic:
            dpen = dpen * f * (1 - f)
        return loss + reg, g + A.T @ dpen, f

    k = 1 if cs.mode == COARSE else cs.kernel.order
    lam = np.zeros(k)
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    trace = []
    for epoch in range(1, sc.epochs + 1):
        loss, g, _ = loss_and_grad(theta, lam)
        # Adam normalises the gradient, so skip stationary points instead of
        # taking full-size steps on rounding noise.
        if np.linalg.norm(g) > GRAD_TOL:
            m1 = sc.beta1 * m1 + (1 - sc.beta1) * g
            m2 = sc.beta2 * m2 + (1 - sc.beta2) * g * g
            mhat = m1 / (1 - sc.beta1**epoch)
            vhat = m2 / (1 - sc.beta2**epoch)
            step = sc.lr / np.sqrt(epoch) if sc.decay == "sqrt" else sc.lr
            theta = theta - step * mhat / (np.sqrt(vhat) + ADAM_EPS)
        P = penalty_vector(forward(theta), x_prot, cs, cmap)
        lam = lam + sc.rho * P
        trace.append(
            {
                "epoch": epoch,
                "loss": float(loss),
                "violations": [float(v) for v in P],
                "lambda": [float(v) for v in lam],
            }
        )

    coef = theta[:-1] / sd
    model = LearnerModel(
        sc.learner.kind,
        task,
        d,
        coef=coef,
        intercept=float(theta[-1] - mu @ coef),
        degree=sc.learner.degree,
    )
    final = float(sum(trace[-1]["violations"]))
    converged = final <= sc.tol
    if not converged:
        log.warning("penalty training ended with violation %.3g > %.1g", final, sc.tol)
    return TrainResult(model, trace, cs, converged=converged, lam=lam)


def with_seed(cfg, seed: int):
    """Copy of an ``MtConfig``/``SbrConfig`` whose learner uses ``seed``."""
    return replace(cfg, learner=replace(cfg.learner, seed=seed))
