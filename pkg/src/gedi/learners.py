"""Small deterministic learners: ridge, logistic regression and boosted stumps.

All three consume a plain numeric feature matrix. Classification models
predict probabilities; labels are ``1{p >= 0.5}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DegenerateLabels, LengthMismatch, NonFiniteInput, SchemaMismatch, SpecError
from .indicators import CLASSIFICATION, REGRESSION

RIDGE = "ridge"
LOGISTIC = "logistic"
GB = "gb"

GRAD_TOL = 1e-6


@dataclass(frozen=True)
class LearnerSpec:
    """Learner kind and its hyperparameters.

    Only the fields relevant to ``kind`` are used: ``l2`` by ridge and
    logistic, ``lr``/``epochs`` by logistic, ``n_trees``/``learning_rate``/
    ``max_bins`` by the stump ensemble. ``degree`` expands every feature into
    its powers ``1..degree`` before a linear model sees it.
    """

    kind: str = RIDGE
    l2: float = 0.0
    lr: float = 0.5
    epochs: int = 5000
    n_trees: int = 100
    learning_rate: float = 0.1
    max_bins: int = 32
    degree: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (RIDGE, LOGISTIC, GB):
            raise SpecError(f"unknown learner {self.kind!r}")
        if not np.isfinite(self.l2) or self.l2 < 0:
            raise SpecError("l2 must be a non-negative number")
        if not self.lr > 0 or not self.learning_rate > 0:
            raise SpecError("learning rates must be positive")
        if self.epochs < 1 or self.n_trees < 1:
            raise SpecError("epochs and n_trees must be >= 1")
        if self.degree < 1:
            raise SpecError("degree must be >= 1")
        if self.max_bins < 2:
            raise SpecError("max_bins must be >= 2")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> LearnerSpec:
        """Parse ``ridge:<l2>``, ``logistic:<lr>,<epochs>`` or ``gb:<n_trees>,<lr>``.

        Trailing parameters may be omitted (``ridge``, ``gb``) to get the
        defaults. Linear learners accept an extra feature degree, as in
        ``ridge:0,5`` or ``logistic:0.5,2000,3``.
        """
        kind, _, rest = text.strip().partition(":")
        parts = [p for p in rest.split(",") if p.strip()] if rest else []
        try:
            if kind == RIDGE and len(parts) <= 2:
                kw = {"l2": float(parts[0])} if parts else {}
                if len(parts) > 1:
                    kw["degree"] = int(parts[1])
                return cls(RIDGE, seed=seed, **kw)
            if kind == LOGISTIC and len(parts) <= 3:
                kw = {}
                if parts:
                    kw["lr"] = float(parts[0])
                if len(parts) > 1:
                    kw["epochs"] = int(parts[1])
                if len(parts) > 2:
                    kw["degree"] = int(parts[2])
                return cls(LOGISTIC, seed=seed, **kw)
            if kind == GB and len(parts) <= 2:
                kw = {}
                if parts:
                    kw["n_trees"] = int(parts[0])
                if len(parts) > 1:
                    kw["learning_rate"] = float(parts[1])
                return cls(GB, seed=seed, **kw)
        except ValueError:
            raise SpecError(f"bad learner parameters in {text!r}") from None
        raise SpecError(f"cannot parse learner {text!r}")

    @property
    def differentiable(self) -> bool:
        return self.kind in (RIDGE, LOGISTIC)


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left: float
    right: float

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left, self.right)


@dataclass(frozen=True, eq=False)
class LearnerModel:
    """A fitted model. Immutable, so it can be shared for prediction.

    Linear kinds store ``coef``/``intercept`` on the raw feature scale; the
    stump ensemble stores ``base`` and its ``stumps``.
    """

    kind: str
    task: str
    n_features: int
    coef: np.ndarray | None = None
    intercept: float = 0.0
    base: float = 0.0
    stumps: tuple[Stump, ...] = ()
    learning_rate: float = 1.0
    degree: int = 1
    info: dict = field(default_factory=dict, compare=False)

    def decision(self, X: np.ndarray) -> np.ndarray:
        """Raw score: the linear predictor or the boosted sum (log-odds for classification)."""
        X = _matrix(X)
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        if self.kind == GB:
            out = np.full(X.shape[0], self.base)
            for s in self.stumps:
                out += self.learning_rate * s(X)
            return out
        return expand(X, self.degree) @ self.coef + self.intercept


def _matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise SpecError("feature matrix must be 2-D")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("feature matrix contains non-finite values")
    return X


def expand(X: np.ndarray, degree: int) -> np.ndarray:
    """Columns ``X, X**2, ..., X**degree`` (no cross terms)."""
    if degree == 1:
        return X
    return np.hstack([X**p for p in range(1, degree + 1)])


def _check(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = _matrix(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise LengthMismatch(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if y.size == 0:
        raise SpecError("cannot fit on an empty dataset")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("targets contain non-finite values")
    return X, y


def fit_ridge(X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    """Minimise ``||X w + b - y||^2 + l2 ||w||^2`` exactly (intercept unpenalized)."""
    mu, ybar = X.mean(axis=0), y.mean()
    Xc, yc = X - mu, y - ybar
    if l2 > 0:
        A = np.vstack([Xc, np.sqrt(l2) * np.eye(X.shape[1])])
        b = np.concatenate([yc, np.zeros(X.shape[1])])
    else:
        A, b = Xc, yc
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    return w, float(ybar - mu @ w)


def fit_logistic(
    X: np.ndarray, y: np.ndarray, lr: float, epochs: int, l2: float
) -> tuple[np.ndarray, float, int, float]:
    """Full-batch gradient descent on mean cross-entropy plus ``l2/2 ||w||^2``.

    Runs on standardized features and maps the result back. ``y`` may hold
    soft labels in ``[0, 1]``. Returns ``(coef, intercept, epochs_run, grad_norm)``.
    """
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    n = y.size
    w = np.zeros(X.shape[1])
    b = float(np.log(np.clip(y.mean(), 1e-6, 1 - 1e-6) / np.clip(1 - y.mean(), 1e-6, 1)))
    gnorm = np.inf
    epoch = 0
    for epoch in range(1, epochs + 1):
        r = expit(Z @ w + b) - y
        gw = Z.T @ r / n + l2 * w
        gb = r.mean()
        gnorm = float(np.sqrt(gw @ gw + gb * gb))
        if gnorm <= GRAD_TOL:
            break
        w -= lr * gw
        b -= lr * gb
    coef = w / sd
    return coef, float(b - mu @ coef), epoch, gnorm


def candidate_thresholds(col: np.ndarray, max_bins: int) -> np.ndarray:
    """Split points for one feature: midpoints between quantile cut values and their successors."""
    u = np.unique(col)
    if u.size < 2:
        return np.empty(0)
    if u.size <= max_bins:
        return (u[:-1] + u[1:]) / 2.0
    cuts = np.unique(np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower"))
    nxt = u[np.searchsorted(u, cuts, side="right")]
    return (cuts + nxt) / 2.0


def _best_stump(X, g, h, thresholds) -> Stump | None:
    """Split maximising ``G_L^2 / H_L + G_R^2 / H_R`` with Newton leaf values ``-G / H``."""
    G, H = g.sum(), h.sum()
    best_gain, best = G * G / H, None
    for j, ts in enumerate(thresholds):
        if ts.size == 0:
            continue
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        cg, ch = np.cumsum(g[order]), np.cumsum(h[order])
        pos = np.searchsorted(col[order], ts, side="right")  # samples with x <= t
        gl, hl = cg[pos - 1], ch[pos - 1]
        gr, hr = G - gl, H - hl
        ok = (hl > 0) & (hr > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(ok, gl * gl / hl + gr * gr / hr, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain * (1 + 1e-12) + 1e-300:
            best_gain = gain[i]
            best = Stump(j, float(ts[i]), float(-gl[i] / hl[i]), float(-gr[i] / hr[i]))
    return best


def fit_stumps(X: np.ndarray, y: np.ndarray, spec: LearnerSpec, task: str) -> tuple[float, tuple[Stump, ...]]:
    thresholds = [candidate_thresholds(X[:, j], spec.max_bins) for j in range(X.shape[1])]
    if task == CLASSIFICATION:
        p0 = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        base = float(np.log(p0 / (1 - p0)))
    else:
        base = float(y.mean())
    score = np.full(y.size, base)
    stumps = []
    for _ in range(spec.n_trees):
        if task == CLASSIFICATION:
            p = expit(score)
            g, h = p - y, np.maximum(p * (1 - p), 1e-12)
        else:
            g, h = score - y, np.ones_like(y)
        s = _best_stump(X, g, h, thresholds)
        if s is None:
            break
        stumps.append(s)
        score += spec.learning_rate * s(X)
    return base, tuple(stumps)


def fit(spec: LearnerSpec, X, y, task: str = REGRESSION) -> LearnerModel:
    """Fit ``spec`` on ``(X, y)``. Classification targets may be soft labels in ``[0, 1]``."""
    X, y = _check(X, y)
    if task not in (REGRESSION, CLASSIFICATION):
        raise SpecError(f"unknown task {task!r}")
    if task == CLASSIFICATION:
        if np.any((y < 0) | (y > 1)):
            raise SpecError("classification targets must lie in [0, 1]")
        if spec.kind != RIDGE and np.ptp(y) == 0:
            raise DegenerateLabels("classification targets hold a single class")
    d = X.shape[1]
    if spec.kind == RIDGE:
        w, b = fit_ridge(expand(X, spec.degree), y, spec.l2)
        return LearnerModel(RIDGE, task, d, coef=w, intercept=b, degree=spec.degree)
    if spec.kind == LOGISTIC:
        if task != CLASSIFICATION:
            raise SpecError("the logistic learner needs a classification task")
        w, b, epochs, gnorm = fit_logistic(expand(X, spec.degree), y, spec.lr, spec.epochs, spec.l2)
        info = {"epochs": epochs, "grad_norm": gnorm}
        return LearnerModel(LOGISTIC, task, d, coef=w, intercept=b, degree=spec.degree, info=info)
    base, stumps = fit_stumps(X, y, spec, task)
    return LearnerModel(GB, task, d, base=base, stumps=stumps, learning_rate=spec.learning_rate)


def predict(model: LearnerModel, X) -> np.ndarray:
    """Regression values or class-1 probabilities."""
    score = model.decision(X)
    if model.task == REGRESSION:
        return score
    if model.kind == RIDGE:
        return np.clip(score, 0.0, 1.0)
    return expit(score)


def predict_labels(model: LearnerModel, X) -> np.ndarray:
    return (predict(model, X) >= 0.5).astype(float)
