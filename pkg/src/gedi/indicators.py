"""GeDI, DIDI and related dependence indicators.

All moments are population moments (divide by ``n``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DegenerateBinning,
    EmptyGroup,
    LengthMismatch,
    SingleClass,
    SingleGroup,
    SpecError,
    ZeroVariance,
)
from .kernel import DEFAULT_RTOL, KernelMatrix, KernelSpec, as_vector, build_kernel, rank_check

REGRESSION = "regression"
CLASSIFICATION = "classification"


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise LengthMismatch(f"x has {x.size} samples but y has {y.size}")
    return x, y


def _label(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


class CoefficientMap:
    """Least-squares map ``y -> alpha_tilde`` for a fixed centered kernel.

    The map is linear in ``y``: ``alpha_tilde = M @ y`` with
    ``M = (F~^T F~)^-1 F~^T``. It is applied through a QR factorization of the
    column-normalised centered kernel; ``M`` itself is only materialised on
    request.
    """

    def __init__(self, km: KernelMatrix, rtol: float = DEFAULT_RTOL):
        rank_check(km, rtol)
        self.kernel = km
        self._scale = np.linalg.norm(km.centered, axis=0)
        self._q, self._r = np.linalg.qr(km.centered / self._scale)

    @classmethod
    def from_data(cls, x, spec: KernelSpec, rtol: float = DEFAULT_RTOL) -> CoefficientMap:
        return cls(build_kernel(x, spec), rtol)

    @property
    def k(self) -> int:
        return self.kernel.k

    @property
    def n(self) -> int:
        return self.kernel.n

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        yc = y - y.mean(axis=0)
        coef = solve_triangular(self._r, self._q.T @ yc)
        return coef / (self._scale if coef.ndim == 1 else self._scale[:, None])

    def fitted(self, y: np.ndarray) -> np.ndarray:
        """Projection of the centered target onto the kernel span."""
        y = np.asarray(y, dtype=float)
        yc = y - y.mean(axis=0)
        return self._q @ (self._q.T @ yc)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = solve_triangular(self._r, self._q.T) / self._scale[:, None]
        m.setflags(write=False)
        return m


@dataclass(frozen=True)
class GediResult:
    value: float
    alpha_tilde: np.ndarray
    residual_mse: float
    kernel: str = ""

    @property
    def d_star_abs(self) -> float:
        return self.value

    @property
    def per_basis(self) -> np.ndarray:
        return np.abs(self.alpha_tilde)

    @property
    def alpha_star(self) -> np.ndarray | None:
        """Normalised coefficients, undefined (``None``) when the indicator is 0."""
        if self.value == 0.0:
            return None
        return self.alpha_tilde / self.value

    def to_dict(self) -> dict:
        return {
            "indicator": "gedi",
            "kernel": self.kernel,
            "value": float(self.value),
            "alpha_tilde": [float(a) for a in self.alpha_tilde],
            "residual_mse": float(self.residual_mse),
            "per_group": {},
        }


@dataclass(frozen=True)
class DidiResult:
    value: float
    per_group: dict[str, float] = field(default_factory=dict)
    n_groups: int = 0
    indicator: str = "didi"

    def to_dict(self) -> dict:
        return {
            "indicator": self.indicator,
            "kernel": None,
            "value": float(self.value),
            "alpha_tilde": [],
            "residual_mse": None,
            "per_group": {g: float(v) for g, v in self.per_group.items()},
        }


def gedi(x, y, spec: KernelSpec | str, rtol: float = DEFAULT_RTOL) -> GediResult:
    """Generalized Disparate Impact of ``y`` with respect to ``x``.

    Solves the centered least-squares problem ``min ||F~ a - y~||^2`` by QR
    and returns ``||a*||_1``.
    """
    if isinstance(spec, str):
        spec = KernelSpec.parse(spec)
    x, y = _pair(x, y)
    cmap = CoefficientMap.from_data(x, spec, rtol)
    alpha = cmap(y)
    resid = (y - y.mean()) - cmap.kernel.centered @ alpha
    return GediResult(
        value=float(np.abs(alpha).sum()),
        alpha_tilde=alpha,
        residual_mse=float(np.mean(resid**2)),
        kernel=str(spec),
    )


def gedi_v1(x, y) -> float:
    """Closed form for the order-1 polynomial kernel, ``|cov(x, y) / var(x)|``."""
    x, y = _pair(x, y)
    xc = x - x.mean()
    var = np.mean(xc**2)
    if np.ptp(x) == 0 or var == 0:
        raise ZeroVariance("protected attribute is constant")
    return float(abs(np.mean(xc * (y - y.mean())) / var))


def gedi_covariance_form(x, y, spec: KernelSpec | str, rtol: float = DEFAULT_RTOL) -> float:
    """Evaluate ``|cov(F a*, y) / var(F a*)|`` with ``a*`` the L1-normalised coefficients.

    Uses the raw (uncentered) kernel so it exercises a different path than
    :func:`gedi`. Returns 0 when the coefficients vanish.
    """
    if isinstance(spec, str):
        spec = KernelSpec.parse(spec)
    res = gedi(x, y, spec, rtol)
    a_star = res.alpha_star
    if a_star is None:
        return 0.0
    f = build_kernel(x, spec).raw @ a_star
    y = np.asarray(y, dtype=float)
    fc = f - f.mean()
    return float(abs(np.mean(fc * (y - y.mean())) / np.mean(fc**2)))


def _groups(x: np.ndarray, groups: Sequence | None) -> tuple[np.ndarray, np.ndarray]:
    values, inverse = np.unique(x, return_inverse=True)
    if groups is not None:
        declared = np.unique(np.asarray(groups, dtype=float))
        missing = np.setdiff1d(declared, values)
        if missing.size:
            raise EmptyGroup(f"declared groups with no samples: {[_label(v) for v in missing]}")
        extra = np.setdiff1d(values, declared)
        if extra.size:
            raise SpecError(f"samples fall outside the declared groups: {[_label(v) for v in extra]}")
    if values.size < 2:
        raise SingleGroup("the protected attribute takes a single value")
    return values, inverse


def didi_regression(x, y, groups: Sequence | None = None) -> DidiResult:
    """Sum over groups of ``|mean(y | x = v) - mean(y)|``."""
    x, y = _pair(x, y)
    values, inverse = _groups(x, groups)
    counts = np.bincount(inverse)
    means = np.bincount(inverse, weights=y) / counts
    dev = np.abs(means - y.mean())
    per_group = {_label(v): float(d) for v, d in zip(values, dev)}
    return DidiResult(float(dev.sum()), per_group, int(values.size), "didi_regression")


def didi_classification(
    x, y, groups: Sequence | None = None, classes: Sequence | None = None
) -> DidiResult:
    """Sum over classes and groups of ``|P(y=u | x=v) - P(y=u)|``."""
    x, y = _pair(x, y)
    values, inverse = _groups(x, groups)
    labels, y_idx = np.unique(y, return_inverse=True)
    if classes is not None:
        labels = np.unique(np.concatenate([labels, np.asarray(classes, dtype=float)]))
        y_idx = np.searchsorted(labels, y)
    if labels.size < 2:
        raise SingleClass("the target takes a single class")
    joint = np.zeros((values.size, labels.size))
    np.add.at(joint, (inverse, y_idx), 1.0)
    counts = joint.sum(axis=1, keepdims=True)
    cond = joint / counts
    marginal = joint.sum(axis=0) / y.size
    dev = np.abs(cond - marginal).sum(axis=1)
    per_group = {_label(v): float(d) for v, d in zip(values, dev)}
    return DidiResult(float(dev.sum()), per_group, int(values.size), "didi_classification")


def quantile_bins(x, n_bins: int) -> tuple[np.ndarray, int]:
    """Discretize ``x`` by empirical quantiles.

    Returns integer bin labels ``0..m-1`` and the number ``m`` of non-empty
    bins. Edges are linear-interpolation quantiles at ``j / n_bins``; bins
    are right-closed and ties collapse. When ``x`` already has at most
    ``n_bins`` distinct values each value is its own bin.
    """
    if n_bins < 2:
        raise SpecError("n_bins must be at least 2")
    x = as_vector(x, "x")
    distinct, inverse = np.unique(x, return_inverse=True)
    if distinct.size <= n_bins:
        return inverse, int(distinct.size)
    edges = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1))
    raw = np.searchsorted(edges[1:-1], x, side="left")
    used, labels = np.unique(raw, return_inverse=True)
    return labels, int(used.size)


def didi_binned(x, y, n_bins: int, task: str = REGRESSION) -> DidiResult:
    """DIDI after quantile discretization of a continuous protected attribute."""
    x, y = _pair(x, y)
    labels, m = quantile_bins(x, n_bins)
    if m < 2:
        raise DegenerateBinning(f"only {m} non-empty bin(s) for n_bins={n_bins}")
    if task == REGRESSION:
        res = didi_regression(labels, y)
    elif task == CLASSIFICATION:
        res = didi_classification(labels, y)
    else:
        raise SpecError(f"unknown task {task!r}")
    return DidiResult(res.value, res.per_group, m, f"didi_{n_bins}")


def pearson_via_least_squares(a, b) -> float:
    """Sample Pearson correlation as the slope of a 1-D least-squares fit.

    Both vectors are standardized and ``r`` minimises
    ``(1/n) ||r std(a) - std(b)||^2``.
    """
    a, b = _pair(a, b)
    sa, sb = a.std(), b.std()
    if np.ptp(a) == 0 or np.ptp(b) == 0 or sa == 0 or sb == 0:
        raise ZeroVariance("pearson correlation needs non-constant inputs")
    za = (a - a.mean()) / sa
    zb = (b - b.mean()) / sb
    r, *_ = np.linalg.lstsq(za[:, None], zb, rcond=None)
    return float(r[0])
