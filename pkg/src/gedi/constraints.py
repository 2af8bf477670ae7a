"""Coarse, fine-grained and exclusive GeDI constraints."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import SpecError
from .indicators import CoefficientMap, gedi, gedi_v1
from .kernel import DEFAULT_RTOL, KernelSpec

COARSE = "coarse"
FINE = "fine"
EXCLUSIVE = "exclusive"

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class ConstraintSpec:
    """A bound on GeDI for a given kernel.

    ``bound`` is a scalar for coarse and exclusive mode and a length-``k``
    tuple for fine mode. With ``relative=True`` the bounds are fractions of
    ``gedi_v1`` on the reference (original) targets; see :meth:`resolve`.
    """

    mode: str
    bound: float | tuple[float, ...]
    kernel: KernelSpec
    relative: bool = False
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.mode not in (COARSE, FINE, EXCLUSIVE):
            raise SpecError(f"unknown constraint mode {self.mode!r}")
        if self.mode == FINE:
            bound = tuple(float(b) for b in np.atleast_1d(self.bound))
            if len(bound) != self.kernel.order:
                raise SpecError(
                    f"fine constraint has {len(bound)} bounds for a kernel of order {self.kernel.order}"
                )
        else:
            if np.ndim(self.bound) != 0:
                raise SpecError(f"{self.mode} constraint takes a single bound")
            bound = float(self.bound)
        object.__setattr__(self, "bound", bound)
        if np.any(np.isnan(self.bounds)) or np.any(self.bounds < 0):
            raise SpecError("constraint bounds must be non-negative")
        if self.tol < 0:
            raise SpecError("feasibility tolerance must be non-negative")

    @classmethod
    def coarse(cls, q: float, kernel: KernelSpec, **kw) -> ConstraintSpec:
        return cls(COARSE, q, kernel, **kw)

    @classmethod
    def fine(cls, q: Sequence[float], kernel: KernelSpec, **kw) -> ConstraintSpec:
        return cls(FINE, tuple(q), kernel, **kw)

    @classmethod
    def exclusive(cls, q1: float, kernel: KernelSpec, **kw) -> ConstraintSpec:
        return cls(EXCLUSIVE, q1, kernel, **kw)

    @classmethod
    def parse(cls, text: str, kernel: KernelSpec, relative: bool = False, tol: float = DEFAULT_TOL):
        """Parse ``coarse:<q>``, ``fine:<q1,...,qk>`` or ``exclusive:<q1>``."""
        mode, sep, rest = text.strip().partition(":")
        if not sep or mode not in (COARSE, FINE, EXCLUSIVE):
            raise SpecError(f"cannot parse constraint {text!r}")
        try:
            values = [float(v) for v in rest.split(",")]
        except ValueError:
            raise SpecError(f"constraint bounds must be numbers, got {rest!r}") from None
        if mode != FINE and len(values) != 1:
            raise SpecError(f"{mode} constraint takes a single bound, got {rest!r}")
        bound = tuple(values) if mode == FINE else values[0]
        return cls(mode, bound, kernel, relative=relative, tol=tol)

    @property
    def bounds(self) -> np.ndarray:
        """Per-coefficient bounds (fine/exclusive) or the scalar bound as a 1-vector."""
        if self.mode == FINE:
            return np.asarray(self.bound, dtype=float)
        if self.mode == EXCLUSIVE:
            b = np.zeros(self.kernel.order)
            b[0] = self.bound
            return b
        return np.asarray([self.bound], dtype=float)

    def resolve(self, x, reference) -> ConstraintSpec:
        """Absolute-bound copy of a relative spec, scaled by ``gedi_v1(x, reference)``."""
        if not self.relative:
            return self
        base = gedi_v1(x, reference)
        if self.mode == FINE:
            bound = tuple(base * b for b in self.bound)
        else:
            bound = base * self.bound
        return replace(self, bound=bound, relative=False)

    def __str__(self) -> str:
        if self.mode == FINE:
            text = ",".join(repr(b) for b in self.bound)
        else:
            text = repr(self.bound)
        return f"{self.mode}:{text}" + (" (relative)" if self.relative else "")


@dataclass(frozen=True)
class ConstraintReport:
    satisfied: bool
    violation: float | np.ndarray
    penalty: float
    alpha_tilde: np.ndarray
    bound: float | np.ndarray

    @property
    def total_violation(self) -> float:
        return float(np.sum(self.violation))

    def to_dict(self) -> dict:
        def plain(v):
            return [float(a) for a in v] if np.ndim(v) else float(v)

        return {
            "satisfied": bool(self.satisfied),
            "violation": plain(self.violation),
            "penalty": float(self.penalty),
            "alpha_tilde": plain(self.alpha_tilde),
            "bound": plain(self.bound),
        }


def violations_from_alpha(alpha: np.ndarray, cs: ConstraintSpec) -> np.ndarray:
    """Violation vector for coefficient vector(s) ``alpha`` (shape ``k`` or ``k x m``).

    Coarse mode yields a single row, the other modes ``k`` rows; batched input
    keeps one column per candidate.
    """
    if cs.mode == COARSE:
        total = np.abs(alpha).sum(axis=0, keepdims=True)
        return np.maximum(0.0, total - cs.bound)
    bounds = cs.bounds if alpha.ndim == 1 else cs.bounds[:, None]
    return np.maximum(0.0, np.abs(alpha) - bounds)


def _absolute(cs: ConstraintSpec, x, reference) -> ConstraintSpec:
    if not cs.relative:
        return cs
    if reference is None:
        raise SpecError("relative constraint needs the reference targets to resolve its bound")
    return cs.resolve(x, reference)


def evaluate_constraint(
    x,
    y,
    cs: ConstraintSpec,
    lam: float = 0.0,
    reference=None,
    rtol: float = DEFAULT_RTOL,
) -> ConstraintReport:
    """Check ``y`` against ``cs`` and compute the penalty ``lam * sum(violation)``.

    ``reference`` holds the original targets and is required for relative
    specs.
    """
    if lam < 0:
        raise SpecError("penalty weight must be non-negative")
    cs = _absolute(cs, x, reference)
    alpha = gedi(x, y, cs.kernel, rtol).alpha_tilde
    viol = violations_from_alpha(alpha, cs)
    if cs.mode == COARSE:
        violation: float | np.ndarray = float(viol[0])
        bound: float | np.ndarray = float(cs.bound)
    else:
        violation = viol
        bound = cs.bounds
    satisfied = bool(np.all(viol <= cs.tol))
    return ConstraintReport(satisfied, violation, lam * float(viol.sum()), alpha, bound)


def exclusive_equivalence(x, y, k: int, tol: float = 1e-6) -> bool:
    """True when ``GeDI(x, y; V^k)`` and ``GeDI(x, y; V^1)`` agree within ``tol``."""
    full = gedi(x, y, KernelSpec.polynomial(k)).value
    return abs(full - gedi_v1(x, y)) <= tol


def coefficient_map(x, cs: ConstraintSpec, rtol: float = DEFAULT_RTOL) -> CoefficientMap:
    return CoefficientMap.from_data(x, cs.kernel, rtol)
