"""Kernel matrices built from a protected attribute.

A kernel turns the protected attribute ``x`` into an ``n x k`` matrix whose
columns are basis functions of ``x``. The indicator only ever looks at the
column-centered version of that matrix, so no constant column is emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, NonFiniteInput, RankDeficientKernel, SpecError

POLYNOMIAL = "poly"
FOURIER = "fourier"
CUSTOM = "custom"

DEFAULT_RTOL = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    """Basis family and order ``k`` of a kernel.

    ``standardize`` rescales ``x`` to zero mean and unit variance before the
    basis is evaluated. That changes the units of the indicator, so it is off
    by default.
    """

    family: str
    order: int
    functions: tuple[tuple[str, Callable[[np.ndarray], np.ndarray]], ...] = field(
        default=(), compare=False
    )
    standardize: bool = False

    def __post_init__(self):
        if self.family not in (POLYNOMIAL, FOURIER, CUSTOM):
            raise SpecError(f"unknown kernel family {self.family!r}")
        if isinstance(self.order, bool) or not isinstance(self.order, (int, np.integer)):
            raise SpecError(f"kernel order must be an integer, got {self.order!r}")
        if self.order < 1:
            raise SpecError(f"kernel order must be >= 1, got {self.order}")
        if self.family == CUSTOM:
            if not self.functions or len(self.functions) != self.order:
                raise SpecError("custom basis needs exactly `order` named functions")
        elif self.functions:
            raise SpecError("basis functions are only accepted for the custom family")

    @classmethod
    def polynomial(cls, order: int, standardize: bool = False) -> KernelSpec:
        return cls(POLYNOMIAL, order, standardize=standardize)

    @classmethod
    def fourier(cls, order: int, standardize: bool = False) -> KernelSpec:
        return cls(FOURIER, order, standardize=standardize)

    @classmethod
    def custom(
        cls,
        functions: Mapping[str, Callable] | Sequence[tuple[str, Callable]],
        standardize: bool = False,
    ) -> KernelSpec:
        items = tuple(functions.items()) if isinstance(functions, Mapping) else tuple(functions)
        return cls(CUSTOM, len(items), functions=items, standardize=standardize)

    @classmethod
    def parse(cls, text: str) -> KernelSpec:
        """Parse the CLI grammar ``poly:<k>`` or ``fourier:<k>``."""
        family, sep, order = text.strip().partition(":")
        if not sep or family not in (POLYNOMIAL, FOURIER):
            raise SpecError(f"kernel must look like 'poly:<k>' or 'fourier:<k>', got {text!r}")
        try:
            k = int(order)
        except ValueError:
            raise SpecError(f"kernel order must be an integer, got {order!r}") from None
        return cls(family, k)

    @property
    def column_names(self) -> list[str]:
        if self.family == POLYNOMIAL:
            return [f"x^{j}" for j in range(1, self.order + 1)]
        if self.family == FOURIER:
            return [
                f"{'sin' if i % 2 == 0 else 'cos'}({i // 2 + 1}pi x)" for i in range(self.order)
            ]
        return [name for name, _ in self.functions]

    def __str__(self) -> str:
        if self.family == CUSTOM:
            return f"custom:{','.join(self.column_names)}"
        return f"{self.family}:{self.order}"


@dataclass(frozen=True)
class KernelMatrix:
    raw: np.ndarray
    centered: np.ndarray
    means: np.ndarray
    spec: KernelSpec

    @property
    def n(self) -> int:
        return self.raw.shape[0]

    @property
    def k(self) -> int:
        return self.raw.shape[1]


def as_vector(values, name: str = "x") -> np.ndarray:
    """Return ``values`` as a finite 1-D float array or raise."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        raise EmptyInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains non-finite values")
    return arr


def _basis(x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    k = spec.order
    if spec.family == POLYNOMIAL:
        return np.vander(x, k + 1, increasing=True)[:, 1:]
    if spec.family == FOURIER:
        lo, hi = x.min(), x.max()
        xs = 2.0 * (x - lo) / (hi - lo) - 1.0 if hi > lo else np.zeros_like(x)
        cols = []
        for i in range(k):
            freq = (i // 2 + 1) * math.pi
            cols.append(np.sin(freq * xs) if i % 2 == 0 else np.cos(freq * xs))
        return np.column_stack(cols)
    cols = []
    for name, fn in spec.functions:
        col = np.asarray(fn(x), dtype=float)
        if col.shape != x.shape:
            raise SpecError(f"basis function {name!r} returned shape {col.shape}, expected {x.shape}")
        if not np.all(np.isfinite(col)):
            raise NonFiniteInput(f"basis function {name!r} produced non-finite values")
        cols.append(col)
    return np.column_stack(cols)


def build_kernel(x, spec: KernelSpec) -> KernelMatrix:
    """Evaluate ``spec`` on ``x`` and center every column."""
    x = as_vector(x)
    if x.size < 2:
        raise EmptyInput("at least two samples are needed to build a kernel")
    if spec.standardize:
        sd = x.std()
        x = (x - x.mean()) / sd if sd > 0 else x - x.mean()
    raw = _basis(x, spec)
    means = raw.mean(axis=0)
    centered = raw - means
    return KernelMatrix(raw=raw, centered=centered, means=means, spec=spec)


def numerical_rank(km: KernelMatrix, rtol: float = DEFAULT_RTOL) -> int:
    """Rank of the centered kernel, ignoring column scale.

    Columns are normalised first: rank does not depend on column scaling and
    raw Vandermonde columns can differ by many orders of magnitude.
    """
    norms = np.linalg.norm(km.centered, axis=0)
    top = norms.max()
    live = norms > top * 1e-14 if top > 0 else np.zeros_like(norms, dtype=bool)
    if not live.any():
        return 0
    sv = np.linalg.svd(km.centered[:, live] / norms[live], compute_uv=False)
    return int(np.sum(sv > rtol * sv[0]))


def condition_number(km: KernelMatrix) -> float:
    """2-norm condition number of the column-normalised centered kernel."""
    norms = np.linalg.norm(km.centered, axis=0)
    if np.any(norms == 0):
        return math.inf
    sv = np.linalg.svd(km.centered / norms, compute_uv=False)
    return math.inf if sv[-1] == 0 else float(sv[0] / sv[-1])


def rank_check(km: KernelMatrix, rtol: float = DEFAULT_RTOL) -> int:
    """Return the rank of ``km.centered``; raise if it is below the order."""
    rank = numerical_rank(km, rtol)
    if rank < km.k:
        detail = "constant protected attribute" if rank == 0 else f"kernel {km.spec}"
        raise RankDeficientKernel(rank, km.k, detail)
    return rank
