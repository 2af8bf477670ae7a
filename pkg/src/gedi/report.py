"""JSON-ready audit reports.

Every report carries ``"schema": 1``. Indicator values are given raw and as a
percentage of the same indicator on the original data.
"""

from __future__ import annotations

import numpy as np

from .errors import GediError
from .indicators import CLASSIFICATION, REGRESSION, didi_binned, didi_classification, didi_regression, gedi, gedi_v1
from .kernel import KernelSpec

SCHEMA = 1
DIDI_BINS = (2, 3, 5, 10)
NATIVE_GROUP_LIMIT = 10


def _safe(fn):
    try:
        return fn(), None
    except GediError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def indicators(x, y, kernel: KernelSpec, task: str) -> tuple[dict, dict]:
    """Indicator values of ``y`` against ``x``, plus coefficient detail.

    The kernel indicator is required; the others are reported as ``None``
    with an error message when they are undefined for this data.
    """
    main = gedi(x, y, kernel)
    values = {"gedi": main.value}
    errors = {}
    values["gedi_v1"], err = _safe(lambda: gedi_v1(x, y))
    if err:
        errors["gedi_v1"] = err
    if np.unique(x).size <= NATIVE_GROUP_LIMIT:
        fn = didi_regression if task == REGRESSION else didi_classification
        values["didi"], err = _safe(lambda: fn(x, y).value)
        if err:
            errors["didi"] = err
    for b in DIDI_BINS:
        values[f"didi_{b}"], err = _safe(lambda: didi_binned(x, y, b, task).value)
        if err:
            errors[f"didi_{b}"] = err
    detail = {"alpha_tilde": [float(a) for a in main.alpha_tilde], "residual_mse": main.residual_mse}
    if errors:
        detail["errors"] = errors
    return values, detail


def percentages(values: dict, original: dict) -> dict:
    """``100 * value / original`` per indicator; ``None`` when undefined or the original is 0."""
    out = {}
    for key, v in values.items():
        o = original.get(key)
        out[key] = None if v is None or o is None or o == 0 else 100.0 * (v / o)
    return out


def metric(task: str, pred, y) -> float:
    """R^2 for regression, accuracy of ``1{p >= 0.5}`` for classification."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if task == CLASSIFICATION:
        return float(np.mean((pred >= 0.5) == (y >= 0.5)))
    ss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 0.0


def audit_report(x, y, kernel: KernelSpec, task: str, original_y=None) -> dict:
    """Indicators for ``y`` and their percentages against ``original_y`` (defaults to ``y``)."""
    values, detail = indicators(x, y, kernel, task)
    base = values if original_y is None else indicators(x, original_y, kernel, task)[0]
    return {
        "schema": SCHEMA,
        "task": task,
        "kernel": str(kernel),
        "n": int(np.size(y)),
        "indicators": values,
        "percent": percentages(values, base),
        "detail": detail,
    }
