"""Command-line interface: ``gedi synth|audit|preprocess|train``.

Reports are printed as JSON with sorted keys, so identical inputs and seeds
give byte-identical output. Failures print ``{"error": {...}}`` and exit
with status 1. The log level comes from the ``GEDI_LOG`` environment
variable (default ``WARNING``).
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .constraints import ConstraintSpec, DEFAULT_TOL
from .data import Dataset, export_dataset, kfold_split, load_dataset, synth_fig2
from .errors import GediError
from .indicators import CLASSIFICATION, REGRESSION
from .kernel import KernelSpec
from .learners import LearnerSpec, predict
from .projection import project_classification, project_regression
from .report import SCHEMA, audit_report, indicators, metric, percentages
from .training import MtConfig, SbrConfig, moving_targets, sbr_train

log = logging.getLogger("gedi")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def _emit(report: dict, out: str | None, name: str) -> None:
    text = dumps(report)
    click.echo(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n", encoding="utf-8")


def _fail(exc: Exception) -> None:
    click.echo(dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
    sys.exit(1)


def guarded(fn):
    """Turn toolkit and I/O errors into an error JSON and exit status 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (GediError, OSError) as exc:
            log.debug("command failed", exc_info=True)
            _fail(exc)

    return wrapper


def data_options(fn):
    fn = click.option("--task", type=click.Choice(["reg", "clf"]), default=None, help="Task; inferred from the target when omitted.")(fn)
    fn = click.option("--target", required=True, help="Target column.")(fn)
    fn = click.option("--protected", required=True, help="Protected attribute column.")(fn)
    fn = click.argument("path", type=click.Path(dir_okay=False))(fn)
    return fn


def constraint_options(fn):
    fn = click.option("--threshold", type=float, default=DEFAULT_TOL, show_default=True, help="Feasibility tolerance on the constraint violation.")(fn)
    fn = click.option("--relative", is_flag=True, help="Read bounds as fractions of gedi_v1 on the original targets.")(fn)
    fn = click.option("--constraint", "constraint", required=True, help="coarse:q | fine:q1,..,qk | exclusive:q1")(fn)
    return fn


def _constraint(text: str, kernel: KernelSpec, relative: bool, threshold: float) -> ConstraintSpec:
    return ConstraintSpec.parse(text, kernel, relative=relative, tol=threshold)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Audit and enforce GeDI fairness constraints on tabular data."""
    level = os.environ.get("GEDI_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)


@main.command()
@click.option("--n", "n", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for synth_fig2.csv and report.json.")
@guarded
def synth(n, seed, out):
    """Generate y = 4 sin(x) + x^2 + N(0, 1) with x ~ U(-pi, pi)."""
    ds = synth_fig2(n, seed)
    if out is None:
        export_dataset(ds, click.get_text_stream("stdout"))
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    path = Path(out) / "synth_fig2.csv"
    export_dataset(ds, path)
    report = audit_report(ds.protected, ds.target, KernelSpec.polynomial(2), REGRESSION)
    report.update({"command": "synth", "seed": seed, "path": path.name})
    _emit(report, out, "report.json")


@main.command()
@data_options
@click.option("--kernel", default="poly:1", show_default=True, help="poly:K or fourier:K")
@click.option("--original", type=click.Path(dir_okay=False), default=None, help="CSV with the original targets for percentages.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@guarded
def audit(path, protected, target, task, kernel, original, out):
    """Report GeDI and DIDI indicators of the target."""
    ds = load_dataset(path, protected, target, task)
    spec = KernelSpec.parse(kernel)
    ref = None
    if original:
        ref_ds = load_dataset(original, protected, target, task)
        if ref_ds.n != ds.n:
            raise GediError(f"original data has {ref_ds.n} rows, audited data {ds.n}")
        ref = ref_ds.target
    report = audit_report(ds.protected, ds.target, spec, ds.task, ref)
    report.update({"command": "audit", "dropped_rows": ds.dropped})
    _emit(report, out, "report.json")


@main.command()
@data_options
@click.option("--kernel", default="poly:1", show_default=True)
@constraint_options
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for adjusted.csv and report.json.")
@click.option("--timing", is_flag=True, help="Include wall time (makes the report non-reproducible).")
@guarded
def preprocess(path, protected, target, task, kernel, constraint, relative, threshold, out, timing):
    """Project the targets of the full dataset onto the constraint."""
    start = time.perf_counter()
    ds = load_dataset(path, protected, target, task)
    spec = KernelSpec.parse(kernel)
    cs = _constraint(constraint, spec, relative, threshold)
    project = project_regression if ds.task == REGRESSION else project_classification
    res = project(ds.protected, ds.target, cs)
    report = audit_report(ds.protected, res.z, spec, ds.task, ds.target)
    report.update(
        {
            "command": "preprocess",
            "constraint": str(cs),
            "projection": res.to_dict(),
            "dropped_rows": ds.dropped,
        }
    )
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        export_dataset(ds.with_target(res.z), Path(out) / "adjusted.csv")
    if timing:
        report["wall_time_s"] = time.perf_counter() - start
    _emit(report, out, "report.json")


def _split_summary(ds: Dataset, model, kernel: KernelSpec) -> dict:
    pred = predict(model, ds.features)
    audited = (pred >= 0.5).astype(float) if ds.task == CLASSIFICATION else pred
    values, _ = indicators(ds.protected, audited, kernel, ds.task)
    original, _ = indicators(ds.protected, ds.target, kernel, ds.task)
    return {
        "metric": metric(ds.task, pred, ds.target),
        "indicators": values,
        "percent": percentages(values, original),
    }


def _run_fold(ds: Dataset, fold: int, tr, va, method: str, cs: ConstraintSpec, learner: LearnerSpec, iterations: int, epochs: int, lr: float) -> dict:
    train, valid = ds.subset(tr), ds.subset(va)
    if method == "mt":
        res = moving_targets(train.features, train.protected, train.target, cs, MtConfig(iterations, learner=learner), train.task)
    else:
        cfg = SbrConfig(lr=lr, epochs=epochs, tol=cs.tol, learner=learner)
        res = sbr_train(train.features, train.protected, train.target, cs, cfg, train.task)
    return {
        "fold": fold,
        "n_train": train.n,
        "n_valid": valid.n,
        "bound": res.constraint.bound,
        "converged": res.converged,
        "train": _split_summary(train, res.model, cs.kernel),
        "valid": _split_summary(valid, res.model, cs.kernel),
        "trace": res.trace,
    }


@main.command()
@data_options
@click.option("--kernel", default="poly:1", show_default=True)
@constraint_options
@click.option("--method", type=click.Choice(["mt", "sbr"]), default="mt", show_default=True)
@click.option("--learner", default="ridge", show_default=True, help="ridge:<l2>[,deg] | logistic:<lr>,<epochs>[,deg] | gb:<n_trees>,<lr>")
@click.option("--iterations", type=int, default=10, show_default=True, help="Moving Targets iterations.")
@click.option("--epochs", type=int, default=2000, show_default=True, help="Penalty-method epochs.")
@click.option("--lr", type=float, default=0.05, show_default=True, help="Penalty-method step size.")
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="Folds trained in parallel.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--timing", is_flag=True, help="Include wall time (makes the report non-reproducible).")
@guarded
def train(path, protected, target, task, kernel, constraint, relative, threshold, method, learner, iterations, epochs, lr, folds, seed, jobs, out, timing):
    """Cross-validated constrained training with Moving Targets or the penalty method."""
    start = time.perf_counter()
    ds = load_dataset(path, protected, target, task)
    spec = KernelSpec.parse(kernel)
    cs = _constraint(constraint, spec, relative, threshold)
    lspec = LearnerSpec.parse(learner, seed=seed)
    splits = kfold_split(ds.n, folds, seed)
    jobs_args = [(ds, i, tr, va, method, cs, lspec, iterations, epochs, lr) for i, (tr, va) in enumerate(splits)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: _run_fold(*a), jobs_args))
    else:
        results = [_run_fold(*a) for a in jobs_args]
    report = {
        "schema": SCHEMA,
        "command": "train",
        "task": ds.task,
        "kernel": str(spec),
        "constraint": str(cs),
        "method": method,
        "learner": learner,
        "seed": seed,
        "folds": results,
        "dropped_rows": ds.dropped,
    }
    if timing:
        report["wall_time_s"] = time.perf_counter() - start
    _emit(report, out, "report.json")


if __name__ == "__main__":  # pragma: no cover
    main()
