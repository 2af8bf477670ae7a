import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gedi.constraints import (
    ConstraintSpec,
    evaluate_constraint,
    exclusive_equivalence,
    violations_from_alpha,
)
from gedi.errors import RankDeficientKernel, SpecError
from gedi.indicators import gedi, gedi_v1
from gedi.kernel import KernelSpec

P1, P3 = KernelSpec.polynomial(1), KernelSpec.polynomial(3)


def test_satisfied_when_below_bound():
    x = np.array([0, 0, 1, 1.0])
    rep = evaluate_constraint(x, [0, 0, 1, 1], ConstraintSpec.coarse(2.0, P1))
    assert rep.satisfied and rep.violation == 0.0 and rep.penalty == 0.0


def test_identity_fit_violation():
    x = np.random.default_rng(0).normal(size=25)
    rep = evaluate_constraint(x, x, ConstraintSpec.coarse(0.0, P1), lam=2.5)
    assert rep.violation == pytest.approx(1.0)
    assert rep.penalty == pytest.approx(2.5)
    assert not rep.satisfied


def test_relative_bound():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=50), rng.normal(size=50)
    cs = ConstraintSpec.coarse(0.2, P3, relative=True).resolve(x, y)
    assert not cs.relative
    assert cs.bound == pytest.approx(0.2 * gedi_v1(x, y))
    with pytest.raises(SpecError):
        evaluate_constraint(x, y, ConstraintSpec.coarse(0.2, P3, relative=True))
    rep = evaluate_constraint(x, y, ConstraintSpec.coarse(0.2, P3, relative=True), reference=y)
    assert rep.bound == pytest.approx(cs.bound)


def test_fine_and_exclusive():
    x = np.linspace(-1, 1, 41)
    y = 0.5 * x + 2 * x**2 - x**3
    fine = evaluate_constraint(x, y, ConstraintSpec.fine([1.0, 1.0, 1.0], P3))
    np.testing.assert_allclose(fine.violation, [0.0, 1.0, 0.0], atol=1e-9)
    excl = evaluate_constraint(x, y, ConstraintSpec.exclusive(1.0, P3))
    np.testing.assert_allclose(excl.violation, [0.0, 2.0, 1.0], atol=1e-9)
    same = evaluate_constraint(x, y, ConstraintSpec.fine([1.0, 0.0, 0.0], P3))
    np.testing.assert_allclose(excl.violation, same.violation)
    assert excl.to_dict()["violation"] == pytest.approx([0.0, 2.0, 1.0], abs=1e-9)


def test_spec_validation():
    with pytest.raises(SpecError):
        ConstraintSpec.fine([1.0, 2.0], P3)
    with pytest.raises(SpecError):
        ConstraintSpec.coarse(-0.1, P1)
    with pytest.raises(SpecError):
        ConstraintSpec("loose", 1.0, P1)
    with pytest.raises(SpecError):
        evaluate_constraint([0, 1.0], [0, 1.0], ConstraintSpec.coarse(1.0, P1), lam=-1)


def test_parse():
    assert ConstraintSpec.parse("coarse:0.2", P3) == ConstraintSpec.coarse(0.2, P3)
    assert ConstraintSpec.parse("fine:1,2,3", P3).bound == (1.0, 2.0, 3.0)
    assert ConstraintSpec.parse("exclusive:0.5", P3, relative=True).relative
    for bad in ("coarse", "coarse:a", "coarse:1,2", "tight:1", "fine:1,2"):
        with pytest.raises(SpecError):
            ConstraintSpec.parse(bad, P3)


def test_binary_x_only_accepts_order_one():
    x = np.array([0, 1, 0, 1, 1.0])
    with pytest.raises(RankDeficientKernel):
        evaluate_constraint(x, x, ConstraintSpec.coarse(1.0, KernelSpec.polynomial(2)))


def test_exclusive_equivalence_cases():
    x = np.random.default_rng(2).uniform(-1, 1, 400)
    assert not exclusive_equivalence(x, x**2, 2)
    assert exclusive_equivalence(x, np.full(400, 3.0), 4)
    assert exclusive_equivalence(x, 2 * x - 1, 3)


@given(st.integers(0, 100_000), st.floats(0, 3), st.floats(0, 10))
def test_penalty_is_nonnegative_and_zero_iff_satisfied(seed, q, lam):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-1, 1, 30), rng.normal(size=30)
    for cs in (ConstraintSpec.coarse(q, P3), ConstraintSpec.fine([q, q / 2, q / 3], P3)):
        rep = evaluate_constraint(x, y, cs, lam=lam)
        assert rep.penalty >= 0
        assert rep.satisfied == bool(np.all(np.asarray(rep.violation) <= cs.tol))
        if rep.satisfied:
            assert rep.penalty <= lam * 3 * cs.tol


@given(st.integers(0, 100_000))
def test_coarse_violation_formula(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-1, 1, 30), rng.normal(size=30)
    value = gedi(x, y, P3).value
    rep = evaluate_constraint(x, y, ConstraintSpec.coarse(0.1, P3))
    assert rep.violation == pytest.approx(max(0.0, value - 0.1), abs=1e-12)


def test_batched_violations():
    cs = ConstraintSpec.coarse(1.0, P3)
    alpha = np.array([[0.5, 2.0], [0.2, 0.0], [0.1, -1.0]])
    np.testing.assert_allclose(violations_from_alpha(alpha, cs), [[0.0, 2.0]])
    fine = ConstraintSpec.fine([0.3, 0.3, 0.3], P3)
    np.testing.assert_allclose(violations_from_alpha(alpha, fine), [[0.2, 1.7], [0.0, 0.0], [0.0, 0.7]])
