import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gedi.errors import EmptyInput, NonFiniteInput, RankDeficientKernel, SpecError
from gedi.kernel import KernelSpec, build_kernel, condition_number, numerical_rank, rank_check


def test_polynomial_columns_are_powers():
    km = build_kernel([1.0, 2.0, 3.0], KernelSpec.polynomial(2))
    np.testing.assert_array_equal(km.raw, [[1, 1], [2, 4], [3, 9]])
    np.testing.assert_allclose(km.means, [2.0, 14 / 3])


def test_centering_binary():
    km = build_kernel([0, 0, 1, 1], KernelSpec.polynomial(1))
    np.testing.assert_array_equal(km.centered[:, 0], [-0.5, -0.5, 0.5, 0.5])


def test_order_one_centered_is_x_minus_mean():
    x = np.random.default_rng(3).normal(size=50)
    km = build_kernel(x, KernelSpec.polynomial(1))
    np.testing.assert_array_equal(km.centered[:, 0], x - x.mean())


def test_rank_on_uniform_sample():
    x = np.random.default_rng(0).uniform(-np.pi, np.pi, 500)
    assert rank_check(build_kernel(x, KernelSpec.polynomial(3))) == 3


def test_binary_x_with_order_two_is_rank_deficient():
    with pytest.raises(RankDeficientKernel) as err:
        rank_check(build_kernel([0, 1, 0, 1], KernelSpec.polynomial(2)))
    assert err.value.rank == 1 and err.value.order == 2


def test_constant_x_is_rank_deficient():
    km = build_kernel([2.0, 2.0, 2.0], KernelSpec.polynomial(1))
    assert numerical_rank(km) == 0
    with pytest.raises(RankDeficientKernel):
        rank_check(km)


@pytest.mark.parametrize("k", [1, 2, 4, 6])
def test_distinct_nodes_give_full_rank(k):
    x = np.linspace(-1, 1, k + 1)
    assert rank_check(build_kernel(x, KernelSpec.polynomial(k))) == k


def test_fourier_columns():
    x = np.array([-2.0, 0.0, 2.0])  # rescaled to -1, 0, 1
    km = build_kernel(x, KernelSpec.fourier(3))
    xs = np.array([-1.0, 0.0, 1.0])
    np.testing.assert_allclose(km.raw[:, 0], np.sin(np.pi * xs), atol=1e-15)
    np.testing.assert_allclose(km.raw[:, 1], np.cos(np.pi * xs))
    np.testing.assert_allclose(km.raw[:, 2], np.sin(2 * np.pi * xs), atol=1e-15)


def test_custom_basis():
    spec = KernelSpec.custom({"abs": np.abs, "cube": lambda v: v**3})
    km = build_kernel([-1.0, 0.0, 2.0], spec)
    np.testing.assert_array_equal(km.raw, [[1, -1], [0, 0], [2, 8]])
    assert spec.column_names == ["abs", "cube"]


def test_standardize_changes_units():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    km = build_kernel(x, KernelSpec.polynomial(1, standardize=True))
    np.testing.assert_allclose(km.raw[:, 0], (x - x.mean()) / x.std())


def test_parse_and_str():
    assert KernelSpec.parse("poly:3") == KernelSpec.polynomial(3)
    assert str(KernelSpec.parse("fourier:2")) == "fourier:2"
    for bad in ("poly", "poly:x", "cubic:2", "poly:0"):
        with pytest.raises(SpecError):
            KernelSpec.parse(bad)


def test_input_errors():
    with pytest.raises(NonFiniteInput):
        build_kernel([1.0, np.nan], KernelSpec.polynomial(1))
    with pytest.raises(EmptyInput):
        build_kernel([1.0], KernelSpec.polynomial(1))
    with pytest.raises(EmptyInput):
        build_kernel([], KernelSpec.polynomial(1))


def test_condition_number_grows_with_order():
    x = np.random.default_rng(1).uniform(0, 1, 200)
    c = [condition_number(build_kernel(x, KernelSpec.polynomial(k))) for k in (1, 3, 6)]
    assert c[0] == pytest.approx(1.0) and c[0] < c[1] < c[2]


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@given(arrays(float, st.integers(2, 40), elements=finite), st.integers(1, 4))
def test_centered_columns_have_zero_mean(x, k):
    km = build_kernel(x, KernelSpec.polynomial(k))
    scale = np.maximum(np.abs(km.raw).max(axis=0), 1.0)
    assert np.all(np.abs(km.centered.mean(axis=0)) <= 1e-12 * scale)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_nested_spans(seed, k):
    x = np.random.default_rng(seed).uniform(-2, 2, 60)
    small = build_kernel(x, KernelSpec.polynomial(k)).centered
    big = build_kernel(x, KernelSpec.polynomial(k + 1)).centered
    q, _ = np.linalg.qr(big)
    resid = small - q @ (q.T @ small)
    assert np.abs(resid).max() <= 1e-8 * np.abs(small).max()
