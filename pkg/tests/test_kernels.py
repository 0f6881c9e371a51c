import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from riesz_dml.errors import ConfigError, DegenerateDataError, InputError
from riesz_dml.kernels import (DiscreteIdentity, Gaussian, KernelSpec, c_max_of, eval_kernel, gram,
                               median_bandwidth)

H = 0.7


def test_gaussian_self_similarity_is_one():
    spec = KernelSpec([Gaussian((0, 1), 1.3)])
    assert eval_kernel(spec, [0.2, -4.0], [0.2, -4.0]) == 1.0


def test_gaussian_at_one_bandwidth():
    spec = KernelSpec([Gaussian((0,), H)])
    assert eval_kernel(spec, [0.0], [H]) == pytest.approx(np.exp(-0.5), abs=1e-15)
    assert eval_kernel(spec, [0.0], [H]) == pytest.approx(0.60653, abs=1e-5)


def test_discrete_mismatch_and_match():
    spec = KernelSpec([DiscreteIdentity(0, ("1", "2"))])
    assert eval_kernel(spec, [1.0], [2.0]) == 0.0
    assert gram(spec, [[1.0]], [[1.0]]).tolist() == [[1.0]]


def test_three_point_gram():
    spec = KernelSpec([Gaussian((0,), H)])
    K = gram(spec, [[0.0], [H], [2 * H]], [[0.0], [H], [2 * H]])
    assert np.allclose(np.diag(K), 1.0)
    assert K[0, 1] == pytest.approx(np.exp(-0.5))
    assert K[0, 2] == pytest.approx(np.exp(-2.0))
    assert K[1, 2] == pytest.approx(np.exp(-0.5))
    assert np.array_equal(K, K.T)


def test_gram_symmetric_unit_diagonal(rng):
    X = rng.standard_normal((30, 3))
    spec = KernelSpec([Gaussian((0, 1, 2), 1.1)])
    K = gram(spec, X, X)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)


def test_product_of_components():
    spec = KernelSpec([DiscreteIdentity(0, (0, 1)), Gaussian((1,), 1.0)])
    assert eval_kernel(spec, [1, 0.0], [1, 1.0]) == pytest.approx(np.exp(-0.5))
    assert eval_kernel(spec, [0, 0.0], [1, 0.0]) == 0.0


def test_missing_column_and_unknown_label():
    spec = KernelSpec([DiscreteIdentity(0, (0, 1)), Gaussian((2,), 1.0)])
    with pytest.raises(InputError, match="column 2"):
        eval_kernel(spec, [0, 1.0], [0, 1.0])
    with pytest.raises(InputError, match="unknown label"):
        eval_kernel(spec, [5, 0.0, 0.0], [0, 0.0, 0.0])


def test_component_validation():
    with pytest.raises(ConfigError):
        Gaussian((0,), 0.0)
    with pytest.raises(ConfigError):
        DiscreteIdentity(0, ())
    with pytest.raises(ConfigError):
        DiscreteIdentity(0, (1, 1))
    with pytest.raises(ConfigError, match="two kernel components"):
        KernelSpec([Gaussian((0, 1), 1.0), DiscreteIdentity(1, (0, 1))])


@pytest.mark.parametrize("m, expected", [(1, 1.0), (2, 1 / np.sqrt(2)), (4, 0.5)])
def test_c_max_examples(m, expected):
    assert c_max_of(list(range(m))) == pytest.approx(expected, abs=1e-15)


def test_c_max_errors():
    with pytest.raises(InputError):
        c_max_of([])
    with pytest.raises(InputError):
        c_max_of(["a", "a"])


@pytest.mark.parametrize("m", range(1, 11))
def test_c_max_is_psd_boundary(m):
    c = DiscreteIdentity(0, tuple(range(m))).c_max
    eig = np.linalg.eigvalsh(np.eye(m) - c**2 * np.ones((m, m)))
    assert -1e-12 <= eig.min() <= 1e-12


def test_c_max_general_gram():
    G = np.array([[1.0, 0.5], [0.5, 1.0]])
    c = c_max_of([0, 1], G)
    assert np.linalg.eigvalsh(G - c**2 * np.ones((2, 2))).min() == pytest.approx(0.0, abs=1e-12)


def test_median_bandwidth_examples():
    assert median_bandwidth([0, 1]) == 1.0
    assert median_bandwidth([0, 1, 2]) == 1.0
    with pytest.raises(DegenerateDataError):
        median_bandwidth([0, 0, 0])


def test_median_bandwidth_multicolumn_and_ties():
    assert median_bandwidth([[0, 0], [3, 4]]) == 5.0
    # more than half the pairs tie at zero: fall back to the nonzero distances
    assert median_bandwidth([0, 0, 0, 0, 1]) == 1.0


def test_median_bandwidth_subsample_is_deterministic(rng):
    x = rng.standard_normal(3000)
    assert median_bandwidth(x) == median_bandwidth(x)


def test_split_rejects_mixed_component():
    spec = KernelSpec([Gaussian((0, 1), 1.0)])
    with pytest.raises(ConfigError, match="mixes"):
        spec.split([0])


rows = arrays(np.float64, st.tuples(st.integers(2, 12), st.just(2)),
              elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(rows, st.floats(0.2, 3.0))
def test_gram_psd_and_bounded(X, h):
    spec = KernelSpec([Gaussian((0,), h), DiscreteIdentity(1, tuple(np.unique(X[:, 1])))])
    K = gram(spec, X, X)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K)
    assert np.all(K >= 0) and np.all(K <= np.diag(K)[:, None] + 0 * K)
    assert np.all(np.diag(K) == 1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0.1, 5.0))
def test_eval_kernel_symmetric(a, b, h):
    spec = KernelSpec([Gaussian((0, 2), h), Gaussian((1,), 2 * h)])
    assert eval_kernel(spec, a, b) == eval_kernel(spec, b, a)
