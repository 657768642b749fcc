import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from proxbridge import basis
from proxbridge.basis import BasisSpec
from proxbridge.data import Dataset
from proxbridge.errors import BasisError


def make(w, z=None, a=None, x=None, y=None):
    w = np.asarray(w, float)
    n = w.size
    z = np.linspace(0, 1, n) if z is None else z
    a = np.arange(n) % 2 if a is None else a
    y = np.zeros(n) if y is None else y
    return Dataset(y, a, z, w, np.zeros((n, 0)) if x is None else x)


def test_rescale_zero_to_ten():
    ds = make(np.arange(11.0))
    rm = basis.fit_rescale(ds)
    assert_allclose(rm.apply("w", np.arange(11.0))[0], np.arange(11.0) / 10)


def test_rescale_identity_on_unit_interval():
    vals = np.array([0.0, 0.25, 1.0])
    rm = basis.fit_rescale(make(vals))
    assert rm.lo["w"] == 0.0 and rm.span["w"] == 1.0


def test_rescale_two_variables():
    n = 5
    ds = Dataset(np.zeros(n), np.array([0, 1, 0, 1, 0]), np.linspace(3, 7, n), np.linspace(-1, 1, n),
                 np.zeros((n, 0)))
    rm = basis.fit_rescale(ds)
    v = np.array([-1.0, 0.0, 1.0])
    assert_allclose(rm.apply("w", v)[0], (v + 1) / 2)
    u = np.array([3.0, 5.0, 7.0])
    assert_allclose(rm.apply("z", u)[0], (u - 3) / 4)
    assert_allclose(rm.invert("z", rm.apply("z", u)[0]), u)


def test_rescale_rejects_constant():
    with pytest.raises(BasisError, match="'w'"):
        basis.fit_rescale(make(np.ones(4)))
    with pytest.raises(BasisError):
        basis.fit_rescale(make(np.array([1.0])))


def test_monomial_degree_one_no_arm_split():
    rm = basis.fit_rescale(make(np.array([0.0, 0.5, 1.0])))
    b = basis.build_basis(BasisSpec("monomial", 1, per_arm=False, discrete=()), ("w",), rm)
    assert b.labels == ["w^0", "w^1"]
    dm = basis.evaluate(b, make(np.array([0.0, 0.5, 1.0])))
    assert_allclose(dm.values, [[1, 0], [1, 0.5], [1, 1]])


def test_monomial_degree_one_arm_split():
    ds = make(np.array([0.0, 0.5, 1.0]), a=np.array([0, 1, 1]))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("monomial", 1, per_arm=True, discrete=()), ("w",), rm)
    assert b.size == 4
    vals = basis.evaluate(b, ds).values
    # columns: I(A=0), I(A=0) w, I(A=1), I(A=1) w
    assert_allclose(vals, [[1, 0, 0, 0], [0, 0, 1, 0.5], [0, 0, 1, 1]])


def test_polynomial_degree_one_spans_affine():
    ds = make(np.linspace(0, 1, 7))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("polynomial", 1, per_arm=False, discrete=()), ("w",), rm)
    vals = basis.evaluate(b, ds).values
    target = np.column_stack([np.ones(7), ds.w])
    coef, res, *_ = np.linalg.lstsq(vals, target, rcond=None)
    assert_allclose(vals @ coef, target, atol=1e-12)


def test_legendre_orthonormal_on_unit_interval():
    nodes, weights = np.polynomial.legendre.leggauss(20)
    u = (nodes + 1) / 2
    ds = make(u)
    rm = basis.RescaleMap({"w": 0.0, "z": 0.0, "y": 0.0}, {"w": 1.0, "z": 1.0, "y": 1.0})
    b = basis.build_basis(BasisSpec("polynomial", 5, per_arm=False, discrete=()), ("w",), rm)
    vals = basis.evaluate(b, ds).values
    gram = vals.T @ (weights[:, None] / 2 * vals)
    assert_allclose(gram, np.eye(6), atol=1e-12)


def test_cubic_bspline_eight_functions_partition_of_unity():
    grid = np.linspace(0, 1, 1000)
    ds = make(grid)
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("bspline", 3, knots=4, per_arm=False, discrete=()), ("w",), rm)
    assert b.size == 8
    vals = basis.evaluate(b, ds).values
    assert_allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(vals >= -1e-15)


def test_bspline_tensor_rows_sum_to_one():
    rng = np.random.default_rng(1)
    ds = Dataset(np.zeros(200), rng.integers(0, 2, 200), rng.uniform(size=200), rng.uniform(size=200),
                 rng.uniform(size=(200, 1)))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("bspline", 2, knots=2, per_arm=True, discrete=()), ("w", "x"), rm)
    vals = basis.evaluate(b, ds).values
    assert_allclose(vals.sum(axis=1), 1.0, atol=1e-12)


def test_override_arm_kills_other_block():
    rng = np.random.default_rng(0)
    ds = make(rng.uniform(size=30))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("polynomial", 2, per_arm=True, discrete=()), ("w",), rm)
    vals = basis.evaluate(b, ds, override_arm=1).values
    assert np.all(vals[:, : b.block_size] == 0)
    assert np.all(vals[:, b.block_size:].any(axis=0))


def test_arm_blocks_orthogonal():
    rng = np.random.default_rng(2)
    ds = make(rng.uniform(size=50))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("polynomial", 3, per_arm=True, discrete=()), ("w",), rm)
    vals = basis.evaluate(b, ds).values
    p = b.block_size
    assert np.all(vals[:, :p] * vals[:, p:] == 0)


def test_count_exceeds_capacity():
    rm = basis.fit_rescale(make(np.linspace(0, 1, 5)))
    with pytest.raises(BasisError, match="only has"):
        basis.build_basis(BasisSpec("polynomial", 2, count=4, per_arm=False, discrete=()), ("w",), rm)


def test_count_truncates_by_total_degree():
    rng = np.random.default_rng(0)
    ds = Dataset(np.zeros(40), np.arange(40) % 2, rng.uniform(size=40), rng.uniform(size=40),
                 rng.uniform(size=(40, 1)))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("monomial", 3, count=3, per_arm=False, discrete=()), ("w", "x"), rm)
    assert b.labels == ["w^0*x1^0", "w^0*x1^1", "w^1*x1^0"]


def test_clamping_flag():
    ds = make(np.linspace(0, 1, 5))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("polynomial", 2, per_arm=False, discrete=()), ("w",), rm)
    with pytest.warns(RuntimeWarning, match="clamped"):
        dm = basis.evaluate(b, make(np.array([-1.0, 0.5, 2.0])))
    assert dm.clamped
    assert np.all(np.isfinite(dm.values))


def test_indicator_basis_saturated():
    ds = make(np.array([0, 1, 2, 0, 1, 2.0]))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec(per_arm=False), ("w",), rm)
    vals = basis.evaluate(b, ds).values
    assert_array_equal(vals, np.eye(3)[[0, 1, 2, 0, 1, 2]])


def test_invalid_spec():
    with pytest.raises(BasisError):
        BasisSpec("wavelet")
    with pytest.raises(BasisError):
        BasisSpec(degree=0)


def test_default_count_and_sizing():
    assert basis.default_count(100) == 9
    assert basis.default_count(10**9) == 30
    rng = np.random.default_rng(0)
    ds = make(rng.uniform(size=100))
    rm = basis.fit_rescale(ds)
    spec = basis.sized_spec(BasisSpec(), ("w",), rm, 6)
    assert spec.count == 6
    assert basis.build_basis(spec, ("w",), rm).block_size == 6


def test_gram_min_eigenvalue_well_spread():
    rng = np.random.default_rng(4)
    ds = make(rng.uniform(size=2000), z=rng.uniform(size=2000))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec("polynomial", 3), ("z",), rm)
    assert basis.gram_min_eigenvalue(basis.evaluate(b, ds)) > 1e-8


def test_size_notes():
    rm = basis.fit_rescale(make(np.linspace(0, 1, 9)))
    big = basis.build_basis(BasisSpec("polynomial", 4, discrete=()), ("w",), rm)
    small = basis.build_basis(BasisSpec("polynomial", 1, discrete=()), ("z",), rm)
    assert basis.check_sizes(small, big) == []
    assert basis.check_sizes(big, small)


@given(seed=st.integers(0, 10**6), family=st.sampled_from(["polynomial", "bspline", "monomial"]))
def test_row_permutation_equivariance(seed, family):
    rng = np.random.default_rng(seed)
    n = 25
    ds = Dataset(rng.normal(size=n), rng.integers(0, 2, n), rng.uniform(size=n), rng.uniform(size=n),
                 rng.uniform(size=(n, 1)))
    rm = basis.fit_rescale(ds)
    b = basis.build_basis(BasisSpec(family, 2, knots=1, discrete=()), ("w", "x"), rm)
    perm = rng.permutation(n)
    base = basis.evaluate(b, ds).values
    shuffled = basis.evaluate(b, ds.take(perm)).values
    assert_array_equal(shuffled, base[perm])
    assert np.all(np.isfinite(base))
