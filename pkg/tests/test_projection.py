import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from proxbridge import basis, projection, simulation
from proxbridge.errors import DimensionError, ProjectionError


def design(rng, n=200, k=5):
    return np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])


def test_in_span_reproduction(rng):
    phi = design(rng)
    y = phi @ rng.normal(size=5)
    m = projection.fit(phi, y)
    assert m.ridge_used == 0.0
    assert_allclose(projection.predict(m, phi), y, atol=1e-10)


def test_constant_target(rng):
    phi = design(rng)
    m = projection.fit(phi, np.full(200, 3.5))
    assert_allclose(projection.predict(m, phi), 3.5, atol=1e-12)


def test_intercept_only_is_mean(rng):
    y = rng.normal(size=50)
    m = projection.fit(np.ones((50, 1)), y)
    assert_allclose(projection.predict(m, np.ones((50, 1))), y.mean())


def test_three_point_ols():
    z = np.array([0.0, 1.0, 2.0])
    phi = np.column_stack([np.ones(3), z])
    m = projection.fit(phi, z.copy())
    assert_allclose(projection.predict(m, phi), [0, 1, 2], atol=1e-12)


def test_predict_duplicates_and_training_rows(rng):
    phi = design(rng)
    y = rng.normal(size=200)
    m = projection.fit(phi, y)
    fitted = projection.predict(m, phi)
    assert projection.predict(m, phi[[3]])[0] == pytest.approx(fitted[3], rel=1e-13, abs=1e-15)
    dup = projection.predict(m, phi[[7, 7]])
    assert dup[0] == dup[1]
    with pytest.raises(DimensionError):
        projection.predict(m, phi[:, :3])


def test_needs_more_rows_than_columns(rng):
    with pytest.raises(ProjectionError, match="smaller"):
        projection.fit(design(rng, n=5, k=5), np.zeros(5))


def test_ridge_on_collinear_design(rng):
    phi = design(rng)
    phi = np.column_stack([phi, phi[:, 1]])
    m = projection.fit(phi, rng.normal(size=200))
    assert m.ridge_used == 1e-8 and m.rank_flag
    assert np.all(np.isfinite(m.coefficients))


def test_gram_inverse_symmetric_pd(rng):
    m = projection.fit(design(rng), rng.normal(size=200))
    assert_allclose(m.gram_inverse, m.gram_inverse.T, atol=0)
    assert np.linalg.eigvalsh(m.gram_inverse).min() > 0


def test_cross_operator_fixes_span(rng):
    phi = design(rng)
    psi = phi[:, :3] @ rng.normal(size=(3, 2))
    assert_allclose(projection.cross_operator(phi, psi), psi, atol=1e-10)
    ones = projection.cross_operator(phi, np.ones((200, 1)))
    assert_allclose(ones, 1.0, atol=1e-12)


def test_idempotence_and_orthogonality(rng):
    phi = design(rng, n=300, k=6)
    targets = rng.normal(size=(300, 3))
    once = projection.cross_operator(phi, targets)
    twice = projection.cross_operator(phi, once)
    assert_allclose(twice, once, atol=1e-10)
    assert np.max(np.abs(phi.T @ (targets - once))) < 1e-8 * 300


def test_saturated_indicators_match_contingency_table(preset_joint):
    ds = simulation.sample_discrete(preset_joint, 3000, 5)
    rm = basis.fit_rescale(ds)
    phi_b = basis.build_basis(basis.BasisSpec(), ("z",), rm)
    psi_b = basis.build_basis(basis.BasisSpec(), ("w",), rm)
    phi = basis.evaluate(phi_b, ds).values
    psi = basis.evaluate(psi_b, ds).values
    out = projection.cross_operator(phi, psi)
    for i in range(0, 3000, 97):
        same = (ds.z == ds.z[i]) & (ds.a == ds.a[i])
        for w in range(3):
            col = ds.a[i] * 3 + w
            assert out[i, col] == pytest.approx(np.mean(ds.w[same] == w), abs=1e-12)
    # and the empirical conditionals approach the oracle ones
    p = preset_joint.marginal("azw")
    for a in (0, 1):
        for z in (0, 1):
            rows = np.flatnonzero((ds.a == a) & (ds.z == z))
            cond = p[a, z] / p[a, z].sum()
            assert_allclose(out[rows[0], a * 3: a * 3 + 3], cond, atol=0.08)


@given(seed=st.integers(0, 10**6), extra=st.integers(1, 4))
def test_richer_instruments_reduce_rss(seed, extra):
    rng = np.random.default_rng(seed)
    n = 80
    phi = design(rng, n=n, k=3)
    wider = np.column_stack([phi, rng.normal(size=(n, extra))])
    y = rng.normal(size=n)
    rss_small = np.sum((y - projection.predict(projection.fit(phi, y), phi)) ** 2)
    rss_big = np.sum((y - projection.predict(projection.fit(wider, y), wider)) ** 2)
    assert rss_big <= rss_small + 1e-9
