import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwpcr.compositional import (
    TransformedDesign,
    build_design,
    check_composition,
    helmert_projection,
    log_transform,
    recover_compositional_coefficients,
)

S2, S6 = np.sqrt(2.0), np.sqrt(6.0)


def test_log_transform_plain_row():
    z = log_transform([[0.2, 0.3, 0.5]])
    np.testing.assert_allclose(z, [[-1.6094379, -1.2039728, -0.6931472]], atol=1e-7)


def test_log_transform_zero_uses_half_min_positive():
    # only positive entries are 0.4 and 0.6, so c = 0.2
    z = log_transform([[0.0, 0.4, 0.6]])
    np.testing.assert_allclose(z, np.log([[0.2, 0.4, 0.6]]), rtol=0, atol=1e-15)


def test_log_transform_zero_constant_is_global():
    x = np.array([[0.0, 0.5, 0.5], [0.1, 0.3, 0.6]])
    z = log_transform(x)
    assert z[0, 0] == np.log(0.05)
    np.testing.assert_array_equal(z[1], np.log(x[1]))


def test_log_transform_uniform_row():
    z = log_transform(np.full((1, 3), 1 / 3))
    np.testing.assert_allclose(z, -np.log(3.0), atol=1e-15)


def test_log_transform_rejects_empty_row():
    # an all-zero row cannot sum to one, so validation fails first
    with pytest.raises(ValueError):
        log_transform([[0.0, 0.0, 0.0], [0.5, 0.25, 0.25]])


def test_positive_inputs_untouched_by_imputation():
    rng = np.random.default_rng(1)
    u = rng.uniform(0.1, 1, size=(20, 4))
    x = u / u.sum(axis=1, keepdims=True)
    np.testing.assert_array_equal(log_transform(x), np.log(x))


@pytest.mark.parametrize("bad", [[[0.5, 0.6]], [[-0.1, 1.1]], [[1.0]], [[np.nan, 1.0]]])
def test_check_composition_rejects(bad):
    with pytest.raises(ValueError):
        check_composition(bad)


def test_helmert_p2():
    h = helmert_projection(2)
    np.testing.assert_allclose(h.H, [[1 / S2, -1 / S2]], atol=1e-15)


def test_helmert_p3_matches_hand_rows():
    h = helmert_projection(3)
    np.testing.assert_allclose(h.H, [[1 / S2, -1 / S2, 0], [1 / S6, 1 / S6, -2 / S6]], atol=1e-15)
    np.testing.assert_allclose(h.H @ h.H.T, np.eye(2), atol=1e-15)


@pytest.mark.parametrize("p", range(2, 10))
def test_helmert_invariants(p):
    h = helmert_projection(p)
    np.testing.assert_allclose(h.H @ np.ones(p), 0, atol=1e-13)
    np.testing.assert_allclose(h.H @ h.M1, np.eye(p - 1), atol=1e-13)
    np.testing.assert_allclose(h.M1.sum(axis=0), 0, atol=1e-13)


def test_helmert_rejects_p1():
    with pytest.raises(ValueError):
        helmert_projection(1)


def test_recover_examples():
    h = helmert_projection(3)
    np.testing.assert_array_equal(recover_compositional_coefficients(np.zeros(2), h), np.zeros(3))
    np.testing.assert_allclose(recover_compositional_coefficients([S2, 0.0], h), [1, -1, 0],
                               atol=1e-15)


def test_recover_dimension_mismatch():
    with pytest.raises(ValueError):
        recover_compositional_coefficients(np.zeros(3), helmert_projection(3))


@settings(max_examples=200, deadline=None)
@given(p=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(p, seed):
    rng = np.random.default_rng(seed)
    bt = rng.normal(size=p) * 10
    bt -= bt.mean()
    h = helmert_projection(p)
    back = recover_compositional_coefficients(h.H @ bt, h)
    np.testing.assert_allclose(back, bt, atol=1e-12)
    assert abs(recover_compositional_coefficients(rng.normal(size=p - 1), h).sum()) < 1e-12


def test_build_design_identical_rows_give_zero_x1():
    x = [[0.2, 0.3, 0.5], [0.2, 0.3, 0.5]]
    with pytest.warns(UserWarning):
        d = build_design(x, None, [1.0, 3.0])
    np.testing.assert_array_equal(d.X1, 0)
    np.testing.assert_array_equal(d.y, [-1.0, 1.0])
    assert d.q == 0


def test_build_design_precentering_row():
    x = np.array([[0.2, 0.3, 0.5], [0.5, 0.25, 0.25]])
    d = build_design(x, None, [0.0, 1.0])
    l = np.log(x)
    hand = np.column_stack([(l[:, 0] - l[:, 1]) / S2, (l[:, 0] + l[:, 1] - 2 * l[:, 2]) / S6])
    np.testing.assert_allclose(d.X1 + d.centering["x1"], hand, atol=1e-14)


def test_build_design_centers_everything():
    rng = np.random.default_rng(2)
    u = rng.uniform(size=(30, 5))
    d = build_design(u / u.sum(1, keepdims=True), rng.normal(size=(30, 2)), rng.normal(size=30))
    for a in (d.X1, d.X2, d.y):
        np.testing.assert_allclose(a.mean(axis=0), 0, atol=1e-9)
    assert d.X1.shape == (30, 4)


def test_build_design_dimension_mismatch():
    x = [[0.5, 0.5], [0.4, 0.6]]
    with pytest.raises(ValueError):
        build_design(x, None, [1.0])
    with pytest.raises(ValueError):
        build_design(x, np.ones((3, 1)), [1.0, 2.0])


def test_constant_covariate_is_rejected_or_dropped():
    from gwpcr.admm import SolverConfig, fit

    rng = np.random.default_rng(3)
    u = rng.uniform(size=(8, 3))
    x = u / u.sum(1, keepdims=True)
    x2 = rng.normal(size=(8, 1))
    y = rng.normal(size=8)
    with pytest.raises(ValueError):
        build_design(x, np.column_stack([x2, np.ones(8)]), y)
    with pytest.warns(UserWarning):
        d1 = build_design(x, np.column_stack([x2, np.ones(8)]), y, drop_degenerate=True)
    d0 = build_design(x, x2, y)
    assert d1.centering["dropped_x2"] == [1]
    cfg = SolverConfig(lam=0.3)
    f0, f1 = fit(d0, None, cfg), fit(d1, None, cfg)
    np.testing.assert_allclose(f0.beta, f1.beta, atol=1e-10)
    np.testing.assert_allclose(f0.eta, f1.eta, atol=1e-10)


def test_transformed_design_validates_weights():
    with pytest.raises(ValueError):
        TransformedDesign(np.zeros((2, 1)), None, [1.0, 2.0], obs_weights=[1.0, 0.0])
