import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_s
from mtrluq.errors import GridMismatchError, SingularConversionError
from mtrluq.rfcore import (
    FrequencyGrid,
    TwoPortNetwork,
    adjugate,
    cascade,
    det,
    inv2,
    kron_x,
    matched_line_s,
    s_to_t,
    t_to_s,
    unvec,
    vec,
)
from mtrluq.solver import K_COMM, P, PQ, Q, SWAP_14

finite = st.floats(-2, 2, allow_nan=False)
cplx = st.builds(complex, finite, finite)


def star(sa, sb):
    """Redheffer star product in the S domain (independent of T-parameters)."""
    d = 1 - sa[1, 1] * sb[0, 0]
    s11 = sa[0, 0] + sa[0, 1] * sb[0, 0] * sa[1, 0] / d
    s12 = sa[0, 1] * sb[0, 1] / d
    s21 = sb[1, 0] * sa[1, 0] / d
    s22 = sb[1, 1] + sb[1, 0] * sa[1, 1] * sb[0, 1] / d
    return np.array([[s11, s12], [s21, s22]])


@settings(max_examples=200, deadline=None)
@given(st.lists(cplx, min_size=4, max_size=4))
def test_s_t_roundtrip(vals):
    s = np.array(vals).reshape(2, 2)
    if abs(s[1, 0]) < 1e-3:
        s[1, 0] += 0.5
    t = s_to_t(s)
    if abs(t[1, 1]) < 1e-6:
        return
    np.testing.assert_allclose(t_to_s(t), s, atol=1e-9 * max(1.0, np.abs(s).max() ** 3))


def test_matched_line_is_diagonal():
    gamma, l = 3.0 + 200j, 0.01
    t = s_to_t(matched_line_s(np.array([gamma]), l))[0]
    np.testing.assert_allclose(t, np.diag([np.exp(-gamma * l), np.exp(gamma * l)]), rtol=1e-14)


def test_line_s_to_t_example():
    theta = 0.7
    s = np.array([[0, np.exp(-1j * theta)], [np.exp(-1j * theta), 0]])
    np.testing.assert_allclose(s_to_t(s), np.diag([np.exp(-1j * theta), np.exp(1j * theta)]), atol=1e-15)


def test_cascade_matches_star_product():
    rng = np.random.default_rng(3)
    grid = FrequencyGrid([1e9, 2e9, 3e9])
    sa, sb = random_s(rng, (3,)), random_s(rng, (3,))
    c = cascade(TwoPortNetwork(grid, sa), TwoPortNetwork(grid, sb))
    for n in range(3):
        np.testing.assert_allclose(c.s[n], star(sa[n], sb[n]), atol=1e-12)


def test_cascade_of_lines_adds_lengths():
    grid = FrequencyGrid([5e9])
    g = np.array([2 + 150j])
    a = TwoPortNetwork(grid, matched_line_s(g, 1e-3))
    b = TwoPortNetwork(grid, matched_line_s(g, 2e-3))
    np.testing.assert_allclose(cascade(a, b).s, matched_line_s(g, 3e-3), atol=1e-14)


def test_cascade_grid_mismatch():
    a = TwoPortNetwork(FrequencyGrid([1e9]), np.eye(2)[::-1])
    b = TwoPortNetwork(FrequencyGrid([2e9]), np.eye(2)[::-1])
    with pytest.raises(GridMismatchError):
        cascade(a, b)


def test_vec_is_column_major():
    m = np.array([[1, 2], [3, 4]])
    np.testing.assert_array_equal(vec(m), [1, 3, 2, 4])
    np.testing.assert_array_equal(unvec(vec(m)), m)


def test_kron_x_against_numpy():
    rng = np.random.default_rng(0)
    a, b, L = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
    X = kron_x(a, b)
    np.testing.assert_allclose(X, np.kron(b.T, a), atol=1e-15)
    np.testing.assert_allclose(X @ vec(L), vec(a @ L @ b), atol=1e-14)


def test_adjugate_and_permutation_identities():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(50, 2, 2)) + 1j * rng.normal(size=(50, 2, 2))
    np.testing.assert_allclose(vec(adjugate(m)), vec(m) @ (Q @ SWAP_14).T, atol=1e-14)
    # the reversal permutation adds a transpose
    np.testing.assert_allclose((Q @ P @ vec(m)[..., None])[..., 0], vec(np.swapaxes(adjugate(m), -1, -2)), atol=1e-14)
    np.testing.assert_array_equal(P, SWAP_14 @ K_COMM)
    np.testing.assert_allclose(inv2(m) @ m, np.broadcast_to(np.eye(2), m.shape), atol=1e-12)


def test_symplectic_identity_and_swap14_counterexample():
    rng = np.random.default_rng(2)
    a, b = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(2))
    X = kron_x(a, b)
    rhs = det(a) * det(b) * PQ
    np.testing.assert_allclose(X.T @ PQ @ X, rhs, atol=1e-12)
    wrong = SWAP_14 @ Q
    assert np.max(np.abs(X.T @ wrong @ X - det(a) * det(b) * wrong)) > 1e-3


def test_singular_conversion_raises():
    with pytest.raises(SingularConversionError):
        s_to_t(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(SingularConversionError):
        t_to_s(np.array([[1.0, 0.0], [0.0, 0.0]]))


@pytest.mark.parametrize("points", [[], [1e9, 1e9], [2e9, 1e9], [-1.0], [np.nan]])
def test_grid_validation(points):
    with pytest.raises(ValueError):
        FrequencyGrid(points)


def test_network_validation_and_immutability():
    grid = FrequencyGrid([1e9, 2e9])
    with pytest.raises(ValueError):
        TwoPortNetwork(grid, np.zeros((3, 2, 2)))
    with pytest.raises(ValueError):
        TwoPortNetwork(grid, np.full((2, 2, 2), np.inf))
    with pytest.raises(ValueError):
        TwoPortNetwork(grid, np.zeros((2, 2, 2)), rep="Y")
    net = TwoPortNetwork(grid, np.array([[0, 1], [1, 0]]) * np.ones((2, 1, 1)))
    with pytest.raises(ValueError):
        net.data[0, 0, 0] = 1
    assert net.to_t().to_s().rep == "S"
    assert grid == FrequencyGrid.linear(1e9, 2e9, 2)
