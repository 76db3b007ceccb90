import numpy as np
import pytest

from cpcanet.app.exceptions import DegenerateBatch, DimensionTooSmall, InvariantViolation, ShapeMismatch
from cpcanet.app.models.matrices import CovarianceMatrix, OrthogonalBasis, SkewMatrix
from cpcanet.app.services import linalg


def random_skew(dim, rng, scale=1.0):
    m = rng.standard_normal((dim, dim)) * scale
    return SkewMatrix(m - m.T)


def test_covariance_two_samples():
    cov = linalg.covariance([[0.0, 0.0], [2.0, 0.0]])
    np.testing.assert_array_equal(cov.values, [[2.0, 0.0], [0.0, 0.0]])


def test_covariance_of_repeated_row_is_zero():
    cov = linalg.covariance(np.tile([1.5, -2.0, 0.25], (5, 1)))
    np.testing.assert_array_equal(cov.values, np.zeros((3, 3)))


def test_covariance_matches_two_pass_oracle(rng):
    x = rng.multivariate_normal([0.0, 0.0], np.diag([3.0, 1.0]), size=50)
    cov = linalg.covariance(x).values

    mean = x.mean(axis=0)
    oracle = sum(np.outer(r - mean, r - mean) for r in x) / 49
    np.testing.assert_allclose(cov, oracle, atol=1e-12)

    # entrywise within 5 sampling standard errors of the true Sigma
    sigma = np.diag([3.0, 1.0])
    stderr = np.sqrt((sigma**2 + np.outer(np.diag(sigma), np.diag(sigma))) / 49)
    assert np.all(np.abs(cov - sigma) < 5 * stderr)


def test_covariance_is_permutation_invariant_bitwise(rng):
    x = rng.standard_normal((40, 5))
    a = linalg.covariance(x).values
    b = linalg.covariance(x[rng.permutation(40)]).values
    assert np.array_equal(a, b)


def test_covariance_needs_two_rows():
    with pytest.raises(DegenerateBatch):
        linalg.covariance([[1.0, 2.0]])


def test_cayley_of_zero_is_identity():
    np.testing.assert_array_equal(linalg.cayley(SkewMatrix.zeros(4)).values, np.eye(4))


def test_cayley_two_by_two_closed_form():
    a = 0.8
    beta = linalg.cayley(SkewMatrix([[0.0, a], [-a, 0.0]])).values
    theta = 2.0 * np.arctan(a / 2.0)
    expected = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    np.testing.assert_allclose(beta, expected, atol=1e-12)
    np.testing.assert_allclose(beta.T @ beta, np.eye(2), atol=1e-12)


def test_cayley_matches_explicit_formula(rng):
    a = random_skew(6, rng)
    eye = np.eye(6)
    expected = (eye - a.values / 2) @ np.linalg.inv(eye + a.values / 2)
    np.testing.assert_allclose(linalg.cayley(a).values, expected, atol=1e-10)


def test_cayley_negation_is_transpose(rng):
    a = random_skew(5, rng)
    neg = SkewMatrix(-a.values)
    np.testing.assert_allclose(linalg.cayley(neg).values, linalg.cayley(a).values.T, atol=1e-10)


@pytest.mark.parametrize("dim", [2, 4, 16, 64])
def test_cayley_outputs_are_rotations(dim, rng):
    for _ in range(250):
        a = random_skew(dim, rng, scale=rng.uniform(0.01, 10.0))
        beta = linalg.cayley(a).values
        assert np.linalg.norm(beta.T @ beta - np.eye(dim)) < 1e-10
        assert abs(np.linalg.det(beta) - 1.0) < 1e-8


def test_offdiag_energy_values():
    assert linalg.offdiag_energy(np.diag([1.0, 2.0, 3.0])) == 0.0
    assert linalg.offdiag_energy([[1.0, 2.0], [2.0, 1.0]]) == pytest.approx(4.0)


def test_offdiag_energy_needs_two_dims():
    with pytest.raises(DimensionTooSmall):
        linalg.offdiag_energy([[3.0]])


def test_offdiag_energy_zero_in_eigenbasis(rng):
    g = rng.standard_normal((6, 6))
    s = g @ g.T
    _, v = np.linalg.eigh(s)
    if np.linalg.det(v) < 0:
        v[:, 0] = -v[:, 0]
    basis = OrthogonalBasis(v)
    assert linalg.offdiag_energy(linalg.transform(s, basis)) < 1e-10


def test_project_samples_checks_dimension(rng):
    with pytest.raises(ShapeMismatch):
        linalg.project_samples(rng.standard_normal((4, 3)), OrthogonalBasis.identity(2))


def test_random_rotation_is_proper(rng):
    q = linalg.random_rotation(7, rng).values
    assert abs(np.linalg.det(q) - 1.0) < 1e-10


def test_signed_permutation_match_recovers_columns(rng):
    q = linalg.random_rotation(5, rng).values
    perm = [2, 0, 4, 1, 3]
    flipped = q[:, perm] * np.array([-1.0, -1.0, 1.0, 1.0, 1.0])
    if np.linalg.det(flipped) < 0:
        flipped[:, -1] = -flipped[:, -1]
    estimate = OrthogonalBasis(flipped)
    assert linalg.max_column_angle(estimate, OrthogonalBasis(q)) < 1e-6
    assert [i for i, _, _ in linalg.signed_permutation_match(estimate, OrthogonalBasis(q))] == list(range(5))


def test_value_types_reject_broken_invariants():
    with pytest.raises(InvariantViolation):
        CovarianceMatrix([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(InvariantViolation):
        CovarianceMatrix([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(InvariantViolation):
        SkewMatrix([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InvariantViolation):
        OrthogonalBasis([[1.0, 0.0], [0.0, -1.0]])
