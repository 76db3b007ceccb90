import numpy as np
import pytest

from cpcanet.app.exceptions import NotConverged
from cpcanet.app.models.matrices import CovarianceSet, OrthogonalBasis
from cpcanet.app.schemas.solver import FgConfig
from cpcanet.app.services import data, fg, linalg


def two_by_two_objective(theta, covs):
    """J over a grid of rotation angles for d = 2."""
    c, s = np.cos(theta), np.sin(theta)
    total = np.zeros_like(theta)
    for mat, n in covs:
        lam1 = c * c * mat[0, 0] + 2 * c * s * mat[0, 1] + s * s * mat[1, 1]
        lam2 = s * s * mat[0, 0] - 2 * c * s * mat[0, 1] + c * c * mat[1, 1]
        total += n * (np.log(lam1) + np.log(lam2))
    return total


def test_rotation_angle():
    assert fg.rotation_angle(np.diag([2.0, 1.0])) == 0.0
    assert fg.rotation_angle(np.array([[1.0, 0.5], [0.5, 1.0]])) == pytest.approx(np.pi / 4)
    h = np.array([[2.0, 1.0], [1.0, 1.0]])
    theta = fg.rotation_angle(h)
    r = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert abs((r.T @ h @ r)[0, 1]) < 1e-12


def test_recovers_planted_basis_on_commuting_ensembles():
    for seed in range(100):
        ensemble = data.gen_common_ensemble(8, 3, seed=seed)
        result = fg.fg_fit(ensemble.covariances)
        assert result.converged
        assert linalg.max_column_angle(result.basis, ensemble.truth) < 1e-6
        assert fg.ml_residual(result.basis, ensemble.covariances) < 1e-6


def test_objective_reaches_log_det_bound(commuting_ensemble):
    covs = commuting_ensemble.covariances
    result = fg.fg_fit(covs)
    bound = sum(n * np.linalg.slogdet(s)[1] for s, n in covs)
    assert fg.negloglik(result.basis, covs) == pytest.approx(bound, rel=1e-10)


def test_single_domain_gives_eigenvectors(rng):
    a = rng.standard_normal((5, 5))
    covs = CovarianceSet.from_arrays([a @ a.T + np.eye(5)], [10.0])
    result = fg.fg_fit(covs)
    assert result.converged
    assert linalg.diag_residual(result.basis, covs.arrays()[0]) < 1e-8


def test_two_by_two_matches_angle_grid():
    covs = data.gen_common_ensemble(2, 2, noise=0.1, seed=5).covariances
    grid = np.linspace(0.0, np.pi, 31416, endpoint=False)
    best = two_by_two_objective(grid, covs).min()
    result = fg.fg_fit(covs)
    assert fg.negloglik(result.basis, covs) <= best + 1e-6


def test_beats_identity_on_near_common_ensembles():
    for seed in range(100):
        covs = data.gen_common_ensemble(5, 3, noise=0.1, seed=seed).covariances
        result = fg.fg_fit(covs)
        assert fg.negloglik(result.basis, covs) <= fg.negloglik(OrthogonalBasis.identity(5), covs) + 1e-9


def test_noisy_ensemble_stays_close_to_truth():
    ensemble = data.gen_common_ensemble(8, 3, noise=0.05, seed=11)
    result = fg.fg_fit(ensemble.covariances)
    assert linalg.max_column_angle(result.basis, ensemble.truth) < 0.2


def test_canonical_form(commuting_ensemble):
    result = fg.fg_fit(commuting_ensemble.covariances)
    b = result.basis.values
    assert np.linalg.det(b) == pytest.approx(1.0, abs=1e-8)
    weighted = np.asarray(commuting_ensemble.covariances.weights) @ result.lambdas
    assert np.all(np.diff(weighted) <= 1e-12)
    for j in range(b.shape[1] - 1):
        assert b[np.argmax(np.abs(b[:, j])), j] > 0


def test_lambdas_match_recomputation(commuting_ensemble):
    covs = commuting_ensemble.covariances
    result = fg.fg_fit(covs)
    for k, s in enumerate(covs.arrays()):
        np.testing.assert_allclose(result.lambdas[k], np.diag(linalg.transform(s, result.basis)), atol=1e-10)
    assert np.all(result.lambdas >= 0)


def test_objective_invariant_under_signed_permutations(commuting_ensemble, rng):
    covs = commuting_ensemble.covariances
    basis = linalg.random_rotation(6, rng)
    shuffled = basis.values[:, rng.permutation(6)] * rng.choice([-1.0, 1.0], size=6)
    if np.linalg.det(shuffled) < 0:
        shuffled[:, 0] = -shuffled[:, 0]
    assert fg.negloglik(OrthogonalBasis(shuffled), covs) == pytest.approx(fg.negloglik(basis, covs), rel=1e-12)


def test_not_converged_is_flagged_or_raised():
    covs = data.gen_common_ensemble(6, 3, noise=0.5, seed=2).covariances
    config = FgConfig(max_sweeps=1, tol=1e-14)
    result = fg.fg_fit(covs, config)
    assert not result.converged
    assert result.sweeps_used == 1
    with pytest.raises(NotConverged):
        fg.fg_fit(covs, config, strict=True)
