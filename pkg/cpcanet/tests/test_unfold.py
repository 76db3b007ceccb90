import numpy as np
import pytest

from cpcanet.app.exceptions import DimensionTooSmall, ShapeMismatch, StepSizeOutOfRange
from cpcanet.app.models.matrices import CovarianceSet, OrthogonalBasis
from cpcanet.app.schemas.solver import UnfoldConfig
from cpcanet.app.services import data, fg, linalg
from cpcanet.app.services.unfold import check_step_sizes, cpca_loss, riemannian_gradient, unfold_solve


def random_covariance_set(dim, n_domains, rng):
    mats = []
    for _ in range(n_domains):
        a = rng.standard_normal((dim, dim))
        mats.append(a @ a.T / dim + 0.2 * np.eye(dim))
    return CovarianceSet.from_arrays(mats, rng.uniform(1.0, 3.0, size=n_domains))


def projection_form(basis, covs):
    """(beta^T G - G^T beta) / 2 with the Euclidean gradient G = 2 sum_k n_k S_k beta Lambda_k^{-1}."""
    b = basis.values
    g_euc = np.zeros_like(b)
    for s, n in covs:
        lam = np.diag(b.T @ s @ b)
        g_euc += 2.0 * n * s @ b @ np.diag(1.0 / lam)
    return (b.T @ g_euc - g_euc.T @ b) / 2.0


def test_gradient_pathways_agree(rng):
    for _ in range(100):
        covs = random_covariance_set(8, 3, rng)
        basis = linalg.random_rotation(8, rng)
        torque = riemannian_gradient(basis, covs, eps=0.0).values
        np.testing.assert_allclose(torque, projection_form(basis, covs), atol=1e-10)


def test_gradient_vanishes_for_diagonal_inputs():
    covs = CovarianceSet.from_arrays([np.diag([1.0, 2.0, 3.0]), np.diag([3.0, 1.0, 2.0])], [1.0, 1.0])
    np.testing.assert_array_equal(riemannian_gradient(OrthogonalBasis.identity(3), covs).values, np.zeros((3, 3)))


def test_tied_variances_produce_no_torque():
    s = np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 1.0]])
    covs = CovarianceSet.from_arrays([s], [1.0])
    torque = riemannian_gradient(OrthogonalBasis.identity(3), covs).values
    assert torque[0, 1] == 0.0


def test_diagonal_inputs_leave_identity():
    covs = CovarianceSet.from_arrays([np.diag([1.0, 2.0, 4.0]), np.diag([2.0, 5.0, 1.0])], [10.0, 10.0])
    beta, trace = unfold_solve(covs, [0.2, 0.2, 0.2])
    np.testing.assert_array_equal(beta.values, np.eye(3))
    assert all(s.grad_norm == 0.0 for s in trace.stages)


def test_trace_structure(commuting_ensemble):
    covs = commuting_ensemble.covariances
    beta, trace = unfold_solve(covs, [0.1, 0.2, 0.3, 0.4])
    assert len(trace.stages) == 4
    np.testing.assert_array_equal(trace.initial.a.values, np.zeros((6, 6)))
    np.testing.assert_array_equal(trace.initial.beta.values, np.eye(6))
    assert [s.eta for s in trace.stages] == [0.1, 0.2, 0.3, 0.4]
    assert beta is trace.final.beta
    for stage in trace.stages:
        b = stage.beta.values
        assert np.linalg.norm(b.T @ b - np.eye(6)) < 1e-10
        assert stage.offdiag == pytest.approx(cpca_loss(stage.beta, covs))
    doc = trace.to_dict()
    assert [row["stage"] for row in doc["stages"]] == [0, 1, 2, 3, 4]


def test_first_stage_lowers_objective(commuting_ensemble):
    covs = commuting_ensemble.covariances
    _, trace = unfold_solve(covs, [0.01])
    assert trace.stages[0].objective < trace.initial.objective


@pytest.mark.slow
def test_closes_the_gap_to_the_classical_fit():
    """Final off-diagonal energy closes at least 90% of the gap from beta = I to the pairwise-rotation fit."""
    passed = 0
    for seed in range(100):
        covs = data.gen_common_ensemble(8, 3, seed=seed).covariances
        start = cpca_loss(OrthogonalBasis.identity(8), covs)
        target = cpca_loss(fg.fg_fit(covs).basis, covs)
        beta, _ = unfold_solve(covs, [0.1] * 50, UnfoldConfig(stages=50, proj_dim=8))
        final = cpca_loss(beta, covs)
        if final < start and (start - final) >= 0.9 * (start - target):
            passed += 1
    assert passed >= 95


def test_small_steps_never_raise_the_objective():
    monotone = 0
    for seed in range(100):
        covs = data.gen_common_ensemble(8, 3, seed=seed).covariances
        _, trace = unfold_solve(covs, [0.01] * 20)
        objectives = trace.objectives()
        if all(b <= a for a, b in zip(objectives, objectives[1:])):
            monotone += 1
    assert monotone >= 95


def test_quarter_steps_lower_energy_and_objective(commuting_ensemble):
    _, trace = unfold_solve(commuting_ensemble.covariances, [0.25] * 50)
    assert trace.final.offdiag < trace.initial.offdiag
    assert trace.final.objective < trace.initial.objective


def test_diagonal_ensemble_keeps_every_objective():
    covs = CovarianceSet.from_arrays([np.diag([1.0, 3.0, 2.0, 5.0]), np.diag([4.0, 1.0, 2.5, 0.5])], [5.0, 8.0])
    _, trace = unfold_solve(covs, [0.3] * 6)
    objectives = trace.objectives()
    assert objectives == [objectives[0]] * 7


def test_rescaled_covariances_keep_the_gradient_pattern(rng):
    for _ in range(20):
        covs = random_covariance_set(6, 3, rng)
        basis = linalg.random_rotation(6, rng)
        torque = riemannian_gradient(basis, covs).values
        peak = np.unravel_index(np.argmax(np.abs(np.triu(torque, 1))), torque.shape)
        for c in (0.5, 2.0):
            scaled = CovarianceSet.from_arrays([c * s for s in covs.arrays()], covs.weights)
            other = riemannian_gradient(basis, scaled).values
            assert np.array_equal(np.sign(other), np.sign(torque))
            assert np.unravel_index(np.argmax(np.abs(np.triu(other, 1))), other.shape) == peak


def test_step_size_contract():
    assert check_step_sizes([0.1, 0.2], 2).shape == (1, 2)
    for bad in ([0.0, 0.1], [0.1, 0.5], [-0.1, 0.2]):
        with pytest.raises(StepSizeOutOfRange):
            check_step_sizes(bad, 2)
    with pytest.raises(ShapeMismatch):
        check_step_sizes([0.1, 0.1, 0.1], 2)


def test_cpca_loss():
    assert cpca_loss(OrthogonalBasis.identity(2), CovarianceSet.from_arrays([np.diag([1.0, 2.0])], [1.0])) == 0.0
    s = np.array([[1.0, 3.0], [3.0, 10.0]])
    covs = CovarianceSet.from_arrays([s, np.eye(2)], [1.0, 1.0])
    # (9 + 9) / 2 for the first domain, 0 for the second
    assert cpca_loss(OrthogonalBasis.identity(2), covs) == pytest.approx(4.5)
    with pytest.raises(DimensionTooSmall):
        cpca_loss(OrthogonalBasis.identity(1), CovarianceSet.from_arrays([[[1.0]]], [1.0]))
