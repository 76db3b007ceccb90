import numpy as np
import pytest

from cpcanet.app.exceptions import DegenerateBatch, StepSizeOutOfRange, WrongDomainCount
from cpcanet.app.models.batch import DomainBatch
from cpcanet.app.models.matrices import CovarianceSet, OrthogonalBasis
from cpcanet.app.models.params import MODULATION_OUTPUTS, ModelParams
from cpcanet.app.models.results import ForwardOutput
from cpcanet.app.services import net
from cpcanet.app.services.data import DomainStream


def make_batch(dataset, config, seed=0):
    stream = DomainStream(dataset.training_domains(), config.batch_per_domain, np.random.default_rng(seed), config.n_classes)
    return next(stream)


def switch_on_modulation(params, rng):
    for name in MODULATION_OUTPUTS:
        params.arrays[name] = 0.1 * rng.standard_normal(params[name].shape)


def test_zero_init_matches_erm_bitwise(toy_dataset, toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    batch = make_batch(toy_dataset, toy_config)
    out = net.cpcanet_forward(batch, params, toy_config)
    assert np.array_equal(out.logits, net.erm_forward(batch, params, toy_config))


def test_zero_init_modulation_is_identity(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    f = rng.standard_normal((5, toy_config.feature_dim))
    u = rng.standard_normal((5, toy_config.proj_dim))
    assert np.array_equal(net.modulate(f, u, params), f)


def test_shift_bias_adds_per_channel(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    c = rng.standard_normal((1, toy_config.feature_dim))
    params.arrays["shift.b2"] = c
    f = rng.standard_normal((4, toy_config.feature_dim))
    u = rng.standard_normal((4, toy_config.proj_dim))
    assert np.array_equal(net.modulate(f, u, params), f + c)


def test_gamma_stays_in_range(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    switch_on_modulation(params, rng)
    params.arrays["shift.b2"] = np.zeros_like(params["shift.b2"])
    params.arrays["shift.W2"] = np.zeros_like(params["shift.W2"])
    f = np.ones((6, toy_config.feature_dim))
    gamma = net.modulate(f, rng.standard_normal((6, toy_config.proj_dim)), params)
    assert np.all((gamma > 0.0) & (gamma < 2.0))


def test_forward_output_invariants(toy_dataset, toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    switch_on_modulation(params, rng)
    batch = make_batch(toy_dataset, toy_config)
    out = net.cpcanet_forward(batch, params, toy_config)
    assert out.logits.shape == (batch.size, toy_config.n_classes)
    assert out.eta.shape == (toy_config.stages,)
    assert np.all((out.eta > 0.0) & (out.eta < 0.5))
    b = out.beta.values
    assert np.linalg.norm(b.T @ b - np.eye(toy_config.proj_dim)) < 1e-10
    assert out.l_total - out.l_task - toy_config.lambda_cpca * out.l_cpca == pytest.approx(0.0, abs=1e-12)
    assert out.covariances.weights == (toy_config.batch_per_domain - 1.0,) * toy_config.n_domains


def test_loss_and_grads_cover_every_parameter(toy_dataset, toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    batch = make_batch(toy_dataset, toy_config)
    out, grads = net.cpcanet_loss_and_grads(batch, params, toy_config)
    assert set(grads) == set(params.names())
    assert all(grads[n].shape == params[n].shape for n in params)
    assert out.l_total == pytest.approx(net.total_loss(out, batch.labels, toy_config.lambda_cpca, toy_config.smoothing))


def test_erm_grads_only_touch_backbone(toy_dataset, toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    loss, grads = net.erm_loss_and_grads(make_batch(toy_dataset, toy_config), params, toy_config)
    assert np.isfinite(loss)
    assert set(grads) == set(params.names("backbone"))


def test_hypernet_step_sizes_are_in_range(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    params.arrays["hyper.W2"] = 0.5 * rng.standard_normal(params["hyper.W2"].shape)
    mats = []
    for _ in range(toy_config.n_domains):
        a = rng.standard_normal((toy_config.proj_dim, toy_config.proj_dim))
        mats.append(a @ a.T)
    etas = net.hypernet_step_sizes(CovarianceSet.from_arrays(mats, [9.0, 9.0]), params, toy_config)
    assert etas.shape == (toy_config.stages,)
    assert np.all((etas > 0.0) & (etas < 0.5))


def random_covariances(config, rng):
    mats = []
    for _ in range(config.n_domains):
        a = rng.standard_normal((config.proj_dim, config.proj_dim))
        mats.append(a @ a.T)
    return CovarianceSet.from_arrays(mats, [9.0] * config.n_domains)


def test_saturated_hypernet_stays_inside_the_range(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    covs = random_covariances(toy_config, rng)
    for bias in (1e3, -1e3):
        params.arrays["hyper.b2"] = np.full(params["hyper.b2"].shape, bias)
        etas = net.hypernet_step_sizes(covs, params, toy_config)
        assert np.all((etas > 0.0) & (etas < 0.5))


def test_hypernet_step_sizes_are_range_checked(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    params.arrays["hyper.b2"] = np.full(params["hyper.b2"].shape, np.nan)
    with pytest.raises(StepSizeOutOfRange):
        net.hypernet_step_sizes(random_covariances(toy_config, rng), params, toy_config)


def test_zero_hypernet_gives_a_quarter(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    for name in ("hyper.W2", "hyper.b2"):
        params.arrays[name] = np.zeros_like(params[name])
    etas = net.hypernet_step_sizes(random_covariances(toy_config, rng), params, toy_config)
    assert np.all(etas == 0.25)


def test_wrong_domain_count(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    batch = DomainBatch(rng.standard_normal((9, toy_config.input_dim)), [0] * 9, [0, 0, 0, 1, 1, 1, 2, 2, 2])
    with pytest.raises(WrongDomainCount):
        net.cpcanet_forward(batch, params, toy_config)


def test_single_row_domain_is_rejected(toy_config, rng):
    with pytest.raises(DegenerateBatch):
        DomainBatch(rng.standard_normal((3, toy_config.input_dim)), [0, 1, 2], [0, 0, 1])


def test_task_loss_values():
    assert net.task_loss(np.zeros((4, 5)), np.array([0, 1, 2, 3]), 0.0) == pytest.approx(np.log(5))
    out = ForwardOutput(
        logits=np.zeros((2, 3)),
        beta=OrthogonalBasis.identity(2),
        covariances=CovarianceSet.from_arrays([np.eye(2)], [1.0]),
        l_task=0.0,
        l_cpca=9.0,
        l_total=0.0,
        eta=np.array([0.25]),
    )
    labels = np.array([0, 2])
    task = net.task_loss(out.logits, labels, 0.1)
    assert net.total_loss(out, labels, 5e-3, 0.1) - task == pytest.approx(0.045)
    assert net.total_loss(out, labels, 0.0, 0.1) == task


def test_predict_without_basis_is_erm(toy_dataset, toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    batch = make_batch(toy_dataset, toy_config)
    np.testing.assert_allclose(
        net.predict(params, batch.inputs, None), net.erm_forward(batch, params, toy_config), atol=1e-12
    )


def test_project_uses_bottleneck(toy_config, rng):
    params = ModelParams.init(toy_config, rng)
    x = rng.standard_normal((7, toy_config.input_dim))
    u_identity = net.project(params, x, OrthogonalBasis.identity(toy_config.proj_dim))
    assert u_identity.shape == (7, toy_config.proj_dim)
    flip = np.diag([-1.0, -1.0] + [1.0] * (toy_config.proj_dim - 2))
    np.testing.assert_allclose(net.project(params, x, OrthogonalBasis(flip)), u_identity @ flip, atol=1e-12)


def test_naive_classifier_separates_easy_data(rng):
    centers = np.array([[3.0, 0.0], [0.0, 3.0], [-3.0, -3.0]])
    labels = rng.integers(0, 3, size=300)
    u = centers[labels] + 0.3 * rng.standard_normal((300, 2))
    clf = net.fit_naive_classifier(u, labels, 3, steps=200, lr=0.1)
    assert net.accuracy(clf.logits(u), labels) > 0.95


def test_dropout_masks(toy_config, rng):
    masks = net.draw_masks(toy_config, rng, 12)
    assert set(masks) == {"hyper", "gamma", "shift"}
    assert masks["gamma"].shape == (12, toy_config.feature_dim)
    assert set(np.unique(masks["hyper"])) <= {0.0, 2.0}
    assert net.draw_masks(toy_config.model_copy(update={"dropout": 0.0}), rng, 12) == {}
