import numpy as np
import pytest

from cpcanet.app.exceptions import DegenerateBatch, SchemaMismatch
from cpcanet.app.models.matrices import OrthogonalBasis
from cpcanet.app.services import data, linalg, net
from cpcanet.app.services.unfold import cpca_loss
from cpcanet.app.utils.serialization import write_domain_csv


def naive_erm_accuracies(dataset, steps=300, lr=0.1):
    """(in-domain, held-out) accuracy of a linear softmax on raw inputs."""
    train = dataset.training_domains()
    x = np.vstack([d[0] for d in train])
    y = np.concatenate([d[1] for d in train])
    clf = net.fit_naive_classifier(x, y, dataset.n_classes, steps=steps, lr=lr)
    hx, hy = dataset.heldout_domain()
    return net.accuracy(clf.logits(x), y), net.accuracy(clf.logits(hx), hy)


def test_gapped_spectrum(rng):
    values = np.sort(data.gapped_spectrum(10, 0.5, 5.0, rng))
    assert values[0] >= 0.5 and values[-1] <= 5.0
    assert np.all(np.diff(values) >= 0.05 * 4.5 - 1e-12)


def test_common_ensemble_is_exactly_diagonal_in_truth():
    ensemble = data.gen_common_ensemble(8, 3, seed=4)
    assert cpca_loss(ensemble.truth, ensemble.covariances) < 1e-12
    assert ensemble.spectra.shape == (3, 8)
    s1, s2 = ensemble.covariances.arrays()[:2]
    assert np.abs(s1 @ s2 - s2 @ s1).max() < 1e-10


def test_common_ensemble_seeds():
    a = data.gen_common_ensemble(6, 2, seed=0)
    b = data.gen_common_ensemble(6, 2, seed=0)
    c = data.gen_common_ensemble(6, 2, seed=1)
    assert np.array_equal(a.truth.values, b.truth.values)
    assert np.linalg.norm(a.truth.values - c.truth.values) > 0.1


def test_noisy_ensemble_is_psd():
    ensemble = data.gen_common_ensemble(5, 4, noise=2.0, seed=9)
    for s in ensemble.covariances.arrays():
        assert np.linalg.eigvalsh(s).min() >= -1e-10


def test_toy_dataset_layout(toy_dataset):
    assert toy_dataset.n_domains == 3
    assert toy_dataset.heldout == 2
    assert toy_dataset.spurious_correlation[2] == -1.0
    assert toy_dataset.spurious_correlation[:2] == (1.0, 0.5)
    for x, y in toy_dataset.domains:
        assert x.shape == (60, 8)
        assert y.min() >= 0 and y.max() < 3
    assert len(toy_dataset.training_domains()) == 2


def test_toy_dataset_rejects_narrow_inputs():
    with pytest.raises(SchemaMismatch):
        data.gen_toy_dg(5, 3, 3, 10, 1.0)


def test_toy_dataset_is_deterministic():
    a = data.gen_toy_dg(8, 3, 2, 20, 1.0, seed=5)
    b = data.gen_toy_dg(8, 3, 2, 20, 1.0, seed=5)
    for (xa, ya), (xb, yb) in zip(a.domains, b.domains):
        assert np.array_equal(xa, xb) and np.array_equal(ya, yb)


def test_class_means_share_the_invariant_directions():
    dataset = data.gen_toy_dg(12, 3, 3, 3000, 0.0, seed=1)
    r = dataset.rotation.values
    for c in range(3):
        means = [x[y == c].mean(axis=0) @ r[:, c] for x, y in dataset.domains]
        assert max(means) - min(means) < 0.15


def test_domain_stream_batches(toy_dataset, rng):
    stream = data.DomainStream(toy_dataset.training_domains(), 7, rng, n_classes=3)
    batch = next(stream)
    assert batch.size == 14
    assert batch.n_domains == 2
    assert [batch.rows(k).size for k in range(2)] == [7, 7]


def test_domain_stream_resamples_small_domains(rng):
    small = (rng.standard_normal((3, 2)), np.array([0, 1, 0]))
    batch = next(data.DomainStream([small, small], 5, rng))
    assert batch.size == 10


def test_domain_stream_rejects_single_row_domain(rng):
    with pytest.raises(DegenerateBatch):
        data.DomainStream([(np.ones((1, 2)), np.array([0])), (np.ones((3, 2)), np.array([0, 1, 0]))], 2, rng)


def test_csv_loading(tmp_path, toy_dataset):
    paths = []
    for k, (x, y) in enumerate(toy_dataset.training_domains()):
        path = tmp_path / f"d{k}.csv"
        write_domain_csv(path, x, y)
        paths.append(path)
    stream = data.load_domain_csv(paths, batch_per_domain=5, seed=1, n_classes=3)
    assert next(stream).size == 10

    write_domain_csv(tmp_path / "narrow.csv", np.ones((4, 3)), np.zeros(4, dtype=int))
    with pytest.raises(SchemaMismatch):
        data.load_domain_csv([paths[0], tmp_path / "narrow.csv"])


def test_manifest_round_trip(tmp_path, toy_dataset):
    manifest_path = data.write_toy_dataset(tmp_path / "toy", toy_dataset)
    manifest, domains = data.load_manifest_dataset(manifest_path)
    assert manifest.heldout == toy_dataset.heldout
    assert (manifest.p, manifest.C) == (8, 3)
    for (x, y), (x0, y0) in zip(domains, toy_dataset.domains):
        assert np.array_equal(x, x0) and np.array_equal(y, y0)


def test_identical_domains_without_spurious_signal():
    gaps = []
    for seed in range(5):
        train_acc, heldout_acc = naive_erm_accuracies(data.gen_toy_dg(20, 4, 4, 1000, 0.0, seed=seed))
        gaps.append(train_acc - heldout_acc)
    assert abs(np.median(gaps)) < 0.05


def test_flipped_spurious_signal_hurts_erm():
    gaps = []
    for seed in range(5):
        train_acc, heldout_acc = naive_erm_accuracies(data.gen_toy_dg(20, 4, 4, 1000, 3.0, seed=seed))
        gaps.append(train_acc - heldout_acc)
    assert np.median(gaps) >= 0.10


def test_permuted_labels_leave_chance_accuracy(rng):
    dataset = data.gen_toy_dg(20, 4, 4, 2000, 3.0, seed=0)
    shuffled = tuple((x, rng.permutation(y)) for x, y in dataset.domains)
    permuted = type(dataset)(shuffled, dataset.heldout, dataset.rotation, dataset.spurious_correlation, 4)
    _, heldout_acc = naive_erm_accuracies(permuted)
    assert abs(heldout_acc - 0.25) < 0.05


def test_project_samples_on_toy_rotation(toy_dataset):
    x, _ = toy_dataset.domains[0]
    u = linalg.project_samples(x, toy_dataset.rotation)
    np.testing.assert_allclose(u @ toy_dataset.rotation.values.T, x, atol=1e-10)
    assert isinstance(toy_dataset.rotation, OrthogonalBasis)
