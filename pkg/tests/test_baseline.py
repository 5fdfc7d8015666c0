"""POD decomposition and the POD-MLP baseline."""

import numpy as np
import pytest

from recfno.baseline import PODBasis, PodMlp, pod_fit, pod_project, pod_reconstruct
from recfno.errors import ConfigError, ResolutionError
from recfno.rng import Rng


def test_single_snapshot_degenerate_rank(rng):
    snap = rng.normal((1, 4, 4))
    basis = pod_fit(snap, r=1)
    assert np.allclose(basis.mean, snap[0])
    assert basis.singular_values[0] == 0.0
    assert np.all(basis.modes[0] == 0.0)


def test_antisymmetric_pair_gives_one_mode(rng):
    u = rng.normal((6, 5))
    snaps = np.stack([u, -u])
    basis = pod_fit(snaps, r=2)
    assert np.allclose(basis.mean, 0.0, atol=1e-12)
    direction = basis.modes[0].ravel()
    cos = abs(direction @ u.ravel()) / np.linalg.norm(u)
    assert abs(cos - 1.0) < 1e-10
    assert basis.singular_values[1] < 1e-10 * basis.singular_values[0]


def test_pod_matches_dense_svd(rng):
    snaps = rng.normal((50, 16, 16))
    basis = pod_fit(snaps, r=10)
    centered = (snaps - snaps.mean(axis=0)).reshape(50, -1)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    assert np.max(np.abs(basis.singular_values - s[:10])) < 1e-8
    for i in range(10):
        dot = abs(basis.modes[i].ravel() @ vt[i])
        assert abs(dot - 1.0) < 1e-8  # equal up to sign


def test_modes_orthonormal_and_sorted(rng):
    snaps = rng.normal((30, 8, 8))
    basis = pod_fit(snaps, r=12)
    flat = basis.modes.reshape(12, -1)
    gram = flat @ flat.T
    assert np.max(np.abs(gram - np.eye(12))) < 1e-8
    assert np.all(np.diff(basis.singular_values) <= 1e-12)


def test_project_reconstruct_identity_on_span(rng):
    snaps = rng.normal((12, 6, 6))
    basis = pod_fit(snaps, r=12)
    for i in range(12):
        coeffs = pod_project(basis, snaps[i])
        back = pod_reconstruct(basis, coeffs)
        assert np.max(np.abs(back - snaps[i])) < 1e-6


def test_zero_coefficients_give_mean(rng):
    snaps = rng.normal((9, 5, 5))
    basis = pod_fit(snaps, r=4)
    assert np.allclose(pod_reconstruct(basis, np.zeros(4)), basis.mean)


def test_reconstruction_error_monotone_in_rank(rng):
    # orthogonal projection is L2-optimal, so the L2 residual cannot grow
    snaps = rng.normal((20, 8, 8))
    field = snaps[3]
    prev = np.inf
    for r in (1, 2, 4, 8, 16, 20):
        basis = pod_fit(snaps, r=r)
        err = float(np.linalg.norm(pod_reconstruct(basis, pod_project(basis, field)) - field))
        assert err <= prev + 1e-12
        prev = err


def test_projection_energy_monotone(rng):
    snaps = rng.normal((20, 8, 8))
    field = snaps[5]
    energies = []
    for r in (1, 3, 6, 12, 20):
        basis = pod_fit(snaps, r=r)
        energies.append(float(np.sum(pod_project(basis, field) ** 2)))
    assert all(b >= a - 1e-10 for a, b in zip(energies, energies[1:]))


def test_default_rank_energy_rule(rng):
    base = rng.normal((3, 10, 10))
    weights = rng.normal((40, 3)) * np.array([10.0, 3.0, 1.0])
    snaps = np.einsum("sk,kxy->sxy", weights, base)
    basis = pod_fit(snaps)
    assert 1 <= basis.rank <= 4  # three directions dominate


def test_rank_validation(rng):
    with pytest.raises(ConfigError):
        pod_fit(rng.normal((5, 4, 4)), r=6)


def test_pod_is_resolution_bound(rng):
    snaps = rng.normal((8, 6, 6))
    basis = pod_fit(snaps, r=3)
    model = PodMlp(basis, n_sensors=4, rng=Rng(0))
    with pytest.raises(ResolutionError):
        model.predict(np.zeros(4), output_shape=(12, 12))
    with pytest.raises(ResolutionError):
        pod_project(basis, rng.normal((12, 12)))


def test_prediction_shape(rng):
    snaps = rng.normal((8, 6, 7))
    basis = pod_fit(snaps, r=3)
    model = PodMlp(basis, n_sensors=4, rng=Rng(0))
    pred = model.predict(rng.normal(4))
    assert pred.shape == (6, 7)


def test_constant_dataset_predicts_mean(rng):
    snap = rng.normal((5, 5))
    snaps = np.stack([snap] * 6)
    basis = pod_fit(snaps, r=1)
    model = PodMlp(basis, n_sensors=3, rng=Rng(1))
    pred = model.predict(rng.normal(3))
    # all singular values are zero, so the only reachable output is the mean
    assert np.max(np.abs(pred - snap)) < 1e-10


def test_podmlp_learns_linear_synthetic_task():
    """Fields are an exact linear map of the observations: with the true rank
    the regression problem is solvable and validation MAE converges below
    1e-3 (under 1% of the field scale)."""
    from recfno.pipeline import PodMlpAdapter, Sample
    from recfno.train import Normalization, TrainConfig, train_loop

    rank, n_obs = 3, 6
    r = Rng(7)
    modes = r.normal((rank, 8, 8))
    mix = r.normal((n_obs, rank))
    rr = Rng(7).derive("data")
    obs = rr.normal((240, n_obs))
    fields = np.einsum("sk,kxy->sxy", obs @ mix, modes)
    scale = 0.1
    fields *= scale / fields[:200].std()
    samples = [Sample(obs[i], fields[i], fields[i]) for i in range(240)]
    train, val = samples[:200], samples[200:]
    basis = pod_fit(np.stack([s.target_norm for s in train]), r=rank)
    model = PodMlp(basis, n_obs, Rng(3), hidden=(96, 96))
    adapter = PodMlpAdapter(model, Normalization(0.0, 1.0))
    cfg = TrainConfig(epochs=200, batch_size=8, lr0=5e-3, decay=0.985, seed=0)
    result = train_loop(adapter, train, val, cfg)
    assert result.best_val_mae < 1e-3
    assert result.best_val_mae / scale < 0.01
