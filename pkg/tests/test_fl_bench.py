import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timelyfl.fl_bench import (
    FLConfig,
    aggregate,
    generate_task,
    local_update,
    mse,
    mse_grad,
    select_clients,
    train,
)
from timelyfl.order_stats import DomainError
from timelyfl.protocol_sim import SchemeKind

SMALL = dict(d=20, n_clients=10, samples_per_client=8, batch_size=8, iterations=30,
             repeats=2, k=3, m=5, test_samples=50)


def test_reference_setup_sizes():
    st_ = generate_task(FLConfig(repeats=1))
    assert st_.features.shape == (100, 20, 1000)
    assert st_.features.shape[0] * st_.features.shape[1] == 2000
    assert st_.global_model.shape == (1000,)


def test_noiseless_truth_has_zero_loss():
    s = generate_task(FLConfig(noise_std=0.0, **SMALL))
    assert s.train_loss(s.true_model) == pytest.approx(0.0, abs=1e-20)
    assert s.test_loss(s.true_model) == pytest.approx(0.0, abs=1e-20)


def test_task_deterministic():
    a = generate_task(FLConfig(seed=4, **SMALL))
    b = generate_task(FLConfig(seed=4, **SMALL))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    c = generate_task(FLConfig(seed=5, **SMALL))
    assert not np.array_equal(a.features, c.features)


def test_local_update_fixed_point():
    s = generate_task(FLConfig(noise_std=0.0, **SMALL))
    w = local_update(s.true_model, s.features[0], s.labels[0], 5, 0.01, 8)
    np.testing.assert_allclose(w, s.true_model, atol=1e-12)


def test_local_update_one_full_batch_step():
    rng = np.random.default_rng(0)
    x, y, w = rng.standard_normal((6, 4)), rng.standard_normal(6), rng.standard_normal(4)
    expected = w - 0.05 * (2 / 6) * x.T @ (x @ w - y)
    np.testing.assert_allclose(local_update(w, x, y, 1, 0.05, 6), expected, rtol=1e-14)


def test_local_update_hand_computed():
    # X = [[1, 2], [3, 4]], y = [1, 0], theta = 0, eta = 0.1
    # grad = (2/2) X^T (0 - y) = -[1, 2]; step -> [0.1, 0.2]
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = np.array([1.0, 0.0])
    np.testing.assert_allclose(local_update(np.zeros(2), x, y, 1, 0.1, 2), [0.1, 0.2])


def test_local_update_errors():
    with pytest.raises(DomainError):
        local_update(np.zeros(3), np.ones((4, 2)), np.ones(4), 1, 0.1, 4)
    with pytest.raises(DomainError):
        local_update(np.zeros(2), np.ones((4, 2)), np.ones(4), 1, 0.1, 2)


def test_minibatch_uses_rng():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((10, 3)), rng.standard_normal(10)
    a = local_update(np.zeros(3), x, y, 4, 0.05, 3, np.random.default_rng(1))
    b = local_update(np.zeros(3), x, y, 4, 0.05, 3, np.random.default_rng(1))
    assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 10), n=st.integers(1, 12), seed=st.integers(0, 2**32))
def test_gradient_finite_differences(d, n, seed):
    rng = np.random.default_rng(seed)
    x, y, w = rng.standard_normal((n, d)), rng.standard_normal(n), rng.standard_normal(d)
    g = mse_grad(w, x, y)
    h = 1e-5
    fd = np.array([(mse(w + h * e, x, y) - mse(w - h * e, x, y)) / (2 * h) for e in np.eye(d)])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_aggregate_weights():
    models = np.arange(12.0).reshape(3, 4)
    np.testing.assert_allclose(aggregate(models, [20, 20, 20]), models.mean(axis=0))
    np.testing.assert_allclose(aggregate(models, [1, 0, 3]), (models[0] + 3 * models[2]) / 4)
    w = np.array([3.0, 7.0, 11.0])
    assert (w / w.sum()).sum() == pytest.approx(1.0, abs=1e-12)


def test_full_participation_monotone():
    cfg = FLConfig(noise_std=0.0, eta=0.01, k=10, m=10, scheme="earliest", **{
        k: v for k, v in SMALL.items() if k not in ("k", "m")})
    h = train(cfg)
    assert np.all(np.diff(h.train_loss) <= 0)


@pytest.mark.parametrize("scheme", ["earliest", "random"])
def test_selection_shape_and_distinct(scheme):
    cfg = FLConfig(scheme=scheme, **SMALL)
    sel = select_clients(cfg)
    assert sel.shape == (30, 3)
    assert all(len(set(row)) == 3 for row in sel)


def test_selection_marginal():
    cfg = FLConfig(d=2, n_clients=20, samples_per_client=2, batch_size=2, iterations=4000,
                   repeats=1, k=4, m=10, test_samples=2)
    sel = select_clients(cfg)
    freq = np.bincount(sel.ravel(), minlength=20) / 4000
    se = np.sqrt(0.2 * 0.8 / 4000)
    assert np.all(np.abs(freq - 0.2) < 3 * se)


def test_train_deterministic_and_counts():
    cfg = FLConfig(seed=9, **SMALL)
    a, b = train(cfg), train(cfg)
    assert np.array_equal(a.train_loss, b.train_loss)
    assert np.array_equal(a.test_loss, b.test_loss)
    assert a.inclusion_counts.sum() == cfg.k * cfg.iterations * cfg.repeats
    assert len(a.rows()) == cfg.iterations + 1 and a.rows()[0][0] == 0


@pytest.mark.parametrize("kw", [
    dict(batch_size=9), dict(k=6, m=5), dict(eta=0.0), dict(noise_std=-1.0), dict(tau=0),
])
def test_bad_config(kw):
    with pytest.raises(DomainError):
        FLConfig(**dict(SMALL, **kw))


def test_random_k_ignores_m():
    cfg = FLConfig(**dict(SMALL, scheme=SchemeKind.RANDOM_K, k=7, m=5))
    assert cfg.system_params().k == 7
