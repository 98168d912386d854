"""Local training tests: the returned delta must be exactly reproducible from
the primitive ops, seeded by (round_seed, client_id, epoch) alone."""

import numpy as np
import pytest

from fednorm.client import (
    ClientConfig,
    ClientUpdate,
    assign_weights,
    derive_seed,
    local_train,
)
from fednorm.data import batches, synth_dataset
from fednorm.errors import ConfigError
from fednorm.nn import Network, NetworkSpec, backward, init_params, prox_gradient_addend, sgd_step
from fednorm.params import axpy, delta, l2_norm

SPEC = NetworkSpec((4, 6, 3))


@pytest.fixture
def blob():
    return synth_dataset(3, 20, 4, seed=1)


def test_zero_learning_rate_zero_delta(blob):
    start = init_params(SPEC, seed=0)
    up = local_train(SPEC, start, blob, ClientConfig(learning_rate=0.0), 5, 2)
    assert np.array_equal(up.delta.values, np.zeros(SPEC.param_count))
    assert up.sample_count == 60
    assert up.client_id == 2


def test_single_batch_delta_is_one_sgd_step(blob):
    """With batch_size >= n and one epoch the delta is exactly one SGD step."""
    start = init_params(SPEC, seed=0)
    cfg = ClientConfig(learning_rate=0.1, batch_size=100, local_epochs=1,
                       weight_decay=0.001)
    up = local_train(SPEC, start, blob, cfg, round_seed=7, client_id=0)
    (batch,) = batches(blob, 100, derive_seed(7, 0, 1))
    stepped = sgd_step(start, backward(Network(SPEC, start), batch), 0.1, 0.001)
    assert np.array_equal(up.delta.values, delta(stepped, start).values)
    grad = backward(Network(SPEC, start), batch)
    manual = -0.1 * (grad.values + 0.001 * start.values)
    np.testing.assert_allclose(up.delta.values, manual, rtol=1e-12, atol=1e-15)


def test_multi_epoch_matches_manual_loop(blob):
    start = init_params(SPEC, seed=3)
    cfg = ClientConfig(learning_rate=0.05, batch_size=16, local_epochs=3, mu=0.4)
    up = local_train(SPEC, start, blob, cfg, round_seed=11, client_id=4)

    params = start
    for epoch in (1, 2, 3):
        for batch in batches(blob, 16, derive_seed(11, 4, epoch)):
            grad = backward(Network(SPEC, params), batch)
            grad = axpy(1.0, prox_gradient_addend(params, start, 0.4), grad)
            params = sgd_step(params, grad, 0.05, 0.0)
    assert np.array_equal(up.delta.values, delta(params, start).values)


def test_prox_anchor_is_round_start_not_epoch_start(blob):
    """Re-anchoring each epoch would give a different trajectory; the real
    anchor stays at the distributed parameters."""
    start = init_params(SPEC, seed=3)
    cfg = ClientConfig(learning_rate=0.05, batch_size=16, local_epochs=3, mu=5.0)
    up = local_train(SPEC, start, blob, cfg, round_seed=11, client_id=4)

    params = start
    for epoch in (1, 2, 3):
        anchor = params  # wrong on purpose
        for batch in batches(blob, 16, derive_seed(11, 4, epoch)):
            grad = backward(Network(SPEC, params), batch)
            grad = axpy(1.0, prox_gradient_addend(params, anchor, 5.0), grad)
            params = sgd_step(params, grad, 0.05, 0.0)
    assert not np.array_equal(up.delta.values, delta(params, start).values)


def test_large_mu_shrinks_delta(blob):
    # eta * mu must stay <= 1 or the explicit prox step overshoots the anchor
    start = init_params(SPEC, seed=0)
    norms = [
        l2_norm(local_train(SPEC, start, blob,
                            ClientConfig(learning_rate=0.001, mu=mu), 2, 0).delta)
        for mu in (0.0, 10.0, 100.0, 1000.0)
    ]
    assert norms == sorted(norms, reverse=True)
    assert norms[-1] < 0.15 * norms[0]


def test_determinism_and_client_separation(blob):
    start = init_params(SPEC, seed=0)
    cfg = ClientConfig()
    a = local_train(SPEC, start, blob, cfg, 9, 1)
    b = local_train(SPEC, start, blob, cfg, 9, 1)
    other = local_train(SPEC, start, blob, cfg, 9, 2)
    assert np.array_equal(a.delta.values, b.delta.values)
    assert not np.array_equal(a.delta.values, other.delta.values)


def test_derive_seed_is_stable_and_injective_enough():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    seen = {derive_seed(a, b) for a in range(20) for b in range(20)}
    assert len(seen) == 400


def test_empty_client_rejected():
    from fednorm.data import Dataset
    empty = Dataset(np.empty((0, 4)), np.empty(0, dtype=int), 3)
    start = init_params(SPEC, seed=0)
    with pytest.raises(ValueError, match="no data"):
        local_train(SPEC, start, empty, ClientConfig(), 0, 0)


def test_client_config_validation():
    with pytest.raises(ConfigError):
        ClientConfig(learning_rate=-0.1)
    with pytest.raises(ConfigError):
        ClientConfig(batch_size=0)
    with pytest.raises(ConfigError):
        ClientConfig(local_epochs=0)
    with pytest.raises(ConfigError):
        ClientConfig(weight_decay=-1e-9)
    with pytest.raises(ConfigError):
        ClientConfig(mu=-0.5)


def test_client_update_validation():
    start = init_params(SPEC, seed=0)
    with pytest.raises(ValueError):
        ClientUpdate(-1, start, 10)
    with pytest.raises(ValueError):
        ClientUpdate(0, start, 0)


def test_assign_weights_uniform_and_by_count():
    start = init_params(SPEC, seed=0)
    ups = [ClientUpdate(0, start, 10), ClientUpdate(1, start, 30)]
    assert assign_weights(ups) == [0.5, 0.5]
    assert assign_weights(ups, "by_sample_count") == [0.25, 0.75]
    three = [ClientUpdate(i, start, 5) for i in range(3)]
    w = assign_weights(three, "uniform")
    assert all(x == 1.0 / 3.0 for x in w)
    assert abs(sum(w) - 1.0) < 1e-12


def test_assign_weights_validation():
    start = init_params(SPEC, seed=0)
    with pytest.raises(ValueError):
        assign_weights([])
    with pytest.raises(ConfigError, match="by_sample_count"):
        assign_weights([ClientUpdate(0, start, 1)], "by_loudness")
