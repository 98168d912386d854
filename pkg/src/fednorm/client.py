"""Client-side local training: take the distributed parameters, run seeded
mini-batch SGD for a fixed number of epochs, and ship back the weight delta.

The proximal term (when mu > 0) is anchored at the parameters the server
distributed for this round; the anchor never moves between local epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, batches
from .errors import ConfigError
from .nn import Network, NetworkSpec, backward, prox_gradient_addend, sgd_step
from .params import ParamVector, axpy, delta

WEIGHT_MODES = ("uniform", "by_sample_count")


def derive_seed(*parts: int) -> int:
    """Deterministically mix integer identifiers (experiment seed, round,
    client, epoch) into one RNG seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ClientConfig:
    learning_rate: float = 0.05
    batch_size: int = 50
    local_epochs: int = 5
    weight_decay: float = 0.0
    mu: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.mu < 0:
            raise ConfigError("mu must be non-negative")


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    delta: ParamVector
    sample_count: int

    def __post_init__(self) -> None:
        if self.client_id < 0:
            raise ValueError("client_id must be non-negative")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


def local_train(net_spec: NetworkSpec, start: ParamVector, data: Dataset,
                config: ClientConfig, round_seed: int, client_id: int) -> ClientUpdate:
    """Run local_epochs of mini-batch SGD from `start` and return the delta.

    Batch order is drawn from derive_seed(round_seed, client_id, epoch), so the
    result depends only on those identifiers, never on scheduling.
    """
    if len(data) == 0:
        raise ValueError(f"client {client_id} has no data")
    params = start
    for epoch in range(1, config.local_epochs + 1):
        for batch in batches(data, config.batch_size,
                             derive_seed(round_seed, client_id, epoch)):
            grad = backward(Network(net_spec, params), batch)
            if config.mu > 0:
                grad = axpy(1.0, prox_gradient_addend(params, start, config.mu), grad)
            params = sgd_step(params, grad, config.learning_rate, config.weight_decay)
    return ClientUpdate(client_id, delta(params, start), len(data))


def assign_weights(updates: list[ClientUpdate], mode: str = "uniform") -> list[float]:
    """Aggregation weights for a round's updates, summing to 1."""
    if not updates:
        raise ValueError("no updates to weight")
    if mode == "uniform":
        return [1.0 / len(updates)] * len(updates)
    if mode == "by_sample_count":
        total = sum(u.sample_count for u in updates)
        return [u.sample_count / total for u in updates]
    raise ConfigError(f"weight mode must be one of {WEIGHT_MODES}, got {mode!r}")
