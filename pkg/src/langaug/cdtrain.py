"""Contrastive-divergence training of pairwise energy models.

Each model bridges an ordered domain pair (i -> j): positives are drawn
from domain j, negatives are Langevin chains started at domain i samples
under the current parameters, and the update is the difference of
batch-mean parameter gradients, fed to Adam. Negatives are re-initialized
from domain i every iteration; there is no replay buffer.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .energy import (EnergyArch, EnergyParams, _backward_batch, _check_batch,
                     _forward_batch, energy_forward_batch, init_energy_params,
                     save_energy_params)
from .errors import ConfigError, DivergenceError
from .langevin import LangevinConfig, run_chain_batch
from .numerics import AdamHyper, adam_step, derive_stream, init_adam_state


@dataclass(frozen=True)
class CdConfig:
    n_iters: int = 150
    batch_size: int = 8
    ld: LangevinConfig = field(default_factory=lambda: LangevinConfig(step_size=0.1, n_steps=15))
    adam: AdamHyper = field(default_factory=AdamHyper)
    base_seed: int = 0
    grad_clip: float | None = None
    checkpoint_every: int | None = None

    def __post_init__(self):
        if self.n_iters < 0:
            raise ConfigError("n_iters must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.ld.n_steps < 1:
            raise ConfigError("training-time chains need at least one step")


@dataclass
class TrainTrace:
    cd_surrogate: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    grad_mean: list[float] = field(default_factory=list)  # mean component, drift diagnostics

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "cd_surrogate", "grad_norm"])
            for i, (s, g) in enumerate(zip(self.cd_surrogate, self.grad_norm)):
                writer.writerow([i, repr(s), repr(g)])


def _mean_param_grad(params: EnergyParams, batch: np.ndarray) -> np.ndarray:
    X, _ = _check_batch(params.arch, batch)
    _, cache = _forward_batch(params, X)
    _, dtheta = _backward_batch(params, X, cache, np.full(X.shape[0], 1.0 / X.shape[0]), False, True)
    return dtheta


def cd_gradient(params: EnergyParams, pos_batch: np.ndarray, neg_batch: np.ndarray) -> np.ndarray:
    """Batch-mean parameter gradient on positives minus on negatives."""
    pos_batch = np.asarray(pos_batch, dtype=np.float64)
    neg_batch = np.asarray(neg_batch, dtype=np.float64)
    if pos_batch.size == 0 or neg_batch.size == 0:
        raise ConfigError("cd_gradient needs non-empty batches")
    return _mean_param_grad(params, pos_batch) - _mean_param_grad(params, neg_batch)


def train_ebm(dataset_i: np.ndarray, dataset_j: np.ndarray, arch: EnergyArch,
              config: CdConfig, checkpoint_dir=None) -> tuple[EnergyParams, TrainTrace]:
    """Train the (i -> j) bridge model. dataset_* are sample stacks (n, ...)."""
    dataset_i = np.asarray(dataset_i, dtype=np.float64)
    dataset_j = np.asarray(dataset_j, dtype=np.float64)
    if dataset_i.shape[0] == 0 or dataset_j.shape[0] == 0:
        raise ConfigError("both domains need samples")
    if config.batch_size > min(dataset_i.shape[0], dataset_j.shape[0]):
        raise ConfigError("batch_size exceeds the smaller domain size")

    params = init_energy_params(arch, config.base_seed)
    state = init_adam_state(arch.param_count, config.adam)
    trace = TrainTrace()
    sample_shape = dataset_i.shape[1:]
    for it in range(config.n_iters):
        pick = derive_stream(config.base_seed, [("cd_iter", it), ("pick", 0)])
        pos = dataset_j[pick.choice(dataset_j.shape[0], config.batch_size)]
        x0 = dataset_i[pick.choice(dataset_i.shape[0], config.batch_size)]
        noise = derive_stream(config.base_seed, [("cd_iter", it), ("ld_noise", 0)]).standard_normal(
            (config.ld.n_steps, config.batch_size) + sample_shape
        )
        try:
            neg, _ = run_chain_batch(x0, params, config.ld, noise)
        except DivergenceError as err:
            raise DivergenceError(
                f"training chain diverged at iteration {it}: {err}", step=it
            ) from err
        grad = cd_gradient(params, pos, neg)
        if config.grad_clip is not None:
            norm = float(np.linalg.norm(grad))
            if norm > config.grad_clip:
                grad = grad * (config.grad_clip / norm)
        surrogate = float(np.mean(energy_forward_batch(params, pos))
                          - np.mean(energy_forward_batch(params, neg)))
        theta, state = adam_step(params.theta, grad, state)
        params = EnergyParams(arch=arch, theta=theta)
        trace.cd_surrogate.append(surrogate)
        trace.grad_norm.append(float(np.linalg.norm(grad)))
        trace.grad_mean.append(float(np.mean(grad)))
        if (checkpoint_dir is not None and config.checkpoint_every
                and (it + 1) % config.checkpoint_every == 0):
            save_energy_params(params, Path(checkpoint_dir) / f"ckpt_{it + 1:06d}")
    return params, trace


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def train_all_pairs(domain_samples: list[np.ndarray], arch: EnergyArch, config: CdConfig,
                    out_dir=None) -> dict[tuple[int, int], EnergyParams]:
    """One trained model per ordered domain pair; n domains give n(n-1)."""
    n = len(domain_samples)
    if n < 2:
        raise ConfigError("need at least 2 domains")
    models = {}
    for i, j in ordered_pairs(n):
        pair_config = replace(config, base_seed=config.base_seed + 7919 * (i * n + j) + 1)
        try:
            params, trace = train_ebm(domain_samples[i], domain_samples[j], arch, pair_config)
        except (ConfigError, DivergenceError) as err:
            raise type(err)(f"pair ({i}, {j}): {err}") from err
        models[(i, j)] = params
        if out_dir is not None:
            base = Path(out_dir) / f"ebm_{i}_{j}"
            save_energy_params(params, base, pair=(i, j))
            trace.write_csv(Path(out_dir) / f"trace_{i}_{j}.csv")
    return models
