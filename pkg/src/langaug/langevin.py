"""Unadjusted Langevin dynamics over an energy function.

One step moves x by ``-(step^2 / 2) * grad E(x) + step * noise``; a chain
runs K such steps and keeps the iterates at (offset, offset + stride, ...)
up to K. A per-step content hook can overwrite one channel of the iterate
with the starting image's channel so positional structure survives.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .energy import EnergyParams, energy_value_and_grad_input
from .errors import ConfigError, DimensionError, DivergenceError
from .numerics import RngStream


@dataclass(frozen=True)
class LangevinConfig:
    step_size: float = 1.0
    n_steps: int = 40
    store_stride: int = 3
    store_offset: int = 3
    channel_replace: int | None = None
    clamp_unit: bool = False

    def __post_init__(self):
        if self.step_size < 0:
            raise ConfigError("step_size must be non-negative")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be non-negative")
        if self.store_stride < 1 or self.store_offset < 1:
            raise ConfigError("store_stride and store_offset must be >= 1")

    def stored_steps(self) -> list[int]:
        return list(range(self.store_offset, self.n_steps + 1, self.store_stride))


@dataclass
class ChainRecord:
    x0: np.ndarray
    stored: list  # [(step_index, iterate), ...] with strictly increasing steps
    pair: tuple[int, int] = (-1, -1)
    rng_labels: tuple = ()

    def steps(self) -> list[int]:
        return [s for s, _ in self.stored]

    def iterates(self) -> np.ndarray:
        return np.stack([x for _, x in self.stored]) if self.stored else np.empty((0,) + self.x0.shape)


def langevin_step(x: np.ndarray, grad: np.ndarray, step_size: float, noise: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x.shape != grad.shape or x.shape != noise.shape:
        raise DimensionError(
            f"langevin_step shape mismatch: x {x.shape}, grad {grad.shape}, noise {noise.shape}"
        )
    if step_size < 0:
        raise ConfigError("step_size must be non-negative")
    return x - 0.5 * step_size * step_size * grad + step_size * noise


def channel_replace_hook(iterate: np.ndarray, original: np.ndarray, channel_index: int) -> np.ndarray:
    """Overwrite one channel of the iterate with the original's channel."""
    iterate = np.asarray(iterate, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if iterate.shape != original.shape:
        raise DimensionError("iterate and original must share a shape")
    n_channels = iterate.shape[-3] if iterate.ndim >= 3 else 1
    if not 0 <= channel_index < n_channels:
        raise ConfigError(f"channel_index {channel_index} out of range for {n_channels} channels")
    if n_channels == 1:
        warnings.warn("channel_replace_hook on single-channel data returns the original unchanged")
        return original.copy()
    out = iterate.copy()
    out[..., channel_index, :, :] = original[..., channel_index, :, :]
    return out


def _apply_hook(x: np.ndarray, x0: np.ndarray, config: LangevinConfig) -> np.ndarray:
    if config.channel_replace is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            x = channel_replace_hook(x, x0, config.channel_replace)
    if config.clamp_unit:
        x = np.clip(x, 0.0, 1.0)
    return x


def run_chain(x0: np.ndarray, params: EnergyParams, config: LangevinConfig, rng: RngStream,
              pair=(-1, -1)) -> ChainRecord:
    """Run one K-step chain, storing stride-selected iterates."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != params.arch.input_shape:
        raise DimensionError(f"x0 shape {x0.shape} does not match arch {params.arch.input_shape}")
    record = ChainRecord(x0=x0.copy(), stored=[], pair=tuple(pair), rng_labels=rng.labels)
    keep = set(config.stored_steps())
    x = x0.copy()
    for t in range(1, config.n_steps + 1):
        noise = rng.standard_normal(x.shape)
        e, grad = energy_value_and_grad_input(params, x[None, ...])
        x = langevin_step(x, grad[0], config.step_size, noise)
        x = _apply_hook(x, x0, config)
        if not np.all(np.isfinite(x)):
            energy_now = float(e[0])
            raise DivergenceError(
                f"chain diverged at step {t} (last finite energy {energy_now!r})",
                step=t, value=energy_now,
            )
        if t in keep:
            record.stored.append((t, x.copy()))
    return record


def run_chain_batch(x0: np.ndarray, params: EnergyParams, config: LangevinConfig,
                    noise_block: np.ndarray):
    """Advance a batch of chains with pre-drawn noise of shape (K, N, ...).

    Equivalent to per-chain run_chain when each chain's noise slice comes
    from that chain's own stream. Returns (final (N, ...), stored dict
    step -> (N, ...)).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x = x0.copy()
    keep = set(config.stored_steps())
    stored = {}
    for t in range(1, config.n_steps + 1):
        _, grad = energy_value_and_grad_input(params, x)
        x = x - 0.5 * config.step_size**2 * grad + config.step_size * noise_block[t - 1]
        if config.channel_replace is not None or config.clamp_unit:
            x = _apply_hook(x, x0, config)
        if not np.all(np.isfinite(x)):
            bad = np.where(~np.all(np.isfinite(x.reshape(x.shape[0], -1)), axis=1))[0]
            raise DivergenceError(
                f"batched chain diverged at step {t} (chains {bad.tolist()})", step=t
            )
        if t in keep:
            stored[t] = x.copy()
    return x, stored


def chain_noise_block(rng: RngStream, n_steps: int, shape) -> np.ndarray:
    """Pre-draw one chain's noise as (K,) + shape; matches run_chain's draws."""
    return rng.standard_normal((n_steps,) + tuple(shape))


def save_chain(record: ChainRecord, basename, config: LangevinConfig) -> None:
    from .ldtn import write_meta, write_tensor

    write_tensor(f"{basename}.ldtn", record.iterates())
    write_meta(basename, {
        "pair": list(record.pair),
        "steps": record.steps(),
        "rng_labels": [list(lbl) for lbl in record.rng_labels],
        "config": {
            "step_size": config.step_size,
            "n_steps": config.n_steps,
            "store_stride": config.store_stride,
            "store_offset": config.store_offset,
        },
    })
