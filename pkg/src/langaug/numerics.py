"""Deterministic numerical substrate: RNG streams, Adam, finite differences.

Everything here is double precision. Random streams are derived by hashing
a base seed together with a tuple of (name, index) labels, so any consumer
(a chain, a sample, a training iteration) owns an independent stream whose
draws do not depend on scheduling order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

Labels = tuple[tuple[str, int], ...]


def _philox_key(base_seed: int, labels: Labels) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(base_seed).to_bytes(8, "little", signed=True))
    for name, value in labels:
        raw = name.encode("utf-8")
        h.update(len(raw).to_bytes(2, "little"))
        h.update(raw)
        h.update(int(value).to_bytes(8, "little", signed=True))
    return np.frombuffer(h.digest(), dtype=np.uint64)


class RngStream:
    """Counter-based random stream keyed by (base_seed, labels).

    Identical keys give bit-identical draw sequences; distinct labels give
    independent streams with no shared mutable state, so streams may be
    created and consumed concurrently in any order.
    """

    def __init__(self, base_seed: int, labels):
        labels = tuple((str(n), int(v)) for n, v in labels)
        if not labels:
            raise ConfigError("RngStream labels must be non-empty")
        self.base_seed = int(base_seed)
        self.labels = labels
        self._gen = np.random.Generator(np.random.Philox(key=_philox_key(base_seed, labels)))

    def child(self, *labels) -> "RngStream":
        """Derive a sub-stream with extra labels appended."""
        return RngStream(self.base_seed, self.labels + tuple(labels))

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size=size, dtype=np.float64)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace_draw: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace_draw)

    def rademacher(self, size) -> np.ndarray:
        return self._gen.integers(0, 2, size=size) * 2.0 - 1.0

    def poisson(self, lam) -> np.ndarray:
        return self._gen.poisson(lam)

    def __repr__(self):
        return f"RngStream(base_seed={self.base_seed}, labels={self.labels})"


def derive_stream(base_seed: int, labels) -> RngStream:
    """Build an RngStream; ``labels`` is an ordered list of (name, int) tags."""
    return RngStream(base_seed, labels)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.99
    eps_stab: float = 1e-8


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    hyper: AdamHyper = field(default_factory=AdamHyper)


def init_adam_state(dim: int, hyper: AdamHyper | None = None) -> AdamState:
    return AdamState(
        first_moment=np.zeros(dim),
        second_moment=np.zeros(dim),
        step_count=0,
        hyper=hyper or AdamHyper(),
    )


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise DimensionError(
            f"adam_step length mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    h = state.hyper
    t = state.step_count + 1
    m = h.beta1 * state.first_moment + (1.0 - h.beta1) * grads
    v = h.beta2 * state.second_moment + (1.0 - h.beta2) * grads * grads
    m_hat = m / (1.0 - h.beta1**t)
    v_hat = v / (1.0 - h.beta2**t)
    new_params = params - h.lr * m_hat / (np.sqrt(v_hat) + h.eps_stab)
    return new_params, AdamState(m, v, t, h)


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at x."""
    if h <= 0:
        raise ConfigError(f"finite difference step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for d in range(xf.size):
        xp = x.copy().ravel()
        xm = x.copy().ravel()
        xp[d] += h
        xm[d] -= h
        fp = float(f(xp.reshape(x.shape)))
        fm = float(f(xm.reshape(x.shape)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value while probing coordinate {d}")
        flat[d] = (fp - fm) / (2.0 * h)
    return grad


def finite_diff_grad_subset(f, x: np.ndarray, coords, h: float = 1e-5) -> np.ndarray:
    """Central differences at selected flat coordinates only (spot checks)."""
    if h <= 0:
        raise ConfigError(f"finite difference step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(len(coords))
    for k, d in enumerate(coords):
        xp = x.copy().ravel()
        xm = x.copy().ravel()
        xp[d] += h
        xm[d] -= h
        fp = float(f(xp.reshape(x.shape)))
        fm = float(f(xm.reshape(x.shape)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value while probing coordinate {d}")
        out[k] = (fp - fm) / (2.0 * h)
    return out


def relative_error(analytic: np.ndarray, reference: np.ndarray, floor: float = 1e-6) -> float:
    """Max relative error over components whose reference magnitude exceeds floor."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    mask = np.abs(reference) > floor
    if not mask.any():
        return float(np.max(np.abs(analytic - reference), initial=0.0))
    return float(np.max(np.abs(analytic[mask] - reference[mask]) / np.abs(reference[mask])))
