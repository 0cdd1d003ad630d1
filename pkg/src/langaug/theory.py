"""Numerical checks of the augmentation regularization and complexity bounds.

For GLM losses ell(theta, (x, y)) = A(theta.x) - y * theta.x the harness
verifies, by Monte Carlo, that the one-step-noised risk decomposes into the
plain empirical risk plus second-order regularization terms with an o(beta^2)
remainder, and it estimates the Rademacher complexity of the constrained
linear class together with every constant entering the generalization bound.

The remainder scan uses control variates with analytically known means (the
Taylor terms of the per-draw loss, including the odd third-order term whose
expectation vanishes), so the Monte Carlo error of the remainder scales like
the remainder itself rather than like beta; plain averaging would need an
astronomically large draw budget at the smallest step sizes.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .numerics import RngStream, derive_stream
from .synth import GlmVectorDataset

_POISSON_GUARD = 30.0


def _sigmoid(u):
    out = np.empty_like(u, dtype=np.float64)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(u):
    return np.logaddexp(0.0, u)


@dataclass(frozen=True)
class GlmFamily:
    """Log-partition A and derivatives for one exponential family."""

    name: str
    A: callable
    A1: callable
    A2: callable
    A3: callable

    def lipschitz_A(self, lo: float, hi: float) -> float:
        """Lipschitz constant of A on [lo, hi] (sup of |A'|)."""
        grid = np.linspace(lo, hi, 513)
        return float(np.max(np.abs(self.A1(grid))))


FAMILIES = {
    "gaussian": GlmFamily(
        name="gaussian",
        A=lambda u: 0.5 * u * u,
        A1=lambda u: u,
        A2=lambda u: np.ones_like(np.asarray(u, dtype=np.float64)),
        A3=lambda u: np.zeros_like(np.asarray(u, dtype=np.float64)),
    ),
    "logistic": GlmFamily(
        name="logistic",
        A=_softplus,
        A1=_sigmoid,
        A2=lambda u: _sigmoid(u) * (1.0 - _sigmoid(u)),
        A3=lambda u: _sigmoid(u) * (1.0 - _sigmoid(u)) * (1.0 - 2.0 * _sigmoid(u)),
    ),
    "poisson": GlmFamily(
        name="poisson",
        A=np.exp,
        A1=np.exp,
        A2=np.exp,
        A3=np.exp,
    ),
}


def get_family(name) -> GlmFamily:
    if isinstance(name, GlmFamily):
        return name
    if name not in FAMILIES:
        raise ConfigError(f"unknown GLM family {name!r}")
    return FAMILIES[name]


def _natural_params(theta, x, family: GlmFamily):
    u = np.asarray(x, dtype=np.float64) @ np.asarray(theta, dtype=np.float64)
    if family.name == "poisson" and np.any(u > _POISSON_GUARD):
        raise NumericError(
            f"poisson natural parameter exceeds overflow guard {_POISSON_GUARD}"
        )
    return u


def glm_nll(theta, x, y, family) -> float:
    """Negative log-likelihood A(theta.x) - y * theta.x (base measure dropped)."""
    family = get_family(family)
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != theta.shape[0]:
        raise DimensionError(f"x dim {x.shape[-1]} vs theta dim {theta.shape[0]}")
    u = _natural_params(theta, x, family)
    return float(np.mean(family.A(u) - np.asarray(y) * u)) if u.ndim else float(family.A(u) - y * u)


def one_step_ld(x: np.ndarray, score: np.ndarray, beta: float, noise: np.ndarray) -> np.ndarray:
    """x - (beta^2 / 2) * score + beta * noise."""
    x = np.asarray(x, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x.shape != score.shape or x.shape != noise.shape:
        raise DimensionError(
            f"one_step_ld shape mismatch: x {x.shape}, score {score.shape}, noise {noise.shape}"
        )
    return x - 0.5 * beta * beta * score + beta * noise


def std_risk(theta, dataset: GlmVectorDataset, family=None) -> float:
    """Plain empirical risk: mean NLL over the dataset."""
    family = get_family(family or dataset.family)
    if dataset.k == 0:
        raise ConfigError("empty dataset")
    u = _natural_params(theta, dataset.x, family)
    return float(np.mean(family.A(u) - dataset.y * u))


def aug_risk_mc(theta, dataset: GlmVectorDataset, beta: float, n_mc: int, family=None,
                rng: RngStream | None = None):
    """Monte Carlo augmented risk. Returns (estimate, stderr).

    Draw m replaces every x_i by its one-step-noised version with a fresh
    standard-normal epsilon; the stderr comes from the spread of the
    per-draw dataset means.
    """
    family = get_family(family or dataset.family)
    if n_mc < 1:
        raise ConfigError("n_mc must be >= 1")
    rng = rng or derive_stream(dataset.seed, [("aug_risk", 0)])
    theta = np.asarray(theta, dtype=np.float64)
    scores = dataset.scores()
    replicate_means = np.empty(n_mc)
    for m in range(n_mc):
        eps = rng.standard_normal(dataset.x.shape)
        xt = one_step_ld(dataset.x, scores, beta, eps)
        u = _natural_params(theta, xt, family)
        replicate_means[m] = float(np.mean(family.A(u) - dataset.y * u))
    estimate = float(np.mean(replicate_means))
    stderr = float(np.std(replicate_means, ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    return estimate, stderr


def reg_terms_general(theta, dataset: GlmVectorDataset, beta: float, family=None):
    """Second-order regularization terms (R1, R2, R3) of the noised risk.

    With linear features the Hessian term R3 is identically zero; it is
    returned anyway so the decomposition reads R1 + R2 + R3.
    """
    family = get_family(family or dataset.family)
    theta = np.asarray(theta, dtype=np.float64)
    u = _natural_params(theta, dataset.x, family)
    ts = dataset.scores() @ theta
    half_beta2 = 0.5 * beta * beta
    r1 = float(-half_beta2 * np.mean((family.A1(u) - dataset.y) * ts))
    r2 = float(half_beta2 * np.mean(family.A2(u)) * float(theta @ theta))
    return r1, r2, 0.0


def reg_glm(theta, dataset: GlmVectorDataset, beta: float, family=None) -> float:
    """Label-free regularizer: (beta^2 / 2k) sum(A'' theta.theta - A' theta.s(x)).

    Identical to R1 + R2 + R3 evaluated with the labels zeroed out; the
    label-dependent part of R1 is deliberately dropped.
    """
    family = get_family(family or dataset.family)
    theta = np.asarray(theta, dtype=np.float64)
    u = _natural_params(theta, dataset.x, family)
    ts = dataset.scores() @ theta
    half_beta2 = 0.5 * beta * beta
    return float(half_beta2 * np.mean(family.A2(u) * float(theta @ theta) - family.A1(u) * ts))


@dataclass
class TheoryRow:
    beta: float
    l_std: float
    l_aug_mc: float
    mc_stderr: float
    r1: float
    r2: float
    r3: float
    r_glm: float

    @property
    def rem_gen(self) -> float:
        return self.l_aug_mc - self.l_std - (self.r1 + self.r2 + self.r3)

    @property
    def rem_glm(self) -> float:
        return self.l_aug_mc - self.l_std - self.r_glm


@dataclass
class RademacherRow:
    k: int
    rank: int
    ambient_dim: int
    estimate: float
    bound: float


@dataclass
class TheoryReport:
    rows: list[TheoryRow] = field(default_factory=list)
    slope: float | None = None
    slope_wrong_factor: float | None = None
    status: str = "ok"
    mc_draws: int = 0
    rademacher_rows: list[RademacherRow] = field(default_factory=list)
    bound_inputs: dict = field(default_factory=dict)
    bound_value: float | None = None

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["beta", "l_std", "l_aug", "mc_stderr", "R1", "R2", "R3",
                             "R_glm", "rem_gen", "rem_glm"])
            for r in self.rows:
                writer.writerow([repr(r.beta), repr(r.l_std), repr(r.l_aug_mc),
                                 repr(r.mc_stderr), repr(r.r1), repr(r.r2), repr(r.r3),
                                 repr(r.r_glm), repr(r.rem_gen), repr(r.rem_glm)])

    def write_summary_json(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "status": self.status,
            "slope": self.slope,
            "slope_wrong_factor": self.slope_wrong_factor,
            "mc_draws": self.mc_draws,
            "rademacher": [
                {"k": r.k, "rank": r.rank, "ambient_dim": r.ambient_dim,
                 "estimate": r.estimate, "bound": r.bound}
                for r in self.rademacher_rows
            ],
            "bound_inputs": self.bound_inputs,
            "bound_value": self.bound_value,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _taylor_pieces(theta, dataset: GlmVectorDataset, family: GlmFamily):
    theta = np.asarray(theta, dtype=np.float64)
    u = _natural_params(theta, dataset.x, family)
    ts = dataset.scores() @ theta          # theta . s(x_i)
    b = -0.5 * ts                          # second-order drift coefficient
    return theta, u, ts, b


def taylor_remainder_scan(theta, dataset: GlmVectorDataset, betas, n_mc: int = 4096,
                          family=None, base_seed: int | None = None,
                          max_mc: int = 1 << 19, stderr_frac: float = 0.1) -> TheoryReport:
    """Remainder of the second-order decomposition across step sizes.

    The per-draw loss depends on the noise only through a = theta.eps, a
    scalar N(0, ||theta||^2) variable, so draws are scalars shared across
    all betas (common random numbers). Each draw is corrected by its own
    Taylor prediction through third order; the correction's expectation is
    exactly l_std + R1 + R2 + R3 (odd orders vanish), which keeps the
    estimator of l_aug unbiased while shrinking the remainder's stderr from
    O(beta) to O(beta^4) per draw.

    Draws double until every beta has stderr below ``stderr_frac`` of its
    |remainder| or the budget is hit, in which case status = "inconclusive".
    """
    family = get_family(family or dataset.family)
    betas = [float(b) for b in betas]
    if len(betas) < 4:
        raise ConfigError("need at least 4 beta values")
    if any(b <= 0 for b in betas):
        raise ConfigError("beta values must be strictly positive")
    if max(betas) / min(betas) < 7.9:
        raise ConfigError("beta values must span at least a factor of 8")
    betas = sorted(betas)
    base_seed = dataset.seed if base_seed is None else base_seed

    theta, u, ts, b = _taylor_pieces(theta, dataset, family)
    k = dataset.k
    norm_theta = float(np.linalg.norm(theta))
    l_std = float(np.mean(family.A(u) - dataset.y * u))
    a1u, a2u, a3u = family.A1(u), family.A2(u), family.A3(u)
    resid = a1u - dataset.y
    r_rows = {}
    for beta in betas:
        half_beta2 = 0.5 * beta * beta
        r1 = float(-half_beta2 * np.mean(resid * ts))
        r2 = float(half_beta2 * np.mean(a2u) * (norm_theta ** 2))
        r_rows[beta] = (r1, r2, 0.0)

    acc = {beta: [0.0, 0.0] for beta in betas}   # sum q, sum q^2 of replicate means
    drawn = 0
    chunk_size = min(n_mc, 1 << 14)
    chunk_id = 0
    status = "ok"

    def stderr_ok() -> bool:
        for beta in betas:
            sq, sq2 = acc[beta]
            mean = sq / drawn
            var = max(sq2 / drawn - mean * mean, 0.0)
            se = math.sqrt(var / drawn)
            if se > stderr_frac * abs(mean) and not (se == 0.0 and mean == 0.0):
                return False
        return True

    target = min(n_mc, max_mc)
    while True:
        while drawn < target:
            m = min(chunk_size, target - drawn)
            a = derive_stream(base_seed, [("scan_chunk", chunk_id)]).standard_normal((k, m))
            a *= norm_theta
            chunk_id += 1
            for beta in betas:
                ut = u[:, None] + beta * a + beta * beta * b[:, None]
                loss = family.A(ut) - dataset.y[:, None] * ut
                taylor = (
                    (family.A(u) - dataset.y * u)[:, None]
                    + beta * resid[:, None] * a
                    + 0.5 * beta * beta * (a2u[:, None] * a * a + (2.0 * b * resid)[:, None])
                    + (beta ** 3 / 6.0) * (a3u[:, None] * a ** 3 + (6.0 * a2u * b)[:, None] * a)
                )
                q = np.mean(loss - taylor, axis=0)  # per-draw replicate means
                acc[beta][0] += float(np.sum(q))
                acc[beta][1] += float(np.sum(q * q))
            drawn += m
        if stderr_ok():
            break
        if drawn >= max_mc:
            status = "inconclusive"
            break
        target = min(2 * drawn, max_mc)

    rows = []
    for beta in betas:
        sq, sq2 = acc[beta]
        mean_q = sq / drawn
        var_q = max(sq2 / drawn - mean_q * mean_q, 0.0)
        se = math.sqrt(var_q / drawn)
        r1, r2, r3 = r_rows[beta]
        rows.append(TheoryRow(
            beta=beta,
            l_std=l_std,
            l_aug_mc=l_std + r1 + r2 + r3 + mean_q,
            mc_stderr=se,
            r1=r1, r2=r2, r3=r3,
            r_glm=reg_glm(theta, dataset, beta, family),
        ))

    report = TheoryReport(rows=rows, status=status, mc_draws=drawn)
    rems = np.array([abs(r.rem_gen) for r in rows])
    wrong = np.array([abs(r.rem_gen - (r.r1 + r.r2 + r.r3)) for r in rows])
    logb = np.log(np.array(betas))
    if np.all(rems > 0):
        report.slope = float(np.polyfit(logb, np.log(rems), 1)[0])
    if np.all(wrong > 0):
        report.slope_wrong_factor = float(np.polyfit(logb, np.log(wrong), 1)[0])
    return report


def radius_and_C(gamma: float, rho: float, sigma: float):
    """Norm-ball radius and bound constant from the constraint reduction.

    r^2 = max(gamma/rho, sqrt(gamma/(rho*sigma)));
    C   = max((gamma/rho)^1/2, (gamma/(rho*sigma))^1/4) = r.
    """
    if gamma <= 0 or rho <= 0 or sigma <= 0:
        raise ConfigError("gamma, rho, sigma must all be positive")
    r_sq = max(gamma / rho, math.sqrt(gamma / (rho * sigma)))
    c = max(math.sqrt(gamma / rho), (gamma / (rho * sigma)) ** 0.25)
    return math.sqrt(r_sq), c


def empirical_rademacher(dataset_x: np.ndarray, radius: float, n_mc: int,
                         rng: RngStream, with_stderr: bool = False):
    """Monte Carlo Rademacher complexity of the radius-ball linear class.

    The supremum over the ball has the closed form (radius/k) ||sum xi_i x_i||,
    so only the sign vectors are sampled.
    """
    if radius < 0:
        raise ConfigError("radius must be non-negative")
    x = np.asarray(dataset_x, dtype=np.float64)
    k = x.shape[0]
    signs = rng.rademacher((n_mc, k))
    sums = signs @ x
    values = (radius / k) * np.linalg.norm(sums, axis=1)
    estimate = float(np.mean(values))
    if with_stderr:
        return estimate, float(np.std(values, ddof=1) / math.sqrt(n_mc))
    return estimate


def constraint_value(theta, dataset: GlmVectorDataset, family=None) -> float:
    """Empirical value of theta^T E[A''(theta.x) theta - A'(theta.x) s(x)]."""
    family = get_family(family or dataset.family)
    theta = np.asarray(theta, dtype=np.float64)
    u = _natural_params(theta, dataset.x, family)
    ts = dataset.scores() @ theta
    return float(np.mean(family.A2(u)) * (theta @ theta) - np.mean(family.A1(u) * ts))


def estimate_rho(dataset: GlmVectorDataset, family, theta_probe_count: int,
                 kappa1: float, kappa2: float, rng: RngStream,
                 radii=None) -> tuple[float, int]:
    """Retentiveness estimate: worst probe of the curvature-minus-score ratio.

    rho_hat = min over probes of
        [E A''(theta.x) - (kappa1/kappa2) sqrt(E A'(theta.x)^2)] / min(1, E (theta.x)^2),
    clamped below at zero. kappa1 upper-bounds E||s(x)||^2, kappa2
    lower-bounds ||theta||^2 over the probes; the default probe radii start
    at sqrt(kappa2) so the kappa2 bound is tight. Returns (rho_hat,
    skipped_probes) where skips count near-zero denominators.
    """
    family = get_family(family or dataset.family)
    if radii is None:
        base = math.sqrt(kappa2)
        radii = (base, 2.0 * base, 4.0 * base)
    d = dataset.dim
    worst = math.inf
    skipped = 0
    for p in range(theta_probe_count):
        direction = rng.standard_normal(d)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            skipped += 1
            continue
        theta = direction / norm * radii[p % len(radii)]
        u = dataset.x @ theta
        denom = min(1.0, float(np.mean(u * u)))
        if denom < 1e-12:
            skipped += 1
            continue
        numer = float(np.mean(family.A2(u))) - (kappa1 / kappa2) * math.sqrt(
            float(np.mean(family.A1(u) ** 2))
        )
        worst = min(worst, numer / denom)
    if not math.isfinite(worst):
        raise ConfigError("all probes skipped; cannot estimate rho")
    return max(worst, 0.0), skipped


def generalization_bound(l_std: float, C: float, rank: int, k: int, L: float,
                         L_A: float, B: float, delta: float) -> float:
    """l_std + 2 L L_A C sqrt(rank/k) + B sqrt(ln(1/delta) / (2k))."""
    if min(C, rank, k, L, L_A, B) <= 0:
        raise ConfigError("C, rank, k, L, L_A, B must all be positive")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must lie in (0, 1)")
    return (l_std
            + 2.0 * L * L_A * C * math.sqrt(rank / k)
            + B * math.sqrt(math.log(1.0 / delta) / (2.0 * k)))


def loss_constants(theta, dataset: GlmVectorDataset, family=None, margin: float = 1.1):
    """(L, L_A, B) measured on the working box of natural parameters.

    L is the loss's Lipschitz constant in u = theta.x, L_A the Lipschitz
    constant of A alone, B the loss's sup, all over the data-spanned
    u-interval stretched by ``margin``.
    """
    family = get_family(family or dataset.family)
    u = _natural_params(theta, dataset.x, family)
    lo, hi = margin * float(np.min(u)), margin * float(np.max(u))
    lo, hi = min(lo, hi), max(lo, hi)
    grid = np.linspace(lo, hi, 1025)
    y_lo, y_hi = float(np.min(dataset.y)), float(np.max(dataset.y))
    slope = np.abs(family.A1(grid)[:, None] - np.array([y_lo, y_hi])[None, :])
    L = float(np.max(slope))
    L_A = family.lipschitz_A(lo, hi)
    losses = np.abs(family.A(grid)[:, None] - grid[:, None] * np.array([y_lo, y_hi])[None, :])
    B = float(np.max(losses))
    return L, L_A, B


def lowest_nonzero_singular_value(sigma_mat: np.ndarray, tol: float = 1e-10) -> float:
    """Smallest nonzero singular value (rank-deficient matrices allowed)."""
    vals = np.linalg.svd(np.asarray(sigma_mat, dtype=np.float64), compute_uv=False)
    nz = vals[vals > tol]
    if nz.size == 0:
        raise ConfigError("covariance is numerically zero")
    return float(nz[-1])


def matrix_rank(sigma_mat: np.ndarray, tol: float = 1e-10) -> int:
    vals = np.linalg.svd(np.asarray(sigma_mat, dtype=np.float64), compute_uv=False)
    return int(np.sum(vals > tol))
