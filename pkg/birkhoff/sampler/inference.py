from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from birkhoff.config import DEFAULT_LIMITS, EnumerationLimits
from birkhoff.core.model import (
    Config,
    Dataset,
    DatasetKind,
    ModelParams,
    SuffStat,
    probabilities,
    subset_normalizer,
    suff_stat,
    weight_marginals,
)
from birkhoff.errors import NonconvergenceError
from birkhoff.fibers.fiber import enumerate_fiber
from birkhoff.sampler.base import ChainConfig, ChainResult, load_walk

logger = logging.getLogger(__name__)

Statistic = Callable[[Dataset], float]

PSI_FLOOR = 1e-9
PVALUE_TIE_TOL = 1e-12
MAX_BATCHES = 20
MASK64 = (1 << 64) - 1


def chi_square_stat(dataset: Dataset, params: ModelParams) -> float:
    """Pearson statistic of the vote counts against N * p(sigma)."""
    expected = len(dataset) * probabilities(params, dataset.config)
    observed = dataset.frequency()
    return float(np.sum((observed - expected) ** 2 / expected))


def log_likelihood(dataset: Dataset, params: ModelParams) -> float:
    """sum_sigma x(sigma) log p(sigma)."""
    p = probabilities(params, dataset.config)
    x = dataset.frequency()
    mask = x > 0
    return float(np.sum(x[mask] * np.log(p[mask])))


def mean_log_likelihood(theta: np.ndarray, stat: SuffStat) -> float:
    """Per-vote log-likelihood as a function of theta = log psi; depends on the data only through t."""
    theta = np.asarray(theta, dtype=np.float64).reshape(stat.t.shape)
    return float(np.sum(stat.t * theta) / stat.N - np.log(subset_normalizer(np.exp(theta))))


def mean_log_likelihood_grad(theta: np.ndarray, stat: SuffStat) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(stat.t.shape)
    return stat.t / stat.N - weight_marginals(np.exp(theta))


def _projected_grad(theta: np.ndarray, grad: np.ndarray, lower: float, upper: float) -> np.ndarray:
    g = grad.copy()
    g[(theta <= lower) & (g < 0)] = 0.0
    g[(theta >= upper) & (g > 0)] = 0.0
    return g


def fit_mle(
    dataset: Dataset,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    history: Optional[list[float]] = None,
) -> ModelParams:
    """
    Maximum likelihood psi for the independent-positions model.
    Rows are normalised to sum to one; entries are floored at 1e-9.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit an empty dataset")
    if dataset.kind is not DatasetKind.PROPER:
        raise ValueError(f"fit_mle needs a proper dataset, got {dataset.kind.value}")
    stat = suff_stat(dataset)
    shape = stat.t.shape
    lower, upper = float(np.log(PSI_FLOOR)), 0.0
    theta0 = np.full(shape, -np.log(dataset.config.n)).ravel()

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        value = mean_log_likelihood(theta, stat)
        if history is not None:
            history.append(value)
        return -value, -mean_log_likelihood_grad(theta, stat).ravel()

    result = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(lower, upper)] * theta0.size,
        options={"maxiter": max_iter, "gtol": tol / 10, "ftol": 1e-15},
    )
    theta = result.x.reshape(shape)
    grad = mean_log_likelihood_grad(theta, stat)
    residual = float(np.abs(_projected_grad(theta, grad, lower, upper)).max())
    logger.debug("L-BFGS-B: %d iterations, %s, gradient residual %.3g", result.nit, result.message, residual)
    if residual > tol:
        raise NonconvergenceError(
            f"MLE did not converge within {max_iter} iterations (gradient residual {residual:.3g} > {tol})"
        )
    return ModelParams.from_weights(np.maximum(np.exp(theta), PSI_FLOOR))


@dataclass(frozen=True)
class PValueEstimate:
    p: float
    se: float
    observed: float
    samples: int


def _batch_means_se(indicators: np.ndarray) -> float:
    n = len(indicators)
    k = min(MAX_BATCHES, n)
    if k < 2 or np.all(indicators == indicators[0]):
        return 0.0
    size = n // k
    means = indicators[: size * k].reshape(k, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(k))


def _exceeds(values: np.ndarray, observed: float) -> np.ndarray:
    return (values >= observed - PVALUE_TIE_TOL).astype(np.float64)


def pvalue_from_samples(values: np.ndarray, observed: float) -> PValueEstimate:
    values = np.asarray(values, dtype=np.float64)
    hits = _exceeds(values, observed)
    p = (1.0 + hits.sum()) / (1.0 + len(values))
    return PValueEstimate(float(p), _batch_means_se(hits), observed, len(values))


def splitmix64_seeds(master: int, count: int) -> list[int]:
    """Independent 64-bit chain seeds derived from one master seed."""
    state = int(master) & MASK64
    seeds: list[int] = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        seeds.append(z ^ (z >> 31))
    return seeds


def run_chain(
    dataset: Dataset,
    config: ChainConfig,
    seed: Optional[int] = None,
    limits: EnumerationLimits = DEFAULT_LIMITS,
) -> ChainResult:
    return load_walk(config.walk, config, limits).sample(dataset, seed)


def run_chains(
    dataset: Dataset,
    config: ChainConfig,
    chains: int = 1,
    jobs: int = 1,
    limits: EnumerationLimits = DEFAULT_LIMITS,
) -> list[ChainResult]:
    """Run `chains` independent chains; results come back in chain-index order whatever `jobs` is."""
    if chains < 1:
        raise ValueError(f"chains must be positive, got {chains}")
    seeds = [config.seed] if chains == 1 else splitmix64_seeds(config.seed, chains)
    if jobs <= 1 or chains == 1:
        return [run_chain(dataset, config, s, limits) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda s: run_chain(dataset, config, s, limits), seeds))


def estimate_pvalue(
    observed: Dataset,
    statistic: Statistic,
    config: ChainConfig,
    chains: int = 1,
    jobs: int = 1,
    limits: EnumerationLimits = DEFAULT_LIMITS,
) -> PValueEstimate:
    """Monte Carlo p-value over the observed dataset's fiber. The observed value counts as one draw."""
    if config.walk != "proper":
        raise ValueError("p-values are estimated with the proper-moves walk")
    obs = float(statistic(observed))
    samples = [s for result in run_chains(observed, config, chains, jobs, limits) for s in result.samples]
    estimate = pvalue_from_samples(np.array([statistic(s) for s in samples]), obs)
    logger.info("p = %.4f (se %.4f) from %d samples", estimate.p, estimate.se, estimate.samples)
    return estimate


def exact_pvalue(observed: Dataset, statistic: Statistic, limits: EnumerationLimits = DEFAULT_LIMITS) -> float:
    """Exact p-value under the uniform law on the fiber of the observed dataset."""
    stat = suff_stat(observed)
    config: Config = observed.config
    fiber = enumerate_fiber(stat, limits)
    obs = float(statistic(observed))
    values = np.array([statistic(element.dataset(config)) for element in fiber], dtype=np.float64)
    return float(_exceeds(values, obs).mean())
