import numpy as np
import pytest

from birkhoff.core.formats import parse_dataset
from birkhoff.core.model import Config, Dataset, ModelParams, Vote, enumerate_votes, suff_stat
from birkhoff.errors import NonconvergenceError
from birkhoff.sampler.base import ChainConfig
from birkhoff.sampler.inference import (
    chi_square_stat,
    estimate_pvalue,
    exact_pvalue,
    fit_mle,
    log_likelihood,
    mean_log_likelihood,
    mean_log_likelihood_grad,
    pvalue_from_samples,
    run_chains,
    splitmix64_seeds,
)

SKEWED = "1 2\n2 3\n3 4\n4 1\n1 3\n2 4\n3 1\n4 2\n1 2\n"


def test_splitmix64_reference_values() -> None:
    assert splitmix64_seeds(0, 3) == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    seeds = splitmix64_seeds(2024, 8)
    assert len(set(seeds)) == 8
    assert seeds == splitmix64_seeds(2024, 8)


def test_pvalue_counts_the_observed_draw() -> None:
    estimate = pvalue_from_samples(np.array([0.0, 1.0, 2.0]), 1.0)
    assert estimate.p == pytest.approx(0.75)
    assert estimate.samples == 3


def test_pvalue_ties_within_tolerance() -> None:
    estimate = pvalue_from_samples(np.array([1.0 - 1e-13, 0.5]), 1.0)
    assert estimate.p == pytest.approx(2 / 3)


def test_constant_indicators_have_zero_se() -> None:
    estimate = pvalue_from_samples(np.ones(100), 0.5)
    assert estimate.p == 1.0
    assert estimate.se == 0.0


def test_batch_means_se_is_positive_for_mixed_indicators() -> None:
    values = np.tile([0.0, 1.0, 2.0, 3.0], 50)
    estimate = pvalue_from_samples(values, 2.0)
    assert estimate.p == pytest.approx(101 / 201)
    assert estimate.se >= 0.0


def test_chi_square_against_uniform() -> None:
    config = Config(2, 1)
    params = ModelParams.uniform(config)
    assert chi_square_stat(parse_dataset("1\n2\n"), params) == pytest.approx(0.0)
    assert chi_square_stat(parse_dataset("1\n1\n", 2), params) == pytest.approx(2.0)


def test_log_likelihood_under_uniform() -> None:
    data = parse_dataset(SKEWED)
    assert log_likelihood(data, ModelParams.uniform(data.config)) == pytest.approx(9 * np.log(1 / 12))


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    r = int(rng.integers(1, min(n, 3) + 1))
    votes = tuple(Vote(tuple(int(k) for k in rng.permutation(n)[:r])) for _ in range(int(rng.integers(1, 9))))
    stat = suff_stat(Dataset(votes, Config(n, r)))
    theta = rng.normal(size=stat.t.shape)
    grad = mean_log_likelihood_grad(theta, stat)
    h = 1e-5
    for j in range(theta.shape[0]):
        for k in range(theta.shape[1]):
            step = np.zeros_like(theta)
            step[j, k] = h
            numeric = (mean_log_likelihood(theta + step, stat) - mean_log_likelihood(theta - step, stat)) / (2 * h)
            assert grad[j, k] == pytest.approx(numeric, rel=1e-5, abs=1e-7)


def test_fit_uniform_data() -> None:
    config = Config(3, 2)
    data = Dataset(tuple(enumerate_votes(config)), config)
    params = fit_mle(data)
    assert np.allclose(params.psi, 1 / 3)


def test_fit_skewed_data() -> None:
    data = parse_dataset(SKEWED)
    history: list[float] = []
    params = fit_mle(data, history=history)
    assert history
    assert np.allclose(params.psi.sum(axis=1), 1.0)
    stat = suff_stat(data)
    grad = mean_log_likelihood_grad(np.log(params.psi), stat)
    assert np.abs(grad).max() < 1e-5
    assert log_likelihood(data, params) >= log_likelihood(data, ModelParams.uniform(data.config)) - 1e-9
    assert params.psi[0, 0] > params.psi[0, 1]


def test_fit_degenerate_data_reaches_the_floor() -> None:
    params = fit_mle(parse_dataset("1 2\n1 2\n", 3), tol=1e-4)
    assert params.psi[0, 0] > 0.99
    assert params.psi[1, 1] > 0.99


def test_fit_reports_nonconvergence() -> None:
    with pytest.raises(NonconvergenceError):
        fit_mle(parse_dataset(SKEWED), max_iter=1)


def test_fit_rejects_improper_data() -> None:
    with pytest.raises(ValueError):
        fit_mle(parse_dataset("1 1\n2 3\n"))


def test_chain_results_do_not_depend_on_jobs(rankings5: Dataset) -> None:
    config = ChainConfig(steps=200, seed=42)
    serial = run_chains(rankings5, config, chains=3, jobs=1)
    threaded = run_chains(rankings5, config, chains=3, jobs=3)
    assert [r.seed for r in serial] == splitmix64_seeds(42, 3)
    for a, b in zip(serial, threaded):
        assert [s.votes for s in a.samples] == [s.votes for s in b.samples]


def test_single_chain_uses_the_master_seed(rankings5: Dataset) -> None:
    (result,) = run_chains(rankings5, ChainConfig(steps=50, seed=9))
    assert result.seed == 9


def test_exact_pvalue_on_the_cyclic_fiber(cyclic: Dataset) -> None:
    def is_start(dataset: Dataset) -> float:
        return float(dataset == cyclic)

    assert exact_pvalue(cyclic, is_start) == pytest.approx(0.5)


def test_constant_statistic_gives_p_one(rankings5: Dataset) -> None:
    estimate = estimate_pvalue(rankings5, lambda d: 1.0, ChainConfig(steps=100))
    assert estimate.p == 1.0
    assert estimate.se == 0.0
    assert estimate.samples == 100


def test_estimate_needs_the_proper_walk(cyclic: Dataset) -> None:
    with pytest.raises(ValueError):
        estimate_pvalue(cyclic, lambda d: 0.0, ChainConfig(walk="extended"))


@pytest.mark.slow
def test_estimate_agrees_with_exact() -> None:
    observed = parse_dataset("1 2\n2 3\n3 1\n1 2\n")
    params = fit_mle(observed)

    def statistic(dataset: Dataset) -> float:
        return chi_square_stat(dataset, params)

    exact = exact_pvalue(observed, statistic)
    estimate = estimate_pvalue(observed, statistic, ChainConfig(steps=20_000, burn_in=500, seed=3), chains=2)
    assert estimate.p == pytest.approx(exact, abs=0.05)
