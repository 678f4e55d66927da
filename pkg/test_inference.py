#!/usr/bin/env python3
"""
Test script for posterior inference
Checks the MCMC samplers against the conjugate one-mode posterior, the
effective sample size estimator and the IRLS MAP solvers
"""

import sys
import os
import logging

import numpy as np
import pytest

# Add the current directory to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from bayes_core import build_problem, conjugate_posterior, conjugate_toy_problem
from distributions import RngState
from exceptions import ZeroAcceptanceError
from forward_models import DeconvModel, gaussian_bump_kernel, observation_points
from inference import (
    MapConfig, McmcConfig, compressed_sensing_instance, effective_sample_size, map_gpq_eps,
    map_gpq_objective, map_lp, mh_sample, posterior_summaries, support_f1
)
from levy_process import CompoundPoissonPathPrior
from product_prior import make_product_prior

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def test_mcmc_config_validation():
    test_cases = [
        {"overrides": {"n_steps": 0}, "description": "no steps"},
        {"overrides": {"n_steps": 100, "burn_in": 100}, "description": "burn-in covers the chain"},
        {"overrides": {"proposal_scale": 0.0}, "description": "zero proposal scale"},
        {"overrides": {"thin": 0}, "description": "zero thinning"},
        {"overrides": {"tempering": -1.0}, "description": "negative tempering"},
    ]
    for case in test_cases:
        logger.info(f"Testing invalid MCMC config: {case['description']}")
        with pytest.raises(ValueError):
            McmcConfig(**case["overrides"])
    assert McmcConfig.from_config(n_steps=50, burn_in=10).n_steps == 50


def test_conjugate_posterior_recovered():
    """Random-walk chain reproduces the closed-form Gaussian posterior"""
    problem = conjugate_toy_problem(0.5, 0.5)
    exact = conjugate_posterior(0.5, 0.5)
    config = McmcConfig(n_steps=20000, burn_in=2000, proposal_scale=1.0, thin=5)
    result = mh_sample(problem, config, RngState(1, 3))
    assert result["sampler"] == "random_walk"
    samples = result["chain"][:, 0]
    assert samples.size == 3600
    assert samples.mean() == pytest.approx(exact["mean"], abs=0.06)
    assert samples.var() == pytest.approx(exact["variance"], abs=0.05)
    assert 0.05 < result["acceptance_rate"] < 0.95
    assert result["potentials"].shape == (3600,)


def test_zero_tempering_samples_prior():
    problem = conjugate_toy_problem(3.0, 0.1)
    config = McmcConfig(n_steps=20000, burn_in=1000, proposal_scale=1.0, thin=5, tempering=0.0)
    samples = mh_sample(problem, config, RngState(2, 3))["chain"][:, 0]
    assert samples.mean() == pytest.approx(0.0, abs=0.12)
    assert samples.var() == pytest.approx(1.0, abs=0.2)


def test_zero_acceptance_raises():
    problem = conjugate_toy_problem(0.5, 0.5)
    config = McmcConfig(n_steps=100, burn_in=50, proposal_scale=1e12, adapt=False)
    with pytest.raises(ZeroAcceptanceError) as info:
        mh_sample(problem, config, RngState(3, 3))
    assert info.value.diagnostics["burn_in"] == 50


def test_independence_sampler_for_atomic_priors():
    forward = DeconvModel(gaussian_bump_kernel(32, 0.05), observation_points(4))
    path_problem = build_problem(CompoundPoissonPathPrior(2.0), forward, 0.1, np.zeros(4), 32)
    config = McmcConfig(n_steps=200, burn_in=50, thin=1, tempering=0.0)
    result = mh_sample(path_problem, config, RngState(4, 3))
    assert result["sampler"] == "independence"
    assert result["acceptance_rate"] == 1.0
    assert result["chain"].shape == (150, 32)

    prior = make_product_prior("haar_periodic", 8, coefficient_law="compound_poisson_laplace", rate=1.0)
    product_problem = build_problem(prior, forward, 0.1, np.zeros(4), 32)
    result = mh_sample(product_problem, McmcConfig(n_steps=200, burn_in=50, thin=1), RngState(5, 3))
    assert result["sampler"] == "independence"
    assert result["chain"].shape == (150, 8)
    assert result["proposal_scales"] is None


def test_chains_reproducible():
    problem = conjugate_toy_problem(0.5, 0.5)
    config = McmcConfig(n_steps=500, burn_in=100, thin=1)
    a = mh_sample(problem, config, RngState(6, 3))
    b = mh_sample(problem, config, RngState(6, 3))
    assert np.array_equal(a["chain"], b["chain"])
    assert np.array_equal(a["potentials"], b["potentials"])


def test_effective_sample_size():
    gen = np.random.default_rng(7)
    assert effective_sample_size(np.ones(100)) == 1.0
    iid = gen.standard_normal(20000)
    assert abs(effective_sample_size(iid) - 20000) <= 0.2 * 20000

    n = 5000
    ar = np.empty(n)
    ar[0] = 0.0
    noise = gen.standard_normal(n)
    for i in range(1, n):
        ar[i] = 0.9 * ar[i - 1] + noise[i]
    assert effective_sample_size(ar) < n / 5


def test_posterior_summaries():
    chain = np.column_stack([np.arange(101, dtype=float), np.zeros(101)])
    summary = posterior_summaries(chain, quantiles=(0.5,))
    assert np.allclose(summary["mean"], [50.0, 0.0])
    assert np.allclose(summary["quantiles"][0.5], [50.0, 0.0])
    assert summary["n_samples"] == 101
    with pytest.raises(ValueError):
        posterior_summaries(np.zeros((0, 2)))


def test_l1_map_is_soft_thresholding():
    """With A = I and sigma = 1 the l1 MAP shrinks each entry by one"""
    y = np.array([3.0, -2.5, 0.4, -0.2])
    result = map_lp(np.eye(4), y, 1.0, 1.0)
    assert np.allclose(result["z"], [2.0, -1.5, 0.0, 0.0], atol=1e-5)
    assert result["converged"]


def test_gpq_map_reduces_to_scaled_l1():
    # G_{1,1} penalty is sqrt(2) |z|, so the threshold moves to sqrt(2)
    result = map_gpq_eps(np.eye(1), np.array([3.0]), 1.0, 1.0, 1.0, 1e-3)
    assert result["z"][0] == pytest.approx(3.0 - np.sqrt(2.0), abs=1e-5)
    with pytest.raises(ValueError):
        map_gpq_eps(np.eye(1), np.array([3.0]), 1.0, 1.0, 2.0, 1e-3)
    with pytest.raises(ValueError):
        map_gpq_eps(np.eye(1), np.array([3.0]), 1.0, 1.0, 0.5, 0.0)


def test_nonconvex_map_descends():
    instance = compressed_sensing_instance(64, 32, 5, 0.01, RngState(8, 5))
    a, y = instance["a"], instance["y"]
    config = MapConfig(p=0.5, q=0.5, epsilon=1e-3, sigma=0.01, multi_start=4)
    result = map_gpq_eps(a, y, 0.01, 0.5, 0.5, 1e-3, config, RngState(9, 5))
    history = np.asarray(result["history"])
    assert np.all(np.diff(history) <= 1e-9 * np.abs(history[:-1]))
    assert result["n_starts"] == 4
    assert result["objective"] <= map_gpq_objective(a, y, 0.01, 0.5, 0.5, 1e-3, np.zeros(64))

    lp = map_lp(a, y, 0.01, 0.5, MapConfig(p=0.5, q=1.0, sigma=0.01, multi_start=3), RngState(10, 5))
    assert lp["n_starts"] == 3
    with pytest.raises(ValueError):
        map_lp(a, y, 0.01, 3.0)


def test_support_f1():
    truth = np.array([1.0, 0.0, 2.0, 0.0])
    assert support_f1(truth, truth) == 1.0
    assert support_f1(truth, [0.5, 0.0, 0.0, 0.0]) == pytest.approx(2.0 / 3.0)
    assert support_f1(truth, [0.0, 1e-4, 0.0, 0.0]) == 0.0


def test_compressed_sensing_instance():
    instance = compressed_sensing_instance(40, 20, 4, 0.0, RngState(11, 5))
    assert instance["a"].shape == (20, 40)
    assert np.count_nonzero(instance["z"]) == 4
    assert np.array_equal(np.flatnonzero(instance["z"]), instance["support"])
    magnitudes = np.abs(instance["z"][instance["support"]])
    assert np.all((magnitudes >= 1.0) & (magnitudes < 2.0))
    assert np.allclose(instance["y"], instance["a"] @ instance["z"])
    with pytest.raises(ValueError):
        compressed_sensing_instance(10, 5, 11, 0.0, RngState(1))


def main():
    """Main test function"""
    logger.info("Starting inference tests...")
    tests = [
        test_mcmc_config_validation, test_conjugate_posterior_recovered,
        test_zero_tempering_samples_prior, test_zero_acceptance_raises,
        test_independence_sampler_for_atomic_priors, test_chains_reproducible,
        test_effective_sample_size, test_posterior_summaries, test_l1_map_is_soft_thresholding,
        test_gpq_map_reduces_to_scaled_l1, test_nonconvex_map_descends, test_support_f1,
        test_compressed_sensing_instance,
    ]
    failed = 0
    for test in tests:
        try:
            test()
            logger.info(f"✅ {test.__name__}")
        except AssertionError as e:
            failed += 1
            logger.error(f"❌ {test.__name__}: {e}")
    if failed:
        print(f"\n❌ {failed} of {len(tests)} tests failed.")
        sys.exit(1)
    print(f"\n✅ All {len(tests)} inference tests passed!")
    sys.exit(0)


if __name__ == "__main__":
    main()
