#!/usr/bin/env python3
"""
Test script for product priors
Checks basis indexing and orthonormality, weight sequences, synthesis grids,
second moments and characteristic functions
"""

import sys
import os
import logging

import numpy as np
import pytest
from scipy import stats

# Add the current directory to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from distributions import GpqParams, RngState, gpq_cdf
from product_prior import (
    BasisSpec, WeightSequence, basis_eval, basis_matrix, compressibility_report,
    empirical_product_char_fn, fourier_index, grid_gram_matrix, haar_index, make_product_prior,
    product_char_fn, sample_coefficients, sample_coefficients_batch, second_moment_estimate,
    sobolev_norm_squared, synthesize, synthesize_batch, weight_tail_energy
)

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def test_haar_and_fourier_indexing():
    haar_cases = {1: (-1, 0), 2: (0, 0), 3: (1, 0), 4: (1, 1), 5: (2, 0), 8: (2, 3), 9: (3, 0)}
    for k, expected in haar_cases.items():
        assert haar_index(k) == expected
    fourier_cases = {1: (0, "const"), 2: (1, "cos"), 3: (1, "sin"), 4: (2, "cos"), 7: (3, "sin")}
    for k, expected in fourier_cases.items():
        assert fourier_index(k) == expected
    with pytest.raises(ValueError):
        haar_index(0)


def test_haar_values():
    basis = BasisSpec("haar_periodic", 8)
    assert basis_eval(basis, 1, 0.7) == 1.0
    assert basis_eval(basis, 2, 0.25) == 1.0
    assert basis_eval(basis, 2, 0.75) == -1.0
    # k = 4 is level 1, shift 1: supported on [1/2, 1)
    assert basis_eval(basis, 4, 0.6) == pytest.approx(np.sqrt(2.0))
    assert basis_eval(basis, 4, 0.8) == pytest.approx(-np.sqrt(2.0))
    assert basis_eval(basis, 4, 0.3) == 0.0
    with pytest.raises(IndexError):
        basis_eval(basis, 9, 0.1)


def test_grid_gram_is_identity():
    """Both bases are orthonormal under the grid inner product"""
    test_cases = [
        {"kind": "haar_periodic", "n_terms": 32, "n_g": 64},
        {"kind": "haar_periodic", "n_terms": 16, "n_g": 256},
        {"kind": "fourier_real", "n_terms": 17, "n_g": 64},
        {"kind": "haar_periodic", "n_terms": 32, "n_g": 512},
        {"kind": "haar_periodic", "n_terms": 64, "n_g": 1024},
        {"kind": "fourier_real", "n_terms": 17, "n_g": 272},
        {"kind": "fourier_real", "n_terms": 33, "n_g": 528},
    ]
    for case in test_cases:
        logger.info(f"Testing Gram matrix: {case}")
        gram = grid_gram_matrix(BasisSpec(case["kind"], case["n_terms"]), case["n_g"])
        assert np.max(np.abs(gram - np.eye(case["n_terms"]))) <= 1e-8


def test_basis_matrix_is_read_only():
    matrix = basis_matrix(BasisSpec("fourier_real", 4), 16)
    with pytest.raises(ValueError):
        matrix[0, 0] = 2.0


def test_weight_values():
    wavelet = WeightSequence("wavelet_sobolev", 4)
    assert np.allclose(wavelet.values, [1 / np.sqrt(2), 1 / np.sqrt(5), 1 / np.sqrt(17), 1 / np.sqrt(17)])
    fourier = WeightSequence("fourier_power", 5, exponent=2.0)
    assert np.allclose(fourier.values, [1.0, 0.5, 0.5, 0.2, 0.2])
    with pytest.raises(ValueError):
        wavelet.values[0] = 1.0
    with pytest.raises(ValueError):
        WeightSequence("geometric", 4)


def test_tail_energy_complements_partial_energy():
    for rule, exponent in [("wavelet_sobolev", 3.0), ("fourier_power", 3.0), ("fourier_power", 1.5)]:
        weights = WeightSequence(rule, 64, exponent)
        total = weight_tail_energy(rule, 0, exponent)
        for n in [1, 2, 5, 16, 33, 64]:
            assert weights.tail_energy(n) + weights.partial_energy(n) == pytest.approx(total, rel=1e-9)
        tails = [weights.tail_energy(n) for n in [1, 4, 16, 64]]
        assert all(b < a for a, b in zip(tails, tails[1:]))
    assert weight_tail_energy("fourier_power", 8, 0.5) == float("inf")


def test_synthesis_grid_requirements():
    prior = make_product_prior("haar_periodic", 32, "wavelet_sobolev", p=1.0, q=1.0)
    coeffs = sample_coefficients(prior, RngState(1))
    with pytest.raises(ValueError):
        synthesize(prior, coeffs, 32)
    with pytest.raises(ValueError):
        synthesize(prior, coeffs, 96)
    assert synthesize(prior, coeffs, 64).n_g == 64
    assert np.array_equal(synthesize(prior, [], 64).values, np.zeros(64))


def test_synthesis_preserves_norm():
    """Orthonormality on the grid: ||u||_grid = ||c||_2"""
    for kind, weights in [("haar_periodic", "wavelet_sobolev"), ("fourier_real", "fourier_power")]:
        prior = make_product_prior(kind, 16, weights, p=0.5, q=0.5)
        coeffs = sample_coefficients_batch(prior, 10, RngState(2))
        fields = synthesize_batch(prior, coeffs, 64)
        assert np.allclose(np.mean(fields ** 2, axis=1), np.sum(coeffs ** 2, axis=1))
        single = synthesize(prior, coeffs[3], 64)
        assert np.allclose(single.values, fields[3])


def test_coefficients_reproducible():
    prior = make_product_prior("haar_periodic", 16, p=0.5, q=0.5)
    assert np.array_equal(sample_coefficients_batch(prior, 5, RngState(4)),
                          sample_coefficients_batch(prior, 5, RngState(4)))


def test_second_moment_matches_analytic():
    test_cases = [
        {"law": "gpq", "p": 1.0, "q": 1.0, "description": "Laplace coefficients"},
        {"law": "gpq", "p": 0.5, "q": 0.5, "description": "sparse G_{1/2,1/2} coefficients"},
        {"law": "compound_poisson_laplace", "p": 1.0, "q": 1.0, "description": "compound Poisson coefficients"},
    ]
    for i, case in enumerate(test_cases):
        logger.info(f"Testing second moment: {case['description']}")
        prior = make_product_prior("haar_periodic", 16, coefficient_law=case["law"],
                                   p=case["p"], q=case["q"], rate=1.0)
        report = second_moment_estimate(prior, 20000, RngState(6, i))
        assert abs(report["estimate"] - report["analytic"]) < 5.0 * report["standard_error"]
    with pytest.raises(ValueError):
        second_moment_estimate(prior, 10, RngState(1))


def test_compound_poisson_variance_and_atom():
    prior = make_product_prior("fourier_real", 8, "fourier_power", coefficient_law="compound_poisson_laplace",
                               rate=0.5)
    assert prior.coeff_law.variance == 1.0
    coeffs = sample_coefficients_batch(prior, 40000, RngState(3))
    assert np.mean(coeffs == 0.0) == pytest.approx(np.exp(-0.5), abs=0.012)


def test_product_characteristic_function():
    prior = make_product_prior("haar_periodic", 8, coefficient_law="compound_poisson_laplace", rate=1.0)
    functional = [(1, 1.0), (2, 2.0), (4, -1.5)]
    coeffs = sample_coefficients_batch(prior, 40000, RngState(12))
    assert abs(empirical_product_char_fn(coeffs, functional) - product_char_fn(prior, functional)) < 0.03

    gaussian = make_product_prior("fourier_real", 4, "fourier_power", p=2.0, q=1.0)
    gammas = gaussian.gammas
    expected = np.exp(-0.5 * ((gammas[0] * 0.5) ** 2 + (gammas[1] * 1.0) ** 2))
    assert product_char_fn(gaussian, [(1, 0.5), (2, 1.0)]) == pytest.approx(expected)

    with pytest.raises(ValueError):
        product_char_fn(make_product_prior("haar_periodic", 8, p=0.5, q=0.5), functional)


def test_compressibility_orders_laws():
    """Sparse G_{p,q} coefficients put far more mass near zero than Gaussian ones"""
    sparse = make_product_prior("haar_periodic", 16, p=0.5, q=0.5)
    gaussian = make_product_prior("haar_periodic", 16, p=2.0, q=1.0)
    gen = RngState(21)
    rows = compressibility_report({
        "sparse": sparse.coeff_law.sample(20000, gen.generator()),
        "gaussian": gaussian.coeff_law.sample(20000, gen.substream(1).generator())
    }, [0.1])
    fractions = {row["law"]: row["fraction"] for row in rows}
    assert fractions["sparse"] > 0.4
    assert fractions["gaussian"] < 0.12


def test_compressibility_at_small_threshold():
    """Mass of |xi| < 0.01 against the incomplete gamma value for matched weights"""
    eps = 0.01
    n = 100000
    test_cases = [
        {"name": "G(1/2,1/2)", "p": 0.5, "q": 0.5},
        {"name": "G(1/2,1)", "p": 0.5, "q": 1.0},
        {"name": "Gaussian G(2,1)", "p": 2.0, "q": 1.0},
    ]
    samples = {}
    for i, case in enumerate(test_cases):
        law = make_product_prior("haar_periodic", 8, p=case["p"], q=case["q"]).coeff_law
        samples[case["name"]] = law.sample(n, RngState(27, i).generator())
    fractions = {row["law"]: row["fraction"] for row in compressibility_report(samples, [eps])}
    for case in test_cases:
        params = GpqParams(case["p"], case["q"])
        expected = float(2.0 * gpq_cdf(params, eps) - 1.0)
        se = np.sqrt(expected * (1.0 - expected) / n)
        logger.info(f"Testing small-ball fraction of {case['name']}: {fractions[case['name']]:.4f} vs {expected:.4f}")
        assert abs(fractions[case["name"]] - expected) < 4.0 * se
    assert fractions["G(1/2,1/2)"] > fractions["G(1/2,1)"] > fractions["Gaussian G(2,1)"]
    gaussian_fraction = 2.0 * stats.norm.cdf(eps) - 1.0
    gaussian_se = np.sqrt(gaussian_fraction * (1.0 - gaussian_fraction) / n)
    assert abs(fractions["Gaussian G(2,1)"] - gaussian_fraction) < 4.0 * gaussian_se

    zero_rows = compressibility_report(np.zeros(100), [eps, 0.1])
    assert [row["fraction"] for row in zero_rows] == [1.0, 1.0]


def test_second_moment_partial_sums_converge():
    """Estimates over growing truncations share draws and increase towards the full energy"""
    prior = make_product_prior("haar_periodic", 256, "wavelet_sobolev", p=1.0, q=1.0)
    truncations = [64, 128, 256]
    reports = [second_moment_estimate(prior, 20000, RngState(22), n_terms=n) for n in truncations]
    estimates = [report["estimate"] for report in reports]
    logger.info(f"Partial second moments over {truncations}: {estimates}")
    assert estimates[0] < estimates[1] < estimates[2]
    increments = np.diff(estimates)
    analytic_increments = np.diff([report["analytic"] for report in reports])
    assert np.allclose(increments, analytic_increments, rtol=0.05)
    assert increments[1] < increments[0]
    tails = [report["tail_energy"] for report in reports]
    assert tails[0] > tails[1] > tails[2]
    for report in reports:
        assert abs(report["estimate"] - report["analytic"]) < 4.0 * report["standard_error"]
    with pytest.raises(ValueError):
        second_moment_estimate(prior, 1000, RngState(22), n_terms=512)

    silent = make_product_prior("haar_periodic", 16, coefficient_law="compound_poisson_laplace", rate=0.0)
    report = second_moment_estimate(silent, 1000, RngState(23))
    assert report["estimate"] == 0.0
    assert report["analytic"] == 0.0


def test_product_characteristic_function_random_functionals():
    """Analytic and empirical characteristic functions over 16 random functionals"""
    n = 100000
    prior = make_product_prior("haar_periodic", 8, coefficient_law="compound_poisson_laplace", rate=1.0)
    coeffs = sample_coefficients_batch(prior, n, RngState(31))
    gen = RngState(32).generator()
    worst = 0.0
    for _ in range(16):
        size = int(gen.integers(2, 5))
        indices = gen.choice(prior.max_terms, size=size, replace=False) + 1
        weights = gen.normal(0.0, 2.0, size=size)
        functional = [(int(k), float(w)) for k, w in zip(indices, weights)]
        error = abs(empirical_product_char_fn(coeffs, functional) - product_char_fn(prior, functional))
        worst = max(worst, error)
    logger.info(f"Worst characteristic function error over 16 functionals: {worst:.5f}")
    assert worst < 4.0 / np.sqrt(n)

    assert product_char_fn(prior, []) == 1.0
    silent = make_product_prior("haar_periodic", 8, coefficient_law="compound_poisson_laplace", rate=0.0)
    assert product_char_fn(silent, [(1, 3.0), (5, -2.0)]) == 1.0


def test_sobolev_norm():
    basis = BasisSpec("fourier_real", 3)
    assert sobolev_norm_squared(basis, [1.0, 1.0, 1.0], 1.0) == pytest.approx(1.0 + 2.0 + 2.0)
    haar = BasisSpec("haar_periodic", 2)
    assert sobolev_norm_squared(haar, [1.0, 1.0], 1.0) == pytest.approx(2.0 + 5.0)


def main():
    """Main test function"""
    logger.info("Starting product prior tests...")
    tests = [
        test_haar_and_fourier_indexing, test_haar_values, test_grid_gram_is_identity,
        test_basis_matrix_is_read_only, test_weight_values, test_tail_energy_complements_partial_energy,
        test_synthesis_grid_requirements, test_synthesis_preserves_norm, test_coefficients_reproducible,
        test_second_moment_matches_analytic, test_compound_poisson_variance_and_atom,
        test_product_characteristic_function, test_compressibility_orders_laws,
        test_compressibility_at_small_threshold, test_second_moment_partial_sums_converge,
        test_product_characteristic_function_random_functionals, test_sobolev_norm,
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
    print(f"\n✅ All {len(tests)} product prior tests passed!")
    sys.exit(0)


if __name__ == "__main__":
    main()
