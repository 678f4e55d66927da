"""
Posterior Inference
Coefficient-space Metropolis-within-Gibbs sampling, prior-independence
sampling for atomic priors, and MAP estimation for l_p and G_{p,q}
regularized least squares by iteratively reweighted least squares
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg
from sklearn.metrics import f1_score

from bayes_core import PosteriorProblem
from config import Config
from distributions import GpqParams, RngLike, as_generator
from exceptions import ZeroAcceptanceError
from forward_models import DeconvModel, interpolation_matrix
from product_prior import GpqLaw, basis_matrix, sample_coefficients_batch

logger = logging.getLogger(__name__)


@dataclass
class McmcConfig:
    n_steps: int = 10000
    burn_in: int = 2000
    proposal_scale: float = 0.5
    adapt: bool = True
    target_acceptance: float = 0.3
    thin: int = 10
    tempering: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be positive, got {self.n_steps}")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError(f"burn_in must satisfy 0 <= burn_in < n_steps, got {self.burn_in}")
        if self.proposal_scale <= 0:
            raise ValueError(f"proposal_scale must be positive, got {self.proposal_scale}")
        if self.thin < 1:
            raise ValueError(f"thin must be positive, got {self.thin}")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if self.tempering < 0:
            raise ValueError(f"tempering must be nonnegative, got {self.tempering}")

    @classmethod
    def from_config(cls, **overrides) -> "McmcConfig":
        values = dict(Config.MCMC_CONFIG)
        values.update(overrides)
        return cls(**values)


@dataclass
class MapConfig:
    p: float = 0.5
    q: float = 0.5
    epsilon: float = 1e-3
    sigma: float = 0.01
    max_iterations: int = 500
    tolerance: float = 1e-8
    multi_start: int = 8
    weight_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.p <= 2:
            raise ValueError(f"p must lie in (0, 2], got {self.p}")
        if self.q < 1 and self.epsilon <= 0:
            raise ValueError("epsilon must be positive when q < 1")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.multi_start < 1:
            raise ValueError("multi_start must be at least 1")

    @classmethod
    def from_config(cls, **overrides) -> "MapConfig":
        keys = cls.__dataclass_fields__.keys()
        values = {k: v for k, v in Config.MAP_CONFIG.items() if k in keys}
        values.update(overrides)
        return cls(**values)


class _LinearFeatures:
    """
    Predictions as post(c @ features): deconvolution uses the rows of
    basis @ A^T directly, quadratic models square z_j . S(u).
    """

    def __init__(self, problem: PosteriorProblem):
        basis = basis_matrix(problem.prior.basis, problem.n_g)[:problem.truncation]
        forward = problem.forward
        if isinstance(forward, DeconvModel):
            self.features = basis @ forward.matrix().T
            self.sensing = None
        else:
            self.features = basis @ interpolation_matrix(forward.obs_points, problem.n_g).T
            self.sensing = forward.sensing_vectors

    def predict(self, state: np.ndarray) -> np.ndarray:
        if self.sensing is None:
            return state
        return (self.sensing @ state) ** 2


def _potential(prediction: np.ndarray, problem: PosteriorProblem) -> float:
    white = problem.noise.whiten(prediction - problem.data)[0]
    return 0.5 * float(white @ white)


def mh_sample(problem: PosteriorProblem, config: McmcConfig, rng: RngLike) -> Dict[str, Any]:
    """
    Sample the discretized posterior exp(-Phi) d(prior).

    Product priors with G_{p,q} coefficients use componentwise random-walk
    proposals with scale proportional to gamma_k; compound Poisson
    coefficient laws and path priors use prior-independence proposals.
    """
    gen = as_generator(rng)
    if problem.is_product and isinstance(problem.prior.coeff_law, GpqLaw):
        result = _random_walk_chain(problem, config, gen)
    else:
        result = _independence_chain(problem, config, gen)
    logger.info(
        f"MCMC ({result['sampler']}) finished: {config.n_steps} steps, "
        f"acceptance {result['acceptance_rate']:.3f}"
    )
    return result


def _check_burn_in(accepted: int, config: McmcConfig, sampler: str):
    if config.burn_in > 0 and accepted == 0:
        raise ZeroAcceptanceError(
            "no proposal accepted during burn-in",
            {"sampler": sampler, "burn_in": config.burn_in, "proposal_scale": config.proposal_scale}
        )


def _random_walk_chain(problem: PosteriorProblem, config: McmcConfig,
                       gen: np.random.Generator) -> Dict[str, Any]:
    n_terms = problem.truncation
    gammas = problem.prior.gammas[:n_terms]
    law = problem.prior.coeff_law
    feats = _LinearFeatures(problem)
    temper = config.tempering

    coeffs = sample_coefficients_batch(problem.prior, 1, gen)[0, :n_terms].copy()
    state = coeffs @ feats.features
    phi = _potential(feats.predict(state), problem)
    log_prior = law.log_pdf(coeffs / gammas)
    log_scales = np.full(n_terms, np.log(config.proposal_scale))

    kept_coeffs: List[np.ndarray] = []
    kept_phi: List[float] = []
    burn_accepted = 0
    post_accepted = 0
    for step in range(config.n_steps):
        in_burn_in = step < config.burn_in
        for k in range(n_terms):
            step_size = np.exp(log_scales[k]) * gammas[k]
            proposal = coeffs[k] + step_size * gen.standard_normal()
            new_log_prior = float(law.log_pdf(proposal / gammas[k]))
            new_state = state + (proposal - coeffs[k]) * feats.features[k]
            new_phi = _potential(feats.predict(new_state), problem) if temper > 0 else 0.0
            log_ratio = -temper * (new_phi - phi) + new_log_prior - log_prior[k]
            accept = np.log(gen.random()) < log_ratio
            if accept:
                coeffs[k], state, phi = proposal, new_state, new_phi
                log_prior[k] = new_log_prior
                if in_burn_in:
                    burn_accepted += 1
                else:
                    post_accepted += 1
            if in_burn_in and config.adapt:
                # Robbins-Monro step toward the target acceptance
                log_scales[k] += (float(accept) - config.target_acceptance) / (step + 1) ** 0.6
        if not in_burn_in and (step - config.burn_in) % config.thin == 0:
            kept_coeffs.append(coeffs.copy())
            kept_phi.append(phi)
        if step == config.burn_in - 1:
            _check_burn_in(burn_accepted, config, "random_walk")

    post_steps = (config.n_steps - config.burn_in) * n_terms
    return {
        "sampler": "random_walk",
        "chain": np.asarray(kept_coeffs),
        "potentials": np.asarray(kept_phi),
        "acceptance_rate": post_accepted / post_steps if post_steps else 0.0,
        "burn_in_acceptance_rate": burn_accepted / (config.burn_in * n_terms) if config.burn_in else None,
        "proposal_scales": np.exp(log_scales),
        "config": asdict(config)
    }


def _independence_chain(problem: PosteriorProblem, config: McmcConfig,
                        gen: np.random.Generator) -> Dict[str, Any]:
    """Fresh prior draws as proposals; acceptance reduces to the likelihood ratio"""
    temper = config.tempering

    def draw():
        if problem.is_product:
            c = sample_coefficients_batch(problem.prior, 1, gen)[0]
            c[problem.truncation:] = 0.0
            return c, problem.field_from_coefficients(c).values
        u = problem.prior.sample_fields(1, problem.n_g, gen)[0]
        return u, u

    current, field = draw()
    phi = _potential(problem.forward.forward(field), problem)
    kept: List[np.ndarray] = []
    kept_phi: List[float] = []
    burn_accepted = 0
    post_accepted = 0
    for step in range(config.n_steps):
        in_burn_in = step < config.burn_in
        proposal, new_field = draw()
        new_phi = _potential(problem.forward.forward(new_field), problem)
        if np.log(gen.random()) < -temper * (new_phi - phi):
            current, phi = proposal, new_phi
            if in_burn_in:
                burn_accepted += 1
            else:
                post_accepted += 1
        if not in_burn_in and (step - config.burn_in) % config.thin == 0:
            kept.append(np.array(current, copy=True))
            kept_phi.append(phi)
        if step == config.burn_in - 1:
            _check_burn_in(burn_accepted, config, "independence")

    post_steps = config.n_steps - config.burn_in
    return {
        "sampler": "independence",
        "chain": np.asarray(kept),
        "potentials": np.asarray(kept_phi),
        "acceptance_rate": post_accepted / post_steps,
        "burn_in_acceptance_rate": burn_accepted / config.burn_in if config.burn_in else None,
        "proposal_scales": None,
        "config": asdict(config)
    }


def effective_sample_size(series: np.ndarray) -> float:
    """n / (1 + 2 sum of autocorrelations up to the first negative lag)"""
    x = np.asarray(series, dtype=float)
    n = x.size
    centered = x - x.mean()
    var = float(centered @ centered)
    if n < 2 or var <= 0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / var
    total = 0.0
    for lag in range(1, n):
        if acf[lag] < 0:
            break
        total += acf[lag]
    return float(n / (1.0 + 2.0 * total))


def posterior_summaries(chain, quantiles: Sequence[float] = (0.05, 0.5, 0.95)) -> Dict[str, Any]:
    """
    Mean, componentwise quantiles and effective sample size of a chain
    (array of shape (n_kept, dim) or an mh_sample result).
    """
    samples = chain["chain"] if isinstance(chain, dict) else chain
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] == 0:
        raise ValueError("chain is empty")
    return {
        "mean": samples.mean(axis=0),
        "quantiles": {float(q): np.quantile(samples, q, axis=0) for q in quantiles},
        "ess": np.array([effective_sample_size(samples[:, i]) for i in range(samples.shape[1])]),
        "n_samples": int(samples.shape[0])
    }


def map_objective(a, y, sigma: float, p: float, z) -> float:
    """1/2 sigma^-2 ||A z - y||^2 + ||z||_p^p"""
    r = np.asarray(a) @ z - y
    return float(0.5 * (r @ r) / sigma ** 2 + np.sum(np.abs(z) ** p))


def map_gpq_objective(a, y, sigma: float, p: float, q: float, epsilon: float, z) -> float:
    """1/2 sigma^-2 ||A z - y||^2 + sum |z/alpha|^p + (1 - q) sum log(epsilon + |z|)"""
    alpha = GpqParams(p, q).alpha
    r = np.asarray(a) @ z - y
    penalty = np.sum(np.abs(z / alpha) ** p)
    if q != 1:
        penalty += (1.0 - q) * np.sum(np.log(epsilon + np.abs(z)))
    return float(0.5 * (r @ r) / sigma ** 2 + penalty)


def _irls(a: np.ndarray, y: np.ndarray, sigma: float, curvature: Callable[[np.ndarray], np.ndarray],
          objective: Callable[[np.ndarray], float], start: np.ndarray,
          config: MapConfig) -> Dict[str, Any]:
    """
    Majorization-minimization: each step minimizes the quadratic majorizer
    1/2 sigma^-2 ||A z - y||^2 + 1/2 sum w_k z_k^2 with
    w_k = rho'(|z_k|) / |z_k| (|z_k| floored), backtracking if the objective
    would increase.
    """
    z = np.array(start, dtype=float)
    value = objective(z)
    history = [value]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        w = curvature(np.maximum(np.abs(z), config.weight_floor))
        inv_w = 1.0 / w
        # (A^T A / s^2 + W) z = A^T y / s^2, solved in the m x m form
        gram = (a * inv_w) @ a.T + sigma ** 2 * np.eye(a.shape[0])
        full_step = inv_w * (a.T @ linalg.solve(gram, y, assume_a="pos"))
        candidate = full_step
        new_value = objective(candidate)
        step = 1.0
        while new_value > value and step > 1e-6:
            step *= 0.5
            candidate = z + step * (full_step - z)
            new_value = objective(candidate)
        if new_value > value:
            converged = True
            break
        change = float(np.linalg.norm(candidate - z))
        z, value = candidate, new_value
        history.append(value)
        if change <= config.tolerance * (1.0 + float(np.linalg.norm(z))):
            converged = True
            break
    return {"z": z, "objective": value, "history": history,
            "iterations": iterations, "converged": converged}


def _starts(a: np.ndarray, y: np.ndarray, count: int, gen: np.random.Generator) -> List[np.ndarray]:
    n = a.shape[1]
    starts = [np.zeros(n), np.linalg.lstsq(a, y, rcond=None)[0]]
    support_size = max(1, min(n, a.shape[0]) // 4)
    while len(starts) < count:
        support = gen.choice(n, size=support_size, replace=False)
        z = np.zeros(n)
        z[support] = np.linalg.lstsq(a[:, support], y, rcond=None)[0]
        starts.append(z)
    return starts[:count]


def _best_of(a, y, sigma, curvature, objective, config: MapConfig, multi: bool,
             rng: Optional[RngLike]) -> Dict[str, Any]:
    gen = as_generator(rng) if rng is not None else np.random.default_rng(0)
    starts = _starts(a, y, config.multi_start if multi else 2, gen)
    runs = [_irls(a, y, sigma, curvature, objective, s, config) for s in starts]
    best = min(runs, key=lambda r: r["objective"])
    best["n_starts"] = len(runs)
    if not best["converged"]:
        logger.warning(f"IRLS did not converge in {config.max_iterations} iterations; returning best iterate")
    return best


def map_lp(a, y, sigma: float, p: float, config: Optional[MapConfig] = None,
           rng: Optional[RngLike] = None) -> Dict[str, Any]:
    """
    Minimizer of 1/2 sigma^-2 ||A z - y||^2 + ||z||_p^p.

    p < 1 is nonconvex: several starts (zero, least squares, random sparse
    supports) are run and the best objective is returned.
    """
    if not 0 < p <= 2:
        raise ValueError(f"p must lie in (0, 2], got {p}")
    config = config or MapConfig.from_config(p=p, q=1.0, sigma=sigma)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    y = np.asarray(y, dtype=float)

    def curvature(t):
        return p * t ** (p - 2.0)

    return _best_of(a, y, sigma, curvature, lambda z: map_objective(a, y, sigma, p, z),
                    config, p < 1, rng)


def map_gpq_eps(a, y, sigma: float, p: float, q: float, epsilon: float,
                config: Optional[MapConfig] = None, rng: Optional[RngLike] = None) -> Dict[str, Any]:
    """
    Minimizer of the epsilon-smoothed G_{p,q} MAP objective
    1/2 sigma^-2 ||A z - y||^2 + sum |z/alpha|^p + (1 - q) sum log(epsilon + |z|).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if q > 1:
        raise ValueError(f"q must be at most 1, got {q}")
    config = config or MapConfig.from_config(p=p, q=q, epsilon=epsilon, sigma=sigma)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    y = np.asarray(y, dtype=float)
    alpha = GpqParams(p, q).alpha

    def curvature(t):
        return p * alpha ** (-p) * t ** (p - 2.0) + (1.0 - q) / ((epsilon + t) * t)

    return _best_of(a, y, sigma, curvature,
                    lambda z: map_gpq_objective(a, y, sigma, p, q, epsilon, z),
                    config, p < 1 or q < 1, rng)


def support_f1(true_z, estimate, threshold: float = 1e-3) -> float:
    """F1 score of the estimated support {|z| > threshold} against the true support"""
    truth = np.abs(np.asarray(true_z)) > 0
    found = np.abs(np.asarray(estimate)) > threshold
    return float(f1_score(truth, found, zero_division=0))


def compressed_sensing_instance(n: int, m: int, sparsity: int, sigma: float,
                                rng: RngLike) -> Dict[str, np.ndarray]:
    """Gaussian design A (m x n, entries N(0, 1/m)), s-sparse truth, noisy data"""
    if not 0 < sparsity <= n:
        raise ValueError(f"sparsity must lie in 1..{n}, got {sparsity}")
    gen = as_generator(rng)
    a = gen.standard_normal((m, n)) / np.sqrt(m)
    z = np.zeros(n)
    support = gen.choice(n, size=sparsity, replace=False)
    z[support] = np.where(gen.random(sparsity) < 0.5, -1.0, 1.0) * (1.0 + gen.random(sparsity))
    y = a @ z + sigma * gen.standard_normal(m)
    return {"a": a, "z": z, "y": y, "support": np.sort(support)}
