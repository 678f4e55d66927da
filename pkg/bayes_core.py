"""
Bayesian Core
Noise models, likelihood potentials, projected potentials, prior ensembles
and evidence estimation for posterior problems built from a prior, a
forward model and data
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy import linalg, special

from config import Config
from distributions import GpqParams, RngLike, RngState, as_generator, gpq_log_pdf
from exceptions import EvidenceUnderflowError
from fields import GridField
from forward_models import DeconvModel, ForwardModel
from levy_process import CompoundPoissonPathPrior
from product_prior import (
    ProductPriorSpec, basis_matrix, make_product_prior, sample_coefficients_batch, synthesize
)

logger = logging.getLogger(__name__)

PriorLike = Union[ProductPriorSpec, CompoundPoissonPathPrior]


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """
    Gaussian noise N(0, covariance). The lower Cholesky factor is computed at
    construction; ||x||_Sigma = ||L^{-1} x||_2.
    """
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ValueError(f"noise covariance must be square, got shape {cov.shape}")
        if not np.allclose(cov, cov.T):
            raise ValueError("noise covariance must be symmetric")
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as e:
            raise ValueError(f"noise covariance is not positive definite: {e}")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cholesky", chol)

    @classmethod
    def isotropic(cls, sigma: float, m: int) -> "NoiseSpec":
        if sigma <= 0:
            raise ValueError(f"noise sigma must be positive, got {sigma}")
        return cls(sigma ** 2 * np.eye(m))

    @property
    def dim(self) -> int:
        return int(self.covariance.shape[0])

    def whiten(self, residuals: np.ndarray) -> np.ndarray:
        """L^{-1} applied to each row of residuals (n x m)"""
        r = np.atleast_2d(residuals)
        return linalg.solve_triangular(self.cholesky, r.T, lower=True).T

    def sample(self, size: int, rng: RngLike) -> np.ndarray:
        gen = as_generator(rng)
        return gen.standard_normal((size, self.dim)) @ self.cholesky.T


def sigma_norm(x, noise: NoiseSpec) -> float:
    x = np.asarray(x, dtype=float)
    if x.size != noise.dim:
        raise ValueError(f"vector length {x.size} does not match noise dimension {noise.dim}")
    return float(np.linalg.norm(noise.whiten(x)[0]))


@dataclass(eq=False)
class PosteriorProblem:
    """Prior, forward model, noise and data on an n_g-point grid"""
    prior: PriorLike
    forward: ForwardModel
    noise: NoiseSpec
    data: np.ndarray
    n_g: int
    truncation: Optional[int] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).ravel()
        if self.data.size != self.noise.dim:
            raise ValueError(f"data length {self.data.size} does not match noise dimension {self.noise.dim}")
        if self.forward.n_obs != self.data.size:
            raise ValueError(f"forward model produces {self.forward.n_obs} values, data has {self.data.size}")
        if isinstance(self.forward, DeconvModel) and self.forward.n_g != self.n_g:
            raise ValueError(f"kernel grid {self.forward.n_g} does not match problem grid {self.n_g}")
        if self.is_product:
            if self.truncation is None:
                self.truncation = self.prior.max_terms
            if not 0 <= self.truncation <= self.prior.max_terms:
                raise ValueError(
                    f"truncation {self.truncation} outside 0..{self.prior.max_terms}"
                )
        elif self.truncation is not None:
            raise ValueError("truncation applies only to product priors")

    @property
    def is_product(self) -> bool:
        return isinstance(self.prior, ProductPriorSpec)

    def with_data(self, data) -> "PosteriorProblem":
        return PosteriorProblem(self.prior, self.forward, self.noise, data, self.n_g, self.truncation)

    def field_from_coefficients(self, coefficients) -> GridField:
        return synthesize(self.prior, coefficients, self.n_g)


def _potential_rows(predictions: np.ndarray, data: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    white = noise.whiten(predictions - data)
    return 0.5 * np.sum(white ** 2, axis=1)


def gaussian_potential(problem: PosteriorProblem, u, data=None) -> float:
    """Phi(u; y) = 1/2 ||G(u) - y||^2_Sigma"""
    y = problem.data if data is None else np.asarray(data, dtype=float)
    values = u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)
    if values.size != problem.n_g:
        raise ValueError(f"field has {values.size} grid values, problem grid is {problem.n_g}")
    return float(_potential_rows(problem.forward.forward(values)[None, :], y, problem.noise)[0])


def projected_potential(problem: PosteriorProblem, coefficients, n_terms: int, data=None) -> float:
    """Phi evaluated on the synthesis of the first n_terms coefficients only"""
    c = np.asarray(coefficients, dtype=float)
    if not 0 <= n_terms <= c.size:
        raise ValueError(f"projection size {n_terms} outside 0..{c.size}")
    projected = np.zeros_like(c)
    projected[:n_terms] = c[:n_terms]
    return gaussian_potential(problem, problem.field_from_coefficients(projected), data)


class PriorEnsemble:
    """
    Fixed set of prior draws with their forward predictions, shared by
    every potential evaluated on it (common random numbers).

    Draws are generated in chunks; chunk i always uses rng.chunk_generator(i),
    so results do not depend on the worker count.
    """

    def __init__(self, problem: PosteriorProblem, n_samples: int, rng: RngState,
                 truncations: Sequence[int] = (), chunk_size: Optional[int] = None,
                 workers: int = 1, keep_coefficients: Optional[int] = None):
        if n_samples < 1:
            raise ValueError(f"n_samples must be positive, got {n_samples}")
        if not isinstance(rng, RngState):
            raise TypeError("PriorEnsemble needs an RngState for chunk-wise seeding")
        if truncations and not problem.is_product:
            raise ValueError("projected predictions need a product prior")
        self.problem = problem
        self.n_samples = int(n_samples)
        self.truncations = [int(n) for n in truncations]
        self.chunk_size = int(chunk_size or Config.METRICS_CONFIG["chunk_size"])
        self.keep = int(keep_coefficients if keep_coefficients is not None
                        else Config.METRICS_CONFIG["keep_coefficients"])

        n_chunks = -(-self.n_samples // self.chunk_size)
        sizes = [min(self.chunk_size, self.n_samples - i * self.chunk_size) for i in range(n_chunks)]
        logger.info(f"Drawing {self.n_samples} prior samples in {n_chunks} chunks (workers={workers})")

        jobs = [(i, sizes[i], rng) for i in range(n_chunks)]
        if workers > 1 and n_chunks > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda job: self._draw_chunk(*job), jobs))
        else:
            parts = [self._draw_chunk(*job) for job in jobs]

        self.predictions = np.vstack([p["predictions"] for p in parts])
        self.sq_norms = np.concatenate([p["sq_norms"] for p in parts])
        self.coefficients = np.vstack([p["coefficients"] for p in parts])
        self.projected = {
            n: np.vstack([p["projected"][n] for p in parts]) for n in self.truncations
        }

    def _draw_chunk(self, index: int, size: int, rng: RngState) -> Dict[str, Any]:
        gen = rng.chunk_generator(index)
        problem = self.problem
        forward = problem.forward
        projected = {}
        if problem.is_product:
            coeffs = sample_coefficients_batch(problem.prior, size, gen)
            coeffs[:, problem.truncation:] = 0.0
            basis = basis_matrix(problem.prior.basis, problem.n_g)
            fields = coeffs @ basis
            predictions = forward.forward_batch(fields)
            for n in self.truncations:
                if isinstance(forward, DeconvModel):
                    projected[n] = coeffs[:, :n] @ (basis[:n] @ forward.matrix().T)
                else:
                    projected[n] = forward.forward_batch(coeffs[:, :n] @ basis[:n])
            kept = coeffs[:, :self.keep]
        else:
            fields = problem.prior.sample_fields(size, problem.n_g, gen)
            predictions = forward.forward_batch(fields)
            kept = np.zeros((size, 0))
        return {
            "predictions": predictions,
            "projected": projected,
            "sq_norms": np.mean(fields ** 2, axis=1),
            "coefficients": kept
        }


Potential = Callable[[PriorEnsemble], np.ndarray]


def data_potential(problem: PosteriorProblem, data=None) -> Potential:
    """Phi(.; y) on every draw of an ensemble"""
    y = problem.data if data is None else np.asarray(data, dtype=float)

    def potential(ensemble: PriorEnsemble) -> np.ndarray:
        return _potential_rows(ensemble.predictions, y, problem.noise)
    return potential


def projected_data_potential(problem: PosteriorProblem, n_terms: int, data=None) -> Potential:
    """Phi(P_N .; y) on every draw; N must be one of the ensemble truncations"""
    y = problem.data if data is None else np.asarray(data, dtype=float)

    def potential(ensemble: PriorEnsemble) -> np.ndarray:
        if n_terms == problem.truncation:
            return _potential_rows(ensemble.predictions, y, problem.noise)
        if n_terms == 0:
            zeros = problem.forward.forward_batch(np.zeros((1, problem.n_g)))
            return np.full(ensemble.n_samples, _potential_rows(zeros, y, problem.noise)[0])
        if n_terms not in ensemble.projected:
            raise KeyError(f"ensemble has no projected predictions for N={n_terms}")
        return _potential_rows(ensemble.projected[n_terms], y, problem.noise)
    return potential


def evidence_from_potentials(potentials: np.ndarray, n_bootstrap: int = 0,
                             rng: Optional[RngLike] = None) -> Dict[str, float]:
    """
    Z = mean(exp(-Phi)) in log space, with its plain standard error and,
    optionally, a bootstrap standard error.
    """
    phi = np.asarray(potentials, dtype=float)
    n = phi.size
    log_z = float(special.logsumexp(-phi) - np.log(n))
    if not np.isfinite(log_z):
        raise EvidenceUnderflowError(
            "all importance weights vanish; evidence is not representable",
            {"n_samples": n, "min_potential": float(np.min(phi)) if n else None}
        )
    shift = float(np.max(-phi))
    scaled = np.exp(-phi - shift)
    se = float(np.exp(shift) * np.std(scaled, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    report = {
        "log_evidence": log_z,
        "evidence": float(np.exp(log_z)),
        "standard_error": se,
        "ess": float(scaled.sum() ** 2 / np.sum(scaled ** 2)),
        "n_samples": int(n)
    }
    if n_bootstrap > 0:
        gen = as_generator(rng if rng is not None else RngState(0))
        boots = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            idx = gen.integers(0, n, size=n)
            boots[b] = np.mean(scaled[idx])
        report["bootstrap_standard_error"] = float(np.exp(shift) * np.std(boots, ddof=1))
    return report


def evidence_estimate(problem: PosteriorProblem, n_samples: int, rng: RngState,
                      workers: int = 1, n_bootstrap: int = 0) -> Dict[str, float]:
    """Prior Monte Carlo estimate of Z(y) = E_prior exp(-Phi(u; y))"""
    if n_samples < 1000:
        raise ValueError(f"n_samples must be at least 1000, got {n_samples}")
    ensemble = PriorEnsemble(problem, n_samples, rng, workers=workers)
    report = evidence_from_potentials(data_potential(problem)(ensemble), n_bootstrap, rng.substream(1))
    logger.info(f"Evidence estimate log Z = {report['log_evidence']:.6f} (ESS {report['ess']:.1f})")
    return report


def conjugate_toy_problem(data: float, sigma: float, n_g: int = 8) -> PosteriorProblem:
    """
    One-mode problem: constant Fourier mode with N(0, 1) coefficient, unit
    kernel and a single observation, so G(u) = c_1.
    """
    prior = make_product_prior("fourier_real", 1, "fourier_power", coefficient_law="gpq", p=2.0, q=1.0)
    forward = DeconvModel(GridField(np.ones(n_g)), np.array([0.0]))
    return PosteriorProblem(prior, forward, NoiseSpec.isotropic(sigma, 1), [data], n_g)


def conjugate_evidence(data: float, sigma: float, prior_var: float = 1.0) -> float:
    """Z(y) = sqrt(s^2 / (s^2 + v)) exp(-y^2 / (2 (s^2 + v)))"""
    total = sigma ** 2 + prior_var
    return float(np.sqrt(sigma ** 2 / total) * np.exp(-data ** 2 / (2.0 * total)))


def conjugate_posterior(data: float, sigma: float, prior_var: float = 1.0) -> Dict[str, float]:
    var = 1.0 / (1.0 / prior_var + 1.0 / sigma ** 2)
    return {"mean": var * data / sigma ** 2, "variance": var}


def example_density_grid(matrix, data, sigma: float, params: GpqParams,
                         extent: float = 2.0, n_grid: int = 200) -> Dict[str, np.ndarray]:
    """
    Likelihood, prior and posterior densities of the two-coefficient problem
    y = A z + noise on a square grid, each normalized to unit mass on the grid.
    Cell midpoints are used so the coordinate axes are never evaluated.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[1] != 2:
        raise ValueError(f"design matrix must have two columns, got shape {a.shape}")
    y = np.atleast_1d(np.asarray(data, dtype=float))
    step = 2.0 * extent / n_grid
    axis = -extent + step * (np.arange(n_grid) + 0.5)
    z1, z2 = np.meshgrid(axis, axis, indexing="ij")
    points = np.column_stack([z1.ravel(), z2.ravel()])

    log_lik = -0.5 * np.sum((points @ a.T - y) ** 2, axis=1) / sigma ** 2
    log_prior = gpq_log_pdf(params, points[:, 0]) + gpq_log_pdf(params, points[:, 1])

    def normalize(log_density: np.ndarray) -> np.ndarray:
        w = np.exp(log_density - special.logsumexp(log_density))
        return w.reshape(n_grid, n_grid)

    return {
        "axis": axis,
        "likelihood": normalize(log_lik),
        "prior": normalize(log_prior),
        "posterior": normalize(log_lik + log_prior)
    }


def axis_concentration(density: np.ndarray, axis: np.ndarray, band: float) -> float:
    """Grid mass with min(|z1|, |z2|) < band"""
    z1, z2 = np.meshgrid(axis, axis, indexing="ij")
    near = np.minimum(np.abs(z1), np.abs(z2)) < band
    return float(np.sum(density[near]) / np.sum(density))


def build_problem(prior: PriorLike, forward: ForwardModel, sigma: float, data, n_g: int,
                  truncation: Optional[int] = None) -> PosteriorProblem:
    return PosteriorProblem(prior, forward, NoiseSpec.isotropic(sigma, forward.n_obs), data, n_g, truncation)
