"""
Product Priors on Function Space
Truncated expansions u = sum_k gamma_k xi_k x_k over periodic Haar wavelet and
real Fourier bases, with moment, characteristic-function and compressibility
diagnostics
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from distributions import (
    GpqParams, RngLike, ScalarIdTriplet, as_generator, compound_poisson_scalar_sample,
    gpq_log_pdf, gpq_moment, gpq_sample, id_char_fn, standard_laplace
)
from fields import GridField

logger = logging.getLogger(__name__)

BASIS_KINDS = ("haar_periodic", "fourier_real")
WEIGHT_RULES = ("wavelet_sobolev", "fourier_power")


@dataclass(frozen=True)
class BasisSpec:
    """Orthonormal basis of L2 on the circle, truncated at max_terms functions"""
    kind: str
    max_terms: int

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"basis kind must be one of {BASIS_KINDS}, got '{self.kind}'")
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValueError(f"max_terms must be a positive integer, got {self.max_terms}")


def haar_index(k: int) -> Tuple[int, int]:
    """
    (level j, shift n) of the k-th Haar function; k = 1 is the scaling
    function and is reported as level -1.
    """
    if k < 1:
        raise ValueError(f"basis index must be >= 1, got {k}")
    if k == 1:
        return -1, 0
    j = (k - 1).bit_length() - 1
    return j, k - 1 - 2 ** j


def fourier_index(k: int) -> Tuple[int, str]:
    """(frequency, 'const' | 'cos' | 'sin') for the k-th realified Fourier function"""
    if k < 1:
        raise ValueError(f"basis index must be >= 1, got {k}")
    if k == 1:
        return 0, "const"
    if k % 2 == 0:
        return k // 2, "cos"
    return (k - 1) // 2, "sin"


def _haar_mother(x: np.ndarray) -> np.ndarray:
    return np.where((x >= 0) & (x < 0.5), 1.0, np.where((x >= 0.5) & (x < 1.0), -1.0, 0.0))


def basis_eval(basis: BasisSpec, k: int, t):
    """
    Value of x_k at t in [0, 1).

    Haar functions take the values +-2^(j/2) or 0; Fourier functions are
    1, sqrt(2) cos(2 pi m t), sqrt(2) sin(2 pi m t).
    """
    if not 1 <= k <= basis.max_terms:
        raise IndexError(f"basis index {k} outside 1..{basis.max_terms}")
    t_arr = np.mod(np.asarray(t, dtype=float), 1.0)
    if basis.kind == "haar_periodic":
        j, n = haar_index(k)
        if j < 0:
            out = np.ones_like(t_arr)
        else:
            out = 2.0 ** (j / 2.0) * _haar_mother(2.0 ** j * t_arr - n)
    else:
        m, part = fourier_index(k)
        if part == "const":
            out = np.ones_like(t_arr)
        elif part == "cos":
            out = np.sqrt(2.0) * np.cos(2.0 * np.pi * m * t_arr)
        else:
            out = np.sqrt(2.0) * np.sin(2.0 * np.pi * m * t_arr)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=32)
def _cached_basis_matrix(kind: str, n_terms: int, n_g: int) -> np.ndarray:
    basis = BasisSpec(kind, n_terms)
    t = np.arange(n_g) / n_g
    matrix = np.vstack([basis_eval(basis, k, t) for k in range(1, n_terms + 1)])
    matrix.setflags(write=False)
    return matrix


def basis_matrix(basis: BasisSpec, n_g: int, n_terms: Optional[int] = None) -> np.ndarray:
    """Rows are the first n_terms basis functions on the grid i/n_g (read-only, cached)"""
    n_terms = basis.max_terms if n_terms is None else n_terms
    return _cached_basis_matrix(basis.kind, int(n_terms), int(n_g))


def _weight_values(rule: str, n_terms: int, exponent: float) -> np.ndarray:
    ks = np.arange(1, n_terms + 1)
    if rule == "wavelet_sobolev":
        levels = np.array([haar_index(int(k))[0] for k in ks])
        return (1.0 + 4.0 ** (levels + 1.0)) ** -0.5
    freqs = np.array([fourier_index(int(k))[0] for k in ks], dtype=float)
    return (1.0 + freqs ** 2) ** (-exponent / 2.0)


def weight_tail_energy(rule: str, n_terms: int, exponent: float = 3.0) -> float:
    """sum_{k > n_terms} gamma_k^2 over the infinite sequence"""
    if rule == "wavelet_sobolev":
        tail = 0.5 if n_terms < 1 else 0.0
        for j in range(0, 90):
            above = max(0.0, 2.0 ** (j + 1) - max(float(n_terms), 2.0 ** j))
            tail += above / (1.0 + 4.0 ** (j + 1))
        return float(tail)
    if exponent <= 0.5:
        return float("inf")
    horizon = 1_000_000
    m = np.arange(1, horizon + 1, dtype=float)
    # indices 2m (cos) and 2m+1 (sin) carry frequency m
    count = (2 * m > n_terms).astype(float) + (2 * m + 1 > n_terms).astype(float)
    tail = float(np.sum(count * (1.0 + m ** 2) ** (-exponent)))
    tail += 2.0 * horizon ** (1.0 - 2.0 * exponent) / (2.0 * exponent - 1.0)
    if n_terms < 1:
        tail += 1.0
    return tail


@dataclass(frozen=True)
class WeightSequence:
    """Deterministic decay weights gamma_k materialized to max_terms entries"""
    rule: str
    max_terms: int
    exponent: float = 3.0
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rule not in WEIGHT_RULES:
            raise ValueError(f"weight rule must be one of {WEIGHT_RULES}, got '{self.rule}'")
        values = _weight_values(self.rule, int(self.max_terms), float(self.exponent))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def tail_energy(self, n_terms: Optional[int] = None) -> float:
        return weight_tail_energy(self.rule, self.max_terms if n_terms is None else n_terms, self.exponent)

    def partial_energy(self, n_terms: Optional[int] = None) -> float:
        n_terms = self.max_terms if n_terms is None else n_terms
        return float(np.sum(self.values[:n_terms] ** 2))


@dataclass(frozen=True)
class GpqLaw:
    """i.i.d. G_{p,q} coefficients"""
    params: GpqParams
    name: str = "gpq"

    @property
    def variance(self) -> float:
        return gpq_moment(self.params, 2)

    @property
    def has_density(self) -> bool:
        return True

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return gpq_sample(self.params, n, gen)

    def log_pdf(self, x):
        return gpq_log_pdf(self.params, x)

    def char_fn(self, s: float) -> complex:
        if not self.params.is_gaussian:
            raise ValueError("closed-form characteristic function only for the Gaussian member G_{2,1}")
        return complex(np.exp(-0.5 * s ** 2))


@dataclass(frozen=True)
class CompoundPoissonLaplaceLaw:
    """CPois(rate, Lap(0,1)) coefficients: atom at zero with mass exp(-rate)"""
    rate: float = 1.0
    name: str = "compound_poisson_laplace"

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"rate must be nonnegative, got {self.rate}")

    @property
    def variance(self) -> float:
        # c * Var(Lap(0,1)) = 2c
        return 2.0 * self.rate

    @property
    def has_density(self) -> bool:
        return False

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return compound_poisson_scalar_sample(self.rate, standard_laplace(), n, gen)

    def triplet(self) -> ScalarIdTriplet:
        return ScalarIdTriplet(0.0, 0.0, self.rate, standard_laplace())

    def char_fn(self, s: float) -> complex:
        return id_char_fn(self.triplet(), s)


CoefficientLaw = Union[GpqLaw, CompoundPoissonLaplaceLaw]


@dataclass(frozen=True)
class ProductPriorSpec:
    basis: BasisSpec
    weights: WeightSequence
    coeff_law: CoefficientLaw

    def __post_init__(self):
        if self.weights.max_terms != self.basis.max_terms:
            raise ValueError("weight sequence length must match the basis truncation")
        if not np.isfinite(self.coeff_law.variance):
            raise ValueError("coefficient law must have finite variance")

    @property
    def max_terms(self) -> int:
        return self.basis.max_terms

    @property
    def gammas(self) -> np.ndarray:
        return self.weights.values

    def analytic_second_moment(self, n_terms: Optional[int] = None) -> float:
        return self.weights.partial_energy(n_terms) * self.coeff_law.variance


def make_product_prior(basis: str = "haar_periodic", max_terms: int = 64,
                       weights: str = "wavelet_sobolev", exponent: float = 3.0,
                       coefficient_law: str = "gpq", p: float = 0.5, q: float = 0.5,
                       rate: float = 1.0) -> ProductPriorSpec:
    """Assemble a ProductPriorSpec from flat configuration values"""
    if coefficient_law == "gpq":
        law = GpqLaw(GpqParams(p, q))
    elif coefficient_law == "compound_poisson_laplace":
        law = CompoundPoissonLaplaceLaw(rate)
    else:
        raise ValueError(f"Unknown coefficient law '{coefficient_law}'")
    return ProductPriorSpec(
        BasisSpec(basis, max_terms), WeightSequence(weights, max_terms, exponent), law
    )


def sample_coefficients(spec: ProductPriorSpec, rng: RngLike) -> np.ndarray:
    """(gamma_k xi_k)_{k <= N} with i.i.d. xi_k"""
    gen = as_generator(rng)
    return spec.gammas * spec.coeff_law.sample(spec.max_terms, gen)


def sample_coefficients_batch(spec: ProductPriorSpec, n_draws: int, rng: RngLike) -> np.ndarray:
    """n_draws independent coefficient vectors, shape (n_draws, N)"""
    gen = as_generator(rng)
    xi = spec.coeff_law.sample(n_draws * spec.max_terms, gen).reshape(n_draws, spec.max_terms)
    return xi * spec.gammas


def _check_grid(basis: BasisSpec, n_terms: int, n_g: int):
    if n_g < 2 * n_terms:
        raise ValueError(f"grid too coarse: n_g={n_g} < 2N={2 * n_terms}")
    if basis.kind == "haar_periodic" and (n_g & (n_g - 1)) != 0:
        raise ValueError(f"grid too coarse for dyadic Haar alignment: n_g={n_g} is not a power of two")


def synthesize(spec: Union[ProductPriorSpec, BasisSpec], coefficients, n_g: int) -> GridField:
    """u(t_i) = sum_k c_k x_k(t_i) on the grid t_i = i / n_g"""
    basis = spec.basis if isinstance(spec, ProductPriorSpec) else spec
    c = np.asarray(coefficients, dtype=float)
    if c.size > basis.max_terms:
        raise ValueError(f"{c.size} coefficients exceed the basis truncation {basis.max_terms}")
    _check_grid(basis, basis.max_terms, n_g)
    if c.size == 0:
        return GridField.zeros(n_g)
    return GridField(c @ basis_matrix(basis, n_g, c.size))


def synthesize_batch(spec: Union[ProductPriorSpec, BasisSpec], coefficients: np.ndarray, n_g: int) -> np.ndarray:
    basis = spec.basis if isinstance(spec, ProductPriorSpec) else spec
    c = np.atleast_2d(np.asarray(coefficients, dtype=float))
    _check_grid(basis, basis.max_terms, n_g)
    return c @ basis_matrix(basis, n_g, c.shape[1])


def grid_gram_matrix(basis: BasisSpec, n_g: int) -> np.ndarray:
    """Gram matrix of the basis under the grid inner product (1/n_g) sum f g"""
    b = basis_matrix(basis, n_g)
    return b @ b.T / n_g


def second_moment_estimate(spec: ProductPriorSpec, n_samples: int, rng: RngLike,
                           chunk_size: int = 4096, n_terms: Optional[int] = None) -> Dict[str, float]:
    """
    Monte Carlo estimate of E||u||^2_{L2} with its standard error.

    Args:
        spec: Product prior
        n_samples: Number of prior draws (>= 100)
        rng: Random stream
        n_terms: Keep only the first n_terms coefficients of each draw. The
            draws do not depend on n_terms, so estimates for growing
            n_terms from one stream are monotone partial sums.

    Returns:
        Dictionary with estimate, standard_error and the analytic value
    """
    if n_samples < 100:
        raise ValueError(f"n_samples must be at least 100, got {n_samples}")
    n_terms = spec.max_terms if n_terms is None else int(n_terms)
    if not 1 <= n_terms <= spec.max_terms:
        raise ValueError(f"n_terms must lie in 1..{spec.max_terms}, got {n_terms}")
    gen = as_generator(rng)
    norms = []
    remaining = n_samples
    while remaining > 0:
        size = min(chunk_size, remaining)
        coeffs = sample_coefficients_batch(spec, size, gen)
        # orthonormal basis: ||u||^2 = ||c||^2
        norms.append(np.sum(coeffs[:, :n_terms] ** 2, axis=1))
        remaining -= size
    values = np.concatenate(norms)
    estimate = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n_samples))
    return {
        "estimate": estimate,
        "standard_error": se,
        "analytic": spec.analytic_second_moment(n_terms),
        "tail_energy": spec.weights.tail_energy(n_terms),
        "n_terms": n_terms,
        "n_samples": n_samples
    }


def _collect_functional(spec: ProductPriorSpec, functional: Sequence[Tuple[int, float]]) -> Dict[int, float]:
    combined: Dict[int, float] = {}
    for index, weight in functional:
        if not 1 <= index <= spec.max_terms:
            raise IndexError(f"functional index {index} outside 1..{spec.max_terms}")
        combined[index] = combined.get(index, 0.0) + float(weight)
    return combined


def product_char_fn(spec: ProductPriorSpec, functional: Sequence[Tuple[int, float]]) -> complex:
    """
    E exp(i sum_k rho_k u_k) = prod_k phi_xi(gamma_k rho_k), for compound
    Poisson Laplace coefficients (inner expectation by quadrature) or
    Gaussian coefficients.
    """
    law = spec.coeff_law
    if isinstance(law, GpqLaw) and not law.params.is_gaussian:
        raise ValueError("product_char_fn supports compound Poisson Laplace or Gaussian coefficient laws")
    value = 1.0 + 0.0j
    for index, weight in _collect_functional(spec, functional).items():
        value *= law.char_fn(spec.gammas[index - 1] * weight)
    return complex(value)


def empirical_product_char_fn(coefficient_samples: np.ndarray,
                              functional: Sequence[Tuple[int, float]]) -> complex:
    """Sample mean of exp(i sum_k rho_k c_k) over rows of coefficient_samples"""
    c = np.atleast_2d(coefficient_samples)
    phase = np.zeros(c.shape[0])
    for index, weight in functional:
        phase += weight * c[:, index - 1]
    return complex(np.mean(np.exp(1j * phase)))


def compressibility_report(samples: Union[np.ndarray, Dict[str, np.ndarray]],
                           thresholds: Sequence[float]) -> List[Dict[str, float]]:
    """
    Fraction of coefficients with |c| < eps for each threshold eps and each law.
    """
    if not isinstance(samples, dict):
        samples = {"sample": samples}
    rows = []
    for law_name, values in samples.items():
        v = np.abs(np.asarray(values, dtype=float)).ravel()
        if v.size == 0:
            raise ValueError(f"samples for '{law_name}' are empty")
        for eps in thresholds:
            rows.append({
                "law": law_name,
                "threshold": float(eps),
                "fraction": float(np.mean(v < eps)),
                "n": int(v.size)
            })
    return rows


def sobolev_norm_squared(basis: BasisSpec, coefficients, smoothness: float = 1.0) -> float:
    """
    sum_k (1 + |k|^2)^s c_k^2 with |k| the Fourier frequency, or 2^(j+1)
    for Haar level j.
    """
    c = np.asarray(coefficients, dtype=float)
    ks = range(1, c.size + 1)
    if basis.kind == "fourier_real":
        scale = np.array([fourier_index(k)[0] for k in ks], dtype=float)
    else:
        scale = np.array([2.0 ** (haar_index(k)[0] + 1) for k in ks])
    return float(np.sum((1.0 + scale ** 2) ** smoothness * c ** 2))
