"""
Posterior Distance Metrics
Self-normalized importance sampling estimators of Hellinger and total
variation distances between posteriors sharing a prior, and the stability,
consistency and expectation-gap experiment drivers built on them
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import special, stats

from bayes_core import (
    Potential, PosteriorProblem, PriorEnsemble, data_potential, projected_data_potential
)
from config import Config
from distributions import RngLike, RngState, as_generator
from exceptions import UnreliableEstimateError

logger = logging.getLogger(__name__)


@dataclass
class DistanceReport:
    hellinger: float
    hellinger_se: float
    tv: float
    tv_se: float
    n_samples: int
    n_bootstrap: int
    ess_a: float
    ess_b: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _normalized_weights(potentials: np.ndarray) -> np.ndarray:
    """exp(-Phi) / mean(exp(-Phi)), computed in log space"""
    log_w = -np.asarray(potentials, dtype=float)
    return np.exp(log_w - special.logsumexp(log_w) + np.log(log_w.size))


def _ess(weights: np.ndarray) -> float:
    return float(weights.sum() ** 2 / np.sum(weights ** 2))


def _distances(phi_a: np.ndarray, phi_b: np.ndarray):
    a, b = _normalized_weights(phi_a), _normalized_weights(phi_b)
    tv = 0.5 * np.mean(np.abs(a - b))
    hellinger = np.sqrt(0.5 * np.mean((np.sqrt(a) - np.sqrt(b)) ** 2))
    return float(hellinger), float(tv), a, b


def distance_from_potentials(phi_a, phi_b, n_bootstrap: Optional[int] = None,
                             rng: Optional[RngLike] = None,
                             min_ess: Optional[float] = None) -> DistanceReport:
    """
    Hellinger and TV distances between exp(-phi_a) d(prior) and
    exp(-phi_b) d(prior), both evaluated on the same prior draws.

    Args:
        phi_a: Potentials of posterior A on the shared draws
        phi_b: Potentials of posterior B on the same draws
        n_bootstrap: Bootstrap resamples for the standard errors
        rng: Random stream for the bootstrap
        min_ess: Smallest acceptable effective sample size per weight set

    Returns:
        DistanceReport
    """
    phi_a = np.asarray(phi_a, dtype=float)
    phi_b = np.asarray(phi_b, dtype=float)
    if phi_a.shape != phi_b.shape or phi_a.ndim != 1:
        raise ValueError("potentials must be 1D arrays over the same draws")
    n_bootstrap = Config.METRICS_CONFIG["n_bootstrap"] if n_bootstrap is None else int(n_bootstrap)
    min_ess = Config.METRICS_CONFIG["min_ess"] if min_ess is None else float(min_ess)

    hellinger, tv, a, b = _distances(phi_a, phi_b)
    ess_a, ess_b = _ess(a), _ess(b)
    if min(ess_a, ess_b) < min_ess:
        raise UnreliableEstimateError(
            f"importance weights degenerate (ESS {ess_a:.1f} / {ess_b:.1f}, need {min_ess:.0f})",
            {"ess_a": ess_a, "ess_b": ess_b, "n_samples": int(phi_a.size), "min_ess": min_ess}
        )

    h_se = tv_se = 0.0
    if n_bootstrap > 1:
        gen = as_generator(rng if rng is not None else RngState(0))
        boot_h = np.empty(n_bootstrap)
        boot_tv = np.empty(n_bootstrap)
        for i in range(n_bootstrap):
            idx = gen.integers(0, phi_a.size, size=phi_a.size)
            boot_h[i], boot_tv[i], _, _ = _distances(phi_a[idx], phi_b[idx])
        h_se = float(np.std(boot_h, ddof=1))
        tv_se = float(np.std(boot_tv, ddof=1))

    return DistanceReport(hellinger, h_se, tv, tv_se, int(phi_a.size), n_bootstrap, ess_a, ess_b)


def distance_estimate(problem: PosteriorProblem, potential_a: Potential, potential_b: Potential,
                      n_samples: int, rng: RngState, ensemble: Optional[PriorEnsemble] = None,
                      n_bootstrap: Optional[int] = None, workers: int = 1) -> DistanceReport:
    """Distance between the posteriors of two potentials over common prior draws"""
    if ensemble is None:
        ensemble = PriorEnsemble(problem, n_samples, rng, workers=workers)
    return distance_from_potentials(potential_a(ensemble), potential_b(ensemble),
                                    n_bootstrap, rng.substream(1))


def hellinger_tv_bounds(report: DistanceReport, n_se: float = 4.0) -> Dict[str, bool]:
    """
    d_H^2 <= d_TV <= sqrt(2) d_H, each within n_se combined standard errors
    (d_H^2 = 1/2 int (sqrt(a) - sqrt(b))^2, so the upper bound implies
    d_TV <= sqrt(8) d_H as well).
    """
    h, tv = report.hellinger, report.tv
    slack_lower = n_se * (2.0 * h * report.hellinger_se + report.tv_se)
    slack_upper = n_se * (report.tv_se + np.sqrt(2.0) * report.hellinger_se)
    return {
        "lower": bool(h ** 2 <= tv + slack_lower),
        "upper": bool(tv <= np.sqrt(2.0) * h + slack_upper),
        "upper_sqrt8": bool(tv <= np.sqrt(8.0) * h + slack_upper)
    }


def _loglog_slope(x: np.ndarray, d: np.ndarray, se: np.ndarray) -> Optional[float]:
    """Weighted least-squares slope of log d against log x"""
    keep = (x > 0) & (d > 0)
    if keep.sum() < 2:
        return None
    rel = se[keep] / d[keep]
    weights = 1.0 / rel if np.all(rel > 0) else None
    return float(np.polyfit(np.log(x[keep]), np.log(d[keep]), 1, w=weights)[0])


def _row(label: str, value: float, report: DistanceReport) -> Dict[str, float]:
    return {
        label: value,
        "d_H": report.hellinger,
        "d_H_se": report.hellinger_se,
        "d_TV": report.tv,
        "d_TV_se": report.tv_se,
        "ess_A": report.ess_a,
        "ess_B": report.ess_b
    }


def stability_experiment(problem: PosteriorProblem, direction, deltas: Sequence[float],
                         n_samples: int, rng: RngState, ensemble: Optional[PriorEnsemble] = None,
                         n_bootstrap: Optional[int] = None, workers: int = 1,
                         min_ess: Optional[float] = None) -> Dict[str, Any]:
    """
    Distances between mu^y and mu^{y + delta e} for each delta on one set of
    prior draws, and the log-log slope of d_H against ||y - y'|| = delta.
    """
    e = np.asarray(direction, dtype=float)
    if e.size != problem.data.size:
        raise ValueError(f"direction has length {e.size}, data has {problem.data.size}")
    e = e / np.linalg.norm(e)
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas < 0):
        raise ValueError("deltas must be nonnegative")
    positive = deltas[deltas > 0]
    if positive.size < 2 or np.log10(positive.max() / positive.min()) < 1.5:
        raise ValueError("positive deltas must cover at least 1.5 decades")

    if ensemble is None:
        ensemble = PriorEnsemble(problem, n_samples, rng, workers=workers)
    base = data_potential(problem)(ensemble)
    rows: List[Dict[str, float]] = []
    for i, delta in enumerate(deltas):
        perturbed = data_potential(problem, problem.data + delta * e)(ensemble)
        report = distance_from_potentials(base, perturbed, n_bootstrap, rng.substream(10 + i), min_ess)
        rows.append(_row("delta", float(delta), report))
        logger.info(f"delta={delta:.3g}: d_H={report.hellinger:.4g} +- {report.hellinger_se:.2g}")

    d_h = np.array([r["d_H"] for r in rows])
    d_tv = np.array([r["d_TV"] for r in rows])
    return {
        "rows": rows,
        "slope": _loglog_slope(deltas, d_h, np.array([r["d_H_se"] for r in rows])),
        "slope_tv": _loglog_slope(deltas, d_tv, np.array([r["d_TV_se"] for r in rows])),
        "n_samples": ensemble.n_samples
    }


def consistency_experiment(problem: PosteriorProblem, truncations: Sequence[int], n_samples: int,
                           rng: RngState, ensemble: Optional[PriorEnsemble] = None,
                           n_bootstrap: Optional[int] = None, workers: int = 1,
                           min_ess: Optional[float] = None) -> Dict[str, Any]:
    """
    d_H(mu^y, mu^y_N) for each N, where mu^y_N uses the projected potential
    Phi(P_N u; y), with the weight tail sum_{k > N} gamma_k^2 for comparison.
    """
    if not problem.is_product:
        raise ValueError("consistency experiments need a product prior")
    truncations = [int(n) for n in truncations]
    if any(b <= a for a, b in zip(truncations, truncations[1:])):
        raise ValueError("truncations must be strictly increasing")
    if truncations and truncations[-1] > problem.truncation:
        raise ValueError(f"largest truncation {truncations[-1]} exceeds the prior truncation {problem.truncation}")

    if ensemble is None:
        ensemble = PriorEnsemble(problem, n_samples, rng, truncations=truncations, workers=workers)
    full = data_potential(problem)(ensemble)
    rows = []
    for i, n_terms in enumerate(truncations):
        projected = projected_data_potential(problem, n_terms)(ensemble)
        report = distance_from_potentials(full, projected, n_bootstrap, rng.substream(10 + i), min_ess)
        row = _row("N", n_terms, report)
        row["tail_energy"] = problem.prior.weights.tail_energy(n_terms)
        rows.append(row)
        logger.info(f"N={n_terms}: d_H={report.hellinger:.4g} +- {report.hellinger_se:.2g}")

    d_h = np.array([r["d_H"] for r in rows])
    se = np.array([r["d_H_se"] for r in rows])
    monotone = bool(np.all(d_h[1:] <= d_h[:-1] + 2.0 * (se[1:] + se[:-1])))
    tails = np.array([r["tail_energy"] for r in rows])
    return {
        "rows": rows,
        "monotone": monotone,
        "decay_ratio": float(d_h[-1] / d_h[0]) if rows and d_h[0] > 0 else None,
        "slope_vs_tail": _loglog_slope(tails, d_h, se),
        "n_samples": ensemble.n_samples
    }


def expectation_gap_check(problem_a: PosteriorProblem, problem_b: PosteriorProblem, n_samples: int,
                          rng: RngState, ensemble: Optional[PriorEnsemble] = None,
                          n_bootstrap: Optional[int] = None, n_se: float = 4.0) -> Dict[str, Any]:
    """
    |E_A h - E_B h| <= 2 (E_A h^2 + E_B h^2)^{1/2} d_H with h the squared
    grid norm, all expectations by self-normalized importance sampling.
    """
    if problem_a.prior is not problem_b.prior or problem_a.forward is not problem_b.forward:
        raise ValueError("expectation gap check needs problems sharing prior and forward model")
    if ensemble is None:
        ensemble = PriorEnsemble(problem_a, n_samples, rng)
    phi_a = data_potential(problem_a)(ensemble)
    phi_b = data_potential(problem_b)(ensemble)
    n_bootstrap = Config.METRICS_CONFIG["n_bootstrap"] if n_bootstrap is None else int(n_bootstrap)
    h = ensemble.sq_norms

    def sides(idx: np.ndarray):
        a = _normalized_weights(phi_a[idx])
        b = _normalized_weights(phi_b[idx])
        hh = h[idx]
        gap = abs(np.mean(a * hh) - np.mean(b * hh))
        d_h = np.sqrt(0.5 * np.mean((np.sqrt(a) - np.sqrt(b)) ** 2))
        bound = 2.0 * np.sqrt(np.mean(a * hh ** 2) + np.mean(b * hh ** 2)) * d_h
        return gap, bound

    all_idx = np.arange(h.size)
    gap, bound = sides(all_idx)
    gen = as_generator(rng.substream(1))
    boots = np.array([sides(gen.integers(0, h.size, size=h.size)) for _ in range(n_bootstrap)]) \
        if n_bootstrap > 1 else np.zeros((2, 2))
    gap_se, bound_se = np.std(boots, axis=0, ddof=1)
    return {
        "gap": float(gap),
        "bound": float(bound),
        "gap_se": float(gap_se),
        "bound_se": float(bound_se),
        "holds": bool(gap <= bound + n_se * np.hypot(gap_se, bound_se)),
        "n_samples": int(h.size)
    }


def conjugate_hellinger(delta_y: float, sigma: float, prior_var: float = 1.0) -> float:
    """Closed-form d_H between the one-mode conjugate posteriors for data y and y + delta_y"""
    var = 1.0 / (1.0 / prior_var + 1.0 / sigma ** 2)
    shift = var * delta_y / sigma ** 2
    return float(np.sqrt(1.0 - np.exp(-shift ** 2 / (8.0 * var))))


def conjugate_tv(delta_y: float, sigma: float, prior_var: float = 1.0) -> float:
    var = 1.0 / (1.0 / prior_var + 1.0 / sigma ** 2)
    shift = var * abs(delta_y) / sigma ** 2
    return float(2.0 * stats.norm.cdf(shift / (2.0 * np.sqrt(var))) - 1.0)
