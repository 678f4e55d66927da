"""
Forward Models
Periodic deconvolution with point sampling and quadratic measurements of
point values, on uniform grids of the unit circle
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy import linalg

from config import Config
from distributions import RngLike, RngState, as_generator
from fields import GridField

logger = logging.getLogger(__name__)

FieldLike = Union[GridField, np.ndarray]


def _values(u: FieldLike) -> np.ndarray:
    return u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).ravel()
    if pts.size == 0:
        raise ValueError("at least one observation point is required")
    if np.any(pts < 0) or np.any(pts >= 1):
        raise ValueError("observation points must lie in [0, 1)")
    if np.unique(pts).size != pts.size:
        raise ValueError("observation points must be distinct")
    return pts


def gaussian_bump_kernel(n_g: int, width: float = 0.03) -> GridField:
    """
    Periodic Gaussian bump sum_{l=-3..3} exp(-(t+l)^2 / (2 w^2)), scaled to
    unit integral under the grid quadrature.
    """
    if width <= 0:
        raise ValueError(f"kernel width must be positive, got {width}")
    t = np.arange(n_g) / n_g
    # nearest image of t around 0
    t = np.where(t > 0.5, t - 1.0, t)
    phi = sum(np.exp(-(t + shift) ** 2 / (2.0 * width ** 2)) for shift in range(-3, 4))
    return GridField(phi / np.mean(phi), metadata={"kind": "gaussian_bump", "width": width})


def circular_convolve(u: FieldLike, kernel: FieldLike) -> GridField:
    """(phi * u)(t_i) = (1/n_g) sum_j phi(t_i - t_j mod 1) u(t_j)"""
    u_vals, phi = _values(u), _values(kernel)
    if u_vals.shape != phi.shape:
        raise ValueError(f"grid size mismatch: field {u_vals.shape} vs kernel {phi.shape}")
    return GridField(linalg.circulant(phi) @ u_vals / phi.size)


def sample_points(u: FieldLike, points) -> np.ndarray:
    """Periodic linear interpolation of the grid field at each point"""
    vals = _values(u)
    grid = np.arange(vals.size) / vals.size
    return np.interp(np.asarray(points, dtype=float), grid, vals, period=1.0)


def interpolation_matrix(points, n_g: int) -> np.ndarray:
    """Matrix S with S @ u == sample_points(u, points)"""
    x = np.asarray(points, dtype=float) * n_g
    left = np.floor(x).astype(int)
    w = x - left
    rows = np.arange(x.size)
    mat = np.zeros((x.size, n_g))
    np.add.at(mat, (rows, left % n_g), 1.0 - w)
    np.add.at(mat, (rows, (left + 1) % n_g), w)
    return mat


def observation_points(m: int, seed: Optional[int] = None) -> np.ndarray:
    """m equispaced points j/m, or m sorted uniform points from a seed"""
    if m < 1:
        raise ValueError(f"number of observation points must be positive, got {m}")
    if seed is None:
        return np.arange(m) / m
    gen = np.random.default_rng(seed)
    while True:
        pts = np.sort(gen.random(m))
        if np.unique(pts).size == m:
            return pts


def default_sensing_vectors(m: int, n: int, rng: RngLike) -> np.ndarray:
    """i.i.d. N(0, 1) entries scaled by 1/sqrt(n), shape (m, n)"""
    gen = as_generator(rng)
    return gen.standard_normal((m, n)) / np.sqrt(n)


@dataclass(frozen=True, eq=False)
class DeconvModel:
    """G(u) = S(phi * u): periodic convolution followed by point sampling"""
    kernel: GridField
    obs_points: np.ndarray

    kind = "deconvolution"
    growth_power = 1

    def __post_init__(self):
        object.__setattr__(self, "obs_points", _check_points(self.obs_points))
        if self.kernel.n_g < 1:
            raise ValueError("kernel grid is empty")
        object.__setattr__(self, "_matrix", deconv_matrix(self))

    @property
    def n_g(self) -> int:
        return self.kernel.n_g

    @property
    def n_obs(self) -> int:
        return int(self.obs_points.size)

    def matrix(self) -> np.ndarray:
        return self._matrix

    def forward(self, u: FieldLike) -> np.ndarray:
        return deconv_forward(self, u)

    def forward_batch(self, fields: np.ndarray) -> np.ndarray:
        """Rows of fields (n_draws x n_g) to rows of predictions (n_draws x m)"""
        return np.atleast_2d(fields) @ self.matrix().T


def deconv_matrix(model: DeconvModel) -> np.ndarray:
    """Explicit m x n_g matrix of the deconvolution forward map"""
    conv = linalg.circulant(model.kernel.values) / model.n_g
    return interpolation_matrix(model.obs_points, model.n_g) @ conv


def deconv_forward(model: DeconvModel, u: FieldLike) -> np.ndarray:
    vals = _values(u)
    if vals.size != model.n_g:
        raise ValueError(f"field grid size {vals.size} does not match kernel grid size {model.n_g}")
    return sample_points(circular_convolve(vals, model.kernel), model.obs_points)


@dataclass(frozen=True, eq=False)
class QuadModel:
    """G(u)_j = (z_j . S(u))^2 with S the point-sampling operator"""
    sensing_vectors: np.ndarray
    obs_points: np.ndarray

    kind = "quadratic"
    growth_power = 2

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.sensing_vectors, dtype=float))
        pts = _check_points(self.obs_points)
        if z.shape[1] != pts.size:
            raise ValueError(
                f"sensing vector length {z.shape[1]} does not match the {pts.size} observation points"
            )
        object.__setattr__(self, "sensing_vectors", z)
        object.__setattr__(self, "obs_points", pts)

    @property
    def n_obs(self) -> int:
        return int(self.sensing_vectors.shape[0])

    def forward(self, u: FieldLike) -> np.ndarray:
        return quad_forward(self, u)

    def forward_batch(self, fields: np.ndarray) -> np.ndarray:
        fields = np.atleast_2d(fields)
        sampled = fields @ interpolation_matrix(self.obs_points, fields.shape[1]).T
        return (sampled @ self.sensing_vectors.T) ** 2


def quad_forward(model: QuadModel, u: FieldLike) -> np.ndarray:
    return (model.sensing_vectors @ sample_points(u, model.obs_points)) ** 2


ForwardModel = Union[DeconvModel, QuadModel]


def lipschitz_diagnostic(model: ForwardModel, radius: float, n_pairs: int, rng: RngLike,
                         n_g: Optional[int] = None) -> Dict[str, Any]:
    """
    Empirical Lipschitz and growth constants of a forward model on the ball
    of grid-L2 radius `radius`.

    Args:
        model: DeconvModel or QuadModel
        radius: Ball radius r > 0
        n_pairs: Number of random pairs (u1, u2)
        rng: Random stream
        n_g: Grid size (taken from the kernel for deconvolution models)

    Returns:
        Report with max ||G(u1)-G(u2)|| / ||u1-u2||, max ||G(u)|| / f(||u||),
        the range of sampled norms
        and, for linear models, the operator-norm bound sqrt(n_g) * sigma_max(A)
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    gen = as_generator(rng)
    if isinstance(model, DeconvModel):
        n_g = model.n_g
    elif n_g is None:
        n_g = Config.FORWARD_CONFIG["grid_size"]

    def draw_in_ball(count: int) -> np.ndarray:
        directions = gen.standard_normal((count, n_g))
        norms = np.sqrt(np.mean(directions ** 2, axis=1))
        # log-uniform radii on [r/10, r] keep ||u|| away from zero
        scales = radius * 10.0 ** (-gen.random(count))
        return directions * (scales / norms)[:, None]

    u1, u2 = draw_in_ball(n_pairs), draw_in_ball(n_pairs)
    g1, g2 = model.forward_batch(u1), model.forward_batch(u2)

    diff_norm = np.sqrt(np.mean((u1 - u2) ** 2, axis=1))
    lipschitz = np.linalg.norm(g1 - g2, axis=1) / diff_norm
    u_norm = np.sqrt(np.mean(u1 ** 2, axis=1))
    all_norms = np.concatenate([u_norm, np.sqrt(np.mean(u2 ** 2, axis=1))])
    growth = np.linalg.norm(g1, axis=1) / u_norm ** model.growth_power

    report = {
        "model": model.kind,
        "radius": float(radius),
        "n_pairs": int(n_pairs),
        "max_lipschitz_ratio": float(np.max(lipschitz)),
        "max_growth_ratio": float(np.max(growth)),
        "growth_power": model.growth_power,
        "min_norm": float(all_norms.min()),
        "max_norm": float(all_norms.max()),
        "bounded": bool(np.all(np.isfinite(lipschitz)) and np.all(np.isfinite(growth)))
    }
    if isinstance(model, DeconvModel):
        report["operator_norm_bound"] = float(np.sqrt(n_g) * np.linalg.norm(model.matrix(), 2))
    logger.debug(f"Lipschitz diagnostic: {report}")
    return report


def build_forward_model(section: Dict[str, Any], n_g: int) -> ForwardModel:
    """Forward model from a resolved `forward` config section"""
    if section.get("obs_points") is not None:
        points = np.asarray(section["obs_points"], dtype=float)
    else:
        points = observation_points(section["n_obs"], section.get("obs_seed"))
    if section["model"] == "deconvolution":
        return DeconvModel(gaussian_bump_kernel(n_g, section["kernel_width"]), points)
    if section["model"] == "quadratic":
        z = default_sensing_vectors(section["n_sensing"], points.size, RngState(section["sensing_seed"]))
        return QuadModel(z, points)
    raise ValueError(f"Unknown forward model '{section['model']}'")
