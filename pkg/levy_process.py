"""
Levy Process Sample Paths
Compound Poisson paths on [0, 1], squared-exponential Gaussian processes,
their hybrid, the 2D level-set jump field, and path statistics
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy import linalg
from sklearn.gaussian_process.kernels import RBF

from config import Config
from distributions import RngLike, as_generator, draw_jumps, make_jump_law
from exceptions import DomainError, FactorizationError
from fields import GridField, GridField2D

logger = logging.getLogger(__name__)


@dataclass
class JumpPath:
    """
    Piecewise-constant cadlag path with u(0) = 0 and
    u(t) = sum of jump_sizes whose jump_times are <= t.
    """
    jump_times: np.ndarray
    jump_sizes: np.ndarray

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=float).ravel()
        self.jump_sizes = np.asarray(self.jump_sizes, dtype=float).ravel()
        if self.jump_times.size != self.jump_sizes.size:
            raise ValueError("jump_times and jump_sizes must have the same length")
        if self.jump_times.size:
            if np.any(self.jump_times <= 0) or np.any(self.jump_times > 1):
                raise ValueError("jump times must lie in (0, 1]")
            if np.any(np.diff(self.jump_times) <= 0):
                raise ValueError("jump times must be strictly increasing")

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def levels(self) -> np.ndarray:
        """Values taken by the path, starting with u(0) = 0"""
        return np.concatenate([[0.0], np.cumsum(self.jump_sizes)])

    def evaluate(self, t) -> np.ndarray:
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        return self.levels()[idx]

    @classmethod
    def empty(cls) -> "JumpPath":
        return cls(np.zeros(0), np.zeros(0))


def sample_cpp_path(rate: float, jump_law, rng: RngLike) -> JumpPath:
    """
    Compound Poisson path on [0, 1]: Poisson(rate) jump count, jump times as
    sorted uniforms on (0, 1], i.i.d. sizes from jump_law.
    """
    if not np.isfinite(rate) or rate < 0:
        raise DomainError(f"compound Poisson rate must be nonnegative, got {rate}")
    gen = as_generator(rng)
    n_jumps = int(gen.poisson(rate))
    # 1 - U maps [0, 1) onto (0, 1]
    times = np.sort(1.0 - gen.random(n_jumps))
    sizes = draw_jumps(jump_law, n_jumps, gen)
    return JumpPath(times, sizes)


def path_tv(path: JumpPath) -> float:
    return float(np.sum(np.abs(path.jump_sizes)))


def path_sup_norm(path: JumpPath) -> float:
    return float(np.max(np.abs(path.levels())))


def partition_variation(path: JumpPath, partition) -> float:
    """sum |u(t_k) - u(t_{k-1})| over a partition of [0, 1] (endpoints added)"""
    pts = np.unique(np.concatenate([[0.0], np.asarray(partition, dtype=float), [1.0]]))
    return float(np.sum(np.abs(np.diff(path.evaluate(pts)))))


def rasterize_path(path: JumpPath, n_g: int) -> GridField:
    """Grid values u(i / n_g)"""
    return GridField(path.evaluate(np.arange(n_g) / n_g))


@dataclass(frozen=True)
class GpSpec:
    """
    Mean-`mean` Gaussian process with kernel exp(-b |r - s|^2) on a uniform
    grid of n points per axis (dim 1 or 2).
    """
    bandwidth: float
    n: int
    dim: int = 1
    jitter: float = field(default_factory=lambda: Config.LEVY_CONFIG["jitter"])
    mean: float = 0.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.jitter <= 0:
            raise ValueError("jitter must be positive")
        limit = Config.LEVY_CONFIG["max_grid_1d"] if self.dim == 1 else Config.LEVY_CONFIG["max_grid_2d"]
        if not 1 <= self.n <= limit:
            raise ValueError(f"grid size n={self.n} outside 1..{limit} for dim={self.dim}")

    def points(self) -> np.ndarray:
        axis = np.arange(self.n) / self.n
        if self.dim == 1:
            return axis[:, None]
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def covariance(self) -> np.ndarray:
        """Kernel matrix without jitter; exp(-b d^2) = RBF with length scale 1/sqrt(2b)"""
        kernel = RBF(length_scale=1.0 / np.sqrt(2.0 * self.bandwidth))
        return kernel(self.points())


@lru_cache(maxsize=16)
def gp_factor(spec: GpSpec) -> np.ndarray:
    """
    Lower Cholesky factor of K + jitter I. Jitter escalates by x10 up to the
    configured maximum before giving up. Cached per spec, read-only.
    """
    cov = spec.covariance()
    jitter = spec.jitter
    max_jitter = Config.LEVY_CONFIG["max_jitter"]
    identity = np.eye(cov.shape[0])
    while True:
        try:
            factor = linalg.cholesky(cov + jitter * identity, lower=True)
            factor.setflags(write=False)
            if jitter > spec.jitter:
                logger.info(f"GP factorization succeeded after jitter escalation to {jitter:.1e}")
            return factor
        except linalg.LinAlgError:
            if jitter * 10 > max_jitter * (1 + 1e-9):
                raise FactorizationError(
                    f"covariance factorization failed with jitter up to {jitter:.1e}",
                    {"bandwidth": spec.bandwidth, "n": spec.n, "dim": spec.dim}
                )
            logger.warning(f"Cholesky failed at jitter {jitter:.1e}; escalating")
            jitter *= 10


def sample_gp_values(spec: GpSpec, n_draws: int, rng: RngLike) -> np.ndarray:
    """n_draws flattened GP draws, shape (n_draws, n^dim)"""
    gen = as_generator(rng)
    factor = gp_factor(spec)
    z = gen.standard_normal((factor.shape[0], n_draws))
    return (factor @ z).T + spec.mean


def sample_gp(spec: GpSpec, rng: RngLike) -> GridField:
    if spec.dim != 1:
        raise ValueError("sample_gp draws 1D fields; use sample_gp_2d")
    return GridField(sample_gp_values(spec, 1, rng)[0])


def sample_gp_2d(spec: GpSpec, rng: RngLike) -> GridField2D:
    if spec.dim != 2:
        raise ValueError("sample_gp_2d needs a GpSpec with dim=2")
    return GridField2D(sample_gp_values(spec, 1, rng)[0].reshape(spec.n, spec.n))


def sample_hybrid_components(gp: GpSpec, rate: float, jump_law,
                             rng: RngLike) -> Tuple[GridField, GridField, JumpPath]:
    """(hybrid field, smooth part, jump path) on the GP grid; parts independent"""
    gen = as_generator(rng)
    smooth = sample_gp(gp, gen)
    path = sample_cpp_path(rate, jump_law, gen)
    jumps = rasterize_path(path, gp.n)
    return GridField(smooth.values + jumps.values), smooth, path


def sample_hybrid_path(gp: GpSpec, rate: float, jump_law, rng: RngLike) -> GridField:
    """v = g + u with g a GP draw and u a compound Poisson path, on a shared grid"""
    return sample_hybrid_components(gp, rate, jump_law, rng)[0]


@dataclass
class BvFieldSample:
    field: GridField2D
    smooth: GridField2D
    arrivals: np.ndarray
    jump_sizes: np.ndarray
    levels_attained: int

    @property
    def n_arrivals(self) -> int:
        return int(self.arrivals.size)


def _arrival_stream(rate: float, horizon: float, gen: np.random.Generator) -> np.ndarray:
    """Poisson(rate) arrival times in (0, horizon] from exponential gaps"""
    if rate == 0 or horizon <= 0:
        return np.zeros(0)
    arrivals: List[float] = []
    t = 0.0
    batch = max(8, int(2 * rate * horizon) + 8)
    while True:
        for gap in gen.exponential(1.0 / rate, size=batch):
            t += gap
            if t > horizon:
                return np.asarray(arrivals)
            arrivals.append(t)


def sample_bv_field_components(gp: GpSpec, rate: float, jump_law, rng: RngLike) -> BvFieldSample:
    """
    u(x) = S_{tau(g+(x))}: one arrival stream on [0, max g+], cumulative jump
    sums S_j, so u only jumps across the level sets {g = a_i}.
    """
    if rate < 0:
        raise DomainError(f"compound Poisson rate must be nonnegative, got {rate}")
    if gp.dim != 2:
        raise ValueError("sample_bv_field_2d needs a GpSpec with dim=2")
    gen = as_generator(rng)
    smooth = sample_gp_2d(gp, gen)
    g_plus = np.maximum(smooth.values, 0.0)
    arrivals = _arrival_stream(rate, float(g_plus.max()), gen)
    sizes = draw_jumps(jump_law, arrivals.size, gen)
    partial_sums = np.concatenate([[0.0], np.cumsum(sizes)])
    counts = np.searchsorted(arrivals, g_plus, side="right")
    values = partial_sums[counts]
    return BvFieldSample(
        field=GridField2D(values),
        smooth=smooth,
        arrivals=arrivals,
        jump_sizes=sizes,
        levels_attained=int(np.unique(counts).size)
    )


def sample_bv_field_2d(gp: GpSpec, rate: float, jump_law, rng: RngLike) -> GridField2D:
    return sample_bv_field_components(gp, rate, jump_law, rng).field


def discrete_variation(field) -> float:
    """
    1D: sum |u_{i+1} - u_i|.  2D: sum h (|forward x diff| + |forward y diff|).
    """
    if isinstance(field, GridField):
        return float(np.sum(np.abs(np.diff(field.values))))
    if isinstance(field, GridField2D):
        v = field.values
        return float(field.spacing * (np.sum(np.abs(np.diff(v, axis=0))) + np.sum(np.abs(np.diff(v, axis=1)))))
    raise TypeError(f"Expected GridField or GridField2D, got {type(field).__name__}")


# Edges of a cell with corners c00=(i,j), c10=(i+1,j), c11=(i+1,j+1), c01=(i,j+1):
# e0: c00-c10, e1: c10-c11, e2: c01-c11, e3: c00-c01
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
# Saddle resolution: corner isolated from the centre -> pair of edges around it
_CORNER_EDGES = {0: (0, 3), 1: (0, 1), 2: (1, 2), 3: (2, 3)}


def level_set_perimeter_estimate(field: GridField2D, level: float = 0.0) -> float:
    """
    Total length of {g = level} by marching squares with linear interpolation
    along cell edges. Saddle cells are resolved with the cell-centre average.
    """
    v = field.values
    h = field.spacing
    n = field.n
    if n < 2:
        return 0.0
    ii, jj = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    corners_val = np.stack([v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]], axis=-1)
    corners_xy = np.stack([
        np.stack([ii, jj], -1), np.stack([ii + 1, jj], -1),
        np.stack([ii + 1, jj + 1], -1), np.stack([ii, jj + 1], -1)
    ], axis=-2).astype(float) * h
    inside = corners_val > level
    n_inside = inside.sum(axis=-1)
    active = (n_inside > 0) & (n_inside < 4)
    if not np.any(active):
        return 0.0

    vals = corners_val[active]
    xy = corners_xy[active]
    ins = inside[active]
    points = np.full(vals.shape[:1] + (4, 2), np.nan)
    crossed = np.zeros(vals.shape[:1] + (4,), dtype=bool)
    for e, (a, b) in enumerate(_EDGE_CORNERS):
        cross = ins[:, a] != ins[:, b]
        va, vb = vals[cross, a], vals[cross, b]
        frac = (level - va) / (vb - va)
        points[cross, e] = xy[cross, a] + frac[:, None] * (xy[cross, b] - xy[cross, a])
        crossed[:, e] = cross

    total = 0.0
    n_cross = crossed.sum(axis=1)
    simple = n_cross == 2
    if np.any(simple):
        order = np.argsort(~crossed[simple], axis=1, kind="stable")[:, :2]
        p = np.take_along_axis(points[simple], order[:, :, None], axis=1)
        total += float(np.sum(np.linalg.norm(p[:, 0] - p[:, 1], axis=1)))
    for idx in np.flatnonzero(n_cross == 4):
        centre_inside = vals[idx].mean() > level
        for corner in range(4):
            if ins[idx, corner] != centre_inside:
                e_a, e_b = _CORNER_EDGES[corner]
                total += float(np.linalg.norm(points[idx, e_a] - points[idx, e_b]))
    return total


def bv_field_perimeter(sample: BvFieldSample) -> Dict[str, Any]:
    """Level-set lengths of the smooth field at every arrival; a finiteness report for the jump set"""
    lengths = [level_set_perimeter_estimate(sample.smooth, float(a)) for a in sample.arrivals]
    return {
        "n_arrivals": sample.n_arrivals,
        "levels_attained": sample.levels_attained,
        "perimeters": lengths,
        "total_jump_set_length": float(np.sum(lengths)) if lengths else 0.0,
        "weighted_variation": float(np.sum(np.abs(sample.jump_sizes) * np.asarray(lengths))) if lengths else 0.0
    }


@dataclass(frozen=True)
class CompoundPoissonPathPrior:
    """
    Law of periodic compound Poisson paths on the circle, rasterized to
    n_g grid points. Jump law given by name (see distributions.make_jump_law).
    """
    rate: float
    jump_law_name: str = "normal"
    jump_scale: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"rate must be nonnegative, got {self.rate}")

    def jump_law(self):
        return make_jump_law(self.jump_law_name, self.jump_scale)

    def sample_fields(self, n_draws: int, n_g: int, rng: RngLike) -> np.ndarray:
        gen = as_generator(rng)
        law = self.jump_law()
        return np.vstack([
            rasterize_path(sample_cpp_path(self.rate, law, gen), n_g).values for _ in range(n_draws)
        ])


# Example usage
if __name__ == "__main__":
    from distributions import RngState, standard_normal
    logging.basicConfig(level=logging.INFO)
    path = sample_cpp_path(5.0, standard_normal(), RngState(3))
    print(f"{path.n_jumps} jumps, TV={path_tv(path):.4f}, sup={path_sup_norm(path):.4f}")
    bv = sample_bv_field_components(GpSpec(10.0, 32, dim=2), 2.0, standard_normal(), RngState(4))
    print(bv_field_perimeter(bv))
