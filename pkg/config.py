"""
Configuration file for the id-priors experiment toolkit
"""

import os
from typing import Dict, Any

class Config:
    """Configuration settings for priors, forward models, samplers and experiments"""

    # Scalar distribution numerics
    DISTRIBUTION_CONFIG = {
        "quad_limit": 200,
        "tail_trim_fraction": 0.05,
        "tail_fine_trim_fraction": 0.01,
        "tail_ratio_threshold": 2.0,
        "default_tail_beta": 0.5
    }

    # Product prior defaults
    PRIOR_CONFIG = {
        "family": "product",
        "basis": "haar_periodic",
        "max_terms": 64,
        "weights": "wavelet_sobolev",
        "sobolev_exponent": 3.0,
        "coefficient_law": "gpq",
        "p": 0.5,
        "q": 0.5,
        "rate": 1.0
    }

    # Compound Poisson / Gaussian process defaults
    LEVY_CONFIG = {
        "rate": 5.0,
        "jump_law": "normal",
        "bandwidth": 10.0,
        "gp_mean": 0.0,
        "grid_size_2d": 32,
        "jitter": 1e-10,
        "max_jitter": 1e-6,
        "max_grid_1d": 4096,
        "max_grid_2d": 64
    }

    # Forward model defaults
    FORWARD_CONFIG = {
        "model": "deconvolution",
        "grid_size": 256,
        "kernel_width": 0.03,
        "n_obs": 16,
        "obs_points": None,
        "obs_seed": 11,
        "n_sensing": 8,
        "sensing_seed": 7
    }

    NOISE_CONFIG = {
        "sigma": 0.05
    }

    # Posterior sampling
    MCMC_CONFIG = {
        "n_steps": 10000,
        "burn_in": 2000,
        "proposal_scale": 0.5,
        "adapt": True,
        "target_acceptance": 0.3,
        "thin": 10,
        "tempering": 1.0
    }

    # MAP estimation
    MAP_CONFIG = {
        "p": 0.5,
        "q": 0.5,
        "epsilon": 1e-3,
        "sigma": 0.01,
        "max_iterations": 500,
        "tolerance": 1e-8,
        "multi_start": 8,
        "weight_floor": 1e-10,
        "n_instances": 50,
        "n": 64,
        "m": 32,
        "sparsity": 5
    }

    # Distance estimation and experiment drivers
    METRICS_CONFIG = {
        "n_samples": 100000,
        "n_bootstrap": 1000,
        "min_ess": 50.0,
        "chunk_size": 4096,
        "keep_coefficients": 8,
        "deltas": [1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
        "truncations": [16, 32, 64, 128, 256]
    }

    # Output and concurrency
    OUTPUT_CONFIG = {
        "output_root": "runs",
        "workers": 1,
        "csv_format": "%.17g"
    }

    # Logging Configuration
    LOGGING_CONFIG = {
        "level": "INFO",
        "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    }

    @classmethod
    def get_config(cls) -> Dict[str, Any]:
        """Get all configuration as a dictionary"""
        return {
            "distribution_config": cls.DISTRIBUTION_CONFIG,
            "prior_config": cls.PRIOR_CONFIG,
            "levy_config": cls.LEVY_CONFIG,
            "forward_config": cls.FORWARD_CONFIG,
            "noise_config": cls.NOISE_CONFIG,
            "mcmc_config": cls.MCMC_CONFIG,
            "map_config": cls.MAP_CONFIG,
            "metrics_config": cls.METRICS_CONFIG,
            "output_config": cls.OUTPUT_CONFIG,
            "logging_config": cls.LOGGING_CONFIG
        }

# Environment-specific overrides
if os.getenv("ID_PRIORS_DEBUG"):
    Config.LOGGING_CONFIG["level"] = "DEBUG"

if os.getenv("ID_PRIORS_OUTPUT_ROOT"):
    Config.OUTPUT_CONFIG["output_root"] = os.getenv("ID_PRIORS_OUTPUT_ROOT")

if os.getenv("ID_PRIORS_WORKERS"):
    Config.OUTPUT_CONFIG["workers"] = int(os.getenv("ID_PRIORS_WORKERS"))
