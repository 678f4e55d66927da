"""
Experiment configuration validation
Schema checks for experiment JSON files, merged over the Config defaults
"""

import copy
import json
import logging
import re
from typing import Any, Callable, Dict, List, Optional, Tuple

from config import Config
from product_prior import BASIS_KINDS, WEIGHT_RULES

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "sample_prior", "deconv_gpq", "deconv_bv", "quadratic",
    "stability_suite", "consistency_suite", "map_bench"
)
PRIOR_FAMILIES = ("product", "path", "hybrid", "bv2d")
COEFFICIENT_LAWS = ("gpq", "compound_poisson_laplace")
JUMP_LAWS = ("normal", "laplace", "point_mass", "cauchy", "student_t")
FORWARD_MODELS = ("deconvolution", "quadratic")
REQUIRED_FIELDS = ("experiment", "seed")

Check = Callable[[Any], Optional[str]]


def _number(lower: Optional[float] = None, upper: Optional[float] = None,
            lower_open: bool = False, upper_open: bool = False, integer: bool = False) -> Check:
    def check(value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return f"must be a number, got {type(value).__name__}"
        if integer and int(value) != value:
            return f"must be an integer, got {value}"
        if lower is not None and (value <= lower if lower_open else value < lower):
            return f"must be {'>' if lower_open else '>='} {lower}, got {value}"
        if upper is not None and (value >= upper if upper_open else value > upper):
            return f"must be {'<' if upper_open else '<='} {upper}, got {value}"
        return None
    return check


def _choice(options) -> Check:
    def check(value):
        if value not in options:
            return f"must be one of {list(options)}, got {value!r}"
        return None
    return check


def _boolean(value):
    return None if isinstance(value, bool) else f"must be true or false, got {value!r}"


def _string(value):
    return None if isinstance(value, str) else f"must be a string, got {type(value).__name__}"


def _optional(check: Check) -> Check:
    def wrapped(value):
        return None if value is None else check(value)
    return wrapped


def _number_list(element: Check, increasing: bool = False) -> Check:
    def check(value):
        if not isinstance(value, list):
            return f"must be a list, got {type(value).__name__}"
        for item in value:
            problem = element(item)
            if problem:
                return f"entries {problem}"
        if increasing and any(b <= a for a, b in zip(value, value[1:])):
            return "must be strictly increasing"
        return None
    return check


SCHEMA: Dict[str, Dict[str, Check]] = {
    "prior": {
        "family": _choice(PRIOR_FAMILIES),
        "basis": _choice(BASIS_KINDS),
        "max_terms": _number(1, integer=True),
        "weights": _choice(WEIGHT_RULES),
        "sobolev_exponent": _number(0.5, lower_open=True),
        "coefficient_law": _choice(COEFFICIENT_LAWS),
        "p": _number(0, lower_open=True),
        "q": _number(0, lower_open=True),
        "rate": _number(0),
        "truncation": _optional(_number(0, integer=True))
    },
    "levy": {
        "rate": _number(0),
        "jump_law": _choice(JUMP_LAWS),
        "jump_scale": _number(0, lower_open=True),
        "bandwidth": _number(0, lower_open=True),
        "gp_mean": _number(),
        "grid_size_2d": _number(2, Config.LEVY_CONFIG["max_grid_2d"], integer=True)
    },
    "forward": {
        "model": _choice(FORWARD_MODELS),
        "kernel_width": _number(0, lower_open=True),
        "n_obs": _number(1, integer=True),
        "obs_points": _optional(_number_list(_number(0, 1, upper_open=True))),
        "obs_seed": _optional(_number(0, integer=True)),
        "n_sensing": _number(1, integer=True),
        "sensing_seed": _number(0, integer=True)
    },
    "noise": {
        "sigma": _number(0)
    },
    "data": {
        "values": _optional(_number_list(_number())),
        "path": _optional(_string)
    },
    "truth": {
        "kind": _choice(("prior_draw", "coefficients", "piecewise_constant")),
        "coefficients": _optional(_number_list(_number())),
        "jump_times": _optional(_number_list(_number(0, 1, lower_open=True), increasing=True)),
        "jump_sizes": _optional(_number_list(_number()))
    },
    "mcmc": {
        "n_steps": _number(1, integer=True),
        "burn_in": _number(0, integer=True),
        "proposal_scale": _number(0, lower_open=True),
        "adapt": _boolean,
        "target_acceptance": _number(0, 1, lower_open=True, upper_open=True),
        "thin": _number(1, integer=True),
        "tempering": _number(0)
    },
    "map": {
        "p": _number(0, 2, lower_open=True),
        "q": _number(0, 1, lower_open=True),
        "epsilon": _number(0, lower_open=True),
        "sigma": _number(0, lower_open=True),
        "max_iterations": _number(1, integer=True),
        "tolerance": _number(0, lower_open=True),
        "multi_start": _number(1, integer=True),
        "weight_floor": _number(0, lower_open=True),
        "n_instances": _number(1, integer=True),
        "n": _number(1, integer=True),
        "m": _number(1, integer=True),
        "sparsity": _number(1, integer=True)
    },
    "metrics": {
        "n_samples": _number(1000, integer=True),
        "n_bootstrap": _number(0, integer=True),
        "min_ess": _number(0, lower_open=True),
        "chunk_size": _number(1, integer=True),
        "keep_coefficients": _number(0, integer=True),
        "deltas": _number_list(_number(0)),
        "truncations": _number_list(_number(0, integer=True), increasing=True),
        "direction": _optional(_number_list(_number())),
        "problem": _choice(("configured", "conjugate_toy")),
        "toy_data": _number()
    },
    "sample": {
        "n_draws": _number(1, integer=True)
    }
}

TOP_LEVEL: Dict[str, Check] = {
    "experiment": _choice(EXPERIMENTS),
    "seed": _number(0, 2 ** 64 - 1, integer=True),
    "output_dir": _optional(_string),
    "grid_size": _number(2, Config.LEVY_CONFIG["max_grid_1d"], integer=True)
}


def default_sections() -> Dict[str, Dict[str, Any]]:
    """Resolved defaults for every config section"""
    forward = {k: v for k, v in Config.FORWARD_CONFIG.items() if k != "grid_size"}
    return {
        "prior": {**Config.PRIOR_CONFIG, "truncation": None},
        "levy": {
            "rate": Config.LEVY_CONFIG["rate"],
            "jump_law": Config.LEVY_CONFIG["jump_law"],
            "jump_scale": 1.0,
            "bandwidth": Config.LEVY_CONFIG["bandwidth"],
            "gp_mean": Config.LEVY_CONFIG["gp_mean"],
            "grid_size_2d": Config.LEVY_CONFIG["grid_size_2d"]
        },
        "forward": forward,
        "noise": dict(Config.NOISE_CONFIG),
        "data": {"values": None, "path": None},
        "truth": {"kind": "prior_draw", "coefficients": None, "jump_times": None, "jump_sizes": None},
        "mcmc": dict(Config.MCMC_CONFIG),
        "map": dict(Config.MAP_CONFIG),
        "metrics": {**Config.METRICS_CONFIG, "direction": None, "problem": "configured", "toy_data": 0.5},
        "sample": {"n_draws": 4}
    }


class ExperimentValidator:
    """
    Validates experiment configuration files without running anything
    """

    def validate_file(self, path: str) -> Dict[str, Any]:
        """
        Validate a JSON experiment config file

        Args:
            path: Path to the config file

        Returns:
            Validation result with errors, warnings and resolved config
        """
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as e:
            return {"is_valid": False, "errors": [f"cannot read {path}: {e}"], "warnings": [], "resolved": None}
        return self.validate_text(text)

    def validate_text(self, text: str) -> Dict[str, Any]:
        result = {
            "is_valid": True,
            "errors": [],
            "warnings": [],
            "resolved": None
        }

        if not text.strip():
            result["is_valid"] = False
            result["errors"].append(
                f"config is empty; required fields: {', '.join(REQUIRED_FIELDS)}"
            )
            return result
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            result["is_valid"] = False
            result["errors"].append(f"line {e.lineno}: invalid JSON: {e.msg}")
            return result
        if not isinstance(raw, dict):
            result["is_valid"] = False
            result["errors"].append("line 1: config must be a JSON object")
            return result

        lines = text.splitlines()
        errors = result["errors"]
        for name in REQUIRED_FIELDS:
            if name not in raw:
                errors.append(f"missing required field '{name}'")

        for key, value in raw.items():
            if key in TOP_LEVEL:
                self._check(errors, lines, key, key, TOP_LEVEL[key], value)
            elif key in SCHEMA:
                if not isinstance(value, dict):
                    errors.append(self._message(lines, key, key, "must be an object"))
                    continue
                for sub_key, sub_value in value.items():
                    field_name = f"{key}.{sub_key}"
                    if sub_key not in SCHEMA[key]:
                        errors.append(self._message(lines, sub_key, field_name, "unknown field"))
                    else:
                        self._check(errors, lines, sub_key, field_name, SCHEMA[key][sub_key], sub_value)
            else:
                errors.append(self._message(lines, key, key, "unknown field"))

        if errors:
            result["is_valid"] = False
            return result

        resolved = self._resolve(raw)
        cross_errors, warnings = self._cross_checks(resolved)
        result["warnings"].extend(warnings)
        if cross_errors:
            result["is_valid"] = False
            result["errors"].extend(cross_errors)
            return result
        result["resolved"] = resolved
        return result

    def _check(self, errors: List[str], lines: List[str], key: str, field_name: str,
               check: Check, value: Any):
        problem = check(value)
        if problem:
            errors.append(self._message(lines, key, field_name, problem))

    @staticmethod
    def _message(lines: List[str], key: str, field_name: str, problem: str) -> str:
        pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for number, line in enumerate(lines, start=1):
            if pattern.search(line):
                return f"line {number}: {field_name}: {problem}"
        return f"{field_name}: {problem}"

    @staticmethod
    def _resolve(raw: Dict[str, Any]) -> Dict[str, Any]:
        resolved = {
            "experiment": raw["experiment"],
            "seed": int(raw["seed"]),
            "output_dir": raw.get("output_dir"),
            "grid_size": int(raw.get("grid_size", Config.FORWARD_CONFIG["grid_size"]))
        }
        for section, defaults in default_sections().items():
            merged = copy.deepcopy(defaults)
            merged.update(raw.get(section, {}))
            resolved[section] = merged
        return resolved

    @staticmethod
    def _cross_checks(cfg: Dict[str, Any]) -> Tuple[List[str], List[str]]:
        errors: List[str] = []
        warnings: List[str] = []
        prior = cfg["prior"]
        n_g = cfg["grid_size"]
        experiment = cfg["experiment"]

        if prior["family"] == "product":
            if n_g < 2 * prior["max_terms"]:
                errors.append(f"grid_size: grid too coarse, need at least 2 * prior.max_terms = {2 * prior['max_terms']}")
            if prior["basis"] == "haar_periodic" and n_g & (n_g - 1):
                errors.append(f"grid_size: must be a power of two for the Haar basis, got {n_g}")
            if prior["truncation"] is not None and prior["truncation"] > prior["max_terms"]:
                errors.append("prior.truncation: must not exceed prior.max_terms")

        if experiment in ("deconv_gpq", "quadratic", "consistency_suite"):
            if prior["family"] != "product":
                errors.append(f"prior.family: experiment {experiment} needs the product family")
        if experiment == "deconv_gpq" and cfg["forward"]["model"] != "deconvolution":
            errors.append("forward.model: deconv_gpq needs the deconvolution model")
        if experiment == "quadratic" and cfg["forward"]["model"] != "quadratic":
            errors.append("forward.model: quadratic needs the quadratic model")
        if experiment == "deconv_bv":
            if prior["family"] != "path":
                errors.append("prior.family: deconv_bv needs the path family")
            if cfg["forward"]["model"] != "deconvolution":
                errors.append("forward.model: deconv_bv needs the deconvolution model")
        if experiment in ("deconv_gpq", "deconv_bv", "quadratic", "stability_suite", "consistency_suite"):
            if cfg["noise"]["sigma"] <= 0:
                errors.append("noise.sigma: must be > 0 for posterior experiments")

        mcmc = cfg["mcmc"]
        if mcmc["burn_in"] >= mcmc["n_steps"]:
            errors.append("mcmc.burn_in: must be smaller than mcmc.n_steps")
        map_cfg = cfg["map"]
        if map_cfg["sparsity"] > map_cfg["n"]:
            errors.append("map.sparsity: must not exceed map.n")

        forward = cfg["forward"]
        if forward["obs_points"] is not None and len(set(forward["obs_points"])) != len(forward["obs_points"]):
            errors.append("forward.obs_points: points must be distinct")
        if forward["obs_points"] is not None and len(forward["obs_points"]) != forward["n_obs"]:
            warnings.append("forward.n_obs ignored: obs_points given explicitly")

        truth = cfg["truth"]
        if truth["kind"] == "coefficients" and truth["coefficients"] is None:
            errors.append("truth.coefficients: required when truth.kind is 'coefficients'")
        if truth["kind"] == "piecewise_constant":
            times, sizes = truth["jump_times"], truth["jump_sizes"]
            if times is None or sizes is None or len(times) != len(sizes):
                errors.append("truth.jump_times: jump_times and jump_sizes must be given with equal lengths")

        metrics = cfg["metrics"]
        if experiment == "stability_suite":
            positive = [d for d in metrics["deltas"] if d > 0]
            if len(positive) < 2 or max(positive) / min(positive) < 10 ** 1.5:
                errors.append("metrics.deltas: positive deltas must cover at least 1.5 decades")
        if experiment == "consistency_suite" and metrics["truncations"]:
            limit = prior["truncation"] if prior["truncation"] is not None else prior["max_terms"]
            if metrics["truncations"][-1] > limit:
                errors.append(f"metrics.truncations: largest entry exceeds the prior truncation {limit}")
        return errors, warnings
