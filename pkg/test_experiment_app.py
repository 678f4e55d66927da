#!/usr/bin/env python3
"""
Test script for the experiment runner
Checks config validation messages, exit codes, run directories and manifests,
reproducibility of reference runs and synthetic data generation
"""

import sys
import os
import json
import logging
import tempfile

import numpy as np

# Add the current directory to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from artifact_store import read_vector_csv, sha256_file
from config import Config
from config_validator import ExperimentValidator
from experiment_app import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ExperimentApp, main

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

STABILITY_TOY = {
    "experiment": "stability_suite",
    "seed": 1,
    "noise": {"sigma": 0.5},
    "metrics": {"problem": "conjugate_toy", "toy_data": 0.5, "n_samples": 2000, "n_bootstrap": 20,
                "deltas": [0.01, 0.1, 1.0]}
}


def _write_config(directory: str, config, name: str = "config.json") -> str:
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as handle:
        if isinstance(config, str):
            handle.write(config)
        else:
            json.dump(config, handle, indent=2)
    return path


def _manifest(out_dir: str):
    with open(os.path.join(out_dir, "manifest.json"), "r", encoding="utf-8") as handle:
        return json.load(handle)


def _read_matrix(path: str) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))


def test_validator_messages():
    """Validation errors name the field and its line"""
    validator = ExperimentValidator()
    test_cases = [
        {
            "text": "",
            "expected": "config is empty; required fields: experiment, seed",
            "description": "empty file"
        },
        {
            "text": '{\n  "experiment": "map_bench",\n  "seed": 1,\n  "colour": 3\n}',
            "expected": "line 4: colour: unknown field",
            "description": "unknown top-level field"
        },
        {
            "text": '{\n  "experiment": "map_bench",\n  "seed": 1,\n  "prior": {\n    "shape": 2\n  }\n}',
            "expected": "line 5: prior.shape: unknown field",
            "description": "unknown nested field"
        },
        {
            "text": '{"experiment": "map_bench"}',
            "expected": "missing required field 'seed'",
            "description": "missing seed"
        },
    ]
    for case in test_cases:
        logger.info(f"Testing validator: {case['description']}")
        result = validator.validate_text(case["text"])
        assert not result["is_valid"]
        assert case["expected"] in result["errors"]

    bad_json = validator.validate_text('{\n  "experiment": "map_bench",\n  "seed": 1,\n}')
    assert bad_json["errors"][0].startswith("line ")
    bad_value = validator.validate_text('{"experiment": "map_bench", "seed": 1, "noise": {"sigma": -1}}')
    assert bad_value["errors"] == ["line 1: noise.sigma: must be >= 0, got -1"]


def test_validator_cross_checks():
    validator = ExperimentValidator()
    test_cases = [
        {"config": {"experiment": "deconv_gpq", "seed": 1, "grid_size": 96, "prior": {"max_terms": 16}},
         "fragment": "power of two", "description": "Haar grid not a power of two"},
        {"config": {"experiment": "deconv_gpq", "seed": 1, "grid_size": 64, "prior": {"max_terms": 64}},
         "fragment": "grid too coarse", "description": "grid coarser than 2N"},
        {"config": {"experiment": "stability_suite", "seed": 1, "metrics": {"deltas": [0.01, 0.1]}},
         "fragment": "1.5 decades", "description": "narrow delta range"},
        {"config": {"experiment": "deconv_bv", "seed": 1}, "fragment": "path family",
         "description": "deconv_bv without the path family"},
        {"config": {"experiment": "quadratic", "seed": 1, "noise": {"sigma": 0.0}},
         "fragment": "noise.sigma", "description": "zero noise for a posterior experiment"},
    ]
    for case in test_cases:
        logger.info(f"Testing cross-check: {case['description']}")
        result = validator.validate_text(json.dumps(case["config"]))
        assert not result["is_valid"]
        assert any(case["fragment"] in message for message in result["errors"])


def test_validator_resolves_defaults():
    result = ExperimentValidator().validate_text('{"experiment": "map_bench", "seed": 7}')
    assert result["is_valid"]
    resolved = result["resolved"]
    assert resolved["grid_size"] == 256
    assert resolved["metrics"]["problem"] == "configured"
    assert resolved["sample"]["n_draws"] == 4
    assert resolved["levy"]["jump_scale"] == 1.0
    assert resolved["map"]["n_instances"] == 50


def test_validate_command_exit_codes():
    with tempfile.TemporaryDirectory() as tmp:
        good = _write_config(tmp, STABILITY_TOY, "good.json")
        bad = _write_config(tmp, {"experiment": "stability_suite"}, "bad.json")
        assert main(["validate", good]) == EXIT_OK
        assert main(["validate", bad]) == EXIT_VALIDATION

        # validate takes the same flags as run and still writes nothing
        out = os.path.join(tmp, "never")
        assert main(["validate", good, "--seed", "11", "--out", out, "--reference"]) == EXIT_OK
        assert not os.path.exists(out)
        resolved = ExperimentApp(reference=True).validate(good, seed=11, out=out)["resolved"]
        assert resolved["seed"] == 11
        assert resolved["output_dir"] == out


def test_invalid_config_writes_nothing():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, {"experiment": "unknown", "seed": 1})
        out = os.path.join(tmp, "run")
        assert ExperimentApp(reference=True).run(path, out=out) == EXIT_VALIDATION
        assert not os.path.exists(out)


def test_sample_prior_zero_rate_paths():
    config = {
        "experiment": "sample_prior", "seed": 2, "grid_size": 32,
        "prior": {"family": "path"}, "levy": {"rate": 0.0}, "sample": {"n_draws": 3}
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, config)
        out = os.path.join(tmp, "run")
        assert ExperimentApp(reference=True).run(path, out=out) == EXIT_OK

        fields = _read_matrix(os.path.join(out, "fields.csv"))
        assert fields.shape == (3, 32)
        assert np.all(fields == 0.0)

        manifest = _manifest(out)
        assert manifest["status"] == "complete"
        assert manifest["seed"] == 2
        assert manifest["reference_mode"] is True
        assert manifest["defaults"]["levy_config"]["jitter"] == Config.LEVY_CONFIG["jitter"]
        for name in ("fields.csv", "path_0.csv", "path_2.csv", "summary.json"):
            assert manifest["files"][name] == sha256_file(os.path.join(out, name))
        with open(os.path.join(out, "summary.json"), "r", encoding="utf-8") as handle:
            assert json.load(handle)["n_jumps"] == [0, 0, 0]


def test_sample_prior_bv_field():
    config = {
        "experiment": "sample_prior", "seed": 5, "prior": {"family": "bv2d"},
        "levy": {"rate": 3.0, "grid_size_2d": 16}, "sample": {"n_draws": 2}
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, config)
        out = os.path.join(tmp, "run")
        assert ExperimentApp(reference=True).run(path, out=out) == EXIT_OK
        field = np.loadtxt(os.path.join(out, "field_1.csv"), delimiter=",", skiprows=1)
        assert field.shape == (16, 16)
        with open(os.path.join(out, "summary.json"), "r", encoding="utf-8") as handle:
            draws = json.load(handle)["draws"]
        assert len(draws) == 2
        assert all(d["distinct_values"] <= d["n_arrivals"] + 1 for d in draws)


def test_stability_reference_runs_are_identical():
    """Two reference runs with the same seed write byte-identical tables"""
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, STABILITY_TOY)
        outputs = []
        for name in ("first", "second"):
            out = os.path.join(tmp, name)
            assert ExperimentApp(reference=True).run(path, out=out) == EXIT_OK
            with open(os.path.join(out, "stability.csv"), "rb") as handle:
                outputs.append(handle.read())
        assert outputs[0] == outputs[1]

        header = outputs[0].decode("utf-8").splitlines()[0]
        assert header == "delta,d_H,d_H_se,d_TV,d_TV_se,ess_A,ess_B"
        with open(os.path.join(tmp, "first", "summary.json"), "r", encoding="utf-8") as handle:
            summary = json.load(handle)
        assert len(summary["closed_form_d_H"]) == 3
        assert all(all(bounds.values()) for bounds in summary["bounds"])


def test_seed_override_from_command_line():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, STABILITY_TOY)
        out = os.path.join(tmp, "run")
        assert main(["run", path, "--seed", "9", "--out", out, "--reference"]) == EXIT_OK
        assert _manifest(out)["seed"] == 9


def test_unreliable_estimate_exit_code():
    config = json.loads(json.dumps(STABILITY_TOY))
    config["metrics"]["min_ess"] = 1e9
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, config)
        out = os.path.join(tmp, "run")
        assert ExperimentApp(reference=True).run(path, out=out) == EXIT_NUMERICAL
        manifest = _manifest(out)
        assert manifest["status"] == "failed"
        assert manifest["error"]["type"] == "UnreliableEstimateError"
        assert manifest["error"]["diagnostics"]["min_ess"] == 1e9
        assert "ess_a" in manifest["error"]["diagnostics"]


def test_make_synthetic_without_noise():
    config = {
        "experiment": "sample_prior", "seed": 4, "grid_size": 64,
        "prior": {"max_terms": 16}, "forward": {"n_obs": 8}, "noise": {"sigma": 0.0}
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, config)
        out = os.path.join(tmp, "synthetic")
        assert ExperimentApp(reference=True).make_synthetic(path, out=out) == EXIT_OK
        clean = read_vector_csv(os.path.join(out, "clean.csv"))
        data = read_vector_csv(os.path.join(out, "data.csv"))
        assert clean.shape == (8,)
        assert np.array_equal(clean, data)
        assert read_vector_csv(os.path.join(out, "truth.csv")).shape == (64,)
        assert read_vector_csv(os.path.join(out, "truth_coefficients.csv")).shape == (16,)


def test_small_deconvolution_run():
    config = {
        "experiment": "deconv_gpq", "seed": 3, "grid_size": 32,
        "prior": {"basis": "haar_periodic", "max_terms": 8, "p": 1.0, "q": 1.0},
        "forward": {"model": "deconvolution", "n_obs": 4, "kernel_width": 0.05},
        "noise": {"sigma": 0.1},
        "mcmc": {"n_steps": 300, "burn_in": 100, "thin": 2}
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, config)
        out = os.path.join(tmp, "run")
        assert ExperimentApp(reference=True).run(path, out=out) == EXIT_OK
        chain = _read_matrix(os.path.join(out, "chain.csv"))
        assert chain.shape == (100, 10)
        assert np.array_equal(chain[:, 0], 100 + 2 * np.arange(100))
        assert read_vector_csv(os.path.join(out, "posterior_mean.csv")).shape == (32,)
        with open(os.path.join(out, "summary.json"), "r", encoding="utf-8") as handle:
            summary = json.load(handle)
        assert summary["sampler"] == "random_walk"
        assert summary["chain_length"] == 100
        assert summary["relative_error"] >= 0.0


def test_small_map_bench():
    config = {
        "experiment": "map_bench", "seed": 1,
        "map": {"n_instances": 2, "n": 16, "m": 12, "sparsity": 2, "multi_start": 2}
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(tmp, config)
        out = os.path.join(tmp, "run")
        assert ExperimentApp(reference=True).run(path, out=out) == EXIT_OK
        table = _read_matrix(os.path.join(out, "map_bench.csv"))
        assert table.shape == (2, 6)
        assert np.all((table[:, 1:4] >= 0.0) & (table[:, 1:4] <= 1.0))


CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")


def _run_shipped(name: str, tmp: str):
    out = os.path.join(tmp, os.path.splitext(name)[0])
    assert ExperimentApp(reference=True).run(os.path.join(CONFIG_DIR, name), out=out) == EXIT_OK
    with open(os.path.join(out, "summary.json"), "r", encoding="utf-8") as handle:
        return json.load(handle)


def test_shipped_configs_are_valid():
    app = ExperimentApp(reference=True)
    for name in sorted(os.listdir(CONFIG_DIR)):
        logger.info(f"Validating shipped config {name}")
        assert app.validate(os.path.join(CONFIG_DIR, name))["is_valid"]

    deconv = app.validate(os.path.join(CONFIG_DIR, "deconv_gpq.json"))["resolved"]
    assert (deconv["prior"]["p"], deconv["prior"]["q"]) == (0.5, 0.5)
    assert (deconv["prior"]["max_terms"], deconv["grid_size"]) == (64, 256)
    assert deconv["mcmc"]["n_steps"] == 10000
    consistency = app.validate(os.path.join(CONFIG_DIR, "consistency.json"))["resolved"]
    assert (consistency["prior"]["p"], consistency["prior"]["q"]) == (0.5, 0.5)
    assert consistency["metrics"]["truncations"] == [16, 32, 64, 128, 256]


def test_shipped_deconvolution_stability_is_linear():
    """d_H grows linearly in the data perturbation for the sparse deconvolution posterior"""
    with tempfile.TemporaryDirectory() as tmp:
        summary = _run_shipped("stability_deconv.json", tmp)
    logger.info(f"Deconvolution stability slope: {summary['slope']:.3f}")
    assert 0.8 <= summary["slope"] <= 1.2
    assert all(all(bounds.values()) for bounds in summary["bounds"])


def test_shipped_consistency_decays():
    with tempfile.TemporaryDirectory() as tmp:
        summary = _run_shipped("consistency.json", tmp)
        table = _read_matrix(os.path.join(tmp, "consistency", "consistency.csv"))
    logger.info(f"Consistency d_H over truncations: {table[:, 1]}")
    assert summary["monotone"]
    assert summary["decay_ratio"] < 0.25
    assert table[0, 1] > 0.0


def test_shipped_map_bench_meets_support_targets():
    """p = 1/2 recovers the support at least as well as p = 1 and the smoothed MAP zeroes the rest"""
    with tempfile.TemporaryDirectory() as tmp:
        summary = _run_shipped("map_bench.json", tmp)
    logger.info(f"MAP bench: {summary}")
    assert summary["n_instances"] == 50
    assert summary["fraction_p_at_least_p1"] >= 0.8
    assert summary["fraction_off_support_small"] >= 0.8


def main_tests():
    """Main test function"""
    logger.info("Starting experiment runner tests...")
    tests = [
        test_validator_messages, test_validator_cross_checks, test_validator_resolves_defaults,
        test_validate_command_exit_codes, test_invalid_config_writes_nothing,
        test_sample_prior_zero_rate_paths, test_sample_prior_bv_field,
        test_stability_reference_runs_are_identical, test_seed_override_from_command_line,
        test_unreliable_estimate_exit_code, test_make_synthetic_without_noise,
        test_small_deconvolution_run, test_small_map_bench, test_shipped_configs_are_valid,
        test_shipped_deconvolution_stability_is_linear, test_shipped_consistency_decays,
        test_shipped_map_bench_meets_support_targets,
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
    print(f"\n✅ All {len(tests)} experiment runner tests passed!")
    sys.exit(0)


if __name__ == "__main__":
    main_tests()
