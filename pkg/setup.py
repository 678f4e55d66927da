"""
Setup script for id-priors - non-Gaussian and infinitely divisible priors for Bayesian inverse problems
"""

from setuptools import setup

# Read the README file
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Read requirements
with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh
                    if line.strip() and not line.startswith("#") and not line.startswith("pytest")]

setup(
    name="id-priors",
    version="1.0.0",
    description="Heavy-tailed, sparsity-promoting and infinitely divisible priors for Bayesian inverse problems",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=[
        "artifact_store",
        "bayes_core",
        "config",
        "config_validator",
        "distributions",
        "exceptions",
        "experiment_app",
        "fields",
        "forward_models",
        "inference",
        "levy_process",
        "metrics",
        "product_prior",
    ],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "pytest-cov>=4.0.0",
            "black>=22.0.0",
            "flake8>=5.0.0",
            "mypy>=1.0.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "id-priors=experiment_app:main",
        ],
    },
    keywords=[
        "bayesian inverse problems",
        "infinitely divisible priors",
        "besov priors",
        "compound poisson",
        "mcmc",
        "sparsity",
    ],
)
