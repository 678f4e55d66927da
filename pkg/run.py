#!/usr/bin/env python3
"""
id-priors launcher script
Checks the numerical stack, then hands the command line to the experiment runner
"""

import sys
import os
import logging

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

def check_dependencies():
    """Check if required dependencies are installed"""
    required_packages = {
        "numpy": "numpy",
        "scipy": "scipy",
        "sklearn": "scikit-learn"
    }

    missing_packages = []

    for module, package in required_packages.items():
        try:
            __import__(module)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        logger.error(f"Missing required packages: {', '.join(missing_packages)}")
        logger.info("Please install dependencies with: pip install -r requirements.txt")
        return False

    return True

def main():
    """Main launcher function"""
    if not check_dependencies():
        sys.exit(1)

    if not os.path.exists(os.path.join(os.path.dirname(os.path.abspath(__file__)), "experiment_app.py")):
        logger.error("experiment_app.py not found. Please run from the correct directory.")
        sys.exit(1)

    try:
        from experiment_app import main as run_app
        sys.exit(run_app(sys.argv[1:]))

    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        sys.exit(1)

if __name__ == "__main__":
    main()
