#!/usr/bin/env python3

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

try:
    import pytest
except ImportError as e:
    print(f"Error importing pytest: {e}")
    sys.exit(1)

TEST_MODULES = [
    "tests/test_modulus.py",
    "tests/test_transforms.py",
    "tests/test_oscillation.py",
    "tests/test_geometry.py",
    "tests/test_oblique.py",
    "tests/test_solvers.py",
    "tests/test_harness.py",
    "tests/test_registry.py",
    "tests/test_config.py",
    "tests/test_scenario.py",
    "tests/test_store.py",
    "tests/test_tracing.py",
    "tests/test_runner.py",
    "tests/test_cli.py",
]

print("Running tests...")
sys.exit(pytest.main(["-v", *TEST_MODULES, *sys.argv[1:]]))
