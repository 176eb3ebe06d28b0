#!/usr/bin/env python3
"""
Setup shim for zoomground.

All metadata lives in pyproject.toml; this file only keeps
``python setup.py develop`` and old pip versions working, and adds a
``cleanup`` command that sorts imports and formats the tree.
"""

import subprocess
import sys

from setuptools import Command, setup

SOURCE_DIRS = ["src/", "tests/", "setup.py", "run_tests.py"]


class CleanupCodeCommand(Command):
    """Sort imports with isort, then format with black."""

    description = "Sort imports and format code"
    user_options = []

    def initialize_options(self):
        pass

    def finalize_options(self):
        pass

    def run(self):
        for tool in ("isort", "black"):
            print(f"Running {tool}...")
            try:
                subprocess.run([sys.executable, "-m", tool] + SOURCE_DIRS, check=True)
            except (subprocess.CalledProcessError, FileNotFoundError) as e:
                print(f"✗ {tool} failed: {e}")
                sys.exit(1)
        print("✓ Code cleanup completed!")


setup(cmdclass={"cleanup": CleanupCodeCommand})
