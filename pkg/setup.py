"""
Setup script for Trusted Pre-processing
This is a compatibility shim for pip. The real configuration is in pyproject.toml
"""

from setuptools import setup

# All configuration is in pyproject.toml
# This file exists for backward compatibility with older pip versions
setup()
