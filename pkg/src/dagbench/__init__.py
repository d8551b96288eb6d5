"""Benchmark toolkit for linear differentiable causal discovery."""

__version__ = "0.1.0"
