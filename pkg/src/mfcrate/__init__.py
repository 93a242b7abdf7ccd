"""Numerical laboratory for N-particle stochastic control and its mean-field limit."""

from __future__ import annotations

__version__ = "0.1.0"
