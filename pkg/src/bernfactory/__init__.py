"""Exact Bernoulli factories built from cascading Bernstein envelopes."""

__version__ = "0.1.0"
