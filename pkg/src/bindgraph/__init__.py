"""Protein-graph featurization, sequence design, and benchmark toolkit."""

__version__ = "0.1.0"
