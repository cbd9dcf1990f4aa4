"""Retrieval augmented decision-making: documents in, weighted hierarchical decision model and report out."""

__version__ = "0.1.0"
