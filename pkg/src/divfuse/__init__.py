"""Divergence-based multimodal fusion for ambivalence/hesitancy recognition."""

__version__ = "0.1.0"
