"""Sentence-to-meme pipeline: template selection, conditioned caption
generation, image compositing, and evaluation metrics."""

__version__ = "0.1.0"
