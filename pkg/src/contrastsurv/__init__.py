"""Contrastive representation learning for cancer prognosis from expression data."""

__version__ = "0.1.0"
