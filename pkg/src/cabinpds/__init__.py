"""Hedonic fare estimation from cabin layouts with post-double-selection LASSO."""

__version__ = "0.1.0"
