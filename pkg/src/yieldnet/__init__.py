"""Genotype-by-environment crop yield prediction.

The package covers the whole pipeline: CSV ingestion and synthetic data,
marker quality control, a from-scratch residual maxout network engine,
lagged weather forecasting, the dual yield/check-yield model, linear,
tree and shallow-network baselines, guided-backprop feature selection
and report assembly.
"""

__version__ = "0.1.0"
