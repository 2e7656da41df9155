"""Empirical-Bayes and kernel-flow hyperparameter estimation for spectrally
defined Gaussian process regression, with desk-scale experiment runners."""

__version__ = "0.1.0"
