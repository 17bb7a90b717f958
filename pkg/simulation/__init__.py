"""Empirical simulation: informative PPS designs, direct estimators and scoring."""
