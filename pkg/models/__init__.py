"""Pseudo-likelihood mixed binomial and multinomial models and their inference engines."""
