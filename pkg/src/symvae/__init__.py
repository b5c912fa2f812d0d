"""Symmetric-KL variational autoencoders trained by adversarial log-likelihood-ratio estimation."""

__version__ = "0.1.0"
