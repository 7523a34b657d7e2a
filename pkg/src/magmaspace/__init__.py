"""Latent-space analysis of magma equations: corpus, Stone pairings, PCA and implication graphs."""

__version__ = "0.1.0"
