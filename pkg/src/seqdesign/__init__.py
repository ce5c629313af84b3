"""Latent-prompted sequence generation, Langevin posterior inference, and
gradual-distribution-shift optimization for black-box sequence design."""

__version__ = "0.1.0"
