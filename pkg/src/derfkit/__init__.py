"""Point-wise normalization replacements and the tooling to study them."""

__version__ = "0.1.0"
