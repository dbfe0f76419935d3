"""Classical simulation suite for quantum-assisted variational Monte Carlo."""

__version__ = "1.0.0"
