"""Privacy-preserving incumbent spectrum access with anonymous credentials."""

__version__ = "0.1.0"
