"""polezoo: train zoos of tiny cart-pole Q-networks, learn a generative
latent space over their 212-float weight vectors, and analyze that space
(convergence of learned representations, latent interpolation, and
missing-weight repair by rejection sampling)."""

__version__ = "0.1.0"

from .backend import backend_name, compiled_available

__all__ = ["__version__", "backend_name", "compiled_available"]
