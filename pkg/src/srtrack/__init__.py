"""Sub-Riemannian geodesics and vessel tracking on SO(3) and SE(2)."""

__version__ = "0.1.0"
