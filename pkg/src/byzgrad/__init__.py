"""Byzantine-resilient distributed subgradient optimization.

Graph and objective redundancy analysis, the hull-intersection update rule,
a synchronous adversarial round engine and observer-side diagnostics.
"""

from byzgrad.errors import ByzGradError

__version__ = "0.1.0"

__all__ = ["ByzGradError", "__version__"]
