"""Chordal SLE between boundary points conditioned on total half-plane capacity.

Subpackages:
    params      global constants (kappa, a, b, central charge)
    bessel      densities, bridges, martingale weights
    loewner     exact-step Loewner maps, capacity and swallowing
    sampler     map samplers (mu-sharp, mu_r, coupled pairs)
    energy      energy-distance two-sample test
    commutation two-sided growth orders and commutation weights
    experiments statistical verification experiments
    cli         command-line entry point
"""

from .params import Params

__all__ = ["Params"]
__version__ = "0.1.0"
