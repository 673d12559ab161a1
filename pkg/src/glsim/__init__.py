"""Securing wireless links with the shared physics of a networked system.

Subpackages cover the pieces of the testbed: dynamics generation
(``netmodel``, ``swing``), the data-driven bandlimited surrogate (``gft``),
relay-weight optimization (``secrecy``), the additive encryption pipeline
(``pipeline``), attacker models (``adversary``), and experiment sweeps with
CSV/figure outputs (``experiments``, ``plotting``, ``cli``).
"""

__version__ = "0.1.0"
