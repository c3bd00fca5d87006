"""Constrained Q-tensor energy minimization on 2D domains.

Subpackages cover tensor algebra, sphere quadrature, the singular bulk
potential defined through its dual moment-matching problem, elastic energy
densities, grid fields, energy minimization, local replacement solves, and
regularity diagnostics.
"""

__version__ = "0.1.0"
