"""Product quadrature on the unit sphere.

The rule combines Gauss-Legendre nodes in the polar cosine with a uniform
periodic trapezoid in azimuth, which integrates smooth densities spectrally
and reproduces the total surface measure 4 pi exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import roots_legendre


@dataclass(frozen=True)
class SphereRule:
    """Quadrature nodes (count, 3) on the unit sphere with positive weights."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return self.nodes.shape[0]


def build_rule(order: int) -> SphereRule:
    """Product rule with `order` polar nodes and 2*order azimuthal nodes."""
    if order < 2:
        raise ValueError("order must be at least 2")
    t, wt = roots_legendre(order)
    n_phi = 2 * order
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    w_phi = 2.0 * np.pi / n_phi

    sin_theta = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    x = np.outer(sin_theta, np.cos(phi)).ravel()
    y = np.outer(sin_theta, np.sin(phi)).ravel()
    z = np.outer(t, np.ones(n_phi)).ravel()
    nodes = np.column_stack([x, y, z])
    weights = np.outer(wt, np.full(n_phi, w_phi)).ravel()
    return SphereRule(order=order, nodes=nodes, weights=weights)


def integrate(rule: SphereRule, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Weighted sum of f over the rule's nodes; f maps (count, 3) -> (count,).

    Raises OverflowError naming the first offending node if f produces a
    non-finite value.
    """
    values = np.asarray(f(rule.nodes), dtype=float)
    if values.shape != (rule.count,):
        raise ValueError(
            f"integrand returned shape {values.shape}, expected ({rule.count},)"
        )
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise OverflowError(
            f"integrand non-finite at node {idx}: p={rule.nodes[idx]!r}"
        )
    return float(rule.weights @ values)
