"""Field diagnostics: physicality, energy decay, and Hölder estimation.

Three read-only scans over computed fields:

* ``physicality`` — full-field eigenvalue-margin scan with a verdict;
* ``morrey_scan`` — growth of the local energy ``w(rho)`` (gradient plus
  potential, summed over disks) fitted as ``w ~ rho^(2 sigma)``;
* ``holder_estimate`` — pairwise difference-quotient maxima
  ``|Q(x)-Q(y)| / |x-y|^sigma`` over a candidate exponent grid, with a
  scale-based detector for the exponent where the maximizing pairs
  collapse from domain scale to grid scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensors
from .elastic import ElasticCoefficients
from .fields import NodeRole, QField, central_gradients
from .potential import BatchDualSolver, BulkParams
from .replacement import _bulk_values
from .sphere import SphereRule

__all__ = [
    "PhysicalityReport",
    "physicality",
    "MorreyReport",
    "morrey_scan",
    "morrey_csv",
    "HolderEstimate",
    "holder_estimate",
    "detect_transition",
    "summary_text",
]

_METRIC = tensors.COMPONENT_METRIC
_MAX_MARGIN = 1.0 / 3.0


# ---------------------------------------------------------------------------
# physicality


@dataclass(frozen=True)
class PhysicalityReport:
    """Margin census over every in-domain node.

    ``verdict`` is "strictly-physical" when the smallest margin clears the
    tolerance and "boundary-touching" otherwise, in which case
    ``touching`` lists the offending nodes in row-major order.
    """

    min_margin: float
    argmin: tuple[int, int]
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    verdict: str
    touching: tuple[tuple[int, int], ...]


def physicality(field: QField, tol: float = 1e-12, bins: int = 20) -> PhysicalityReport:
    """Scan eigenvalue margins over all in-domain nodes (row-major order)."""
    grid = field.grid
    flat = np.sort(np.concatenate([grid.interior_flat, grid.boundary_flat]))
    vals = field.z.reshape(-1, tensors.N_COMPONENTS)[flat]
    margins = np.asarray(tensors.margins(vals))
    k = int(np.argmin(margins))
    argmin = (int(flat[k] // grid.ny), int(flat[k] % grid.ny))
    counts, edges = np.histogram(
        np.clip(margins, 0.0, _MAX_MARGIN), bins=bins, range=(0.0, _MAX_MARGIN)
    )
    low = np.nonzero(margins <= tol)[0]
    touching = tuple(
        (int(flat[i] // grid.ny), int(flat[i] % grid.ny)) for i in low
    )
    verdict = "strictly-physical" if margins[k] > tol else "boundary-touching"
    return PhysicalityReport(
        min_margin=float(margins[k]),
        argmin=argmin,
        histogram_counts=counts,
        histogram_edges=edges,
        verdict=verdict,
        touching=touching,
    )


# ---------------------------------------------------------------------------
# Morrey-type decay


@dataclass(frozen=True)
class MorreyReport:
    """Local energy ``w(rho)`` over nested disks and its log-log fit.

    ``fitted_sigma`` is half the least-squares slope of log w against
    log rho, using only radii of at least eight grid spacings (smaller
    disks are stencil-noise dominated).
    """

    center: tuple[int, int]
    radii: np.ndarray
    w: np.ndarray
    fitted_sigma: float
    fit_r2: float
    fit_mask: np.ndarray


def morrey_scan(
    field: QField,
    center: tuple[int, int],
    radii,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    *,
    solver: BatchDualSolver | None = None,
    min_fit_cells: float = 8.0,
) -> MorreyReport:
    """Sum gradient-squared plus potential over disks around a node.

    Radii whose disks would touch non-interior nodes are dropped; fewer
    than four usable radii is an error.
    """
    del coeffs  # the scanned density is the metric gradient square; the
    # elastic coefficients enter only through the field being scanned
    grid = field.grid
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise ValueError("need at least four radii")
    if (np.diff(radii) <= 0.0).any():
        raise ValueError("radii must be strictly increasing")
    field.validate()
    ci, cj = int(center[0]), int(center[1])
    if grid.role(ci, cj) != NodeRole.INTERIOR:
        raise ValueError("the scan center must be an interior node")
    h = grid.h
    coords = grid.interior_ij * h
    d_sq = ((coords - np.array([ci * h, cj * h])) ** 2).sum(axis=1)
    # a radius is usable when every node of its disk is interior; since
    # only interior nodes are enumerated, compare counts against the full
    # index square
    ii, jj = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing="ij")
    all_d_sq = ((ii - ci) * h) ** 2 + ((jj - cj) * h) ** 2
    usable = []
    for rho in radii:
        covered = all_d_sq <= rho * rho
        if (grid.mask[covered] == NodeRole.INTERIOR).all():
            usable.append(rho)
    if len(usable) < 4:
        raise ValueError("fewer than four in-domain radii")
    radii = np.asarray(usable)
    d = central_gradients(field)
    grad_sq = np.einsum("nil,ij,njl->n", d, _METRIC, d)
    bulk = _bulk_values(field.interior(), params, rule, solver)
    if not np.isfinite(bulk).all():
        raise ValueError("the potential is not finite on every interior node")
    dens = grad_sq + bulk
    w = np.array([float(dens[d_sq <= rho * rho].sum() * h * h) for rho in radii])
    fit_mask = radii >= min_fit_cells * h
    if fit_mask.sum() < 2:
        raise ValueError(
            "need at least two radii of eight grid spacings or more for the fit"
        )
    if (w[fit_mask] <= 0.0).any():
        sigma, r2 = math.nan, math.nan
    else:
        logr = np.log(radii[fit_mask])
        logw = np.log(w[fit_mask])
        slope, intercept = np.polyfit(logr, logw, 1)
        pred = slope * logr + intercept
        ss_res = float(((logw - pred) ** 2).sum())
        ss_tot = float(((logw - logw.mean()) ** 2).sum())
        sigma = 0.5 * slope
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return MorreyReport(
        center=(ci, cj),
        radii=radii,
        w=w,
        fitted_sigma=float(sigma),
        fit_r2=float(r2),
        fit_mask=fit_mask,
    )


def morrey_csv(report: MorreyReport) -> str:
    lines = ["radius,w"]
    for rho, wv in zip(report.radii, report.w):
        lines.append("%.17g,%.17g" % (rho, wv))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Hölder seminorm estimation


@dataclass(frozen=True)
class HolderEstimate:
    """Difference-quotient maxima over node pairs per candidate exponent.

    ``seminorms[k]`` is the exact maximum of |Q(x)-Q(y)| / |x-y|^sigma_k
    over the examined pair set; ``argmax_distance[k]`` is the separation
    of the maximizing pair.  ``min_distance``/``max_distance`` bound the
    separations examined.
    """

    sigmas: np.ndarray
    seminorms: np.ndarray
    argmax_distance: np.ndarray
    min_distance: float
    max_distance: float

    @property
    def fitted_sigma(self) -> float:
        return detect_transition(self)

    def seminorm_at(self, sigma: float) -> float:
        """Seminorm at the candidate exponent closest to ``sigma``."""
        k = int(np.argmin(np.abs(self.sigmas - sigma)))
        return float(self.seminorms[k])


def _record_pairs(r: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Keep only pairs that can maximize d / r^sigma for some sigma >= 0.

    Sorted by separation, a pair matters only if its difference exceeds
    every difference at smaller separation (a Pareto staircase); the
    maximum over records equals the maximum over all pairs exactly.
    """
    pos = d > 0.0
    if not pos.any():
        return np.empty(0), np.empty(0)
    r, d = r[pos], d[pos]
    order = np.lexsort((-d, r))
    r_s, d_s = r[order], d[order]
    run = np.maximum.accumulate(d_s)
    keep = d_s >= run
    return r_s[keep], d_s[keep]


def holder_estimate(
    field: QField,
    sub_mask: np.ndarray,
    sigma_candidates,
    *,
    seed: int = 0,
    all_pairs_limit: int = 20_000,
    sample_pairs: int = 1_000_000,
) -> HolderEstimate:
    """Maximize pairwise difference quotients over a sub-region.

    All node pairs are examined when the region has at most
    ``all_pairs_limit`` nodes; otherwise ``sample_pairs`` random pairs
    drawn with a fixed seed.  The maximization is exact over the examined
    set for every candidate exponent.
    """
    grid = field.grid
    sub_mask = np.asarray(sub_mask, dtype=bool)
    if sub_mask.shape != (grid.nx, grid.ny):
        raise ValueError("sub-mask shape must match the grid")
    if (grid.mask[sub_mask] != NodeRole.INTERIOR).any():
        raise ValueError("the sub-mask must select interior nodes only")
    sigmas = np.asarray(sigma_candidates, dtype=float)
    if ((sigmas <= 0.0) | (sigmas >= 1.0)).any():
        raise ValueError("candidate exponents must lie in (0, 1)")
    nodes = np.argwhere(sub_mask)
    n = nodes.shape[0]
    if n < 2:
        raise ValueError("the sub-mask must contain at least two nodes")
    coords = nodes * grid.h
    values = field.z[nodes[:, 0], nodes[:, 1]]
    rec_r = []
    rec_d = []
    r_min, r_max = math.inf, 0.0

    def _consume(r_sq: np.ndarray, diff: np.ndarray) -> None:
        nonlocal r_min, r_max
        r = np.sqrt(r_sq)
        d = np.sqrt(np.einsum("pi,ij,pj->p", diff, _METRIC, diff))
        rr, dd = _record_pairs(r, d)
        rec_r.append(rr)
        rec_d.append(dd)
        r_min = min(r_min, float(r.min()))
        r_max = max(r_max, float(r.max()))

    if n <= all_pairs_limit:
        # keep each chunk's pair rectangle around 100 MB
        chunk_rows = max(8, min(1024, 2_500_000 // n))
        for i0 in range(0, n - 1, chunk_rows):
            i1 = min(i0 + chunk_rows, n - 1)
            # pairs (i, j) with i in [i0, i1) and j > i; the rectangle
            # below indexes j = i0 + 1 + col, so j > i means col >= row
            dx = coords[i0:i1, None, :] - coords[None, i0 + 1 :, :]
            dv = values[i0:i1, None, :] - values[None, i0 + 1 :, :]
            rows, cols = np.triu_indices(i1 - i0, k=0, m=n - i0 - 1)
            r_sq = (dx[rows, cols] ** 2).sum(axis=1)
            _consume(r_sq, dv[rows, cols])
    else:
        rng = np.random.default_rng(seed)
        drawn = 0
        while drawn < sample_pairs:
            m = min(sample_pairs - drawn, 250_000)
            a = rng.integers(n, size=m)
            b = (a + 1 + rng.integers(n - 1, size=m)) % n
            drawn += m
            dx = coords[a] - coords[b]
            _consume((dx**2).sum(axis=1), values[a] - values[b])

    r_rec, d_rec = _record_pairs(np.concatenate(rec_r), np.concatenate(rec_d))
    seminorms = np.zeros(sigmas.size)
    argmax_r = np.full(sigmas.size, math.nan)
    if r_rec.size:
        for k, sigma in enumerate(sigmas):
            ratios = d_rec / r_rec**sigma
            j = int(np.argmax(ratios))
            seminorms[k] = ratios[j]
            argmax_r[k] = r_rec[j]
    return HolderEstimate(
        sigmas=sigmas,
        seminorms=seminorms,
        argmax_distance=argmax_r,
        min_distance=float(r_min),
        max_distance=float(r_max),
    )


def detect_transition(estimate: HolderEstimate) -> float:
    """Exponent where maximizing pairs collapse from domain to grid scale.

    For a field of Hölder class alpha the quotient maximum sits at the
    largest separations for sigma < alpha and at grid-scale separations
    for sigma > alpha; the crossing of the geometric-mean scale locates
    alpha.  NaN when the field is constant on the region.
    """
    if estimate.seminorms.max() <= 0.0:
        return math.nan
    split = math.sqrt(estimate.min_distance * estimate.max_distance)
    large = estimate.argmax_distance >= split
    if not large.any():
        return float(estimate.sigmas[0])
    i = int(np.nonzero(large)[0].max())
    if i + 1 < estimate.sigmas.size:
        return float(0.5 * (estimate.sigmas[i] + estimate.sigmas[i + 1]))
    return float(estimate.sigmas[i])


# ---------------------------------------------------------------------------
# plain-text summary


def summary_text(
    phys: PhysicalityReport | None = None,
    morrey: MorreyReport | None = None,
    holder: HolderEstimate | None = None,
) -> str:
    lines = []
    if phys is not None:
        lines.append(
            "physicality: verdict=%s min_margin=%.12g argmin=(%d, %d)"
            % (phys.verdict, phys.min_margin, phys.argmin[0], phys.argmin[1])
        )
    if morrey is not None:
        lines.append(
            "morrey: center=(%d, %d) fitted_sigma=%.12g fit_r2=%.12g"
            % (morrey.center[0], morrey.center[1], morrey.fitted_sigma, morrey.fit_r2)
        )
    if holder is not None:
        lines.append(
            "holder: transition=%.12g max_seminorm=%.12g"
            % (detect_transition(holder), holder.seminorms.max())
        )
    return "\n".join(lines) + "\n"
