"""Sub-disk replacement solves and their structural diagnostics.

Replacing the field inside a disk by the componentwise discrete solution
of a scalar elliptic equation (with the surrounding nodes as boundary
data) is the basic comparison construction used by the physicality and
decay diagnostics.  Two operators are supported:

* the five-point Laplacian, and
* a constant-coefficient anisotropic operator ``sum_ij c_ij d2/dxi dxj``
  with symmetric positive-definite ``c``.

When ``c`` is diagonally dominant (``|c12| <= min(c11, c22)``) the
discretization is a nine-point stencil split so that every neighbor
weight is nonnegative.  The solved values are then convex combinations of
the ring data, so eigenvalue bounds and quadratic-form extremes transfer
from the ring to the disk up to solver accuracy.  For non-dominant ``c``
the operator is diagonalized and solved on a rotated auxiliary grid with
bilinear transfers; values remain convex combinations of nearby field
values (physicality stays exact) but the trace is only stencil-accurate,
so ring-extreme probes hold to O(h^2) rather than solver accuracy.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from . import tensors
from .elastic import ElasticCoefficients, ElasticForm, ElasticMode, validate
from .fields import Grid2D, NodeRole, QField, assemble_energy, central_gradients
from .potential import SENTINEL_MARGIN, BatchDualSolver, BulkParams
from .sphere import SphereRule

__all__ = [
    "ReplacementSpec",
    "laplace_spec",
    "const_coeff_spec",
    "LOperatorData",
    "build_L_operator",
    "sampled_coefficient_bounds",
    "ReplacementReport",
    "ReplacementConvergenceError",
    "replace",
    "MeanValueReport",
    "mean_value_check",
    "probe_directions",
    "ProbeReport",
    "quadratic_form_range",
    "dirichlet_energy",
    "REPORT_COLUMNS",
    "report_row",
    "append_report",
]


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class ReplacementSpec:
    """A disk plus the elliptic operator used to re-solve its interior.

    ``coefficients is None`` selects the Laplacian; otherwise it must be a
    2x2 symmetric positive-definite matrix.
    """

    center: np.ndarray
    radius: float
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(2)
        if not np.isfinite(center).all():
            raise ValueError("disk center must be finite")
        object.__setattr__(self, "center", center)
        radius = float(self.radius)
        if not (math.isfinite(radius) and radius > 0.0):
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "radius", radius)
        if self.coefficients is not None:
            c = np.asarray(self.coefficients, dtype=float)
            if c.shape != (2, 2):
                raise ValueError("operator coefficients must be 2x2")
            if abs(c[0, 1] - c[1, 0]) > 1e-12 * (1.0 + np.abs(c).max()):
                raise ValueError("operator coefficients must be symmetric")
            c = 0.5 * (c + c.T)
            if np.linalg.eigvalsh(c).min() <= 0.0:
                raise ValueError("operator coefficients must be positive definite")
            object.__setattr__(self, "coefficients", c)

    @property
    def operator_name(self) -> str:
        return "laplace" if self.coefficients is None else "const_coeff"

    @property
    def is_dominant(self) -> bool:
        """True when the positive-split nine-point stencil applies."""
        if self.coefficients is None:
            return True
        c = self.coefficients
        return abs(c[0, 1]) <= min(c[0, 0], c[1, 1]) * (1.0 + 1e-12)


def laplace_spec(center, radius: float) -> ReplacementSpec:
    return ReplacementSpec(np.asarray(center, dtype=float), radius)


def const_coeff_spec(center, radius: float, coefficients) -> ReplacementSpec:
    return ReplacementSpec(
        np.asarray(center, dtype=float), radius, np.asarray(coefficients, dtype=float)
    )


# ---------------------------------------------------------------------------
# anisotropic operator built from elastic coefficients


@dataclass(frozen=True)
class LOperatorData:
    """Change of variables normalizing the anisotropic gradient form.

    For the reduced three-coefficient elastic mode the quadratic form
    acting on each component gradient has matrix ``L1*I + L5*W(state)``
    with ``W`` the upper-left 2x2 block of the tensor.  ``change_of_variables``
    is the symmetric matrix ``A`` with ``A @ base(anchor) @ A.T = I``, and
    ``coefficients`` stores that (identity up to rounding) product.
    """

    change_of_variables: np.ndarray
    coefficients: np.ndarray
    anchor: np.ndarray
    elastic: ElasticCoefficients

    def base_matrix(self, z: np.ndarray) -> np.ndarray:
        """Un-normalized coefficient matrix at a state (upper 2x2 block form)."""
        mats = tensors.z_to_matrix(np.asarray(z, dtype=float))
        block = mats[..., :2, :2]
        eye = np.eye(2)
        return self.elastic.L1 * eye + self.elastic.L5 * block

    def coefficient_matrix(self, z: np.ndarray) -> np.ndarray:
        """Coefficient matrix after the change of variables, at any state."""
        a = self.change_of_variables
        return a @ self.base_matrix(z) @ a.T


def build_L_operator(coeffs: ElasticCoefficients, anchor: np.ndarray) -> LOperatorData:
    """Normalize the anisotropic component-gradient form at an anchor state."""
    if coeffs.mode is not ElasticMode.THM3:
        raise ValueError(
            "the anisotropic replacement operator is defined for the reduced "
            "three-coefficient elastic mode"
        )
    report = validate(coeffs)
    if not report.valid:
        raise ValueError(
            "elastic coefficients fail ellipticity: " + ", ".join(report.failures)
        )
    anchor = np.asarray(anchor, dtype=float).reshape(tensors.N_COMPONENTS)
    block = tensors.z_to_matrix(anchor)[:2, :2]
    base = coeffs.L1 * np.eye(2) + coeffs.L5 * block
    w, vecs = np.linalg.eigh(base)
    if w.min() <= 1e-14:
        raise ValueError("coefficient matrix is not positive definite at the anchor")
    a = vecs @ np.diag(1.0 / np.sqrt(w)) @ vecs.T
    return LOperatorData(
        change_of_variables=a,
        coefficients=a @ base @ a.T,
        anchor=anchor,
        elastic=coeffs,
    )


def sampled_coefficient_bounds(
    data: LOperatorData,
    rng: np.random.Generator,
    count: int = 400,
    boundary_fraction: float = 0.5,
) -> tuple[float, float]:
    """Sampled spectral envelope of the normalized coefficient matrix.

    Draws states across the physical set (including its boundary) and
    returns the smallest and largest eigenvalue of the coefficient matrix
    seen; for valid elastic coefficients the lower bound stays positive.
    """
    states = tensors.sample_states(rng, count, boundary_fraction=boundary_fraction)
    mats = data.coefficient_matrix(states)
    eigs = np.linalg.eigvalsh(mats)
    return float(eigs.min()), float(eigs.max())


# ---------------------------------------------------------------------------
# disk systems (masked stencil + ring)

# leg order: E, W, N, S, NE, SW, NW, SE
_LEG_OFFSETS = np.array(
    [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [-1, 1], [1, -1]]
)


def _stencil_weights(coefficients: np.ndarray | None) -> np.ndarray:
    """Nonnegative neighbor weights of the positive-split stencil."""
    if coefficients is None:
        return np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    c11, c22 = coefficients[0, 0], coefficients[1, 1]
    c12 = coefficients[0, 1]
    d = abs(c12)
    a = max(c11 - d, 0.0)
    b = max(c22 - d, 0.0)
    w = np.array([a, a, b, b, 0.0, 0.0, 0.0, 0.0])
    if c12 >= 0.0:
        w[4] = w[5] = d
    else:
        w[6] = w[7] = d
    return w


@dataclass
class _StencilSystem:
    """Generic masked-stencil solve data on a flat value store."""

    solve_flat: np.ndarray  # (m,) indices into the flat store
    nbr: np.ndarray  # (m, 8) flat neighbor indices per leg
    weights: np.ndarray  # (8,) nonnegative leg weights
    colors: np.ndarray  # (m,) values in {0,1,2,3} decoupling all legs

    @property
    def center_weight(self) -> float:
        return float(self.weights.sum())

    def residual(self, values: np.ndarray) -> float:
        """Sup-norm of the diagonally normalized stencil residual."""
        avg = np.einsum("mkc,k->mc", values[self.nbr], self.weights)
        res = values[self.solve_flat] - avg / self.center_weight
        return float(np.abs(res).max())

    def estimate_jacobi_radius(self) -> float:
        v = np.sin(1.0 + 0.7654321 * np.arange(self.solve_flat.size))
        store = np.zeros(int(self.nbr.max()) + 1)
        rho = 0.9
        for _ in range(60):
            store[self.solve_flat] = v
            nxt = (store[self.nbr] * self.weights).sum(axis=1) / self.center_weight
            norm = np.linalg.norm(nxt)
            if norm == 0.0:
                return 0.5
            rho = norm / np.linalg.norm(v)
            v = nxt / norm
            store[self.solve_flat] = 0.0
        return min(max(rho, 0.5), 1.0 - 1e-12)


class ReplacementConvergenceError(RuntimeError):
    """Relaxation failed to reach the target residual."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"disk relaxation stalled at residual {residual:.3e} after "
            f"{sweeps} sweeps"
        )
        self.residual = residual
        self.sweeps = sweeps


def _solve_stencil(
    system: _StencilSystem,
    values: np.ndarray,
    tol: float,
    max_sweeps: int,
) -> tuple[float, int]:
    """Relax ``values`` in place until the sup residual drops below tol.

    Four-color Gauss-Seidel with a Chebyshev-style over-relaxation
    schedule; the system matrix is symmetric positive definite, so any
    relaxation factor below 2 converges regardless of ordering.
    """
    res = system.residual(values)
    if res < tol:
        return res, 0
    rho = system.estimate_jacobi_radius()
    rho_sq = rho * rho
    center = system.center_weight
    groups = [np.nonzero(system.colors == c)[0] for c in range(4)]
    groups = [g for g in groups if g.size]
    omega = 1.0
    for sweep in range(1, max_sweeps + 1):
        for g in groups:
            idx = system.solve_flat[g]
            avg = np.einsum("mkc,k->mc", values[system.nbr[g]], system.weights)
            values[idx] += omega * (avg / center - values[idx])
        omega = min(1.0 / (1.0 - 0.25 * rho_sq * omega), 1.97)
        res = system.residual(values)
        if res < tol:
            return res, sweep
    raise ReplacementConvergenceError(res, max_sweeps)


@dataclass
class _DiskSystem:
    """Stencil system bound to a grid disk, with its boundary ring."""

    stencil: _StencilSystem
    solve_ij: np.ndarray
    ring_ij: np.ndarray
    ring_flat: np.ndarray


def _build_disk_system(grid: Grid2D, spec: ReplacementSpec) -> _DiskSystem:
    """Collect disk solve nodes and their stencil ring, validating placement."""
    h = grid.h
    ii, jj = np.meshgrid(
        np.arange(grid.nx), np.arange(grid.ny), indexing="ij"
    )
    dist_sq = (ii * h - spec.center[0]) ** 2 + (jj * h - spec.center[1]) ** 2
    in_disk = dist_sq <= spec.radius**2
    if not in_disk.any():
        raise ValueError("the disk captures no grid nodes; increase the radius")
    roles = grid.mask
    if (roles[in_disk] != NodeRole.INTERIOR).any():
        raise ValueError(
            "the disk touches the domain boundary; boundary-intersecting "
            "replacements are unsupported"
        )
    solve_ij = np.argwhere(in_disk)
    solve_flat = solve_ij[:, 0] * grid.ny + solve_ij[:, 1]
    weights = _stencil_weights(spec.coefficients)
    nbr = np.empty((solve_ij.shape[0], 8), dtype=np.int64)
    ring_mask = np.zeros((grid.nx, grid.ny), dtype=bool)
    for k, (di, dj) in enumerate(_LEG_OFFSETS):
        ni = solve_ij[:, 0] + di
        nj = solve_ij[:, 1] + dj
        if ni.min() < 0 or nj.min() < 0 or ni.max() >= grid.nx or nj.max() >= grid.ny:
            raise ValueError("the disk reaches the edge of the index array")
        nbr[:, k] = ni * grid.ny + nj
        if weights[k] > 0.0:
            ring_mask[ni, nj] = True
    ring_mask[in_disk] = False
    if (roles[ring_mask] == NodeRole.OUTSIDE).any():
        raise ValueError(
            "the disk touches the domain boundary; boundary-intersecting "
            "replacements are unsupported"
        )
    ring_ij = np.argwhere(ring_mask)
    ring_flat = ring_ij[:, 0] * grid.ny + ring_ij[:, 1]
    colors = (solve_ij[:, 0] % 2) * 2 + (solve_ij[:, 1] % 2)
    stencil = _StencilSystem(
        solve_flat=solve_flat, nbr=nbr, weights=weights, colors=colors
    )
    return _DiskSystem(
        stencil=stencil, solve_ij=solve_ij, ring_ij=ring_ij, ring_flat=ring_flat
    )


# ---------------------------------------------------------------------------
# rotated-grid fallback for non-dominant coefficient matrices


def _bilinear(values: np.ndarray, x: np.ndarray, y: np.ndarray, h: float):
    """Bilinear interpolation on the (i*h, j*h) lattice of a (nx, ny, c) array.

    Returns the interpolated rows and the flat indices of the four corner
    nodes used for each point (for in-domain validation by the caller).
    """
    nx, ny = values.shape[:2]
    fi = np.clip(np.floor(x / h).astype(int), 0, nx - 2)
    fj = np.clip(np.floor(y / h).astype(int), 0, ny - 2)
    tx = x / h - fi
    ty = y / h - fj
    v00 = values[fi, fj]
    v10 = values[fi + 1, fj]
    v01 = values[fi, fj + 1]
    v11 = values[fi + 1, fj + 1]
    wx = tx[:, None]
    wy = ty[:, None]
    out = (
        v00 * (1 - wx) * (1 - wy)
        + v10 * wx * (1 - wy)
        + v01 * (1 - wx) * wy
        + v11 * wx * wy
    )
    corners = np.stack(
        [
            fi * ny + fj,
            (fi + 1) * ny + fj,
            fi * ny + fj + 1,
            (fi + 1) * ny + fj + 1,
        ],
        axis=1,
    )
    return out, corners


def _solve_rotated(
    field: QField,
    spec: ReplacementSpec,
    system: _DiskSystem,
    tol: float,
    max_sweeps: int,
) -> tuple[np.ndarray, float, int]:
    """Solve a non-dominant operator on an eigen-aligned auxiliary grid.

    Diagonalizes the coefficient matrix, lays an axis-aligned grid over the
    disk in rotated coordinates, transfers boundary data onto it by
    bilinear interpolation, solves the decoupled five-point problem, and
    interpolates back to the disk nodes.  Requires the disk plus a
    three-cell collar to stay inside the domain.
    """
    grid = field.grid
    h = grid.h
    evals, evecs = np.linalg.eigh(spec.coefficients)
    half = int(math.ceil((spec.radius + 2.0 * h) / h))
    n_aux = 2 * half + 1
    axes = (np.arange(n_aux) - half) * h
    pa, pb = np.meshgrid(axes, axes, indexing="ij")
    # rotated coordinates p map to physical points center + evecs @ p
    xs = (spec.center[0] + evecs[0, 0] * pa + evecs[0, 1] * pb).reshape(-1)
    ys = (spec.center[1] + evecs[1, 0] * pa + evecs[1, 1] * pb).reshape(-1)
    dist_sq = (pa**2 + pb**2).reshape(-1)
    # only the disk, its four-neighbor ring, and the bilinear map-back
    # corners are ever read; everything sits within a 1.6h collar
    used = dist_sq <= (spec.radius + 1.6 * h) ** 2
    collar_error = ValueError(
        "the rotated-grid fallback needs the disk plus a three-cell "
        "collar inside the domain"
    )
    if (
        xs[used].min() < 0.0
        or ys[used].min() < 0.0
        or xs[used].max() > (grid.nx - 1) * h
        or ys[used].max() > (grid.ny - 1) * h
    ):
        raise collar_error
    aux_values = np.zeros((n_aux * n_aux, tensors.N_COMPONENTS))
    aux_values[used], corners = _bilinear(field.z, xs[used], ys[used], h)
    roles_flat = grid.mask.reshape(-1)
    if (roles_flat[corners] == NodeRole.OUTSIDE).any():
        raise collar_error
    in_disk = dist_sq <= spec.radius**2
    # keep one clear rim so every solve node has its four neighbors
    rim = np.zeros((n_aux, n_aux), dtype=bool)
    rim[0, :] = rim[-1, :] = rim[:, 0] = rim[:, -1] = True
    solve = in_disk & ~rim.reshape(-1)
    solve_ab = np.argwhere(solve.reshape(n_aux, n_aux))
    solve_flat = solve_ab[:, 0] * n_aux + solve_ab[:, 1]
    nbr = np.empty((solve_ab.shape[0], 8), dtype=np.int64)
    for k, (di, dj) in enumerate(_LEG_OFFSETS):
        nbr[:, k] = (solve_ab[:, 0] + di) * n_aux + (solve_ab[:, 1] + dj)
    weights = np.array(
        [evals[0], evals[0], evals[1], evals[1], 0.0, 0.0, 0.0, 0.0]
    )
    colors = (solve_ab[:, 0] % 2) * 2 + (solve_ab[:, 1] % 2)
    stencil = _StencilSystem(
        solve_flat=solve_flat, nbr=nbr, weights=weights, colors=colors
    )
    residual, sweeps = _solve_stencil(stencil, aux_values, tol, max_sweeps)
    # interpolate the solved patch back onto the disk nodes
    ij = system.solve_ij
    dx = ij[:, 0] * h - spec.center[0]
    dy = ij[:, 1] * h - spec.center[1]
    p1 = evecs[0, 0] * dx + evecs[1, 0] * dy
    p2 = evecs[0, 1] * dx + evecs[1, 1] * dy
    aux_grid = aux_values.reshape(n_aux, n_aux, tensors.N_COMPONENTS)
    out, _ = _bilinear(
        aux_grid, p1 + half * h, p2 + half * h, h
    )
    return out, residual, sweeps


# ---------------------------------------------------------------------------
# the replacement driver


@dataclass(frozen=True)
class ReplacementReport:
    """Outcome of one disk replacement.

    Energies are totals over the whole domain for the supplied elastic
    coefficients (plus bulk potential when given); they are NaN when no
    energy model was passed.  ``max_margin_violation`` is the largest
    amount by which a replaced node's eigenvalues leave the physical set
    (negative values mean a safety margin remains).
    """

    max_margin_violation: float
    energy_before: float
    energy_after: float
    mean_value_lhs: float
    mean_value_rhs: float
    solver_residual: float
    sweeps: int
    skipped_ring_nodes: int


def _total_energy(
    field: QField,
    coeffs: ElasticCoefficients | None,
    params: BulkParams | None,
    rule: SphereRule | None,
    solver: BatchDualSolver | None,
    form: ElasticForm | None,
) -> float:
    if coeffs is None:
        return math.nan
    if params is None:
        d = central_gradients(field)
        if form is None:
            form = ElasticForm(coeffs)
        vals = form.value(field.interior(), d)
        return float(vals.sum() * field.grid.h**2)
    if rule is None:
        raise ValueError("a quadrature rule is required to evaluate the potential")
    breakdown = assemble_energy(field, coeffs, params, rule, solver=solver, form=form)
    return breakdown.total


def replace(
    field: QField,
    spec: ReplacementSpec,
    *,
    coeffs: ElasticCoefficients | None = None,
    params: BulkParams | None = None,
    rule: SphereRule | None = None,
    solver: BatchDualSolver | None = None,
    tol: float = 1e-13,
    max_sweeps: int = 50_000,
) -> tuple[QField, ReplacementReport]:
    """Re-solve the field inside a disk and report the structural checks.

    Returns a new field (the input is untouched) together with a report.
    Energy entries are filled when elastic coefficients are supplied
    (elastic-only if no bulk parameters), and the mean-value entries when
    bulk parameters and a quadrature rule are supplied.
    """
    field.validate()
    grid = field.grid
    system = _build_disk_system(grid, spec)
    form = ElasticForm(coeffs) if coeffs is not None else None
    energy_before = _total_energy(field, coeffs, params, rule, solver, form)
    values = field.z.reshape(-1, tensors.N_COMPONENTS).copy()
    if spec.is_dominant:
        residual, sweeps = _solve_stencil(system.stencil, values, tol, max_sweeps)
        solved = values[system.stencil.solve_flat]
    else:
        solved, residual, sweeps = _solve_rotated(
            field, spec, system, tol, max_sweeps
        )
        values[system.stencil.solve_flat] = solved
    z_new = values.reshape(grid.nx, grid.ny, tensors.N_COMPONENTS)
    new_field = QField(grid, z_new, field.bc)
    margins = np.asarray(tensors.margins(solved))
    violation = float((-margins).max())
    energy_after = _total_energy(new_field, coeffs, params, rule, solver, form)
    mv_lhs = math.nan
    mv_rhs = math.nan
    skipped = 0
    if params is not None and rule is not None:
        mv = mean_value_check(new_field, spec, params, rule, solver=solver)
        mv_lhs, mv_rhs, skipped = mv.lhs, mv.rhs, mv.skipped_ring_nodes
    report = ReplacementReport(
        max_margin_violation=violation,
        energy_before=energy_before,
        energy_after=energy_after,
        mean_value_lhs=mv_lhs,
        mean_value_rhs=mv_rhs,
        solver_residual=residual,
        sweeps=sweeps,
        skipped_ring_nodes=skipped,
    )
    return new_field, report


# ---------------------------------------------------------------------------
# mean-value inequality


@dataclass(frozen=True)
class MeanValueReport:
    """Disk average of the potential against its weighted ring average.

    ``slack = rhs - lhs`` is nonnegative (up to O(h) discretization) when
    the potential of the replaced field is subharmonic on the disk.  Ring
    nodes whose potential is not finite (margin sentinel or unconverged
    dual solve) are skipped and counted.
    """

    lhs: float
    rhs: float
    slack: float
    skipped_ring_nodes: int


def _bulk_values(
    zrows: np.ndarray,
    params: BulkParams,
    rule: SphereRule,
    solver: BatchDualSolver | None,
) -> np.ndarray:
    if solver is None:
        solver = BatchDualSolver(rule)
    zrows = np.asarray(zrows, dtype=float)
    margins = np.atleast_1d(np.asarray(tensors.margins(zrows)))
    vals = np.full(zrows.shape[0], math.inf)
    ok = margins >= SENTINEL_MARGIN
    if ok.any():
        out = solver.solve(zrows[ok])
        conv = out["converged"]
        sel = np.nonzero(ok)[0]
        frob = np.atleast_1d(np.asarray(tensors.frobenius_sq(zrows[ok])))
        vals[sel[conv]] = (
            out["value"][conv] - params.kappa * frob[conv] + params.b0
        )
    return vals


def mean_value_check(
    field: QField,
    spec: ReplacementSpec,
    params: BulkParams,
    rule: SphereRule,
    *,
    solver: BatchDualSolver | None = None,
    negate: bool = False,
) -> MeanValueReport:
    """Compare the disk integral of the potential to its ring line integral.

    The left side is the h^2-weighted sum of the potential over disk
    nodes; the right side is (radius/2) times the line integral over the
    ring, discretized with angular arc weights about the disk center.
    ``negate`` flips the sign of the potential — a deliberate negative
    control that breaks subharmonicity.
    """
    grid = field.grid
    system = _build_disk_system(grid, spec)
    zflat = field.z.reshape(-1, tensors.N_COMPONENTS)
    f_disk = _bulk_values(zflat[system.stencil.solve_flat], params, rule, solver)
    f_ring = _bulk_values(zflat[system.ring_flat], params, rule, solver)
    keep = np.isfinite(f_ring)
    skipped = int((~keep).sum())
    if negate:
        f_disk = -f_disk
        f_ring = np.where(keep, -f_ring, f_ring)
    lhs = float(f_disk.sum() * grid.h**2) if np.isfinite(f_disk).all() else math.inf
    ring_xy = system.ring_ij[keep] * grid.h
    theta = np.arctan2(ring_xy[:, 1] - spec.center[1], ring_xy[:, 0] - spec.center[0])
    order = np.argsort(theta, kind="stable")
    theta_sorted = theta[order]
    f_sorted = f_ring[keep][order]
    gaps = np.diff(theta_sorted, append=theta_sorted[0] + 2.0 * math.pi)
    arc = 0.5 * (gaps + np.roll(gaps, 1))
    rhs = float(0.5 * spec.radius**2 * np.dot(arc, f_sorted))
    return MeanValueReport(
        lhs=lhs, rhs=rhs, slack=rhs - lhs, skipped_ring_nodes=skipped
    )


# ---------------------------------------------------------------------------
# maximum-principle probes and the operator's own energy


def probe_directions(count: int = 64) -> np.ndarray:
    """Deterministic near-uniform unit directions (Fibonacci sphere)."""
    k = np.arange(count)
    zc = 1.0 - (2.0 * k + 1.0) / count
    phi = k * math.pi * (3.0 - math.sqrt(5.0))
    r = np.sqrt(np.clip(1.0 - zc * zc, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), zc], axis=1)


@dataclass(frozen=True)
class ProbeReport:
    """Per-direction extremes of the quadratic form over disk and ring."""

    disk_min: np.ndarray
    disk_max: np.ndarray
    ring_min: np.ndarray
    ring_max: np.ndarray

    @property
    def max_exceedance(self) -> float:
        """How far disk extremes escape the ring envelope (<= 0 is clean)."""
        over = (self.disk_max - self.ring_max).max()
        under = (self.ring_min - self.disk_min).max()
        return float(max(over, under))


def quadratic_form_range(
    field: QField, spec: ReplacementSpec, directions: np.ndarray
) -> ProbeReport:
    """Extremes of dir^T Q dir over disk nodes versus ring nodes."""
    grid = field.grid
    system = _build_disk_system(grid, spec)
    zflat = field.z.reshape(-1, tensors.N_COMPONENTS)
    dirs = np.asarray(directions, dtype=float)
    disk_mats = tensors.z_to_matrix(zflat[system.stencil.solve_flat])
    ring_mats = tensors.z_to_matrix(zflat[system.ring_flat])
    disk_vals = np.einsum("da,mab,db->dm", dirs, disk_mats, dirs)
    ring_vals = np.einsum("da,mab,db->dm", dirs, ring_mats, dirs)
    return ProbeReport(
        disk_min=disk_vals.min(axis=1),
        disk_max=disk_vals.max(axis=1),
        ring_min=ring_vals.min(axis=1),
        ring_max=ring_vals.max(axis=1),
    )


def dirichlet_energy(field: QField, spec: ReplacementSpec) -> np.ndarray:
    """Per-channel graph energy of the operator's positive-split stencil.

    Sums w * (difference)^2 over every stencil edge with at least one
    endpoint in the disk.  The replacement solve is the unique minimizer
    of this form for fixed ring values, so replacing can only lower it.
    Undefined for non-dominant coefficient matrices (the fallback solve
    minimizes a form on the rotated grid instead).
    """
    if not spec.is_dominant:
        raise ValueError(
            "the positive-split energy form requires a diagonally dominant "
            "coefficient matrix"
        )
    grid = field.grid
    system = _build_disk_system(grid, spec)
    zflat = field.z.reshape(-1, tensors.N_COMPONENTS)
    solve_mask = np.zeros(grid.nx * grid.ny, dtype=bool)
    solve_mask[system.stencil.solve_flat] = True
    member = solve_mask.copy()
    member[system.ring_flat] = True
    all_ij = np.concatenate([system.solve_ij, system.ring_ij], axis=0)
    weights = system.stencil.weights
    # positive legs E, N, NE, SE cover each undirected edge exactly once
    energy = np.zeros(tensors.N_COMPONENTS)
    for k in (0, 2, 4, 7):
        if weights[k] == 0.0:
            continue
        di, dj = _LEG_OFFSETS[k]
        ni = all_ij[:, 0] + di
        nj = all_ij[:, 1] + dj
        inside = (ni >= 0) & (nj >= 0) & (ni < grid.nx) & (nj < grid.ny)
        p_flat = all_ij[inside, 0] * grid.ny + all_ij[inside, 1]
        q_flat = ni[inside] * grid.ny + nj[inside]
        keep = member[q_flat] & (solve_mask[p_flat] | solve_mask[q_flat])
        diff = zflat[p_flat[keep]] - zflat[q_flat[keep]]
        energy += weights[k] * (diff**2).sum(axis=0)
    return energy


# ---------------------------------------------------------------------------
# CSV reporting

REPORT_COLUMNS = (
    "center_x",
    "center_y",
    "radius",
    "operator",
    "energy_before",
    "energy_after",
    "mv_lhs",
    "mv_rhs",
    "max_margin_violation",
    "residual",
)


def report_row(spec: ReplacementSpec, report: ReplacementReport) -> list[str]:
    fmt = lambda v: "%.17g" % v  # noqa: E731 - tiny local formatter
    return [
        fmt(spec.center[0]),
        fmt(spec.center[1]),
        fmt(spec.radius),
        spec.operator_name,
        fmt(report.energy_before),
        fmt(report.energy_after),
        fmt(report.mean_value_lhs),
        fmt(report.mean_value_rhs),
        fmt(report.max_margin_violation),
        fmt(report.solver_residual),
    ]


def append_report(path: str, spec: ReplacementSpec, report: ReplacementReport) -> None:
    """Append one report row to a CSV file, writing the header if new."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(REPORT_COLUMNS)
        writer.writerow(report_row(spec, report))
