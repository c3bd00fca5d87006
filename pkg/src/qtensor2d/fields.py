"""Discrete planar tensor fields: masked grids, boundary data, energy assembly.

Grids are node-based with spacing `h`; nodes carry one of three roles:
outside the domain, interior (all four stencil neighbors in-domain), or
boundary (in-domain with an outside stencil neighbor, or on the array rim).
Fields pin fixed values on boundary nodes and evolve interior nodes only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import tensors
from .elastic import ElasticCoefficients, ElasticForm
from .potential import SENTINEL_MARGIN, BatchDualSolver, BulkParams
from .sphere import SphereRule

__all__ = [
    "NodeRole",
    "Grid2D",
    "QField",
    "EnergyBreakdown",
    "rectangle_grid",
    "disk_grid",
    "make_defect_bc",
    "central_gradient",
    "central_gradients",
    "node_energy_densities",
    "assemble_energy",
    "save_field",
    "load_field",
]


class NodeRole(IntEnum):
    OUTSIDE = 0
    INTERIOR = 1
    BOUNDARY = 2


class Grid2D:
    """Masked uniform grid with precomputed stencil index arrays.

    Nodes live at (i h, j h) for i < nx, j < ny; arrays are indexed [i, j].
    `interior_flat` and the four neighbor arrays index into row-major
    flattened (nx * ny) node storage, in deterministic row-major order.
    """

    def __init__(self, nx: int, ny: int, h: float, kind: str, mask: np.ndarray):
        if nx < 3 or ny < 3:
            raise ValueError("grids need at least 3 nodes per side")
        if not (math.isfinite(h) and h > 0.0):
            raise ValueError("spacing h must be positive")
        if mask.shape != (nx, ny):
            raise ValueError("mask shape must be (nx, ny)")
        self.nx = int(nx)
        self.ny = int(ny)
        self.h = float(h)
        self.kind = str(kind)
        self.mask = np.asarray(mask, dtype=np.int8)
        self._build_indices()
        self._validate()

    def _build_indices(self) -> None:
        interior = np.argwhere(self.mask == NodeRole.INTERIOR)
        boundary = np.argwhere(self.mask == NodeRole.BOUNDARY)
        if interior.size and (
            interior.min() == 0
            or interior[:, 0].max() == self.nx - 1
            or interior[:, 1].max() == self.ny - 1
        ):
            raise ValueError("an interior node lies on the array rim")
        self.interior_ij = interior
        self.boundary_ij = boundary
        self.interior_flat = interior[:, 0] * self.ny + interior[:, 1]
        self.boundary_flat = boundary[:, 0] * self.ny + boundary[:, 1]
        i, j = interior[:, 0], interior[:, 1]
        self.nbr_east = (i + 1) * self.ny + j
        self.nbr_west = (i - 1) * self.ny + j
        self.nbr_north = i * self.ny + (j + 1)
        self.nbr_south = i * self.ny + (j - 1)

    def _validate(self) -> None:
        if self.interior_ij.shape[0] == 0:
            raise ValueError("grid has no interior nodes")
        flat = self.mask.reshape(-1)
        for nbr in (self.nbr_east, self.nbr_west, self.nbr_north, self.nbr_south):
            if (flat[nbr] == NodeRole.OUTSIDE).any():
                raise ValueError("an interior node touches an outside node")
        # the boundary must be a closed ring: every boundary node needs at
        # least two boundary nodes among its 8 neighbors
        bmask = self.mask == NodeRole.BOUNDARY
        padded = np.zeros((self.nx + 2, self.ny + 2), dtype=bool)
        padded[1:-1, 1:-1] = bmask
        count = np.zeros((self.nx, self.ny), dtype=int)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                count += padded[1 + di : self.nx + 1 + di, 1 + dj : self.ny + 1 + dj]
        if (count[bmask] < 2).any():
            raise ValueError("boundary nodes do not form a closed ring")

    @property
    def n_interior(self) -> int:
        return self.interior_ij.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_ij.shape[0]

    def center(self) -> tuple[float, float]:
        return ((self.nx - 1) / 2.0 * self.h, (self.ny - 1) / 2.0 * self.h)

    def coords(self, ij: np.ndarray) -> np.ndarray:
        """Physical coordinates of (…, 2) integer node indices."""
        return np.asarray(ij, dtype=float) * self.h

    def role(self, i: int, j: int) -> NodeRole:
        return NodeRole(int(self.mask[i, j]))


def rectangle_grid(nx: int, ny: int, h: float) -> Grid2D:
    mask = np.full((nx, ny), NodeRole.INTERIOR, dtype=np.int8)
    mask[0, :] = mask[-1, :] = NodeRole.BOUNDARY
    mask[:, 0] = mask[:, -1] = NodeRole.BOUNDARY
    return Grid2D(nx, ny, h, "rectangle", mask)


def disk_grid(n: int, h: float) -> Grid2D:
    """Disk inscribed in an n-by-n node square (radius (n-1)h/2)."""
    if n < 5:
        raise ValueError("disk grids need at least 5 nodes per side")
    c = (n - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    inside = (ii - c) ** 2 + (jj - c) ** 2 <= c**2 + 1e-9
    padded = np.zeros((n + 2, n + 2), dtype=bool)
    padded[1:-1, 1:-1] = inside
    interior = (
        padded[1:-1, 1:-1]
        & padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    mask = np.zeros((n, n), dtype=np.int8)
    mask[interior] = NodeRole.INTERIOR
    mask[inside & ~interior] = NodeRole.BOUNDARY
    return Grid2D(n, n, h, "disk", mask)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Gradient and potential energy parts (h^2-weighted interior sums)."""

    elastic: float
    bulk: float
    total: float


class QField:
    """Tensor field on a grid with pinned boundary values.

    `z` has shape (nx, ny, 5) with outside nodes zeroed; `bc` has shape
    (n_boundary, 5) aligned with `grid.boundary_ij` order and is repinned
    onto `z` by every mutating helper.
    """

    def __init__(self, grid: Grid2D, z: np.ndarray, bc: np.ndarray):
        z = np.asarray(z, dtype=float)
        bc = np.asarray(bc, dtype=float)
        if z.shape != (grid.nx, grid.ny, tensors.N_COMPONENTS):
            raise ValueError("field storage must have shape (nx, ny, 5)")
        if bc.shape != (grid.n_boundary, tensors.N_COMPONENTS):
            raise ValueError("boundary data must have shape (n_boundary, 5)")
        self.grid = grid
        self.z = z.copy()
        self.bc = bc.copy()
        self.z.reshape(-1, tensors.N_COMPONENTS)[grid.boundary_flat] = self.bc
        self.z.reshape(-1, tensors.N_COMPONENTS)[
            (grid.mask == NodeRole.OUTSIDE).reshape(-1)
        ] = 0.0

    @classmethod
    def from_bc(cls, grid: Grid2D, bc: np.ndarray, fill: np.ndarray | None = None) -> "QField":
        z = np.zeros((grid.nx, grid.ny, tensors.N_COMPONENTS))
        if fill is not None:
            z.reshape(-1, tensors.N_COMPONENTS)[grid.interior_flat] = np.asarray(
                fill, dtype=float
            )
        return cls(grid, z, bc)

    def interior(self) -> np.ndarray:
        """Interior node values, shape (n_interior, 5)."""
        return self.z.reshape(-1, tensors.N_COMPONENTS)[self.grid.interior_flat].copy()

    def with_interior(self, values: np.ndarray) -> "QField":
        """New field sharing grid and boundary data, interior replaced."""
        z = self.z.copy()
        z.reshape(-1, tensors.N_COMPONENTS)[self.grid.interior_flat] = np.asarray(
            values, dtype=float
        )
        return QField(self.grid, z, self.bc)

    def indomain_margins(self) -> tuple[np.ndarray, np.ndarray]:
        """(interior margins, boundary margins) of the eigenvalue distance."""
        flat = self.z.reshape(-1, tensors.N_COMPONENTS)
        return (
            np.asarray(tensors.margins(flat[self.grid.interior_flat])),
            np.asarray(tensors.margins(flat[self.grid.boundary_flat])),
        )

    def validate(self, tol: float = 1e-12) -> None:
        """Raise unless boundary values are pinned and no node is unphysical."""
        flat = self.z.reshape(-1, tensors.N_COMPONENTS)
        if not np.array_equal(flat[self.grid.boundary_flat], self.bc):
            raise ValueError("boundary nodes deviate from the pinned data")
        mi, mb = self.indomain_margins()
        for name, margins, nodes in (
            ("interior", mi, self.grid.interior_ij),
            ("boundary", mb, self.grid.boundary_ij),
        ):
            if margins.size and margins.min() < -tol:
                k = int(np.argmin(margins))
                i, j = (int(v) for v in nodes[k])
                raise ValueError(
                    f"{name} node ({i}, {j}) is outside the physical set "
                    f"(margin {margins[k]:.3e})"
                )


def make_defect_bc(grid: Grid2D, s: float, winding: int) -> np.ndarray:
    """Uniaxial boundary data with a planar director winding `winding`/2 times.

    On a disk the director angle is winding/2 times the polar angle of each
    boundary node; the tensor is single-valued for odd winding numbers
    because the director enters quadratically.  Rectangles only support
    winding 0 (constant data).
    """
    if not -0.5 < s < 1.0:
        raise ValueError("the uniaxial strength must lie in (-1/2, 1)")
    if not float(winding).is_integer():
        raise ValueError("winding must be an integer")
    winding = int(winding)
    if grid.kind != "disk" and winding != 0:
        raise ValueError(f"winding {winding} on a {grid.kind} grid is unsupported")
    cx, cy = grid.center()
    xy = grid.coords(grid.boundary_ij)
    theta = np.arctan2(xy[:, 1] - cy, xy[:, 0] - cx)
    half = 0.5 * winding * theta
    out = np.empty((grid.n_boundary, tensors.N_COMPONENTS))
    for k in range(grid.n_boundary):
        director = np.array([math.cos(half[k]), math.sin(half[k]), 0.0])
        out[k] = tensors.uniaxial(s, director)
    return out


def central_gradients(field: QField) -> np.ndarray:
    """Second-order central differences on all interior nodes, (n, 5, 2)."""
    grid = field.grid
    flat = field.z.reshape(-1, tensors.N_COMPONENTS)
    inv = 1.0 / (2.0 * grid.h)
    d = np.empty((grid.n_interior, tensors.N_COMPONENTS, 2))
    d[:, :, 0] = (flat[grid.nbr_east] - flat[grid.nbr_west]) * inv
    d[:, :, 1] = (flat[grid.nbr_north] - flat[grid.nbr_south]) * inv
    return d


def central_gradient(field: QField, node: tuple[int, int]) -> np.ndarray:
    """Central difference at one interior node, shape (5, 2)."""
    i, j = node
    if field.grid.role(i, j) is not NodeRole.INTERIOR:
        raise ValueError(f"node ({i}, {j}) is not interior")
    flat = field.z.reshape(-1, tensors.N_COMPONENTS)
    ny = field.grid.ny
    inv = 1.0 / (2.0 * field.grid.h)
    d = np.empty((tensors.N_COMPONENTS, 2))
    d[:, 0] = (flat[(i + 1) * ny + j] - flat[(i - 1) * ny + j]) * inv
    d[:, 1] = (flat[i * ny + (j + 1)] - flat[i * ny + (j - 1)]) * inv
    return d


def node_energy_densities(
    field: QField,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    solver: BatchDualSolver | None = None,
    beta0: np.ndarray | None = None,
    form: ElasticForm | None = None,
) -> dict:
    """Per-interior-node energy densities and solver state.

    Returns elastic and bulk density arrays (bulk +inf where the margin
    sentinel or an unconverged dual solve strikes), interior margins, and
    the dual exponents for warm starts.
    """
    field.validate()
    grid = field.grid
    zin = field.interior()
    margins = np.asarray(tensors.margins(zin))
    if form is None:
        form = ElasticForm(coeffs)
    d = central_gradients(field)
    elastic_vals = form.value(zin, d)
    bulk_vals = np.full(grid.n_interior, math.inf)
    beta = np.zeros((grid.n_interior, tensors.N_COMPONENTS))
    feasible = margins >= SENTINEL_MARGIN
    if feasible.all():
        if solver is None:
            solver = BatchDualSolver(rule)
        out = solver.solve(zin, beta0=beta0)
        beta = out["beta"]
        good = out["converged"]
        bulk_vals[good] = (
            out["value"][good]
            - params.kappa * np.asarray(tensors.frobenius_sq(zin))[good]
            + params.b0
        )
    return {
        "elastic": elastic_vals,
        "bulk": bulk_vals,
        "margins": margins,
        "beta": beta,
        "feasible": bool(feasible.all()),
    }


def assemble_energy(
    field: QField,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    solver: BatchDualSolver | None = None,
    beta0: np.ndarray | None = None,
    form: ElasticForm | None = None,
) -> EnergyBreakdown:
    """Node-wise h^2 sum of elastic and bulk densities over interior nodes.

    The total is +inf when any interior node trips the margin sentinel or
    its dual solve fails (the field has effectively left the feasible
    region); unphysical nodes raise instead, naming the node.
    """
    dens = node_energy_densities(
        field, coeffs, params, rule, solver=solver, beta0=beta0, form=form
    )
    cell = field.grid.h**2
    elastic_total = float(dens["elastic"].sum() * cell)
    if not np.isfinite(dens["bulk"]).all():
        return EnergyBreakdown(elastic=elastic_total, bulk=math.inf, total=math.inf)
    bulk_total = float(dens["bulk"].sum() * cell)
    return EnergyBreakdown(
        elastic=elastic_total, bulk=bulk_total, total=elastic_total + bulk_total
    )


_HEADER_MAGIC = "# qfield v1"


def resample_field(field: QField, grid: Grid2D, bc: np.ndarray) -> QField:
    """Transfer a field onto another grid by bilinear interpolation.

    Both grids must share the physical origin (node (i, j) at (i*h, j*h)).
    Interpolated states are convex combinations of source states, so a
    physical source field stays physical.  Source nodes outside the domain
    are first filled with averages of their in-domain neighbors so that
    cells straddling a curved rim have usable corners; the target's
    boundary rows are taken from `bc` verbatim.
    """
    src = field.grid
    filled = field.z.copy()
    known = src.mask != NodeRole.OUTSIDE
    for _ in range(3):
        if known.all():
            break
        acc = np.zeros_like(filled)
        cnt = np.zeros((src.nx, src.ny))
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            shifted = np.zeros_like(known)
            vals = np.zeros_like(filled)
            s_src = (
                slice(max(di, 0), src.nx + min(di, 0)),
                slice(max(dj, 0), src.ny + min(dj, 0)),
            )
            s_dst = (
                slice(max(-di, 0), src.nx + min(-di, 0)),
                slice(max(-dj, 0), src.ny + min(-dj, 0)),
            )
            shifted[s_dst] = known[s_src]
            vals[s_dst] = filled[s_src]
            acc += np.where(shifted[..., None], vals, 0.0)
            cnt += shifted
        fresh = (~known) & (cnt > 0)
        filled[fresh] = acc[fresh] / cnt[fresh][:, None]
        known |= fresh

    xy = grid.interior_ij * grid.h
    gx = xy[:, 0] / src.h
    gy = xy[:, 1] / src.h
    ic = np.clip(np.floor(gx).astype(int), 0, src.nx - 2)
    jc = np.clip(np.floor(gy).astype(int), 0, src.ny - 2)
    fx = np.clip(gx - ic, 0.0, 1.0)[:, None]
    fy = np.clip(gy - jc, 0.0, 1.0)[:, None]
    interp = (
        filled[ic, jc] * (1 - fx) * (1 - fy)
        + filled[ic + 1, jc] * fx * (1 - fy)
        + filled[ic, jc + 1] * (1 - fx) * fy
        + filled[ic + 1, jc + 1] * fx * fy
    )
    return QField.from_bc(grid, bc, fill=interp)


def save_field(field: QField, path: str) -> None:
    """Plain-text serialization: header plus one CSV row per in-domain node.

    Values are written with 17 significant digits, which round-trips
    binary doubles exactly.
    """
    grid = field.grid
    flat = field.z.reshape(-1, tensors.N_COMPONENTS)
    order = np.sort(np.concatenate([grid.interior_flat, grid.boundary_flat]))
    lines = [
        _HEADER_MAGIC,
        f"# nx={grid.nx} ny={grid.ny} h={grid.h:.17g} kind={grid.kind}",
        "# columns: i,j,z1,z2,z3,z4,z5",
    ]
    for node in order:
        i, j = divmod(int(node), grid.ny)
        vals = ",".join(f"{v:.17g}" for v in flat[node])
        lines.append(f"{i},{j},{vals}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path: str) -> QField:
    """Rebuild a field (grid, values, boundary data) from `save_field` output."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _HEADER_MAGIC:
        raise ValueError(f"{path} is not a field file (missing '{_HEADER_MAGIC}')")
    meta = dict(part.split("=", 1) for part in lines[1].removeprefix("# ").split())
    nx, ny, h, kind = int(meta["nx"]), int(meta["ny"]), float(meta["h"]), meta["kind"]
    if kind == "rectangle":
        grid = rectangle_grid(nx, ny, h)
    elif kind == "disk":
        if nx != ny:
            raise ValueError("disk grids must be square")
        grid = disk_grid(nx, h)
    else:
        raise ValueError(f"unknown grid kind {kind!r}")
    z = np.zeros((nx, ny, tensors.N_COMPONENTS))
    seen = 0
    for line in lines[3:]:
        if not line:
            continue
        parts = line.split(",")
        i, j = int(parts[0]), int(parts[1])
        z[i, j] = [float(v) for v in parts[2:]]
        seen += 1
    expected = grid.n_interior + grid.n_boundary
    if seen != expected:
        raise ValueError(f"expected {expected} node rows, found {seen}")
    bc = z.reshape(-1, tensors.N_COMPONENTS)[grid.boundary_flat].copy()
    return QField(grid, z, bc)
