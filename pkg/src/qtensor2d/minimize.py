"""Descent minimization of the discrete energy over interior nodes.

The singular bulk potential acts as an automatic barrier: any step that
would push a node's eigenvalues against the physical bounds either trips
the margin sentinel (rejected before evaluating the potential) or lands
outside the moment hull where the dual value is unbounded (+inf energy,
rejected by the line search).  Accepted iterates therefore stay strictly
inside the physical set.

Gradients are exact derivatives of the assembled discrete energy: the
elastic part by the adjoint of the central-difference stencil, the bulk
part through the dual multipliers (the potential's gradient in the
component metric) plus the quadratic coupling term.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import tensors
from .elastic import ElasticCoefficients, ElasticForm
from .fields import Grid2D, QField, central_gradients
from .potential import SENTINEL_MARGIN, BatchDualSolver, BulkParams
from .replacement import _solve_stencil, _StencilSystem
from .sphere import SphereRule

__all__ = [
    "SolveConfig",
    "SolveTrace",
    "TraceRow",
    "TRACE_COLUMNS",
    "BarrierBreachError",
    "LineSearchError",
    "energy_gradient",
    "initial_field",
    "minimize",
    "AuditReport",
    "perturbation_audit",
    "write_trace",
]


@dataclass(frozen=True)
class SolveConfig:
    """First-order solve settings.

    ``grad_tol`` applies to the spacing-normalized gradient (sup-norm of
    the raw gradient divided by h^2), which is grid-independent because
    raw gradient entries of the h^2-weighted energy scale with the cell
    area.  ``initial_step`` caps the first line-search trial; the search
    then backtracks by ``shrink`` under the ``armijo`` sufficient-decrease
    test.
    """

    max_iters: int = 2000
    grad_tol: float = 1e-6
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    method: str = "ncg"

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not (self.grad_tol > 0.0):
            raise ValueError("grad_tol must be positive")
        if not (self.initial_step > 0.0 and math.isfinite(self.initial_step)):
            raise ValueError("initial_step must be positive")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must lie in (0, 1)")
        if not (0.0 < self.armijo <= 0.5):
            raise ValueError("armijo must lie in (0, 0.5]")
        if self.method not in ("ncg", "gd"):
            raise ValueError("method must be 'ncg' or 'gd'")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    total: float
    elastic: float
    bulk: float
    grad_norm: float  # spacing-normalized sup-norm
    min_margin: float
    step: float  # step length used to reach this iterate (0 for the first)


@dataclass
class SolveTrace:
    rows: list[TraceRow] = dataclass_field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)


TRACE_COLUMNS = ("iter", "total", "elastic", "bulk", "grad_norm", "min_margin", "step")


def write_trace(trace: SolveTrace, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in trace.rows:
            writer.writerow(
                [str(r.iteration)]
                + [
                    "%.17g" % v
                    for v in (
                        r.total,
                        r.elastic,
                        r.bulk,
                        r.grad_norm,
                        r.min_margin,
                        r.step,
                    )
                ]
            )


class BarrierBreachError(RuntimeError):
    """A node sits against the physical bounds (or outside the moment
    hull), where the energy gradient is not defined."""


class LineSearchError(RuntimeError):
    """Backtracking failed to find an acceptable step."""

    def __init__(self, message: str, trace: SolveTrace):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# exact gradient of the assembled energy


def _elastic_gradient(
    field: QField, form: ElasticForm, d: np.ndarray
) -> np.ndarray:
    """Adjoint of the central-difference elastic assembly (raw, h^2-weighted)."""
    grid = field.grid
    h = grid.h
    zin = field.interior()
    gd = form.grad_d(zin, d)  # (n, 5, 2)
    gz = form.grad_z(zin, d)  # (n, 5)
    full = np.zeros((grid.nx, grid.ny, tensors.N_COMPONENTS, 2))
    ii, jj = grid.interior_ij[:, 0], grid.interior_ij[:, 1]
    full[ii, jj] = gd
    recv = np.zeros((grid.nx, grid.ny, tensors.N_COMPONENTS))
    recv[1:, :] += full[:-1, :, :, 0]
    recv[:-1, :] -= full[1:, :, :, 0]
    recv[:, 1:] += full[:, :-1, :, 1]
    recv[:, :-1] -= full[:, 1:, :, 1]
    grad = recv[ii, jj] / (2.0 * h) + gz
    return grad * h * h


def _gradient_parts(
    field: QField,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    solver: BatchDualSolver | None,
    beta0: np.ndarray | None,
    form: ElasticForm | None,
    *,
    presolved: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    field.validate()
    zin = field.interior()
    margins = np.asarray(tensors.margins(zin))
    if margins.min() < SENTINEL_MARGIN:
        raise BarrierBreachError(
            f"a node margin ({margins.min():.3e}) is below the sentinel; "
            "the potential gradient is not defined there"
        )
    if form is None:
        form = ElasticForm(coeffs)
    if solver is None:
        solver = BatchDualSolver(rule)
    d = central_gradients(field)
    grad = _elastic_gradient(field, form, d)
    if presolved and beta0 is not None:
        # the caller's multiplier already solves the moment problem at this
        # exact state (energy evaluation converged it), so rerunning the
        # dual solve would only reconfirm a residual below tolerance
        multiplier = beta0
    else:
        out = solver.solve(zin, beta0=beta0)
        if not out["converged"].all():
            raise BarrierBreachError(
                "a dual solve failed to converge; the state sits outside the "
                "quadrature moment hull where the potential is unbounded"
            )
        multiplier = out["beta"]
    force = (multiplier - 2.0 * params.kappa * zin) @ tensors.COMPONENT_METRIC
    grad += field.grid.h**2 * force
    return grad, multiplier


def energy_gradient(
    field: QField,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    *,
    solver: BatchDualSolver | None = None,
    beta0: np.ndarray | None = None,
    form: ElasticForm | None = None,
) -> np.ndarray:
    """Exact gradient of the assembled energy w.r.t. interior components.

    Shape (n_interior, 5), ordered like the grid's interior nodes.
    """
    grad, _ = _gradient_parts(field, coeffs, params, rule, solver, beta0, form)
    return grad


# ---------------------------------------------------------------------------
# initialization


def initial_field(
    grid: Grid2D,
    bc: np.ndarray,
    *,
    scale: float = 0.9,
    tol: float = 1e-12,
    max_sweeps: int = 200_000,
) -> QField:
    """Channel-wise harmonic extension of the boundary data, pulled toward
    the isotropic state to guarantee strict interiority.

    The extension's values are convex combinations of the boundary data,
    so they are physical whenever the data is; scaling the interior by
    ``scale`` then mixes in the isotropic state (margin 1/3), which only
    deepens every margin.
    """
    base = QField.from_bc(grid, bc)
    values = base.z.reshape(-1, tensors.N_COMPONENTS).copy()
    ii, jj = grid.interior_ij[:, 0], grid.interior_ij[:, 1]
    nbr = np.stack(
        [
            grid.nbr_east,
            grid.nbr_west,
            grid.nbr_north,
            grid.nbr_south,
            (ii + 1) * grid.ny + (jj + 1),
            (ii - 1) * grid.ny + (jj - 1),
            (ii - 1) * grid.ny + (jj + 1),
            (ii + 1) * grid.ny + (jj - 1),
        ],
        axis=1,
    )
    weights = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    colors = (ii % 2) * 2 + (jj % 2)
    system = _StencilSystem(
        solve_flat=grid.interior_flat, nbr=nbr, weights=weights, colors=colors
    )
    # start from the boundary mean for a head start
    values[grid.interior_flat] = bc.mean(axis=0)
    _solve_stencil(system, values, tol, max_sweeps)
    interior = values[grid.interior_flat] * scale
    return base.with_interior(interior)


# ---------------------------------------------------------------------------
# the descent loop


@dataclass
class _EvalResult:
    total: float
    elastic: float
    bulk: float
    min_margin: float
    beta: np.ndarray | None


def _evaluate(
    grid: Grid2D,
    base_field: QField,
    zin: np.ndarray,
    form: ElasticForm,
    params: BulkParams,
    solver: BatchDualSolver,
    beta0: np.ndarray | None,
) -> _EvalResult:
    margins = np.asarray(tensors.margins(zin))
    min_margin = float(margins.min())
    if min_margin < SENTINEL_MARGIN:
        return _EvalResult(math.inf, math.nan, math.inf, min_margin, None)
    trial = base_field.with_interior(zin)
    d = central_gradients(trial)
    elastic = float(form.value(zin, d).sum() * grid.h**2)
    out = solver.solve(zin, beta0=beta0)
    if not out["converged"].all():
        return _EvalResult(math.inf, elastic, math.inf, min_margin, None)
    frob = np.asarray(tensors.frobenius_sq(zin))
    bulk_vals = out["value"] - params.kappa * frob + params.b0
    bulk = float(bulk_vals.sum() * grid.h**2)
    return _EvalResult(elastic + bulk, elastic, bulk, min_margin, out["beta"])


def minimize(
    field: QField,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    config: SolveConfig | None = None,
    *,
    solver: BatchDualSolver | None = None,
) -> tuple[QField, SolveTrace]:
    """First-order descent with the potential acting as a barrier.

    Returns the final field and the per-iteration trace.  Terminates when
    the spacing-normalized gradient sup-norm falls below ``grad_tol`` or
    after ``max_iters`` accepted iterations; raises ``LineSearchError``
    (with the trace attached) if backtracking fails 60 times in a row.
    """
    if config is None:
        config = SolveConfig()
    field.validate()
    grid = field.grid
    h_sq = grid.h**2
    if solver is None:
        solver = BatchDualSolver(rule)
    form = ElasticForm(coeffs)
    zin = field.interior()
    state = _evaluate(grid, field, zin, form, params, solver, None)
    if not math.isfinite(state.total):
        raise BarrierBreachError(
            "the initial field is outside the feasible region; start from "
            "initial_field(grid, bc)"
        )
    trace = SolveTrace()
    grad, beta = _gradient_parts(
        field.with_interior(zin),
        coeffs,
        params,
        rule,
        solver,
        state.beta,
        form,
        presolved=True,
    )
    scaled = grad / h_sq
    direction = -scaled
    prev_scaled = scaled
    alpha_prev = config.initial_step
    restart = False
    for iteration in range(config.max_iters + 1):
        grad_norm = float(np.abs(scaled).max())
        trace.append(
            TraceRow(
                iteration=iteration,
                total=state.total,
                elastic=state.elastic,
                bulk=state.bulk,
                grad_norm=grad_norm,
                min_margin=state.min_margin,
                step=0.0 if iteration == 0 else alpha_prev,
            )
        )
        if grad_norm < config.grad_tol or iteration == config.max_iters:
            break
        if iteration > 0:
            if config.method == "ncg" and not restart:
                num = float(np.vdot(scaled, scaled - prev_scaled))
                den = float(np.vdot(prev_scaled, prev_scaled))
                beta_pr = max(0.0, num / den) if den > 0.0 else 0.0
                direction = -scaled + beta_pr * direction
                if float(np.vdot(scaled, direction)) >= 0.0:
                    direction = -scaled
            else:
                direction = -scaled
        dirderiv = float(np.vdot(grad, direction))
        # A stagnation restart forgets the step memory: once backtracking
        # has collapsed alpha, doubling it back up would take dozens of
        # iterations during which the conjugate direction goes stale and
        # accepted steps stop moving the energy, freezing the gradient.
        if restart:
            alpha = config.initial_step
        else:
            alpha = min(config.initial_step, 2.0 * alpha_prev)
        accepted = None
        for _ in range(60):
            trial_z = zin + alpha * direction
            trial = _evaluate(grid, field, trial_z, form, params, solver, beta)
            if (
                math.isfinite(trial.total)
                and trial.total <= state.total + config.armijo * alpha * dirderiv
            ):
                accepted = (trial_z, trial)
                break
            alpha *= config.shrink
        if accepted is None:
            raise LineSearchError(
                f"line search failed after 60 halvings at iteration "
                f"{iteration} (gradient norm {grad_norm:.3e})",
                trace,
            )
        decrease = state.total - accepted[1].total
        noise_floor = 8.0 * np.finfo(float).eps * (1.0 + abs(state.total))
        restart = decrease < noise_floor and alpha < 1e-6 * config.initial_step
        zin, state = accepted
        alpha_prev = alpha
        beta = state.beta
        prev_scaled = scaled
        grad, beta = _gradient_parts(
            field.with_interior(zin),
            coeffs,
            params,
            rule,
            solver,
            beta,
            form,
            presolved=True,
        )
        scaled = grad / h_sq
    return field.with_interior(zin), trace


# ---------------------------------------------------------------------------
# stationarity audit


@dataclass(frozen=True)
class AuditReport:
    """Energy changes under random compactly supported perturbations.

    ``deltas`` holds E(perturbed) - E(field); +inf entries mean the trial
    left the feasible region (the barrier rejected it).  A converged
    local minimizer should show ``min_delta`` no lower than roundoff.
    """

    deltas: np.ndarray
    min_delta: float
    n_infeasible: int


def perturbation_audit(
    field: QField,
    coeffs: ElasticCoefficients,
    params: BulkParams,
    rule: SphereRule,
    rng: np.random.Generator,
    *,
    count: int = 100,
    amplitude: float = 1e-3,
    solver: BatchDualSolver | None = None,
) -> AuditReport:
    """Probe local minimality with smooth localized perturbations.

    Each trial adds a bump of radius 2h..6h around a random interior node
    in a random component direction with sup-amplitude ``amplitude``.
    """
    field.validate()
    grid = field.grid
    if solver is None:
        solver = BatchDualSolver(rule)
    form = ElasticForm(coeffs)
    zin = field.interior()
    base = _evaluate(grid, field, zin, form, params, solver, None)
    if not math.isfinite(base.total):
        raise BarrierBreachError("the audited field is outside the feasible region")
    coords = grid.interior_ij * grid.h
    deltas = np.empty(count)
    for k in range(count):
        pick = int(rng.integers(grid.n_interior))
        radius = grid.h * (2.0 + 4.0 * rng.random())
        vec = rng.standard_normal(tensors.N_COMPONENTS)
        vec *= amplitude / np.abs(vec).max()
        r_sq = ((coords - coords[pick]) ** 2).sum(axis=1)
        bump = np.clip(1.0 - r_sq / radius**2, 0.0, None) ** 2
        trial_z = zin + bump[:, None] * vec
        trial = _evaluate(grid, field, trial_z, form, params, solver, base.beta)
        deltas[k] = trial.total - base.total
    finite = np.isfinite(deltas)
    return AuditReport(
        deltas=deltas,
        min_delta=float(deltas[finite].min()) if finite.any() else math.inf,
        n_infeasible=int((~finite).sum()),
    )
