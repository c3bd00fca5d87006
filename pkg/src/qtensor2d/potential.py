"""Singular bulk potential evaluated through its dual moment problem.

The potential at a physical tensor Q is the minimal entropy of a unit-mass
density on the sphere whose centered second moments equal Q.  The minimizer
is an exponential (Boltzmann) family rho(p) = exp(p . B p) / Z, so the value
is obtained by solving the moment-match equations for the symmetric traceless
exponent B with Newton iterations and reading off the dual objective

    value = tr(B Q) - log Z(B),        Z(B) = integral of exp(p . B p).

All integrals use a fixed sphere rule, which makes the evaluated potential a
well-defined smooth convex function of Q (the quadrature-realized potential).
Its domain is the interior of the convex hull of the rule's node moments;
outside that hull the dual supremum is infinite, which the solver reports
with a certified lower bound.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensors
from .sphere import SphereRule, build_rule

F_ISOTROPIC = -math.log(4.0 * math.pi)

# Margin below which the bulk evaluator returns the +inf sentinel instead of
# attempting a dual solve.
SENTINEL_MARGIN = 1e-6

_METRIC = tensors.COMPONENT_METRIC


class OutOfDomainError(ValueError):
    """Raised when a dual solve is requested outside the physical set."""


class DualConvergenceError(RuntimeError):
    """Newton failed to reach tolerance; carries a certified lower bound.

    The dual objective evaluated at any exponent is a rigorous lower bound
    for the supremum, so `value_lower_bound` is trustworthy even when the
    iteration diverges (which is the genuine behavior outside the moment
    hull of the quadrature rule).
    """

    def __init__(self, message: str, residual: float, value_lower_bound: float):
        super().__init__(message)
        self.residual = residual
        self.value_lower_bound = value_lower_bound


@dataclass(frozen=True)
class SingularEval:
    """Result of one dual solve."""

    value: float
    multiplier: np.ndarray  # exponent B in 5-component coordinates
    log_z: float
    residual: float
    iterations: int

    def gradient(self) -> np.ndarray:
        """Derivative of the value with respect to the 5 tensor components."""
        return _METRIC @ self.multiplier


@dataclass(frozen=True)
class BulkParams:
    """Bulk couplings: quadratic strength kappa and normalization offset b0."""

    kappa: float
    b0: float

    def __post_init__(self):
        if not self.kappa >= 0.0:
            raise ValueError("kappa must be non-negative")
        if not math.isfinite(self.b0):
            raise ValueError("b0 must be finite")


class _RuleTables:
    """Per-rule arrays shared by every dual solve at that rule."""

    def __init__(self, rule: SphereRule):
        p = rule.nodes
        self.rule = rule
        self.w = rule.weights
        # chi_a(p): centered second-moment components in the 5-vector order
        self.chi = np.column_stack(
            [
                p[:, 0] ** 2 - 1.0 / 3.0,
                p[:, 0] * p[:, 1],
                p[:, 0] * p[:, 2],
                p[:, 1] ** 2 - 1.0 / 3.0,
                p[:, 1] * p[:, 2],
            ]
        )
        # psi_b(p) = p . BASIS[b] p, the exponent basis; equals chi @ METRIC
        self.psi = self.chi @ _METRIC
        # squared coordinates for the diagonal-frame presolve
        self.p_sq = p**2
        # unique products chi_a chi_b (a <= b) so the Newton Jacobian reduces
        # to one BLAS matmul instead of a per-node einsum
        self.pair_idx = [(a, b) for a in range(5) for b in range(a, 5)]
        self.chi_pairs = np.column_stack(
            [self.chi[:, a] * self.chi[:, b] for a, b in self.pair_idx]
        )


_TABLE_CACHE: dict[int, _RuleTables] = {}


def _tables(rule: SphereRule) -> _RuleTables:
    key = id(rule)
    if key not in _TABLE_CACHE:
        if len(_TABLE_CACHE) > 32:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[key] = _RuleTables(rule)
    return _TABLE_CACHE[key]


def _log_weights(tab: _RuleTables, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized Boltzmann weights (n_nodes, count) and log Z (count,)."""
    s = tab.psi @ beta.T  # (nodes, count)
    shift = s.max(axis=0)
    e = np.exp(s - shift)
    zt = tab.w @ e
    log_z = shift + np.log(zt)
    return (e * tab.w[:, None]) / zt, log_z


def _moments(tab: _RuleTables, wn: np.ndarray) -> np.ndarray:
    """Centered second moments (count, 5) under normalized weights."""
    return wn.T @ tab.chi


def _dual_value(z: np.ndarray, beta: np.ndarray, log_z: np.ndarray) -> np.ndarray:
    """Dual objective tr(B Q) - log Z for traceless exponents."""
    return np.einsum("...a,ab,...b->...", beta, _METRIC, z) - log_z


def dual_objective(z: np.ndarray, beta: np.ndarray, rule: SphereRule) -> np.ndarray:
    """Dual objective at an arbitrary exponent: a lower bound for the value.

    By weak duality every exponent yields `beta . K z - log Z(beta)` below
    the supremum, with equality exactly at the matching exponent.
    """
    z = np.asarray(z, dtype=float)
    beta = np.asarray(beta, dtype=float)
    tab = _tables(rule)
    _, log_z = _log_weights(tab, np.atleast_2d(beta))
    out = _dual_value(np.atleast_2d(z), np.atleast_2d(beta), log_z)
    return out if beta.ndim > 1 else out[0]


def moment_residual(z: np.ndarray, beta: np.ndarray, rule: SphereRule) -> np.ndarray:
    """Frobenius norm of the moment mismatch for exponent(s) beta at target z.

    Evaluated directly from the rule; usable as an independent check on any
    solver output.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    tab = _tables(rule)
    wn, _ = _log_weights(tab, beta)
    r = _moments(tab, wn) - z
    out = np.sqrt(np.einsum("na,ab,nb->n", r, _METRIC, r))
    return out if out.shape[0] > 1 else out[0]


class BatchDualSolver:
    """Vectorized damped Newton for many dual solves sharing one rule.

    The iteration runs in the fixed lab frame on the 5 exponent components,
    so the value, multiplier, and gradient all describe one single smooth
    function of the tensor components.  Nodes that fail from a cold start
    are retried from a diagonal-frame presolve before being declared
    divergent.
    """

    def __init__(self, rule: SphereRule, tol: float = 1e-11, max_iter: int = 80):
        if not tol > 0.0:
            raise ValueError("tol must be positive")
        self.rule = rule
        self.tab = _tables(rule)
        self.tol = tol
        self.max_iter = max_iter

    def _residual_norm(self, r: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(0.0, np.einsum("na,ab,nb->n", r, _METRIC, r)))

    def _newton(
        self, z: np.ndarray, beta: np.ndarray, max_iter: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
        """Damped Newton from the given start; returns state for all rows."""
        tab = self.tab
        count = z.shape[0]
        beta = beta.copy()
        wn, log_z = _log_weights(tab, beta)
        m = _moments(tab, wn)
        res = self._residual_norm(m - z)
        best_bound = _dual_value(z, beta, log_z)
        iterations = 0
        for iterations in range(1, max_iter + 1):
            active = res > self.tol
            if not np.any(active):
                break
            idx = np.flatnonzero(active)
            za, ba, wa = z[idx], beta[idx], wn[:, idx]
            ma = m[idx]
            # Jacobian of the moment map: Cov(chi, chi) @ METRIC
            flat = wa.T @ tab.chi_pairs
            second = np.empty((len(idx), 5, 5))
            for col, (a, b) in enumerate(tab.pair_idx):
                second[:, a, b] = flat[:, col]
                second[:, b, a] = flat[:, col]
            cov = second - ma[:, :, None] * ma[:, None, :]
            jac = cov @ _METRIC
            rhs = za - ma
            try:
                step = np.linalg.solve(jac, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                jac = jac + 1e-13 * np.eye(5)[None, :, :]
                step = np.linalg.solve(jac, rhs[..., None])[..., 0]
            bad = ~np.isfinite(step).all(axis=1)
            if np.any(bad):
                step[bad] = rhs[bad]
            # per-row backtracking on the residual norm
            alpha = np.ones(len(idx))
            res_a = res[idx]
            new_beta = ba + step
            wn_a, logz_a = _log_weights(tab, new_beta)
            new_m = _moments(tab, wn_a)
            new_res = self._residual_norm(new_m - za)
            for _ in range(30):
                worse = new_res > (1.0 - 1e-4 * alpha) * res_a
                if not np.any(worse):
                    break
                alpha[worse] *= 0.5
                trial = ba[worse] + alpha[worse, None] * step[worse]
                wn_t, logz_t = _log_weights(tab, trial)
                new_beta[worse] = trial
                wn_a[:, worse] = wn_t
                logz_a[worse] = logz_t
                new_m[worse] = _moments(tab, wn_t)
                new_res[worse] = self._residual_norm(new_m[worse] - za[worse])
            beta[idx] = new_beta
            wn[:, idx] = wn_a
            m[idx] = new_m
            res[idx] = new_res
            bound = _dual_value(za, new_beta, logz_a)
            best_bound[idx] = np.maximum(best_bound[idx], bound)
        _, log_z = _log_weights(tab, beta)
        return beta, res, log_z, best_bound, iterations

    def _presolve_rows(self, z: np.ndarray) -> np.ndarray:
        """Diagonal-frame presolve for each row; returns lab-frame exponents."""
        out = np.zeros_like(z)
        for i, zi in enumerate(z):
            sys = tensors.eigensystem(zi)
            diag = solve_diagonal(
                sys.lambdas, self.rule, tol=max(self.tol, 1e-10), max_iter=self.max_iter
            )
            if diag is None:
                continue
            b_mat = sys.frame @ np.diag(diag) @ sys.frame.T
            b_mat = 0.5 * (b_mat + b_mat.T)
            out[i] = tensors.matrix_to_z(b_mat)
        return out

    def solve(
        self, z: np.ndarray, beta0: np.ndarray | None = None
    ) -> dict[str, np.ndarray]:
        """Solve all rows of z (count, 5); warm start from beta0 if given."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if beta0 is None:
            beta0 = np.zeros_like(z)
        else:
            beta0 = np.atleast_2d(np.asarray(beta0, dtype=float)).copy()
        beta, res, log_z, bound, iters = self._newton(z, beta0, self.max_iter)
        failed = np.flatnonzero(res > self.tol)
        if failed.size:
            retry_start = self._presolve_rows(z[failed])
            beta_r, res_r, log_z_r, bound_r, _ = self._newton(
                z[failed], retry_start, self.max_iter
            )
            better = res_r < res[failed]
            upd = failed[better]
            beta[upd] = beta_r[better]
            res[upd] = res_r[better]
            log_z[upd] = log_z_r[better]
            bound[failed] = np.maximum(bound[failed], bound_r)
        value = _dual_value(z, beta, log_z)
        converged = res <= self.tol
        return {
            "value": value,
            "beta": beta,
            "log_z": log_z,
            "residual": res,
            "converged": converged,
            "lower_bound": np.maximum(bound, value),
            "iterations": np.full(z.shape[0], iters),
        }

    def gradients(self, beta: np.ndarray) -> np.ndarray:
        """Value gradients with respect to tensor components, row-wise."""
        return beta @ _METRIC


def solve_diagonal(
    lambdas: np.ndarray, rule: SphereRule, tol: float = 1e-11, max_iter: int = 80
) -> np.ndarray | None:
    """Solve the two-unknown diagonal dual problem for sorted eigenvalues.

    Returns the traceless diagonal exponent (3,) or None on divergence.
    The exponent acts as u1 p1^2 + u2 p2^2 during the solve; the traceless
    gauge is restored at the end (constants shift log Z, not the density).
    """
    tab = _tables(rule)
    target = np.asarray(lambdas, dtype=float) + 1.0 / 3.0
    u = np.zeros(2)
    p_sq = tab.p_sq
    w = tab.w

    def moments(u):
        s = p_sq[:, 0] * u[0] + p_sq[:, 1] * u[1]
        s = s - s.max()
        e = np.exp(s) * w
        zt = e.sum()
        wn = e / zt
        m = wn @ p_sq
        return wn, m

    wn, m = moments(u)
    res = np.linalg.norm(m - target)
    for _ in range(max_iter):
        if res <= tol:
            break
        cov = (wn[:, None] * p_sq[:, :2]).T @ p_sq[:, :2] - np.outer(m[:2], m[:2])
        try:
            step = np.linalg.solve(cov, target[:2] - m[:2])
        except np.linalg.LinAlgError:
            return None
        alpha = 1.0
        for _ in range(40):
            trial = u + alpha * step
            wn_t, m_t = moments(trial)
            res_t = np.linalg.norm(m_t - target)
            if res_t < (1.0 - 1e-4 * alpha) * res:
                u, wn, m, res = trial, wn_t, m_t, res_t
                break
            alpha *= 0.5
        else:
            return None
    if res > tol:
        return None
    shift = (u[0] + u[1]) / 3.0
    return np.array([u[0] - shift, u[1] - shift, -shift])


def solve_dual(
    z: np.ndarray,
    rule: SphereRule,
    tol: float = 1e-11,
    max_iter: int = 80,
    method: str = "diag",
) -> SingularEval:
    """Dual solve for one tensor: exponent, value, and achieved residual.

    `method="diag"` (default) seeds the lab-frame Newton polish from a
    diagonal solve in the tensor's eigenframe; `method="full"` runs the
    5-component Newton from zero as an independent route.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (tensors.N_COMPONENTS,):
        raise ValueError("solve_dual expects a single component vector")
    if method not in ("diag", "full"):
        raise ValueError(f"unknown method {method!r}")
    verdict = tensors.classify(z)
    if verdict.region is not tensors.Region.INTERIOR:
        raise OutOfDomainError(
            f"tensor is {verdict.region.value} (margin {verdict.margin:.3e}); "
            "the potential is only finite on the open physical set"
        )
    solver = BatchDualSolver(rule, tol=tol, max_iter=max_iter)
    beta0 = None
    if method == "diag":
        beta0 = solver._presolve_rows(z[None, :])
    out = solver.solve(z[None, :], beta0=beta0)
    if not out["converged"][0]:
        raise DualConvergenceError(
            f"dual Newton stalled at residual {out['residual'][0]:.3e} "
            f"(margin {verdict.margin:.3e}); the moment target may lie outside "
            "the quadrature rule's moment hull",
            residual=float(out["residual"][0]),
            value_lower_bound=float(out["lower_bound"][0]),
        )
    return SingularEval(
        value=float(out["value"][0]),
        multiplier=out["beta"][0],
        log_z=float(out["log_z"][0]),
        residual=float(out["residual"][0]),
        iterations=int(out["iterations"][0]),
    )


def entropy_integral(ev: SingularEval, rule: SphereRule) -> float:
    """Direct quadrature of rho log rho for the solved density (same rule)."""
    tab = _tables(rule)
    s = tab.psi @ ev.multiplier
    log_rho = s - ev.log_z
    return float(tab.w @ (np.exp(log_rho) * log_rho))


def f_bulk(
    z: np.ndarray, params: BulkParams, rule: SphereRule, solver: BatchDualSolver | None = None
) -> float:
    """Bulk energy density: potential - kappa |Q|^2 + b0, +inf near the edge.

    Tensors with eigenvalue margin below SENTINEL_MARGIN (or outside the
    physical set) get the +inf sentinel.  An unconverged dual solve means
    the target sits outside the quadrature rule's moment hull, where the
    supremum is unbounded; such points are likewise reported as +inf so
    that descent methods reject steps into them.
    """
    z = np.asarray(z, dtype=float)
    margin = float(tensors.margins(z))
    if margin < SENTINEL_MARGIN:
        return math.inf
    if solver is None:
        solver = BatchDualSolver(rule)
    out = solver.solve(z[None, :])
    if not out["converged"][0]:
        return math.inf
    value = float(out["value"][0])
    return value - params.kappa * float(tensors.frobenius_sq(z)) + params.b0


def moment_hull_gaps(rule: SphereRule) -> dict[str, float]:
    """Distance from the rule's moment hull to the physical boundary.

    `prolate` is the shortfall of the largest achievable top eigenvalue
    below 2/3, `oblate` the shortfall of the smallest achievable bottom
    eigenvalue above -1/3, each taken over the worst coordinate axis so
    the numbers bound the reach for every axis-aligned eigenframe.
    """
    p_sq = rule.nodes**2
    prolate = float(max(1.0 - p_sq[:, axis].max() for axis in range(3)))
    oblate = float(max(p_sq[:, axis].min() for axis in range(3)))
    return {"prolate": prolate, "oblate": oblate}


def scan_floor(rule: SphereRule) -> float:
    """Smallest eigenvalue margin at which grid scans evaluate the potential."""
    gaps = moment_hull_gaps(rule)
    return max(1e-3, 2.0 * max(gaps["prolate"], gaps["oblate"]))


@dataclass(frozen=True)
class RayPoint:
    """One sample of a blow-up scan along a ray toward the boundary."""

    t: float
    margin: float
    value: float
    converged: bool


def _certify_unbounded(z: np.ndarray, rule: SphereRule) -> float:
    """Best dual lower bound found by searching along a separating exponent ray.

    For targets outside the rule's moment hull the dual objective grows
    without bound along a separating direction; scaling the target's own
    direction provides one in practice.  Because the scale grid and the
    direction are fixed along a physical ray t -> t * z_dir, the returned
    bound is strictly increasing in t.
    """
    tab = _tables(rule)
    norm = np.sqrt(float(tensors.frobenius_sq(z)))
    if norm == 0.0:
        return float(F_ISOTROPIC)
    direction = np.asarray(z, dtype=float) / norm
    scales = np.geomspace(1.0, 1e9, 200)
    betas = scales[:, None] * direction[None, :]
    _, log_z = _log_weights(tab, betas)
    bounds = _dual_value(np.broadcast_to(z, betas.shape), betas, log_z)
    return float(bounds.max())


def blowup_scan(
    z_direction: np.ndarray,
    rule: SphereRule,
    margin_start: float = 0.1,
    margin_stop: float = 1e-4,
    samples: int = 25,
    stop_above: float = 1e6,
) -> list[RayPoint]:
    """Sample the potential along t * z_dir as the margin shrinks geometrically.

    Where Newton diverges (target outside the rule's moment hull), the
    recorded value is a certified dual lower bound, flagged unconverged.
    The scan stops early once a value exceeds `stop_above`, since the
    divergence is then established.
    """
    z_dir = np.asarray(z_direction, dtype=float)
    if not tensors.margins(z_dir) < 1.0 / 3.0 - 1e-9:
        raise ValueError("direction must be non-isotropic")
    lam = tensors.eigenvalues(z_dir)
    crossings = []
    if lam[0] < 0.0:
        crossings.append((tensors.EIG_MIN) / lam[0])
    if lam[2] > 0.0:
        crossings.append(tensors.EIG_MAX / lam[2])
    t_star = min(c for c in crossings if c > 0.0)
    margins_wanted = np.geomspace(margin_start, margin_stop, samples)
    points: list[RayPoint] = []
    for m_target in margins_wanted:
        lo, hi = 0.0, t_star
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(tensors.margins(mid * z_dir)) > m_target:
                lo = mid
            else:
                hi = mid
        t = lo
        zq = t * z_dir
        margin = float(tensors.margins(zq))
        try:
            ev = solve_dual(zq, rule)
            points.append(RayPoint(t=t, margin=margin, value=ev.value, converged=True))
        except DualConvergenceError:
            bound = _certify_unbounded(zq, rule)
            points.append(RayPoint(t=t, margin=margin, value=bound, converged=False))
        if points[-1].value > stop_above:
            break
    return points


@dataclass(frozen=True)
class B0Result:
    """Normalization offset and the eigenvalue pair realizing the minimum."""

    b0: float
    argmin_lambdas: np.ndarray
    min_margin: float


def compute_b0(
    kappa: float, rule: SphereRule, grid: int = 61, refine: bool = True
) -> B0Result:
    """Offset b0 = -min over the physical set of (potential - kappa |Q|^2).

    The minimum is located on the eigenvalue simplex (the potential is
    frame-invariant up to quadrature error, and exactly so for the diagonal
    family under this product rule).  A coarse grid scan is refined with a
    local simplex search; a minimum detected at the scan fringe raises,
    since then the objective is not usefully bounded below the floor.
    """
    if not kappa >= 0.0:
        raise ValueError("kappa must be non-negative")
    if grid < 11:
        raise ValueError("grid must be at least 11")
    floor = scan_floor(rule)
    axis = np.linspace(tensors.EIG_MIN, tensors.EIG_MAX, grid)
    l2, l3 = np.meshgrid(axis, axis, indexing="ij")
    l1 = -l2 - l3
    lam = np.stack([l1, l2, l3], axis=-1).reshape(-1, 3)
    margin = np.minimum(lam.min(axis=1) - tensors.EIG_MIN, tensors.EIG_MAX - lam.max(axis=1))
    valid = margin >= floor
    lam_valid = lam[valid]

    def objective(pair: np.ndarray) -> float:
        lam3 = np.array([-pair[0] - pair[1], pair[0], pair[1]])
        m = min(lam3.min() - tensors.EIG_MIN, tensors.EIG_MAX - lam3.max())
        if m < floor:
            return math.inf
        diag = solve_diagonal(np.sort(lam3), rule)
        if diag is None:
            return math.inf
        lam_sorted = np.sort(lam3)
        tab = _tables(rule)
        s = tab.p_sq @ diag
        shift = s.max()
        log_z = shift + math.log(tab.w @ np.exp(s - shift))
        value = float(diag @ (lam_sorted + 1.0 / 3.0) - log_z)
        return value - kappa * float(np.sum(lam3**2))

    values = np.array([objective(p) for p in lam_valid[:, 1:]])
    best = int(np.argmin(values))
    best_pair = lam_valid[best, 1:]
    best_val = values[best]
    if refine:
        from scipy.optimize import minimize

        res = minimize(
            objective,
            best_pair,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-13, "maxiter": 400},
        )
        if res.fun < best_val:
            best_pair, best_val = res.x, float(res.fun)
    lam_best = np.array([-best_pair[0] - best_pair[1], best_pair[0], best_pair[1]])
    m_best = float(
        min(lam_best.min() - tensors.EIG_MIN, tensors.EIG_MAX - lam_best.max())
    )
    if m_best < floor * (1.0 + 1e-6) + 1e-4:
        raise ValueError(
            f"bulk minimum sits at the scan fringe (margin {m_best:.4f}); "
            f"kappa={kappa} pushes the minimum to the boundary of the scanned set"
        )
    return B0Result(b0=-best_val, argmin_lambdas=lam_best, min_margin=m_best)


def make_bulk_params(kappa: float, rule: SphereRule) -> BulkParams:
    """Convenience: compute b0 for kappa at this rule and bundle the pair."""
    return BulkParams(kappa=kappa, b0=compute_b0(kappa, rule).b0)


# ---------------------------------------------------------------------------
# Generic convex-domain potentials
#
# The singular potential above is one instance of a wider pattern: a smooth
# convex function on a bounded open convex domain that blows up toward the
# boundary, combined with a concave quadratic offset.  The interface below
# captures that pattern so the same convexity / blow-up / gradient checks
# and the same barrier-aware minimization apply to other domains (the unit
# interval with a log barrier being the simplest).


class ConvexPotential(abc.ABC):
    """Convex potential on a bounded open convex domain in R^dim.

    Implementations provide a positive interior gauge (`margin`, a
    distance-like measure to the domain boundary), the `value` of a smooth
    convex function that tends to +inf toward the boundary (+inf outside),
    and its `gradient` at interior points.  The quadratic offset of the
    full bulk density is applied by `shifted_value`/`shifted_gradient`;
    coordinates are Euclidean, so the offset is the plain squared norm.
    """

    dim: int = 0

    @abc.abstractmethod
    def margin(self, p: np.ndarray) -> float:
        """Positive inside the domain, zero on the boundary, negative outside."""

    @abc.abstractmethod
    def value(self, p: np.ndarray) -> float:
        """Potential value; +inf outside the open domain."""

    @abc.abstractmethod
    def gradient(self, p: np.ndarray) -> np.ndarray:
        """Gradient at an interior point."""

    def shifted_value(self, p: np.ndarray, kappa: float) -> float:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return self.value(p) - kappa * float(p @ p)

    def shifted_gradient(self, p: np.ndarray, kappa: float) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return self.gradient(p) - 2.0 * kappa * p


class LogBarrierInterval(ConvexPotential):
    """The unit interval (-1, 1) with the barrier -ln(1 - p^2)."""

    dim = 1

    def margin(self, p: np.ndarray) -> float:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return 1.0 - abs(float(p[0]))

    def value(self, p: np.ndarray) -> float:
        m = self.margin(p)
        if m <= 0.0:
            return math.inf
        x = float(np.atleast_1d(p)[0])
        return -math.log1p(-x * x)

    def gradient(self, p: np.ndarray) -> np.ndarray:
        x = float(np.atleast_1d(p)[0])
        if abs(x) >= 1.0:
            raise ValueError("gradient requested outside the open interval")
        return np.array([2.0 * x / (1.0 - x * x)])

    def curvature(self, p: np.ndarray) -> np.ndarray:
        x = float(np.atleast_1d(p)[0])
        one = 1.0 - x * x
        return np.array([2.0 * (1.0 + x * x) / (one * one)])


class MaierSaupePotential(ConvexPotential):
    """The singular potential as a convex-domain potential on R^5.

    Coordinates are an orthonormal basis of the traceless symmetric
    tensors, so the Euclidean squared norm of a point equals the Frobenius
    squared norm of its tensor and the generic quadratic offset matches
    the bulk density's kappa term.
    """

    dim = tensors.N_COMPONENTS

    def __init__(self, rule: SphereRule, *, solver: "BatchDualSolver | None" = None):
        self.rule = rule
        self.solver = solver if solver is not None else BatchDualSolver(rule)
        w, vecs = np.linalg.eigh(np.asarray(_METRIC, dtype=float))
        self._to_ortho = vecs @ np.diag(np.sqrt(w)) @ vecs.T
        self._from_ortho = vecs @ np.diag(1.0 / np.sqrt(w)) @ vecs.T

    def to_point(self, z: np.ndarray) -> np.ndarray:
        """Orthonormal coordinates of a component vector."""
        return np.asarray(z, dtype=float) @ self._to_ortho

    def to_components(self, p: np.ndarray) -> np.ndarray:
        """Component vector of an orthonormal-coordinate point."""
        return np.asarray(p, dtype=float) @ self._from_ortho

    def margin(self, p: np.ndarray) -> float:
        return float(tensors.margins(self.to_components(p)))

    def value(self, p: np.ndarray) -> float:
        z = self.to_components(p)
        if float(tensors.margins(z)) < SENTINEL_MARGIN:
            return math.inf
        out = self.solver.solve(z[None, :])
        if not out["converged"][0]:
            return math.inf
        return float(out["value"][0])

    def gradient(self, p: np.ndarray) -> np.ndarray:
        z = self.to_components(p)
        ev = solve_dual(z, self.rule)
        # chain rule through the orthonormal change of coordinates
        return ev.gradient() @ self._from_ortho


@dataclass(frozen=True)
class IntervalSolution:
    """Minimizer of a 1D Dirichlet energy with a barrier potential."""

    x: np.ndarray
    u: np.ndarray
    iterations: int
    grad_norm: float
    min_margin: float


def minimize_interval(
    potential: ConvexPotential,
    gamma: float,
    kappa: float,
    boundary: tuple[float, float],
    n: int,
    *,
    tol: float = 1e-11,
    max_iters: int = 200,
) -> IntervalSolution:
    """Minimize gamma |u'|^2 + potential(u) - kappa u^2 on the unit interval.

    Dirichlet energy by forward differences, potential by node sums; damped
    Newton with a feasibility-aware backtracking line search.  The barrier
    keeps every iterate strictly inside the potential's domain.
    """
    if potential.dim != 1:
        raise ValueError("interval minimization needs a one-dimensional domain")
    if n < 3:
        raise ValueError("need at least three nodes")
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError("gamma must be positive")
    x = np.linspace(0.0, 1.0, n)
    h = x[1] - x[0]
    u = np.linspace(boundary[0], boundary[1], n)
    for end in (0, -1):
        if potential.margin(np.array([u[end]])) <= 0.0:
            raise ValueError("boundary values must lie inside the domain")

    def energy(v: np.ndarray) -> float:
        grad_part = gamma * float(((np.diff(v) / h) ** 2).sum()) * h
        bulk = 0.0
        for val in v[1:-1]:
            fv = potential.shifted_value(np.array([val]), kappa)
            if not math.isfinite(fv):
                return math.inf
            bulk += fv
        return grad_part + bulk * h

    curv = getattr(potential, "curvature", None)

    def residual(v: np.ndarray) -> np.ndarray:
        lap = (2.0 * v[1:-1] - v[:-2] - v[2:]) * (2.0 * gamma / h)
        force = np.array(
            [
                float(potential.shifted_gradient(np.array([val]), kappa)[0])
                for val in v[1:-1]
            ]
        )
        return lap + h * force

    e0 = energy(u)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        g = residual(u)
        gnorm = float(np.abs(g).max())
        if gnorm < tol:
            break
        m = n - 2
        hess = np.zeros((m, m))
        idx = np.arange(m)
        if curv is not None:
            second = np.array([float(curv(np.array([val]))[0]) for val in u[1:-1]])
        else:
            eps = 1e-6
            second = np.array(
                [
                    (
                        float(potential.gradient(np.array([val + eps]))[0])
                        - float(potential.gradient(np.array([val - eps]))[0])
                    )
                    / (2.0 * eps)
                    for val in u[1:-1]
                ]
            )
        hess[idx, idx] = 4.0 * gamma / h + h * (second - 2.0 * kappa)
        hess[idx[:-1], idx[:-1] + 1] = -2.0 * gamma / h
        hess[idx[:-1] + 1, idx[:-1]] = -2.0 * gamma / h
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            step = g * (h / (4.0 * gamma))
        if float(step @ g) <= 0.0:
            step = g * (h / (4.0 * gamma))
        alpha = 1.0
        accepted = False
        for _ in range(60):
            trial = u.copy()
            trial[1:-1] -= alpha * step
            e_trial = energy(trial)
            if e_trial <= e0 - 1e-12 * alpha * float(step @ g) and math.isfinite(
                e_trial
            ):
                u, e0 = trial, e_trial
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    gnorm = float(np.abs(residual(u)).max())
    min_margin = min(potential.margin(np.array([val])) for val in u)
    return IntervalSolution(
        x=x, u=u, iterations=iterations, grad_norm=gnorm, min_margin=float(min_margin)
    )
