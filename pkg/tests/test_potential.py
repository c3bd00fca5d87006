"""Constrained-entropy potential: dual solver, gradient, convexity, blow-up."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from conftest import random_interior_z, random_rotation
from qtensor2d import potential, sphere, tensors
from qtensor2d.potential import (
    F_ISOTROPIC,
    BatchDualSolver,
    BulkParams,
    DualConvergenceError,
    OutOfDomainError,
    blowup_scan,
    compute_b0,
    dual_objective,
    entropy_integral,
    f_bulk,
    moment_hull_gaps,
    moment_residual,
    scan_floor,
    solve_diagonal,
    solve_dual,
)

RULE = sphere.build_rule(20)
RULE_HI = sphere.build_rule(32)


def axisymmetric_value(s: float) -> float:
    """Independent 1D oracle for the potential at uniaxial states.

    For an axisymmetric density rho(t) ~ exp(b t^2) on t = cos(theta) in
    [-1, 1], the second-moment constraint reduces to <t^2> = 1/3 + 2s/3,
    solved for b by bisection on adaptive quadrature; the entropy is then
    b <t^2> - ln(2 pi integral exp(b t^2) dt).  No sphere rule, no Newton
    solver, and no shared code with the implementation under test.
    """
    target = 1.0 / 3.0 + 2.0 * s / 3.0

    def raw_moments(b: float) -> tuple[float, float]:
        shift = max(b, 0.0)
        den = quad(lambda t: math.exp(b * t * t - shift), -1.0, 1.0,
                   epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        num = quad(lambda t: t * t * math.exp(b * t * t - shift), -1.0, 1.0,
                   epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        return den, num

    def mismatch(b: float) -> float:
        den, num = raw_moments(b)
        return num / den - target

    b = 0.0 if s == 0.0 else brentq(mismatch, -200.0, 500.0, xtol=1e-13, rtol=8.9e-16)
    shift = max(b, 0.0)
    den, _ = raw_moments(b)
    log_partition = math.log(2.0 * math.pi * den) + shift
    return b * target - log_partition


class TestIsotropicValue:
    def test_zero_tensor(self):
        ev = solve_dual(np.zeros(5), RULE)
        assert abs(ev.value - F_ISOTROPIC) < 1e-12
        np.testing.assert_allclose(ev.multiplier, 0.0, atol=1e-12)
        np.testing.assert_allclose(ev.gradient(), 0.0, atol=1e-11)

    def test_value_is_global_minimum(self, rng):
        for _ in range(20):
            z = random_interior_z(rng, min_margin=0.02)
            assert solve_dual(z, RULE).value > F_ISOTROPIC


class TestAxisymmetricOracle:
    S_GRID = np.concatenate([np.linspace(0.0, 0.9, 10), [-0.45, -0.3, -0.15]])

    def test_matches_independent_route_order20(self):
        worst = 0.0
        for s in self.S_GRID:
            ev = solve_dual(tensors.uniaxial(float(s), np.array([0.0, 0.0, 1.0])), RULE) \
                if s != 0.0 else solve_dual(np.zeros(5), RULE)
            worst = max(worst, abs(ev.value - axisymmetric_value(float(s))))
        assert worst < 1e-8

    def test_matches_independent_route_order32(self):
        worst = 0.0
        for s in self.S_GRID:
            ev = solve_dual(tensors.uniaxial(float(s), np.array([0.0, 0.0, 1.0])), RULE_HI) \
                if s != 0.0 else solve_dual(np.zeros(5), RULE_HI)
            worst = max(worst, abs(ev.value - axisymmetric_value(float(s))))
        assert worst < 1e-12

    def test_oracle_self_consistency(self):
        # the oracle's own normalization: s = 0 must give the uniform density
        assert abs(axisymmetric_value(0.0) - F_ISOTROPIC) < 1e-13


class TestMomentMatch:
    def test_residual_small_on_random_batch(self, rng):
        zs = np.stack([random_interior_z(rng, min_margin=0.02) for _ in range(200)])
        out = BatchDualSolver(RULE).solve(zs)
        assert out["converged"].all()
        res = moment_residual(zs, out["beta"], RULE)
        assert res.max() < 1e-8

    def test_warm_start_costs_nothing(self, rng):
        z = random_interior_z(rng, min_margin=0.05)
        solver = BatchDualSolver(RULE)
        first = solver.solve(z[None, :])
        again = solver.solve(z[None, :], beta0=first["beta"])
        assert again["iterations"][0] <= 1
        assert abs(again["value"][0] - first["value"][0]) < 1e-12


class TestGradient:
    def test_matches_central_differences(self, rng):
        h = 1e-6
        worst = 0.0
        for _ in range(25):
            z = random_interior_z(rng, min_margin=0.05)
            grad = solve_dual(z, RULE).gradient()
            fd = np.empty(5)
            for a in range(5):
                step = np.zeros(5)
                step[a] = h
                fd[a] = (solve_dual(z + step, RULE).value
                         - solve_dual(z - step, RULE).value) / (2.0 * h)
            worst = max(worst, np.linalg.norm(fd - grad) / np.linalg.norm(grad))
        assert worst < 1e-6


class TestFrameInvariance:
    def test_rotated_states_share_value(self, rng):
        worst = 0.0
        for _ in range(50):
            z = random_interior_z(rng, min_margin=0.05)
            rot = random_rotation(rng)
            v1 = solve_dual(z, RULE).value
            v2 = solve_dual(tensors.rotate(z, rot), RULE).value
            worst = max(worst, abs(v1 - v2))
        assert worst < 1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_rotation_property(self, seed):
        rng = np.random.default_rng(seed)
        z = random_interior_z(rng, min_margin=0.05)
        rot = random_rotation(rng)
        assert abs(solve_dual(z, RULE).value
                   - solve_dual(tensors.rotate(z, rot), RULE).value) < 1e-9


class TestConvexity:
    def test_midpoint_inequality(self, rng):
        za = np.stack([random_interior_z(rng, min_margin=0.02) for _ in range(300)])
        zb = np.stack([random_interior_z(rng, min_margin=0.02) for _ in range(300)])
        solver = BatchDualSolver(RULE)
        va = solver.solve(za)
        vb = solver.solve(zb)
        vm = solver.solve(0.5 * (za + zb))
        assert va["converged"].all() and vb["converged"].all() and vm["converged"].all()
        slack = 0.5 * (va["value"] + vb["value"]) - vm["value"]
        assert slack.min() >= -1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_weak_duality_property(self, seed):
        rng = np.random.default_rng(seed)
        z = random_interior_z(rng, min_margin=0.03)
        value = solve_dual(z, RULE).value
        beta = rng.normal(scale=2.0, size=5)
        assert float(dual_objective(z, beta, RULE)) <= value + 1e-10


class TestEntropyRoute:
    def test_direct_quadrature_agrees_with_dual_value(self, rng):
        worst = 0.0
        for _ in range(30):
            z = random_interior_z(rng, min_margin=0.05)
            ev = solve_dual(z, RULE)
            worst = max(worst, abs(entropy_integral(ev, RULE) - ev.value))
        assert worst < 1e-9


class TestSolverRoutesAgree:
    def test_full_newton_vs_diagonal_presolve(self, rng):
        for _ in range(50):
            z = random_interior_z(rng, min_margin=0.03)
            ev_diag = solve_dual(z, RULE, method="diag")
            ev_full = solve_dual(z, RULE, method="full")
            assert abs(ev_diag.value - ev_full.value) < 1e-10
            assert np.linalg.norm(ev_diag.multiplier - ev_full.multiplier) < 1e-6

    def test_batch_matches_single(self, rng):
        zs = np.stack([random_interior_z(rng, min_margin=0.03) for _ in range(40)])
        out = BatchDualSolver(RULE).solve(zs)
        for k in range(40):
            ev = solve_dual(zs[k], RULE)
            assert abs(out["value"][k] - ev.value) < 1e-9

    def test_diagonal_solver_hits_target(self, rng):
        for _ in range(20):
            lam2 = rng.uniform(-0.28, 0.6)
            lam3 = rng.uniform(-0.28, 0.6)
            lam = np.array([-lam2 - lam3, lam2, lam3])
            margin = min(lam.min() - tensors.EIG_MIN, tensors.EIG_MAX - lam.max())
            if margin < 0.03:
                continue
            diag = solve_diagonal(np.sort(lam), RULE)
            assert diag is not None
            beta = tensors.matrix_to_z(np.diag(diag))
            z = tensors.matrix_to_z(np.diag(np.sort(lam)))
            assert float(moment_residual(z, beta, RULE)) < 1e-9


class TestDomainErrors:
    def test_exterior_rejected(self):
        z = tensors.matrix_to_z(np.diag([0.7, -0.35, -0.35]))
        with pytest.raises(OutOfDomainError):
            solve_dual(z, RULE)

    def test_boundary_rejected(self):
        z = tensors.uniaxial(1.0, np.array([0.0, 0.0, 1.0]))
        with pytest.raises(OutOfDomainError):
            solve_dual(z, RULE)

    def test_interior_outside_moment_hull_diverges_with_bound(self):
        # margin (1-s)/3 ~ 6.7e-3 is inside the physical set but beyond
        # the order-20 rule's reachable prolate moments
        z = tensors.uniaxial(0.98, np.array([0.0, 0.0, 1.0]))
        with pytest.raises(DualConvergenceError) as err:
            solve_dual(z, RULE)
        assert err.value.residual > 1e-11
        assert math.isfinite(err.value.value_lower_bound)
        assert err.value.value_lower_bound > F_ISOTROPIC

    def test_bad_shape_and_method(self):
        with pytest.raises(ValueError):
            solve_dual(np.zeros((2, 5)), RULE)
        with pytest.raises(ValueError):
            solve_dual(np.zeros(5), RULE, method="fancy")

    def test_bulk_params_validation(self):
        with pytest.raises(ValueError):
            BulkParams(kappa=-1.0, b0=0.0)
        with pytest.raises(ValueError):
            BulkParams(kappa=1.0, b0=math.nan)


class TestBulkDensity:
    def test_isotropic_with_offset(self):
        params = BulkParams(kappa=0.0, b0=-F_ISOTROPIC)
        assert abs(f_bulk(np.zeros(5), params, RULE)) < 1e-12

    def test_sentinel_near_edge(self):
        params = BulkParams(kappa=0.0, b0=0.0)
        z = tensors.uniaxial(1.0 - 1e-9, np.array([0.0, 0.0, 1.0]))
        assert f_bulk(z, params, RULE) == math.inf

    def test_outside_hull_is_infeasible(self):
        params = BulkParams(kappa=0.0, b0=0.0)
        z = tensors.uniaxial(0.98, np.array([0.0, 0.0, 1.0]))
        assert f_bulk(z, params, RULE) == math.inf

    def test_quadratic_term_subtracted(self, rng):
        z = random_interior_z(rng, min_margin=0.05)
        base = f_bulk(z, BulkParams(kappa=0.0, b0=0.0), RULE)
        shifted = f_bulk(z, BulkParams(kappa=1.5, b0=0.25), RULE)
        expected = base - 1.5 * float(tensors.frobenius_sq(z)) + 0.25
        assert abs(shifted - expected) < 1e-12


class TestMomentHull:
    def test_frozen_gaps_order20(self):
        gaps = moment_hull_gaps(RULE)
        assert abs(gaps["prolate"] - 0.013695585480651196) < 1e-12
        assert abs(gaps["oblate"] - 0.005856308436795615) < 1e-12

    def test_gaps_shrink_with_order(self):
        g20 = moment_hull_gaps(RULE)
        g32 = moment_hull_gaps(RULE_HI)
        g48 = moment_hull_gaps(sphere.build_rule(48))
        assert g32["prolate"] < g20["prolate"]
        assert g48["prolate"] < g32["prolate"]
        assert g32["oblate"] < g20["oblate"]
        assert g48["oblate"] < g32["oblate"]

    def test_scan_floor(self):
        assert abs(scan_floor(RULE) - 2.0 * 0.013695585480651196) < 1e-12
        assert scan_floor(sphere.build_rule(128)) == 1e-3


class TestBlowup:
    def test_axis_aligned_ray(self):
        zdir = tensors.uniaxial(1.0, np.array([0.0, 0.0, 1.0]))
        pts = blowup_scan(zdir, RULE)
        vals = [p.value for p in pts]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert any(p.value > 1e3 and p.margin >= 1e-4 for p in pts)
        # converged prefix, then certified lower bounds only
        flags = [p.converged for p in pts]
        assert flags == sorted(flags, reverse=True)
        assert pts[0].converged and not pts[-1].converged

    def test_randomly_oriented_ray(self):
        # generic axes exit the rule's moment hull at margins well above
        # 1e-4 and the certified bounds blow past 1e3; axes within ~1e-2
        # radians of a quadrature node are the exception (next test)
        rng = np.random.default_rng(33)
        zdir = tensors.uniaxial(1.0, rng.normal(size=3))
        pts = blowup_scan(zdir, RULE)
        vals = [p.value for p in pts]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert any(p.value > 1e3 and p.margin >= 1e-4 for p in pts)

    def test_node_aligned_axis_stays_bounded(self):
        # when the axis coincides with a quadrature node the hull touches
        # the boundary along that direction: the realized potential stays
        # at the continuum's logarithmic level instead of diverging
        node = RULE.nodes[int(np.argmax(RULE.nodes[:, 2]))]
        pts = blowup_scan(tensors.uniaxial(1.0, node), RULE)
        assert pts[-1].margin <= 1.1e-4
        assert all(p.value < 20.0 for p in pts)

    def test_margins_decrease_along_scan(self):
        zdir = tensors.uniaxial(1.0, np.array([0.0, 0.0, 1.0]))
        pts = blowup_scan(zdir, RULE, samples=10)
        margins = [p.margin for p in pts]
        assert all(b < a for a, b in zip(margins, margins[1:]))

    def test_isotropic_direction_rejected(self):
        with pytest.raises(ValueError):
            blowup_scan(np.zeros(5), RULE)


class TestNormalizationOffset:
    def test_zero_coupling_offset_is_log4pi(self):
        res = compute_b0(0.0, RULE)
        assert abs(res.b0 - math.log(4.0 * math.pi)) < 1e-6
        assert np.linalg.norm(res.argmin_lambdas) < 1e-3

    def test_weak_coupling_still_isotropic(self):
        # the isotropic-to-nematic transition is first order and happens
        # at stronger coupling; at kappa=2 the minimizer stays isotropic
        res = compute_b0(2.0, RULE)
        assert abs(res.b0 - math.log(4.0 * math.pi)) < 1e-6
        assert np.linalg.norm(res.argmin_lambdas) < 1e-3

    def test_grid_independence(self):
        a = compute_b0(4.0, RULE, grid=41)
        b = compute_b0(4.0, RULE, grid=61)
        assert abs(a.b0 - b.b0) < 1e-6

    def test_strong_coupling_fringe_is_reported(self):
        with pytest.raises(ValueError, match="margin"):
            compute_b0(30.0, RULE)
