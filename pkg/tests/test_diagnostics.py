"""Tests for field diagnostics: physicality, decay fits, Hölder estimation."""

import math

import numpy as np
import pytest

from qtensor2d import diagnostics, fields, tensors
from qtensor2d.elastic import iso3
from qtensor2d.fields import QField, rectangle_grid
from qtensor2d.potential import (
    BatchDualSolver,
    BulkParams,
    F_ISOTROPIC,
    make_bulk_params,
)
from qtensor2d.sphere import build_rule

RULE = build_rule(20)
SOLVER = BatchDualSolver(RULE)
PARAMS = BulkParams(0.0, -F_ISOTROPIC)
COEFFS = iso3(1.0)
E3 = np.array([0.0, 0.0, 1.0])
E1 = np.array([1.0, 0.0, 0.0])


def _constant_field(n: int, state: np.ndarray) -> QField:
    grid = rectangle_grid(n, n, 1.0 / (n - 1))
    z = np.broadcast_to(state, (grid.nx, grid.ny, tensors.N_COMPONENTS)).copy()
    bc = np.broadcast_to(state, (grid.n_boundary, tensors.N_COMPONENTS)).copy()
    return QField(grid, z, bc)


def _field_from_z(grid, z: np.ndarray) -> QField:
    bc = z.reshape(-1, tensors.N_COMPONENTS)[grid.boundary_flat].copy()
    return QField(grid, z, bc)


def _wavy_field(n: int = 17) -> QField:
    grid = rectangle_grid(n, n, 1.0 / (n - 1))
    x = np.arange(n) * grid.h
    base = tensors.uniaxial(0.25, E3)
    v1 = np.array([0.3, 0.2, -0.1, 0.1, 0.15])
    v2 = np.array([0.05, 0.2, -0.1, 0.1, 0.05])
    z = np.broadcast_to(base, (n, n, 5)).copy()
    z = z + 0.3 * np.sin(4 * x[:, None] + 0.3)[..., None] * np.cos(
        2 * x[None, :]
    )[..., None] * v1
    z = z + 0.2 * np.cos(3 * x[:, None] + 1.0)[..., None] * np.sin(
        3 * x[None, :] + 0.4
    )[..., None] * v2
    return _field_from_z(grid, z)


class TestPhysicality:
    def test_constant_uniaxial(self):
        field = _constant_field(33, tensors.uniaxial(0.3, E3))
        rep = diagnostics.physicality(field)
        assert rep.verdict == "strictly-physical"
        assert abs(rep.min_margin - (1.0 - 0.3) / 3.0) < 1e-12
        assert rep.argmin == (0, 0)
        assert rep.touching == ()
        assert int(rep.histogram_counts.sum()) == 33 * 33
        assert rep.histogram_edges[0] == 0.0
        assert abs(rep.histogram_edges[-1] - 1.0 / 3.0) < 1e-15

    def test_single_touching_node(self):
        field = _constant_field(33, tensors.uniaxial(0.3, E3))
        z = field.z.copy()
        z[5, 7] = tensors.uniaxial(1.0, E1)
        touched = QField(field.grid, z, field.bc)
        rep = diagnostics.physicality(touched)
        assert rep.verdict == "boundary-touching"
        assert rep.touching == ((5, 7),)
        assert rep.argmin == (5, 7)
        assert abs(rep.min_margin) < 1e-12

    def test_tolerance_controls_verdict(self):
        field = _constant_field(17, tensors.uniaxial(0.3, E3))
        z = field.z.copy()
        z[4, 4] = tensors.uniaxial(1.0 - 3e-10, E3)
        hairline = QField(field.grid, z, field.bc)
        assert diagnostics.physicality(hairline, tol=1e-9).verdict == (
            "boundary-touching"
        )
        assert diagnostics.physicality(hairline, tol=1e-11).verdict == (
            "strictly-physical"
        )

    def test_rotation_invariance(self, rng):
        field = _wavy_field(17)
        base = diagnostics.physicality(field)
        for _ in range(5):
            a = rng.normal(size=(3, 3))
            q, _r = np.linalg.qr(a)
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            zrows = field.z.reshape(-1, tensors.N_COMPONENTS)
            rot = np.array([tensors.rotate(zr, q) for zr in zrows]).reshape(
                field.z.shape
            )
            rotated = _field_from_z(field.grid, rot)
            rep = diagnostics.physicality(rotated)
            assert abs(rep.min_margin - base.min_margin) < 1e-12
            assert rep.argmin == base.argmin
            assert np.array_equal(rep.histogram_counts, base.histogram_counts)

    def test_row_major_argmin_on_disk(self):
        grid = fields.disk_grid(17, 1.0 / 16)
        state = tensors.uniaxial(0.3, E3)
        z = np.broadcast_to(state, (grid.nx, grid.ny, 5)).copy()
        bc = np.broadcast_to(state, (grid.n_boundary, 5)).copy()
        rep = diagnostics.physicality(QField(grid, z, bc))
        first = int(
            np.sort(np.concatenate([grid.interior_flat, grid.boundary_flat]))[0]
        )
        assert rep.argmin == (first // grid.ny, first % grid.ny)


class TestMorrey:
    RADII_65 = np.arange(8, 21, 2) / 64.0

    def test_constant_field_area_scaling(self):
        field = _constant_field(65, tensors.uniaxial(0.3, E3))
        rep = diagnostics.morrey_scan(
            field, (32, 32), self.RADII_65, COEFFS, PARAMS, RULE, solver=SOLVER
        )
        assert abs(rep.fitted_sigma - 1.0) < 0.02
        assert rep.fit_r2 > 0.999
        assert rep.center == (32, 32)

    def test_linear_field_zero_bulk(self):
        n = 65
        grid = rectangle_grid(n, n, 1.0 / (n - 1))
        x = np.arange(n) * grid.h
        z = np.zeros((n, n, 5))
        z[:, :, 1] = 0.15 * (x[:, None] - 0.5)
        field = _field_from_z(grid, z)
        # kappa = 15/4 cancels the quadratic part of the potential, so the
        # density is the constant gradient square up to quartic remainder
        params = make_bulk_params(15.0 / 4.0, RULE)
        rep = diagnostics.morrey_scan(
            field, (32, 32), self.RADII_65, COEFFS, params, RULE, solver=SOLVER
        )
        assert abs(rep.fitted_sigma - 1.0) < 0.02
        assert rep.fit_r2 > 0.999

    def test_w_monotone(self):
        field = _wavy_field(33)
        radii = np.arange(4, 15, 1) / 32.0
        rep = diagnostics.morrey_scan(
            field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
        )
        assert (np.diff(rep.w) >= -1e-15).all()
        assert rep.w[0] > 0.0

    def test_jump_discontinuity_control(self):
        n = 33
        grid = rectangle_grid(n, n, 1.0 / (n - 1))
        h = grid.h
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        dist = np.sqrt(((ii - 16) * h) ** 2 + ((jj - 16) * h) ** 2)
        z = np.zeros((n, n, 5))
        z[dist <= 3 * h] = tensors.uniaxial(0.5, E3)
        field = _field_from_z(grid, z)
        radii = np.array([6, 8, 10, 12, 14, 15]) / 32.0
        rep = diagnostics.morrey_scan(
            field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
        )
        assert rep.fitted_sigma < 0.1

    def test_out_of_domain_radii_are_dropped(self):
        field = _constant_field(33, tensors.uniaxial(0.2, E3))
        radii = np.array([6, 8, 10, 12, 20, 30]) / 32.0
        rep = diagnostics.morrey_scan(
            field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
        )
        assert rep.radii.size == 4
        assert rep.w.size == 4

    def test_too_few_radii(self):
        field = _constant_field(33, tensors.uniaxial(0.2, E3))
        with pytest.raises(ValueError, match="at least four radii"):
            diagnostics.morrey_scan(
                field, (16, 16), [0.1, 0.2, 0.3], COEFFS, PARAMS, RULE
            )

    def test_too_few_in_domain_radii(self):
        field = _constant_field(33, tensors.uniaxial(0.2, E3))
        radii = np.array([8, 10, 12, 20, 25, 30]) / 32.0
        with pytest.raises(ValueError, match="in-domain"):
            diagnostics.morrey_scan(
                field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
            )

    def test_non_increasing_radii(self):
        field = _constant_field(33, tensors.uniaxial(0.2, E3))
        with pytest.raises(ValueError, match="increasing"):
            diagnostics.morrey_scan(
                field, (16, 16), [0.1, 0.1, 0.2, 0.3], COEFFS, PARAMS, RULE
            )

    def test_center_must_be_interior(self):
        field = _constant_field(33, tensors.uniaxial(0.2, E3))
        with pytest.raises(ValueError, match="interior"):
            diagnostics.morrey_scan(
                field, (0, 5), [0.1, 0.15, 0.2, 0.25], COEFFS, PARAMS, RULE
            )

    def test_fit_needs_large_radii(self):
        field = _constant_field(33, tensors.uniaxial(0.2, E3))
        radii = np.array([2, 3, 4, 5]) / 32.0
        with pytest.raises(ValueError, match="eight grid spacings"):
            diagnostics.morrey_scan(
                field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
            )

    def test_csv_round_trip(self):
        field = _constant_field(33, tensors.uniaxial(0.3, E3))
        radii = np.array([8, 10, 12, 14]) / 32.0
        rep = diagnostics.morrey_scan(
            field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
        )
        text = diagnostics.morrey_csv(rep)
        lines = text.strip().split("\n")
        assert lines[0] == "radius,w"
        parsed = np.array(
            [[float(tok) for tok in line.split(",")] for line in lines[1:]]
        )
        assert np.array_equal(parsed[:, 0], rep.radii)
        assert np.array_equal(parsed[:, 1], rep.w)


def _sqrt_profile_field(n: int = 65) -> QField:
    grid = rectangle_grid(n, n, 1.0 / (n - 1))
    h = grid.h
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mid = (n - 1) // 2
    r = np.sqrt(((ii - mid) * h) ** 2 + ((jj - mid) * h) ** 2)
    z = np.zeros((n, n, 5))
    z[:, :, 2] = 0.3 * np.sqrt(r)
    return _field_from_z(grid, z)


def _center_block_mask(grid, half: int) -> np.ndarray:
    mid_i, mid_j = grid.nx // 2, grid.ny // 2
    mask = np.zeros((grid.nx, grid.ny), dtype=bool)
    mask[mid_i - half : mid_i + half + 1, mid_j - half : mid_j + half + 1] = True
    return mask


SIGMAS = np.round(np.arange(0.05, 0.96, 0.025), 10)


class TestHolder:
    def test_constant_field_zero_seminorm(self):
        field = _constant_field(33, tensors.uniaxial(0.3, E3))
        mask = _center_block_mask(field.grid, 8)
        est = diagnostics.holder_estimate(field, mask, SIGMAS)
        assert est.seminorms.max() == 0.0
        assert math.isnan(diagnostics.detect_transition(est))
        assert math.isnan(est.fitted_sigma)

    def test_sqrt_profile_transition(self):
        field = _sqrt_profile_field(65)
        mask = _center_block_mask(field.grid, 20)
        est = diagnostics.holder_estimate(field, mask, SIGMAS)
        assert abs(diagnostics.detect_transition(est) - 0.5) < 0.05
        assert np.isfinite(est.seminorms).all()
        # quotients peak at domain-scale pairs below the transition and at
        # grid-scale pairs above it
        assert est.argmax_distance[0] > 10 * field.grid.h
        assert est.argmax_distance[-1] < 2 * field.grid.h

    def test_linear_field_transition_at_grid_top(self):
        n = 65
        grid = rectangle_grid(n, n, 1.0 / (n - 1))
        x = np.arange(n) * grid.h
        z = np.zeros((n, n, 5))
        z[:, :, 1] = 0.2 * (x[:, None] - 0.5)
        field = _field_from_z(grid, z)
        est = diagnostics.holder_estimate(field, _center_block_mask(grid, 20), SIGMAS)
        assert diagnostics.detect_transition(est) >= 0.9

    def test_sampled_path_matches_and_deterministic(self):
        field = _sqrt_profile_field(65)
        mask = _center_block_mask(field.grid, 20)
        full = diagnostics.holder_estimate(field, mask, SIGMAS)
        a = diagnostics.holder_estimate(field, mask, SIGMAS, all_pairs_limit=100)
        b = diagnostics.holder_estimate(field, mask, SIGMAS, all_pairs_limit=100)
        assert np.array_equal(a.seminorms, b.seminorms)
        assert (
            abs(
                diagnostics.detect_transition(a)
                - diagnostics.detect_transition(full)
            )
            < 0.05
        )
        # sampling can only miss pairs, never invent larger quotients
        assert (a.seminorms <= full.seminorms + 1e-12).all()

    def test_brute_force_oracle(self, rng):
        field = _wavy_field(17)
        grid = field.grid
        mask = np.zeros((grid.nx, grid.ny), dtype=bool)
        picks = rng.choice(np.arange(grid.n_interior), size=40, replace=False)
        ij = grid.interior_ij[picks]
        mask[ij[:, 0], ij[:, 1]] = True
        sigmas = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
        est = diagnostics.holder_estimate(field, mask, sigmas)
        nodes = np.argwhere(mask)
        expected = np.zeros(sigmas.size)
        for a in range(len(nodes)):
            for b in range(a + 1, len(nodes)):
                dz = field.z[tuple(nodes[a])] - field.z[tuple(nodes[b])]
                d = math.sqrt(dz @ tensors.COMPONENT_METRIC @ dz)
                r = np.linalg.norm((nodes[a] - nodes[b]) * grid.h)
                expected = np.maximum(expected, d / r**sigmas)
        assert np.abs(est.seminorms - expected).max() < 1e-12

    def test_seminorm_at_and_fitted_property(self):
        field = _sqrt_profile_field(65)
        mask = _center_block_mask(field.grid, 12)
        est = diagnostics.holder_estimate(field, mask, SIGMAS)
        k = int(np.argmin(np.abs(SIGMAS - 0.4)))
        assert est.seminorm_at(0.4) == est.seminorms[k]
        assert est.fitted_sigma == diagnostics.detect_transition(est)

    def test_mask_validation(self):
        field = _constant_field(17, tensors.uniaxial(0.2, E3))
        with pytest.raises(ValueError, match="shape"):
            diagnostics.holder_estimate(field, np.ones((3, 3), bool), [0.5])
        full = np.ones((17, 17), dtype=bool)
        with pytest.raises(ValueError, match="interior"):
            diagnostics.holder_estimate(field, full, [0.5])
        tiny = np.zeros((17, 17), dtype=bool)
        tiny[8, 8] = True
        with pytest.raises(ValueError, match="two nodes"):
            diagnostics.holder_estimate(field, tiny, [0.5])

    def test_sigma_validation(self):
        field = _constant_field(17, tensors.uniaxial(0.2, E3))
        mask = _center_block_mask(field.grid, 3)
        for bad in ([0.0, 0.5], [0.5, 1.0], [-0.1]):
            with pytest.raises(ValueError, match="exponents"):
                diagnostics.holder_estimate(field, mask, bad)


class TestSummary:
    def test_summary_lines(self):
        field = _constant_field(33, tensors.uniaxial(0.3, E3))
        phys = diagnostics.physicality(field)
        radii = np.array([8, 10, 12, 14]) / 32.0
        morrey = diagnostics.morrey_scan(
            field, (16, 16), radii, COEFFS, PARAMS, RULE, solver=SOLVER
        )
        holder = diagnostics.holder_estimate(
            field, _center_block_mask(field.grid, 6), SIGMAS
        )
        text = diagnostics.summary_text(phys, morrey, holder)
        lines = text.strip().split("\n")
        assert lines[0].startswith("physicality: verdict=strictly-physical")
        assert "argmin=(0, 0)" in lines[0]
        assert lines[1].startswith("morrey: center=(16, 16)")
        assert lines[2].startswith("holder:")
        again = diagnostics.summary_text(phys, morrey, holder)
        assert text == again

    def test_partial_summary(self):
        field = _constant_field(17, tensors.uniaxial(0.3, E3))
        phys = diagnostics.physicality(field)
        text = diagnostics.summary_text(phys=phys)
        assert text.count("\n") == 1
        assert text.startswith("physicality:")
