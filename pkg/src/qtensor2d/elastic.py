"""Elastic energy densities, ellipticity validators, and quadratic-form coefficients.

Gradients of planar tensor fields are handled in two equivalent layouts: the
component layout `d` of shape (5, 2) holding the spatial derivatives of the
five independent tensor components, and the full third-order tensor
`D[i, j, k] = dQ_ij/dx_k` with the out-of-plane slot identically zero.
Every contraction is implemented twice: an explicit-loop reference used by
the test suite, and the vectorized production form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from . import tensors

__all__ = [
    "ElasticMode",
    "ElasticCoefficients",
    "ValidityReport",
    "ZFormCoefficients",
    "ElasticForm",
    "SandwichConstants",
    "iso3",
    "chiral5",
    "thm3",
    "validate",
    "gradient_tensor",
    "density",
    "density_iso3",
    "density_chiral5",
    "density_thm3",
    "density_reference",
    "gradient_contraction",
    "gradient_contraction_reference",
    "zform_at",
    "estimate_coercivity",
    "sandwich_constants",
]


class ElasticMode(Enum):
    ISO3 = "iso3"
    CHIRAL5 = "chiral5"
    THM3 = "thm3"


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps


_EPS = _levi_civita()


@dataclass(frozen=True)
class ElasticCoefficients:
    """Coupling constants of the elastic density in one of three modes.

    ISO3 uses the three quadratic isotropic couplings (L1, L2, L3);
    THM3 uses L1 plus the chiral L4 and cubic L5 couplings; CHIRAL5
    combines all five.  Couplings outside the mode must be zero.
    """

    L1: float
    L2: float = 0.0
    L3: float = 0.0
    L4: float = 0.0
    L5: float = 0.0
    mode: ElasticMode = ElasticMode.ISO3

    def __post_init__(self):
        values = (self.L1, self.L2, self.L3, self.L4, self.L5)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("elastic couplings must be finite")
        if self.mode is ElasticMode.ISO3 and (self.L4 != 0.0 or self.L5 != 0.0):
            raise ValueError("ISO3 mode requires L4 = L5 = 0")
        if self.mode is ElasticMode.THM3 and (self.L2 != 0.0 or self.L3 != 0.0):
            raise ValueError("THM3 mode requires L2 = L3 = 0")


def iso3(L1: float, L2: float = 0.0, L3: float = 0.0) -> ElasticCoefficients:
    return ElasticCoefficients(L1=L1, L2=L2, L3=L3, mode=ElasticMode.ISO3)


def chiral5(L1: float, L2: float, L3: float, L4: float, L5: float) -> ElasticCoefficients:
    return ElasticCoefficients(L1=L1, L2=L2, L3=L3, L4=L4, L5=L5, mode=ElasticMode.CHIRAL5)


def thm3(L1: float, L4: float = 0.0, L5: float = 0.0) -> ElasticCoefficients:
    return ElasticCoefficients(L1=L1, L4=L4, L5=L5, mode=ElasticMode.THM3)


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the ellipticity checks with per-inequality slack values."""

    valid: bool
    failures: tuple[str, ...]
    margins: dict[str, float]


def _inequalities(c: ElasticCoefficients) -> dict[str, float]:
    checks: dict[str, float] = {}
    if c.mode in (ElasticMode.ISO3, ElasticMode.CHIRAL5):
        checks["L1+5L2/3+L3/6>0"] = c.L1 + 5.0 * c.L2 / 3.0 + c.L3 / 6.0
        checks["L1-L3/2>0"] = c.L1 - c.L3 / 2.0
        checks["L1+L3>0"] = c.L1 + c.L3
    if c.mode in (ElasticMode.THM3, ElasticMode.CHIRAL5):
        if c.L5 >= 0.0:
            checks["L1-L5/3>0"] = c.L1 - c.L5 / 3.0
        else:
            checks["L1+2L5/3>0"] = c.L1 + 2.0 * c.L5 / 3.0
    return checks


def validate(coeffs: ElasticCoefficients) -> ValidityReport:
    """Ellipticity verdict; `failures` names each violated inequality."""
    margins = _inequalities(coeffs)
    failures = tuple(name for name, value in margins.items() if not value > 0.0)
    return ValidityReport(valid=not failures, failures=failures, margins=margins)


def gradient_tensor(d: np.ndarray) -> np.ndarray:
    """Full derivative tensor D[i, j, k] = dQ_ij/dx_k from component layout.

    Input shape (..., 5, 2); output (..., 3, 3, 3) with the out-of-plane
    derivative slot k = 2 identically zero.
    """
    d = np.asarray(d, dtype=float)
    if d.shape[-2:] != (5, 2):
        raise ValueError(f"component gradient must have shape (..., 5, 2), got {d.shape}")
    full = np.zeros(d.shape[:-2] + (3, 3, 3))
    for k in range(2):
        full[..., k] = tensors.z_to_matrix(d[..., k])
    return full


def _require_mode(coeffs: ElasticCoefficients, allowed: tuple[ElasticMode, ...]) -> None:
    if coeffs.mode not in allowed:
        names = "/".join(m.value for m in allowed)
        raise ValueError(f"density requires mode {names}, got {coeffs.mode.value}")


def density_iso3(coeffs: ElasticCoefficients, d: np.ndarray) -> float:
    """Quadratic isotropic density: L1 full-square + L2 divergence + L3 cross."""
    _require_mode(coeffs, (ElasticMode.ISO3, ElasticMode.CHIRAL5))
    full = gradient_tensor(d)
    val = coeffs.L1 * np.einsum("ijk,ijk->", full, full)
    div = np.einsum("ijj->i", full)
    val += coeffs.L2 * div @ div
    val += coeffs.L3 * np.einsum("ijk,ikj->", full, full)
    return float(val)


def _chiral_term(q_mat: np.ndarray, full: np.ndarray) -> float:
    return float(np.einsum("lkj,li,kij->", _EPS, q_mat, full))


def gradient_contraction(z: np.ndarray, d: np.ndarray) -> float:
    """The state-weighted square Q_lk dQ_ij/dx_l dQ_ij/dx_k."""
    full = gradient_tensor(d)
    q_mat = tensors.z_to_matrix(np.asarray(z, dtype=float))
    return float(np.einsum("lk,ijl,ijk->", q_mat, full, full))


def density_chiral5(coeffs: ElasticCoefficients, z: np.ndarray, d: np.ndarray) -> float:
    """Five-coupling density: isotropic part + chiral L4 + state-weighted L5."""
    _require_mode(coeffs, (ElasticMode.CHIRAL5,))
    full = gradient_tensor(d)
    q_mat = tensors.z_to_matrix(np.asarray(z, dtype=float))
    val = density_iso3(coeffs, d)
    val += coeffs.L4 * _chiral_term(q_mat, full)
    val += coeffs.L5 * gradient_contraction(z, d)
    return float(val)


def density_thm3(coeffs: ElasticCoefficients, z: np.ndarray, d: np.ndarray) -> float:
    """Three-term density: L1 full-square + chiral L4 + state-weighted L5."""
    _require_mode(coeffs, (ElasticMode.THM3,))
    full = gradient_tensor(d)
    q_mat = tensors.z_to_matrix(np.asarray(z, dtype=float))
    val = coeffs.L1 * float(np.einsum("ijk,ijk->", full, full))
    val += coeffs.L4 * _chiral_term(q_mat, full)
    val += coeffs.L5 * gradient_contraction(z, d)
    return float(val)


def density(coeffs: ElasticCoefficients, z: np.ndarray, d: np.ndarray) -> float:
    """Mode-dispatching density (the isotropic mode ignores the state)."""
    if coeffs.mode is ElasticMode.ISO3:
        return density_iso3(coeffs, d)
    if coeffs.mode is ElasticMode.CHIRAL5:
        return density_chiral5(coeffs, z, d)
    return density_thm3(coeffs, z, d)


def gradient_contraction_reference(z: np.ndarray, d: np.ndarray) -> float:
    """Explicit-loop reference for the state-weighted square."""
    full = gradient_tensor(d)
    q_mat = tensors.z_to_matrix(np.asarray(z, dtype=float))
    total = 0.0
    for l in range(3):
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    total += q_mat[l, k] * full[i, j, l] * full[i, j, k]
    return total


def density_reference(coeffs: ElasticCoefficients, z: np.ndarray, d: np.ndarray) -> float:
    """Explicit-loop reference density for any mode (slow; used by tests)."""
    full = gradient_tensor(d)
    q_mat = tensors.z_to_matrix(np.asarray(z, dtype=float))
    use_iso = coeffs.mode in (ElasticMode.ISO3, ElasticMode.CHIRAL5)
    use_l1 = True
    use_aniso = coeffs.mode in (ElasticMode.CHIRAL5, ElasticMode.THM3)
    total = 0.0
    if use_l1:
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    total += coeffs.L1 * full[i, j, k] * full[i, j, k]
    if use_iso:
        for i in range(3):
            div_i = 0.0
            for j in range(3):
                div_i += full[i, j, j]
            total += coeffs.L2 * div_i * div_i
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    total += coeffs.L3 * full[i, j, k] * full[i, k, j]
    if use_aniso:
        for l in range(3):
            for k in range(3):
                for j in range(3):
                    for i in range(3):
                        total += coeffs.L4 * _EPS[l, k, j] * q_mat[l, i] * full[k, i, j]
        total += coeffs.L5 * gradient_contraction_reference(z, d)
    return total


@dataclass(frozen=True)
class ZFormCoefficients:
    """Quadratic and linear coefficients of the density in component layout.

    `a[i, j, l, k]` multiplies d[i, l] d[j, k] (stored pair-symmetric,
    a[i, j, l, k] = a[j, i, k, l]); `b[i, l]` multiplies d[i, l].  Both are
    evaluated at a fixed state.
    """

    a: np.ndarray
    b: np.ndarray

    def quadratic(self, d: np.ndarray) -> float:
        return float(np.einsum("ijlk,il,jk->", self.a, d, d))

    def linear(self, d: np.ndarray) -> float:
        return float(np.einsum("il,il->", self.b, d))

    def value(self, d: np.ndarray) -> float:
        return self.quadratic(d) + self.linear(d)


def zform_at(coeffs: ElasticCoefficients, z: np.ndarray) -> ZFormCoefficients:
    """Exact quadratic/linear coefficients at a state, by polarization.

    The density is a quadratic polynomial in the component gradient with
    no constant term, so evaluating it on single- and two-entry gradients
    recovers the coefficients exactly (no finite-difference step).
    """
    z = np.asarray(z, dtype=float)

    def f(d: np.ndarray) -> float:
        return density(coeffs, z, d)

    slots = [(i, l) for i in range(5) for l in range(2)]
    singles = {}
    b = np.zeros((5, 2))
    a = np.zeros((5, 5, 2, 2))
    for i, l in slots:
        e = np.zeros((5, 2))
        e[i, l] = 1.0
        plus, minus = f(e), f(-e)
        b[i, l] = 0.5 * (plus - minus)
        singles[(i, l)] = 0.5 * (plus + minus)
        a[i, i, l, l] = singles[(i, l)]
    for idx, (i, l) in enumerate(slots):
        for j, k in slots[idx + 1 :]:
            e = np.zeros((5, 2))
            e[i, l] += 1.0
            e[j, k] += 1.0
            cross = f(e) - singles[(i, l)] - singles[(j, k)] - b[i, l] - b[j, k]
            a[i, j, l, k] = 0.5 * cross
            a[j, i, k, l] = 0.5 * cross
    return ZFormCoefficients(a=a, b=b)


_Z_UNIT = np.eye(tensors.N_COMPONENTS)


class ElasticForm:
    """Vectorized density/gradient evaluator over batches of grid nodes.

    The quadratic coefficients are affine in the state and the linear
    coefficients are linear in it, so the evaluator is exact: it stores
    the state-independent part `a0`, the per-component slopes `a1`, and
    the linear slopes `b1`, all extracted once by polarization.
    """

    def __init__(self, coeffs: ElasticCoefficients):
        self.coeffs = coeffs
        zero = zform_at(coeffs, np.zeros(tensors.N_COMPONENTS))
        if float(np.abs(zero.b).max()) > 1e-14:
            raise AssertionError("linear coefficients must vanish at the zero state")
        self.a0 = zero.a
        self.a1 = np.zeros((5, 5, 5, 2, 2))
        self.b1 = np.zeros((5, 5, 2))
        for m in range(tensors.N_COMPONENTS):
            unit = zform_at(coeffs, _Z_UNIT[m])
            self.a1[m] = unit.a - zero.a
            self.b1[m] = unit.b

    def value(self, z: np.ndarray, d: np.ndarray) -> np.ndarray:
        z, d = np.asarray(z, dtype=float), np.asarray(d, dtype=float)
        out = np.einsum("ijlk,nil,njk->n", self.a0, d, d)
        out += np.einsum("mijlk,nm,nil,njk->n", self.a1, z, d, d)
        out += np.einsum("mil,nm,nil->n", self.b1, z, d)
        return out

    def grad_d(self, z: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Derivative with respect to the component gradient, shape (n, 5, 2)."""
        z, d = np.asarray(z, dtype=float), np.asarray(d, dtype=float)
        out = 2.0 * np.einsum("ijlk,njk->nil", self.a0, d)
        out += 2.0 * np.einsum("mijlk,nm,njk->nil", self.a1, z, d)
        out += np.einsum("mil,nm->nil", self.b1, z)
        return out

    def grad_z(self, z: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Derivative with respect to the state components, shape (n, 5)."""
        d = np.asarray(d, dtype=float)
        out = np.einsum("mijlk,nil,njk->nm", self.a1, d, d)
        out += np.einsum("mil,nil->nm", self.b1, d)
        return out


@dataclass(frozen=True)
class SandwichConstants:
    """Two-sided quadratic envelope constants for the density over the closure.

    density >= alpha1 |D|^2 - M1 and density <= alpha2 |D|^2 + M2 for all
    sampled states in the closed physical set, where |D| is the full
    derivative-tensor norm.  lambda_min/lambda_max are the extreme
    generalized eigenvalues of the quadratic form against |D|^2 and
    b_norm_max the largest linear-coefficient norm encountered.
    """

    alpha1: float
    alpha2: float
    M1: float
    M2: float
    lambda_min: float
    lambda_max: float
    b_norm_max: float


def _form_matrix(zf: ZFormCoefficients) -> np.ndarray:
    # flatten (i, l) -> 2 i + l; symmetric by the pair symmetry of a
    return zf.a.transpose(0, 2, 1, 3).reshape(10, 10)


_D_METRIC = np.kron(tensors.COMPONENT_METRIC, np.eye(2))


def _coercivity_states(rng: np.random.Generator, samples: int) -> np.ndarray:
    extremes = [np.zeros(5)]
    for axis in range(3):
        n = np.eye(3)[axis]
        extremes.append(tensors.uniaxial(1.0, n))
        extremes.append(tensors.uniaxial(-0.5, n))
    sampled = tensors.sample_states(rng, samples, boundary_fraction=0.5)
    return np.vstack([np.stack(extremes), sampled])


def estimate_coercivity(
    coeffs: ElasticCoefficients, samples: int = 500, seed: int = 0
) -> float:
    """Sampled lower bound on the quadratic form against |D|^2 over the closure.

    Returns the smallest generalized eigenvalue of the quadratic-form
    matrix at states across the closed physical set (boundary included);
    positive means the sampled form is uniformly convex in the gradient.
    """
    rng = np.random.default_rng(seed)
    lam = math.inf
    for z in _coercivity_states(rng, samples):
        mat = _form_matrix(zform_at(coeffs, z))
        sym = 0.5 * (mat + mat.T)
        eigs = scipy.linalg.eigh(sym, _D_METRIC, eigvals_only=True)
        lam = min(lam, float(eigs[0]))
    return lam


def sandwich_constants(
    coeffs: ElasticCoefficients, samples: int = 500, seed: int = 0
) -> SandwichConstants:
    """Envelope constants from sampled extreme generalized eigenvalues.

    Peter-Paul splitting of the linear term puts half the smallest
    quadratic eigenvalue into alpha1 and the matching constant into M1
    (resp. a 50% inflation of the largest eigenvalue into alpha2/M2).
    """
    rng = np.random.default_rng(seed)
    lam_min, lam_max, b_max = math.inf, -math.inf, 0.0
    for z in _coercivity_states(rng, samples):
        zf = zform_at(coeffs, z)
        mat = _form_matrix(zf)
        sym = 0.5 * (mat + mat.T)
        eigs = scipy.linalg.eigh(sym, _D_METRIC, eigvals_only=True)
        lam_min = min(lam_min, float(eigs[0]))
        lam_max = max(lam_max, float(eigs[-1]))
        b_max = max(b_max, float(np.linalg.norm(zf.b)))
    if not lam_min > 0.0:
        raise ValueError(
            f"quadratic form is not uniformly convex over sampled states "
            f"(smallest eigenvalue {lam_min:.3e}); check validate() first"
        )
    return SandwichConstants(
        alpha1=0.5 * lam_min,
        alpha2=1.5 * lam_max,
        M1=b_max**2 / (2.0 * lam_min),
        M2=b_max**2 / (2.0 * lam_max),
        lambda_min=lam_min,
        lambda_max=lam_max,
        b_norm_max=b_max,
    )
