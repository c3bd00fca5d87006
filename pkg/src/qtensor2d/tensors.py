"""Symmetric traceless 3x3 order tensors stored as 5-component vectors.

A tensor Q is represented by z = (Q11, Q12, Q13, Q22, Q23); the remaining
entries follow from symmetry and Q33 = -Q11 - Q22.  The physical set consists
of tensors whose eigenvalues all lie in the open interval (EIG_MIN, EIG_MAX).
All array routines accept stacked inputs with the component axis last.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

N_COMPONENTS = 5
EIG_MIN = -1.0 / 3.0
EIG_MAX = 2.0 / 3.0

# Orthogonal-basis expansion Q(z) = sum_a z_a BASIS[a]; the Gram matrix
# tr(BASIS[a] BASIS[b]) of this basis is COMPONENT_METRIC, which also gives
# |Q|^2 = z . COMPONENT_METRIC . z.
BASIS = np.zeros((N_COMPONENTS, 3, 3))
BASIS[0] = np.diag([1.0, 0.0, -1.0])
BASIS[1][0, 1] = BASIS[1][1, 0] = 1.0
BASIS[2][0, 2] = BASIS[2][2, 0] = 1.0
BASIS[3] = np.diag([0.0, 1.0, -1.0])
BASIS[4][1, 2] = BASIS[4][2, 1] = 1.0

COMPONENT_METRIC = np.einsum("aij,bij->ab", BASIS, BASIS)


class Region(Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


@dataclass(frozen=True)
class Classification:
    """Physicality verdict for one tensor: region plus eigenvalue margin."""

    region: Region
    margin: float


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (ascending) and orthonormal eigenvector columns."""

    lambdas: np.ndarray
    frame: np.ndarray


def z_to_matrix(z: np.ndarray) -> np.ndarray:
    """Expand component vectors (..., 5) into full matrices (..., 3, 3)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != N_COMPONENTS:
        raise ValueError(f"expected {N_COMPONENTS} components, got shape {z.shape}")
    return np.einsum("...a,aij->...ij", z, BASIS)


def matrix_to_z(m: np.ndarray) -> np.ndarray:
    """Project symmetric traceless matrices (..., 3, 3) onto components (..., 5)."""
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise ValueError(f"expected trailing 3x3 matrix, got shape {m.shape}")
    if not np.allclose(m, np.swapaxes(m, -1, -2), atol=1e-12):
        raise ValueError("matrix is not symmetric")
    if not np.allclose(np.trace(m, axis1=-2, axis2=-1), 0.0, atol=1e-12):
        raise ValueError("matrix is not traceless")
    return np.stack(
        [m[..., 0, 0], m[..., 0, 1], m[..., 0, 2], m[..., 1, 1], m[..., 1, 2]],
        axis=-1,
    )


def frobenius_sq(z: np.ndarray) -> np.ndarray:
    """Squared Frobenius norm |Q|^2 for component vectors (..., 5)."""
    z = np.asarray(z, dtype=float)
    return np.einsum("...a,ab,...b->...", z, COMPONENT_METRIC, z)


def uniaxial(s: float, n: np.ndarray) -> np.ndarray:
    """Component vector of s (n x n - I/3) for a unit director n."""
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n)
    if not norm > 0.0:
        raise ValueError("director must be nonzero")
    n = n / norm
    m = s * (np.outer(n, n) - np.eye(3) / 3.0)
    return matrix_to_z(m)


def _invariants(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (tr(Q^2)/2, det(Q)) for component vectors."""
    z = np.asarray(z, dtype=float)
    q11, q12, q13, q22, q23 = (z[..., a] for a in range(N_COMPONENTS))
    q33 = -q11 - q22
    j2 = 0.5 * (q11 * q11 + q22 * q22 + q33 * q33) + q12 * q12 + q13 * q13 + q23 * q23
    det = (
        q11 * (q22 * q33 - q23 * q23)
        - q12 * (q12 * q33 - q23 * q13)
        + q13 * (q12 * q23 - q22 * q13)
    )
    return j2, det


def eigenvalues(z: np.ndarray) -> np.ndarray:
    """Eigenvalues (..., 3), ascending, via the trigonometric closed form.

    For a traceless symmetric matrix with invariants j2 = tr(Q^2)/2 and
    j3 = det(Q), the eigenvalues are 2 r cos((phi + 2 pi k)/3) with
    r = sqrt(j2/3) and cos(phi) = j3 / (2 r^3), clamped against rounding.
    """
    z = np.asarray(z, dtype=float)
    j2, det = _invariants(z)
    j2 = np.maximum(j2, 0.0)
    r = np.sqrt(j2 / 3.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_phi = np.where(r > 0.0, 0.5 * det / np.maximum(r, 1e-300) ** 3, 1.0)
    phi = np.arccos(np.clip(cos_phi, -1.0, 1.0))
    k = np.arange(3.0)
    lam = 2.0 * r[..., None] * np.cos((phi[..., None] + 2.0 * np.pi * k) / 3.0)
    return np.sort(lam, axis=-1)


def margins(z: np.ndarray) -> np.ndarray:
    """Distance of the eigenvalue triple to the physical bounds (signed).

    Positive inside the physical set, zero on its boundary, negative outside.
    The closed-form eigenvalues lose square-root precision at repeated roots,
    so tensors whose computed margin is within 1e-6 of zero are re-resolved
    with the LAPACK symmetric solver before the verdict is returned.
    """
    z = np.asarray(z, dtype=float)
    lam = eigenvalues(z)
    out = np.minimum(np.min(lam - EIG_MIN, axis=-1), np.min(EIG_MAX - lam, axis=-1))
    near = np.abs(out) < 1e-6
    if np.any(near):
        lam_fix = np.linalg.eigvalsh(z_to_matrix(z[near] if out.ndim else z))
        fixed = np.minimum(
            np.min(lam_fix - EIG_MIN, axis=-1), np.min(EIG_MAX - lam_fix, axis=-1)
        )
        if out.ndim:
            out[near] = fixed
        else:
            out = fixed.reshape(())
    return out


def classify(z: np.ndarray, tol: float = 1e-12) -> Classification:
    """Classify one tensor as interior / boundary / exterior with its margin."""
    if not tol >= 0.0:
        raise ValueError("tol must be non-negative")
    margin = float(margins(z))
    if margin > tol:
        region = Region.INTERIOR
    elif margin >= -tol:
        region = Region.BOUNDARY
    else:
        region = Region.EXTERIOR
    return Classification(region=region, margin=margin)


def _cross_eigenvector(m: np.ndarray, lam: float) -> np.ndarray | None:
    """Eigenvector of symmetric m for eigenvalue lam via row cross products.

    Returns None if every cross product is numerically degenerate (the
    eigenvalue is not simple).
    """
    a = m - lam * np.eye(3)
    crosses = [
        np.cross(a[0], a[1]),
        np.cross(a[1], a[2]),
        np.cross(a[0], a[2]),
    ]
    norms = [np.linalg.norm(c) for c in crosses]
    best = int(np.argmax(norms))
    scale = max(np.linalg.norm(a[i]) for i in range(3)) ** 2 + 1e-300
    if norms[best] / scale < 1e-7:
        return None
    return crosses[best] / norms[best]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest-magnitude component positive."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0.0 else v


_AXIS_PREFERENCE = (np.eye(3)[2], np.eye(3)[0], np.eye(3)[1])


def _complete_pair(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors orthogonal to v, chosen by fixed axis preference."""
    for axis in _AXIS_PREFERENCE:
        u = np.cross(axis, v)
        norm = np.linalg.norm(u)
        if norm > 0.5:
            u = u / norm
            w = np.cross(v, u)
            return u, w / np.linalg.norm(w)
    raise AssertionError("axis preference exhausted")  # pragma: no cover


def eigensystem(z: np.ndarray, degeneracy_tol: float = 1e-10) -> EigenSystem:
    """Eigen decomposition of one tensor with a deterministic frame.

    The returned frame has eigenvector columns ordered by ascending
    eigenvalue.  Near-degenerate pairs are completed by cross products
    against a fixed axis preference so repeated calls are bit-identical.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (N_COMPONENTS,):
        raise ValueError("eigensystem expects a single component vector")
    lam = eigenvalues(z)
    m = z_to_matrix(z)
    spread = lam[2] - lam[0]
    if spread < degeneracy_tol:
        return EigenSystem(lambdas=lam, frame=np.eye(3))

    gaps = np.array(
        [lam[1] - lam[0], min(lam[1] - lam[0], lam[2] - lam[1]), lam[2] - lam[1]]
    )
    frame = np.zeros((3, 3))
    iso = int(np.argmax(gaps))
    v_iso = _cross_eigenvector(m, lam[iso])
    if v_iso is None:  # pragma: no cover - argmax picks a simple eigenvalue
        raise AssertionError("isolated eigenvalue has no cross-product eigenvector")
    v_iso = _fix_sign(v_iso)
    others = [i for i in range(3) if i != iso]
    pair_gap = abs(lam[others[1]] - lam[others[0]])
    if pair_gap < degeneracy_tol * max(1.0, spread):
        u, w = _complete_pair(v_iso)
        frame[:, iso] = v_iso
        frame[:, others[0]] = _fix_sign(u)
        frame[:, others[1]] = _fix_sign(w)
    else:
        v_next = _cross_eigenvector(m, lam[others[0]])
        if v_next is None:
            u, w = _complete_pair(v_iso)
            frame[:, iso] = v_iso
            frame[:, others[0]] = _fix_sign(u)
            frame[:, others[1]] = _fix_sign(w)
        else:
            v_next = v_next - v_iso * (v_iso @ v_next)
            v_next = _fix_sign(v_next / np.linalg.norm(v_next))
            v_last = np.cross(v_iso, v_next)
            frame[:, iso] = v_iso
            frame[:, others[0]] = v_next
            frame[:, others[1]] = _fix_sign(v_last / np.linalg.norm(v_last))
    return EigenSystem(lambdas=lam, frame=frame)


def rotate(z: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Component vector of R Q R^T for a rotation matrix R."""
    m = z_to_matrix(z)
    rotated = rotation @ m @ rotation.T
    sym = 0.5 * (rotated + np.swapaxes(rotated, -1, -2))
    return matrix_to_z(sym)


def random_rotations(rng: np.random.Generator, count: int) -> np.ndarray:
    """Haar-distributed proper rotation matrices, shape (count, 3, 3)."""
    gauss = rng.normal(size=(count, 3, 3))
    q, r = np.linalg.qr(gauss)
    # fix the QR sign ambiguity, then flip one column where det = -1
    q = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]
    dets = np.linalg.det(q)
    q[dets < 0.0, :, 0] *= -1.0
    return q


def sample_states(
    rng: np.random.Generator,
    count: int,
    min_margin: float = 0.0,
    boundary_fraction: float = 0.0,
) -> np.ndarray:
    """Random states in the (closed) physical set, shape (count, 5).

    Eigenvalue pairs are drawn uniformly over the admissible triangle by
    rejection and combined with Haar-random frames.  With a positive
    `boundary_fraction`, that share of the samples is rescaled onto the
    boundary (largest multiple of the state still in the closure), which
    requires min_margin = 0.
    """
    if not 0.0 <= min_margin < 1.0 / 3.0:
        raise ValueError("min_margin must lie in [0, 1/3)")
    if not 0.0 <= boundary_fraction <= 1.0:
        raise ValueError("boundary_fraction must lie in [0, 1]")
    if boundary_fraction > 0.0 and min_margin > 0.0:
        raise ValueError("boundary samples are incompatible with a positive margin")
    lams = np.empty((count, 3))
    filled = 0
    while filled < count:
        cand = rng.uniform(EIG_MIN, EIG_MAX, size=(2 * count, 2))
        trio = np.column_stack([-cand.sum(axis=1), cand])
        margin = np.minimum(trio.min(axis=1) - EIG_MIN, EIG_MAX - trio.max(axis=1))
        good = trio[margin >= min_margin]
        take = min(count - filled, good.shape[0])
        lams[filled : filled + take] = good[:take]
        filled += take
    frames = random_rotations(rng, count)
    mats = np.einsum("nab,nb,ncb->nac", frames, lams, frames)
    out = matrix_to_z(0.5 * (mats + np.swapaxes(mats, -1, -2)))
    n_boundary = int(round(boundary_fraction * count))
    if n_boundary > 0:
        lam_sub = lams[:n_boundary]
        scale_up = np.where(lam_sub.max(axis=1) > 0.0, EIG_MAX / lam_sub.max(axis=1), np.inf)
        scale_dn = np.where(lam_sub.min(axis=1) < 0.0, EIG_MIN / lam_sub.min(axis=1), np.inf)
        out[:n_boundary] *= np.minimum(scale_up, scale_dn)[:, None]
    return out
