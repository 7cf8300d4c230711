"""Branch-cut logarithms of dissipative operators and Cauchy transforms.

The scalar logarithm used throughout carries its cut along the negative
imaginary axis, so that arg(z) ranges over (-pi/2, 3*pi/2) and the imaginary
part of log of a dissipative operator is pinned to [0, pi].  Dense complex
linear algebra only; everything here is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DomainError,
    GridTooCoarse,
    NearSingular,
    NotDissipative,
    OutOfSupport,
    QuadratureFailure,
    Singular,
)

__all__ = [
    "HermitianOperator",
    "BranchLogResult",
    "log_imcut_scalar",
    "log_dissipative",
    "log_antidissipative",
    "negative_spectral_projection",
    "pv_cauchy",
]

_HERM_TOL = 1e-12
_DISSIPATIVE_TOL = 1e-12
_SINGULAR_TOL = 1e-10
_EXCLUSION_BAND = 1e-10
_EIGVEC_COND_MAX = 1e8
_PANEL_TOL = 1e-9
_PANEL_BUDGET = 2**14


@dataclass
class HermitianOperator:
    """Finite self-adjoint operator with a cached real eigendecomposition."""

    matrix: np.ndarray
    eigenvalues: np.ndarray = field(init=False)
    eigenvectors: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("expected a square matrix of dimension >= 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        scale = max(np.linalg.norm(a, 2), 1.0)
        if np.linalg.norm(a - a.conj().T, 2) > _HERM_TOL * scale:
            raise ValueError("matrix is not Hermitian within tolerance")
        self.matrix = a
        w, u = np.linalg.eigh(a)
        self.eigenvalues = w
        self.eigenvectors = u

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def resolvent(self, z: complex) -> np.ndarray:
        """(A - z)^(-1) via the cached eigendecomposition."""
        u = self.eigenvectors
        return (u / (self.eigenvalues - z)) @ u.conj().T


@dataclass
class BranchLogResult:
    """Branch logarithm of an operator, with the exp-identity residual."""

    value: np.ndarray
    method: str  # "eigendecomposition" or "quadrature"
    residual: float


def log_imcut_scalar(z: complex) -> complex:
    """log z with the cut along the negative imaginary axis.

    Returns ln|z| + i*arg(z) with arg(z) in (-pi/2, 3*pi/2); coincides with
    the principal logarithm on the open upper half-plane.
    """
    z = complex(z)
    if abs(z.real) <= 1e-14 and z.imag <= 0.0:
        raise DomainError(f"z={z} lies on the negative imaginary cut")
    a = np.angle(z)
    if a < -np.pi / 2:
        a += 2 * np.pi
    return complex(np.log(abs(z)), a)


def _imaginary_part(t: np.ndarray) -> np.ndarray:
    return (t - t.conj().T) / 2j


def _check_dissipative(t: np.ndarray, sign: int) -> float:
    """Validate Im(T) >= -tol (sign=+1) or <= tol (sign=-1); return ||T||."""
    norm = np.linalg.norm(t, 2)
    im_eigs = np.linalg.eigvalsh(sign * _imaginary_part(t))
    if im_eigs[0] < -_DISSIPATIVE_TOL * max(norm, 1.0):
        kind = "dissipative" if sign > 0 else "anti-dissipative"
        raise NotDissipative(
            f"Im eigenvalue {sign * im_eigs[0]:.3e} violates the {kind} bound"
        )
    smin = np.linalg.svd(t, compute_uv=False)[-1]
    if smin <= _SINGULAR_TOL * max(norm, 1.0):
        raise Singular(f"smallest singular value {smin:.3e} below tolerance")
    return norm


def _adaptive_gauss(f, a: float, b: float, tol: float, budget: int) -> np.ndarray:
    """Adaptive composite Gauss-Legendre rule for matrix-valued integrands."""
    nodes, weights = np.polynomial.legendre.leggauss(10)

    def panel(lo, hi):
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        vals = [f(mid + half * x) for x in nodes]
        return half * sum(w * v for w, v in zip(weights, vals))

    total = None
    stack = [(a, b, panel(a, b))]
    panels = 1
    while stack:
        lo, hi, coarse = stack.pop()
        mid = (lo + hi) / 2
        left, right = panel(lo, mid), panel(mid, hi)
        err = np.linalg.norm(coarse - left - right, "fro")
        if err < tol or hi - lo < 1e-12:
            contrib = left + right
            total = contrib if total is None else total + contrib
        else:
            panels += 2
            if panels > budget:
                raise QuadratureFailure(
                    f"panel budget {budget} exceeded at tolerance {tol}"
                )
            stack.append((lo, mid, left))
            stack.append((mid, hi, right))
    return total


def _log_quadrature(t: np.ndarray) -> np.ndarray:
    """Riemann-integral logarithm, compactified via lambda = tan(theta)."""
    n = t.shape[0]
    eye = np.eye(n)

    def integrand(theta):
        lam = np.tan(theta)
        sec2 = 1.0 + lam * lam
        diff = np.linalg.inv(t + 1j * lam * eye) - eye / (1.0 + 1j * lam)
        return -1j * sec2 * diff

    return _adaptive_gauss(integrand, 0.0, np.pi / 2, _PANEL_TOL, _PANEL_BUDGET)


def log_dissipative(t: np.ndarray, force_quadrature: bool = False) -> BranchLogResult:
    """Branch logarithm of a dissipative invertible operator.

    Satisfies exp(value) = T and 0 <= Im(value) <= pi*I.  Uses the scalar
    branch through an eigendecomposition when the eigenvector basis is well
    conditioned, otherwise falls back to adaptive quadrature of the integral
    representation.
    """
    t = np.asarray(t, dtype=complex)
    norm = _check_dissipative(t, +1)
    method = "quadrature"
    value = None
    if not force_quadrature:
        w, vr = sla.eig(t)
        if np.linalg.cond(vr) < _EIGVEC_COND_MAX:
            logs = np.array([log_imcut_scalar(z) for z in w])
            value = vr @ (logs[:, None] * np.linalg.inv(vr))
            method = "eigendecomposition"
    if value is None:
        value = _log_quadrature(t)
    residual = np.linalg.norm(sla.expm(value) - t, 2) / max(norm, 1e-300)
    return BranchLogResult(value=value, method=method, residual=float(residual))


def log_antidissipative(s: np.ndarray, force_quadrature: bool = False) -> BranchLogResult:
    """Branch logarithm of an anti-dissipative operator: (log(S*))*.

    Satisfies exp(value) = S and -pi*I <= Im(value) <= 0.
    """
    s = np.asarray(s, dtype=complex)
    _check_dissipative(s, -1)
    res = log_dissipative(s.conj().T, force_quadrature=force_quadrature)
    value = res.value.conj().T
    norm = np.linalg.norm(s, 2)
    residual = np.linalg.norm(sla.expm(value) - s, 2) / max(norm, 1e-300)
    return BranchLogResult(value=value, method=res.method, residual=float(residual))


def negative_spectral_projection(a) -> np.ndarray:
    """Orthogonal projection onto the negative spectral subspace of A.

    A may be a HermitianOperator or a raw Hermitian matrix.  Refuses if an
    eigenvalue falls inside the exclusion band around zero.
    """
    if not isinstance(a, HermitianOperator):
        a = HermitianOperator(np.asarray(a, dtype=complex))
    scale = max(abs(a.eigenvalues[0]), abs(a.eigenvalues[-1]), 1e-300)
    band = _EXCLUSION_BAND * scale
    if np.any(np.abs(a.eigenvalues) <= band):
        raise NearSingular("eigenvalue inside the exclusion band around zero")
    neg = a.eigenvectors[:, a.eigenvalues < 0.0]
    return neg @ neg.conj().T


def pv_cauchy(grid: np.ndarray, values: np.ndarray, lam: float):
    """Principal-value Cauchy transform P.V. int values(mu)/(mu-lam) dmu.

    ``values`` is sampled on the uniform ``grid`` (shape (N,) scalar or
    (N, m, m) matrix-valued).  Uses singularity subtraction: the smooth part
    (values(mu) - values(lam))/(mu - lam) goes through the composite
    trapezoid rule and the subtracted constant integrates in closed form.
    Entrywise error is O(h^2) for twice-differentiable densities.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values)
    n = grid.size
    if n < 64:
        raise GridTooCoarse(f"{n} nodes < 64")
    a, b = grid[0], grid[-1]
    h = (b - a) / (n - 1)
    if not (a + 2 * h < lam < b - 2 * h):
        raise OutOfSupport(f"lambda={lam} not interior to ({a}, {b}) with margin")

    # value at lam by linear interpolation (exact when lam is a node)
    j = int(np.clip(np.floor((lam - a) / h), 0, n - 2))
    frac = (lam - grid[j]) / h
    v_lam = (1.0 - frac) * values[j] + frac * values[j + 1]

    diff = grid - lam
    small = np.abs(diff) < 1e-12 * h
    safe = np.where(small, 1.0, diff)
    integrand = (values - v_lam) / _column(safe, values.ndim)
    if np.any(small):
        k = int(np.nonzero(small)[0][0])
        km, kp = max(k - 1, 0), min(k + 1, n - 1)
        deriv = (values[kp] - values[km]) / (grid[kp] - grid[km])
        integrand[small] = deriv
    smooth = np.trapezoid(integrand, dx=h, axis=0)
    return smooth + v_lam * np.log((b - lam) / (lam - a))


def _column(x: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape a length-N vector to broadcast against (N, m, m) stacks."""
    return x.reshape((-1,) + (1,) * (ndim - 1))
