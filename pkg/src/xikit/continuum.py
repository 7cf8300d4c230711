"""Scattering quantities for a model with purely absolutely continuous data.

The model is specified directly by a matrix spectral density A(lambda) on a
compact support: this determines the Herglotz function
T(z) = int A(mu)/(mu - z) dmu, whose boundary values come from the
principal-value transform plus the Plemelj jump.  All scattering-side
objects (shift operators, scattering matrix, determinant identities,
strong-coupling asymptotics) are functions of T(lambda + i0) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .branchlog import log_antidissipative, log_dissipative, pv_cauchy
from .errors import NotInLambda, OutOfSupport, Singular

__all__ = [
    "ContinuumModel",
    "ScatteringSample",
    "bump_model",
    "t_boundary",
    "phi_boundary",
    "xsso_pm",
    "scattering_matrix",
    "unitarity_defect",
    "birman_krein_residual",
    "xi_profile",
    "lemma47_residual",
    "strong_coupling_profile",
    "simon_limit",
]

_INVERTIBILITY_TOL = 1e-8
_EFFECTIVE_TOL = 1e-10


@dataclass
class ContinuumModel:
    """Matrix density A(lambda) sampled on a zero-padded uniform grid.

    The density callable must be Hermitian positive semidefinite on the
    support and vanish at its endpoints; the stored grid extends beyond the
    support by a zero padding so that principal-value transforms keep their
    interior margin at every support point.
    """

    support: tuple
    m: int
    density: object  # callable lambda -> (m, m) Hermitian PSD
    N: int = 1024
    pad_fraction: float = 0.35
    grid: np.ndarray = field(init=False)
    A: np.ndarray = field(init=False)

    def __post_init__(self):
        a, b = self.support
        if not a < b:
            raise ValueError("support must be a nonempty interval")
        if self.N < 256:
            raise ValueError("need at least 256 support nodes")
        h = (b - a) / (self.N - 1)
        npad = int(np.ceil(self.pad_fraction * (self.N - 1)))
        self.grid = a + h * np.arange(-npad, self.N + npad)
        vals = np.zeros((self.grid.size, self.m, self.m), dtype=complex)
        inside = (self.grid >= a - 1e-12) & (self.grid <= b + 1e-12)
        for i in np.nonzero(inside)[0]:
            vals[i] = np.asarray(self.density(self.grid[i]), dtype=complex)
        self.A = vals
        self._validate(npad, inside)

    def _validate(self, npad, inside):
        scale = max(np.max(np.abs(self.A)), 1e-300)
        for i in np.nonzero(inside)[0]:
            a_i = self.A[i]
            if np.linalg.norm(a_i - a_i.conj().T, 2) > 1e-10 * scale:
                raise ValueError("density is not Hermitian at a node")
            if np.linalg.eigvalsh((a_i + a_i.conj().T) / 2)[0] < -1e-12 * scale:
                raise ValueError("density has a negative eigenvalue at a node")
        lo, hi = np.nonzero(inside)[0][[0, -1]]
        if max(np.max(np.abs(self.A[lo])), np.max(np.abs(self.A[hi]))) > 1e-10 * scale:
            raise ValueError("density must vanish at the support endpoints")

    def density_at(self, lam: float) -> np.ndarray:
        """A(lambda), zero outside the support."""
        a, b = self.support
        if lam < a or lam > b:
            return np.zeros((self.m, self.m), dtype=complex)
        out = np.asarray(self.density(lam), dtype=complex)
        return (out + out.conj().T) / 2


@dataclass
class ScatteringSample:
    """Scattering matrix, shift function, and shift operator at one energy."""

    lam: float
    S: np.ndarray
    xi: float
    XiOp: np.ndarray


def bump_model(support=(-1.0, 1.0), m=2, N=1024, seed=0, scale=1.0):
    """Smooth full-rank density built from a quartic bump profile.

    A(lambda) = w(u) * M(u) M(u)* with w(u) = (1 - u^2)^2 on the rescaled
    coordinate u in [-1, 1] and an affine matrix pencil M(u); generically of
    full rank with non-commuting values.
    """
    rng = np.random.default_rng(seed)
    m0 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    m1 = 0.5 * (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))
    m0 += 0.3 * np.eye(m)  # keep M(u) generically invertible
    a, b = support

    def density(lam):
        u = (2 * lam - a - b) / (b - a)
        w = scale * (1.0 - u * u) ** 2
        mat = m0 + u * m1
        return w * (mat @ mat.conj().T)

    return ContinuumModel(support=support, m=m, density=density, N=N)


def t_boundary(model: ContinuumModel, lam: float, side: str = "plus") -> np.ndarray:
    """T(lambda +/- i0) = P.V. int A(mu)/(mu-lam) dmu +/- i*pi*A(lambda)."""
    sign = {"plus": 1.0, "minus": -1.0}[side]
    pv = pv_cauchy(model.grid, model.A, lam)
    pv = (pv + pv.conj().T) / 2
    return pv + sign * 1j * np.pi * model.density_at(lam)


def phi_boundary(
    model: ContinuumModel, lam: float, side: str = "plus", s: float = 1.0
) -> np.ndarray:
    """Phi(lambda +/- i0) = I + s*T(lambda +/- i0) for the coupling s."""
    return np.eye(model.m) + s * t_boundary(model, lam, side)


def _require_invertible(mat: np.ndarray, what: str):
    smin = np.linalg.svd(mat, compute_uv=False)[-1]
    if smin <= _INVERTIBILITY_TOL:
        raise Singular(f"{what} has smallest singular value {smin:.3e}")


def xsso_pm(model: ContinuumModel, lam: float, s: float) -> np.ndarray:
    """Spectral shift operator at coupling s from the branch logarithm.

    For s > 0 returns XiPlus = Im log(I + s*T(lam+i0)) / pi; for s < 0
    returns XiMinus = -Im log(I + s*T(lam+i0)) / pi (the boundary value is
    anti-dissipative there).  Either way 0 <= result <= I.
    """
    if s == 0:
        raise ValueError("coupling must be nonzero")
    phi = np.eye(model.m) + s * t_boundary(model, lam, "plus")
    _require_invertible(phi, "Phi(lambda+i0)")
    if s > 0:
        logval = log_dissipative(phi).value
        out = (logval - logval.conj().T) / (2j * np.pi)
    else:
        logval = log_antidissipative(phi).value
        out = -(logval - logval.conj().T) / (2j * np.pi)
    return (out + out.conj().T) / 2


def _det_arg_tracked(model: ContinuumModel, lam: float, s: float, steps=400):
    """arg det(I + sigma T(lam+i0)) tracked continuously from sigma = 0."""
    t = t_boundary(model, lam, "plus")
    eigs = np.linalg.eigvals(t)
    lin = np.linspace(0.0, np.sign(s) * min(abs(s), 1.0), steps // 2)
    path = lin
    if abs(s) > 1.0:
        path = np.concatenate(
            [lin, np.sign(s) * np.geomspace(1.0, abs(s), steps // 2)[1:]]
        )
    theta, prev = 0.0, 1.0 + 0.0j
    for sigma in path[1:]:
        det = np.prod(1.0 + sigma * eigs)
        theta += np.angle(det / prev)
        prev = det
    return theta


def scattering_matrix(model: ContinuumModel, lam: float, s: float) -> ScatteringSample:
    """Stationary scattering matrix S = Phi_+^(-1) Phi_- with shift data.

    xi is Im log det Phi(lam+i0) / pi with the argument tracked continuously
    in the coupling from 0; XiOp is the shift operator at coupling s (s = 0
    returns the identity scattering matrix with zero shift).
    """
    if s == 0:
        eye = np.eye(model.m, dtype=complex)
        return ScatteringSample(lam=lam, S=eye, xi=0.0, XiOp=0.0 * eye)
    phi_p = phi_boundary(model, lam, "plus", s)
    _require_invertible(phi_p, "Phi(lambda+i0)")
    smat = np.linalg.solve(phi_p, phi_p.conj().T)
    xi = _det_arg_tracked(model, lam, s) / np.pi
    return ScatteringSample(lam=lam, S=smat, xi=float(xi), XiOp=xsso_pm(model, lam, s))


def unitarity_defect(model: ContinuumModel, lam: float, s: float) -> float:
    """Deviation of S(lambda) from unitarity on the effective subspace.

    S is unitary with respect to the weight A(lambda); the defect is
    ||W*W - I|| for W = A^(1/2) S A^(-1/2) restricted to the eigenvectors of
    A(lambda) above the degeneracy threshold.
    """
    sample = scattering_matrix(model, lam, s)
    a = model.density_at(lam)
    w, u = np.linalg.eigh(a)
    keep = w > _EFFECTIVE_TOL
    if not np.any(keep):
        return 0.0
    ue, we = u[:, keep], w[keep]
    wmat = (np.sqrt(we)[:, None] * (ue.conj().T @ sample.S @ ue)) / np.sqrt(we)[None, :]
    return float(np.linalg.norm(wmat.conj().T @ wmat - np.eye(we.size), 2))


def birman_krein_residual(model: ContinuumModel, lam: float, s: float) -> float:
    """|det S(lambda) - exp(-2*pi*i*xi(lambda))| with xi = signed tr XiOp."""
    if s == 0:
        return 0.0
    sample = scattering_matrix(model, lam, s)
    signed_trace = float(np.sign(s)) * float(np.trace(sample.XiOp).real)
    return float(abs(np.linalg.det(sample.S) - np.exp(-2j * np.pi * signed_trace)))


def xi_profile(model: ContinuumModel, s: float) -> np.ndarray:
    """XiOp on every usable grid node; zero at the three outermost nodes.

    Outside the support the boundary value is Hermitian, so the shift
    operator is either zero or a spectral projection; both cases come out of
    the same branch-log formula.
    """
    out = np.zeros((model.grid.size, model.m, model.m), dtype=complex)
    for i in range(3, model.grid.size - 3):
        out[i] = xsso_pm(model, model.grid[i], s)
    return out


def lemma47_residual(
    model: ContinuumModel, lam: float, s: float, profile: np.ndarray = None
) -> float:
    """Residual of the multiplicative factorization of S(lambda).

    ||S - exp(-PXi - i*pi*Xi) exp(PXi - i*pi*Xi)|| where PXi is the
    principal-value Cauchy transform of the shift-operator profile over the
    grid.  The profile may be passed in to amortize sweeps in lambda.
    """
    if s == 0:
        return 0.0
    if profile is None:
        profile = xi_profile(model, s)
    sample = scattering_matrix(model, lam, s)
    pxi = pv_cauchy(model.grid, profile, lam)
    xi_op = sample.XiOp
    rhs = sla.expm(-pxi - 1j * np.pi * xi_op) @ sla.expm(pxi - 1j * np.pi * xi_op)
    return float(np.linalg.norm(sample.S - rhs, 2))


def strong_coupling_profile(model: ContinuumModel, lam: float, s_list):
    """Strong-coupling gap between XiPlus(s) + XiMinus(-s) and its limit.

    Returns a list of (s, lhsOp, rhsOp, gapNorm) with
    rhsOp = I + 2/(pi*s) Im(T(lam+i0)^(-1)); the gap decays as s^(-2).
    (int_0^infty (T + it)^(-2) dt = -i T^(-1) fixes the sign of the 1/s
    term; the scalar case Xi = arg(1 + s*tau)/pi confirms it.)
    """
    t = t_boundary(model, lam, "plus")
    smin = np.linalg.svd(t, compute_uv=False)[-1]
    if smin <= _INVERTIBILITY_TOL:
        raise NotInLambda(f"T(lambda) has smallest singular value {smin:.3e}")
    tinv = np.linalg.inv(t)
    im_tinv = (tinv - tinv.conj().T) / 2j
    rows = []
    for s in s_list:
        if s <= 0:
            raise ValueError("couplings must be positive")
        lhs = xsso_pm(model, lam, s) + xsso_pm(model, lam, -s)
        rhs = np.eye(model.m) + 2.0 / (np.pi * s) * im_tinv
        rows.append((s, lhs, rhs, float(np.linalg.norm(lhs - rhs, 2))))
    return rows


def simon_limit(model: ContinuumModel, lam: float, s_list):
    """tr XiPlus(lam, s) + tr XiMinus(lam, -s) for each coupling in the list.

    Approaches the rank of the perturbation (the model rank m at full-rank
    energies) at rate 1/s.
    """
    out = []
    for s in s_list:
        if s <= 0:
            raise ValueError("couplings must be positive")
        total = np.trace(xsso_pm(model, lam, s)).real + np.trace(
            xsso_pm(model, lam, -s)
        ).real
        out.append(float(total))
    return out
