"""Spectral averaging over coupling constants for finite families.

The averaged-spectral-measure identity is tested in integrated window form:
the s-average of tr(V'(s) E_{H(s)}(window)) against the exact window
integral of the spectral shift function, and the operator-valued analogue
against the window integral of the spectral shift operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .branchlog import HermitianOperator, _adaptive_gauss
from .errors import EigenvalueCrossesWindowEdge, FactorizationFailure
from .finite_pair import PairModel, build_pair, counting_difference

__all__ = [
    "CouplingFamily",
    "SpectralWindow",
    "averaged_weight",
    "xi_window_rhs",
    "operator_averaged_measure",
    "xi_operator_window",
    "carey_reconstruction",
    "coupling_derivative_residual",
    "linear_family",
]

_EDGE_TOL = 1e-8


@dataclass
class CouplingFamily:
    """H(s) = H0 + V(s) with a user-supplied derivative V'(s).

    The supplied derivative is validated against symmetric finite
    differences at a few interior couplings.
    """

    H0: HermitianOperator
    V: object  # callable s -> Hermitian matrix
    Vprime: object  # callable s -> Hermitian matrix
    s_range: tuple

    def __post_init__(self):
        if not isinstance(self.H0, HermitianOperator):
            self.H0 = HermitianOperator(np.asarray(self.H0, dtype=complex))
        s1, s2 = self.s_range
        if not s1 <= s2:
            raise ValueError("need s_range[0] <= s_range[1]")
        h = 1e-6 * max(s2 - s1, 1.0)
        for s in np.linspace(s1, s2, 5)[1:-1]:
            fd = (self.V(s + h) - self.V(s - h)) / (2 * h)
            dev = np.linalg.norm(fd - self.Vprime(s), 2)
            scale = max(np.linalg.norm(self.Vprime(s), 2), 1.0)
            if dev > 1e-5 * scale:
                raise ValueError(
                    f"Vprime({s}) disagrees with finite differences ({dev:.2e})"
                )

    def hamiltonian(self, s: float) -> np.ndarray:
        return self.H0.matrix + np.asarray(self.V(s), dtype=complex)


def linear_family(H0, V, s_range=(0.0, 1.0)) -> CouplingFamily:
    """The family H(s) = H0 + sV."""
    v = np.asarray(V, dtype=complex)
    return CouplingFamily(
        H0=H0, V=lambda s: s * v, Vprime=lambda s: v, s_range=s_range
    )


@dataclass
class SpectralWindow:
    """Open energy window (a, b)."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")


def _window_projection(h: np.ndarray, window: SpectralWindow):
    """Projection onto eigenvectors of h with eigenvalues inside the window."""
    w, u = np.linalg.eigh(h)
    edge_dist = np.minimum(np.abs(w - window.a), np.abs(w - window.b))
    if np.min(edge_dist) <= _EDGE_TOL:
        raise EigenvalueCrossesWindowEdge(
            f"eigenvalue within {_EDGE_TOL} of window edge ({window.a}, {window.b})"
        )
    sel = u[:, (w > window.a) & (w < window.b)]
    return sel


def averaged_weight(
    family: CouplingFamily, window: SpectralWindow, nodes: int = 64
) -> float:
    """s-averaged spectral weight of V'(s) inside the window.

    Gauss-Legendre approximation of
    int_{s1}^{s2} tr(V'(s) [E_{H(s)}(b) - E_{H(s)}(a)]) ds.
    """
    if nodes < 8:
        raise ValueError("need at least 8 quadrature nodes")
    s1, s2 = family.s_range
    x, wts = np.polynomial.legendre.leggauss(nodes)
    s_nodes = (s1 + s2) / 2 + (s2 - s1) / 2 * x
    total = 0.0
    for s, wt in zip(s_nodes, wts):
        sel = _window_projection(family.hamiltonian(s), window)
        vp = np.asarray(family.Vprime(s), dtype=complex)
        total += wt * np.einsum("ij,jk,ki->", sel.conj().T, vp, sel).real
    return float(total * (s2 - s1) / 2)


def xi_window_rhs(family: CouplingFamily, window: SpectralWindow) -> float:
    """Exact window integral of the shift-function difference.

    int_a^b [xi(lam, s2) - xi(lam, s1)] dlam, where xi(., s) is the shift
    function of the pair (H0, H(s)); the common H0 reference cancels, so
    only the eigenvalue counting functions of H(s1) and H(s2) enter.
    """
    s1, s2 = family.s_range
    w1 = np.linalg.eigvalsh(family.hamiltonian(s1))
    w2 = np.linalg.eigvalsh(family.hamiltonian(s2))
    for edge in (window.a, window.b):
        if min(np.min(np.abs(w1 - edge)), np.min(np.abs(w2 - edge))) <= _EDGE_TOL:
            raise EigenvalueCrossesWindowEdge(
                f"window edge {edge} too close to an endpoint spectrum"
            )
    step = counting_difference(w1, w2)
    return step.window_integral(window.a, window.b)


def _xi_plus_at(pair: PairModel, lam: float) -> np.ndarray:
    """Negative spectral projection of Phi_plus(lam), no regularity guard.

    Quadrature nodes may fall arbitrarily close to eigenvalues during
    adaptive refinement; the projection stays well defined there.
    """
    p = pair.pert.p
    b = pair._B0[:, :p]
    phi = np.eye(p) + b.conj().T @ (b / (pair.H0.eigenvalues - lam)[:, None])
    w, u = np.linalg.eigh((phi + phi.conj().T) / 2)
    neg = u[:, w < 0.0]
    return neg @ neg.conj().T


def xi_operator_window(
    pair: PairModel, a: float, b: float, tol: float = 1e-10
) -> np.ndarray:
    """int_a^b XiPlus(lam) dlam for a sign-definite pair (J = I).

    The shift operator is analytic between consecutive eigenvalues of H0 and
    H but generally rotates inside each gap (only its trace is constant
    there), so each piece goes through adaptive Gauss quadrature.
    """
    if pair.pert.p != pair.pert.m:
        raise ValueError("operator window integral requires J = I")
    cuts = np.unique(pair.all_eigenvalues())
    edges = np.concatenate([[a], cuts[(cuts > a) & (cuts < b)], [b]])
    total = np.zeros((pair.pert.m, pair.pert.m), dtype=complex)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo < 1e-12:
            continue
        total += _adaptive_gauss(
            lambda lam: _xi_plus_at(pair, lam), lo, hi, tol * (hi - lo), 2**12
        )
    return total


def operator_averaged_measure(
    H0, K: np.ndarray, window: SpectralWindow, nodes: int = 64
) -> np.ndarray:
    """s-averaged sandwiched spectral window for the family H0 + s KK*.

    int_0^1 K* [E_{H0+sKK*}(b) - E_{H0+sKK*}(a)] K ds, Hermitian and
    positive semidefinite; equals the window integral of the spectral shift
    operator of the pair (H0, H0 + KK*).
    """
    if not isinstance(H0, HermitianOperator):
        H0 = HermitianOperator(np.asarray(H0, dtype=complex))
    K = np.asarray(K, dtype=complex)
    x, wts = np.polynomial.legendre.leggauss(nodes)
    s_nodes = (1 + x) / 2
    m = K.shape[1]
    total = np.zeros((m, m), dtype=complex)
    for s, wt in zip(s_nodes, wts):
        sel = _window_projection(H0.matrix + s * (K @ K.conj().T), window)
        bk = sel.conj().T @ K
        total += wt * (bk.conj().T @ bk)
    return total / 2


def carey_reconstruction(H0, K: np.ndarray):
    """K*K against the full-line integral of the spectral shift operator.

    Returns (lhs, rhs, deviation) with lhs = K*K and rhs = int XiPlus dlam
    over the whole line (the integrand vanishes outside the convex hull of
    the spectra).
    """
    K = np.asarray(K, dtype=complex)
    lhs = K.conj().T @ K
    if np.linalg.norm(K, 2) == 0.0:
        return lhs, lhs.copy(), 0.0
    pair = build_pair(H0, K, np.eye(K.shape[1]))
    spectra = pair.all_eigenvalues()
    rhs = xi_operator_window(pair, spectra.min() - 1.0, spectra.max() + 1.0)
    return lhs, rhs, float(np.linalg.norm(lhs - rhs, 2))


def _hermitian_sqrt(v: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(v)
    if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
        raise FactorizationFailure(
            f"perturbation has negative eigenvalue {w[0]:.3e}"
        )
    return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.conj().T


def coupling_derivative_residual(
    family: CouplingFamily, z: complex, s: float
) -> float:
    """Residual of d/ds tr log Phi(z, s) = tr(V'(s) (H(s) - z)^(-1)).

    Phi(z, s) = I + K(s)*(H0 - z)^(-1) K(s) with K(s) the Hermitian square
    root of V(s) >= 0.  The s-derivative uses a central difference; the log
    difference is evaluated as tr log(Phi(s+h) Phi(s-h)^(-1)), which keeps
    the branch fixed for small steps.
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("z must be non-real")
    h = 1e-5

    def phi(ss):
        k = _hermitian_sqrt(np.asarray(family.V(ss), dtype=complex))
        return np.eye(k.shape[0]) + k.conj().T @ family.H0.resolvent(z) @ k

    ratio = phi(s + h) @ np.linalg.inv(phi(s - h))
    d_logdet = np.trace(sla.logm(ratio)) / (2 * h)
    hs = HermitianOperator(family.hamiltonian(s))
    rhs = np.trace(np.asarray(family.Vprime(s), dtype=complex) @ hs.resolvent(z))
    return float(abs(d_logdet - rhs))
