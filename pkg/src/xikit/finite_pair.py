"""Spectral shift operators and functions for finite Hermitian pairs.

A pair (H0, H) with H = H0 + K J K* is handled through the three Herglotz
maps Phi, Phi_plus, Phi_tilde_minus.  At regular real energies the boundary
values of these maps are Hermitian, so the spectral shift operators reduce to
negative spectral projections; the eigenvalue-counting step function serves
as the independent oracle throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .branchlog import (
    HermitianOperator,
    log_antidissipative,
    log_dissipative,
    log_imcut_scalar,
    negative_spectral_projection,
)
from .errors import (
    ArgTrackingLost,
    BadInvolution,
    PoleProximity,
    SupportTooSmall,
)

__all__ = [
    "FactoredPerturbation",
    "PairModel",
    "StepFunction",
    "SpectralShiftSample",
    "build_pair",
    "phi_maps",
    "xi_counting",
    "spectral_shift_operators",
    "spectral_shift_operators_eps",
    "xi_from_determinant",
    "krein_resolvent_residual",
    "trace_formula_residual",
    "sum_rule",
    "logphi_derivative_residual",
]

_POLE_MARGIN = 1e-8


@dataclass
class StepFunction:
    """Piecewise-constant integer-valued function with compact support.

    ``values`` has one more entry than ``breakpoints``; values[0] applies
    below the first breakpoint and values[-1] above the last.  The function
    is right-continuous: values[i+1] applies on [breakpoints[i],
    breakpoints[i+1]).
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.size != self.breakpoints.size + 1:
            raise ValueError("need len(values) == len(breakpoints) + 1")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly ascending")

    def __call__(self, lam):
        idx = np.searchsorted(self.breakpoints, lam, side="right")
        return self.values[idx]

    def _pieces(self):
        """Yield (a, b, value) for every bounded constancy interval."""
        bp, v = self.breakpoints, self.values
        for i in range(bp.size - 1):
            yield bp[i], bp[i + 1], v[i + 1]

    def integral(self) -> float:
        """Closed-form integral; the unbounded tails must carry value 0."""
        self._check_compact()
        return float(sum(v * (b - a) for a, b, v in self._pieces()))

    def integral_abs(self) -> float:
        self._check_compact()
        return float(sum(abs(v) * (b - a) for a, b, v in self._pieces()))

    def window_integral(self, lo: float, hi: float) -> float:
        """Exact integral over the window (lo, hi)."""
        total = 0.0
        total += self.values[0] * max(0.0, min(hi, self.breakpoints[0]) - lo)
        for a, b, v in self._pieces():
            total += v * max(0.0, min(hi, b) - max(lo, a))
        total += self.values[-1] * max(0.0, hi - max(lo, self.breakpoints[-1]))
        return float(total)

    def integral_resolvent_sq(self, z: complex) -> complex:
        """Exact int xi(lam) (lam - z)^(-2) dlam."""
        self._check_compact()
        return complex(
            sum(v * (1.0 / (a - z) - 1.0 / (b - z)) for a, b, v in self._pieces())
        )

    def integrate_derivative_of(self, f) -> float:
        """Exact int xi(lam) f'(lam) dlam via the fundamental theorem."""
        self._check_compact()
        return float(sum(v * (f(b) - f(a)) for a, b, v in self._pieces()))

    def _check_compact(self):
        if self.values[0] != 0 or self.values[-1] != 0:
            raise ValueError("step function has unbounded support")


@dataclass
class FactoredPerturbation:
    """Factored perturbation V = K J K* with J rotated to diag(+1..,-1..).

    An arbitrary self-adjoint involution J is diagonalized once at build
    time; K absorbs the basis change, so Jplus/Jminus are coordinate
    projections and the plus block is the leading ``p`` coordinates.
    """

    K: np.ndarray
    J: np.ndarray
    Jplus: np.ndarray
    Jminus: np.ndarray
    p: int  # dim ran(J+)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def m(self) -> int:
        return self.K.shape[1]


@dataclass
class PairModel:
    """Immutable bundle of H0, the perturbation, and the derived operators."""

    H0: HermitianOperator
    pert: FactoredPerturbation
    V: np.ndarray
    Vplus: np.ndarray
    Vminus: np.ndarray
    Hplus: HermitianOperator
    H: HermitianOperator

    def __post_init__(self):
        # cached K in the eigenbases of H0 and H+: makes Phi maps O(n m^2)
        self._B0 = self.H0.eigenvectors.conj().T @ self.pert.K
        self._Bp = self.Hplus.eigenvectors.conj().T @ self.pert.K

    def all_eigenvalues(self) -> np.ndarray:
        return np.concatenate(
            [self.H0.eigenvalues, self.Hplus.eigenvalues, self.H.eigenvalues]
        )


@dataclass
class SpectralShiftSample:
    """Spectral shift operators and function at one energy."""

    lam: float
    XiPlus: np.ndarray
    XiMinus: np.ndarray
    xi: float

    @property
    def eig_extremes(self):
        """(min, max) eigenvalue over both shift operators."""
        lo, hi = np.inf, -np.inf
        for block in (self.XiPlus, self.XiMinus):
            if block.size:
                w = np.linalg.eigvalsh(block)
                lo, hi = min(lo, w[0]), max(hi, w[-1])
        return lo, hi


def build_pair(H0, K: np.ndarray, J: np.ndarray) -> PairModel:
    """Assemble the pair model from H0 and the factorization (K, J)."""
    if not isinstance(H0, HermitianOperator):
        H0 = HermitianOperator(np.asarray(H0, dtype=complex))
    K = np.atleast_2d(np.asarray(K, dtype=complex))
    if K.shape[0] == 1 and H0.dim > 1:
        K = K.T
    J = np.atleast_2d(np.asarray(J, dtype=complex))
    if np.linalg.norm(J - J.conj().T, 2) > 1e-10 or np.linalg.norm(
        J @ J - np.eye(J.shape[0]), 2
    ) > 1e-10:
        raise BadInvolution("J must be a self-adjoint involution")

    # rotate J to diag(+1,...,-1,...) and absorb the rotation into K
    w, u = np.linalg.eigh(J)
    order = np.argsort(-w)
    w, u = w[order], u[:, order]
    signs = np.where(w > 0, 1.0, -1.0)
    K = K @ u
    p = int(np.sum(signs > 0))
    m = K.shape[1]
    jd = np.diag(signs).astype(complex)
    jplus = np.diag(np.where(signs > 0, 1.0, 0.0)).astype(complex)
    jminus = np.diag(np.where(signs > 0, 0.0, 1.0)).astype(complex)
    pert = FactoredPerturbation(K=K, J=jd, Jplus=jplus, Jminus=jminus, p=p)

    v = K @ jd @ K.conj().T
    vplus = K[:, :p] @ K[:, :p].conj().T
    vminus = K[:, p:] @ K[:, p:].conj().T
    hplus = HermitianOperator(H0.matrix + vplus)
    h = HermitianOperator(H0.matrix + v)
    return PairModel(H0=H0, pert=pert, V=v, Vplus=vplus, Vminus=vminus,
                     Hplus=hplus, H=h)


def _weighted_gram(B: np.ndarray, eigs: np.ndarray, z: complex) -> np.ndarray:
    """K*(A - z)^(-1)K given B = U* K for the eigendecomposition A = U w U*."""
    return B.conj().T @ (B / (eigs - z)[:, None])


def _require_regular(lam, spectra, what="z"):
    if np.min(np.abs(spectra - lam)) <= _POLE_MARGIN:
        raise PoleProximity(f"{what}={lam} within {_POLE_MARGIN} of a spectrum")


def phi_maps(pair: PairModel, z: complex):
    """The maps Phi(z), Phi_plus(z), Phi_tilde_minus(z).

    Phi(z) = J + K*(H0-z)^(-1)K on the whole factor space; Phi_plus acts on
    the plus block through H0, Phi_tilde_minus on the minus block through
    H+.  Raises PoleProximity for real z too close to the relevant spectra.
    """
    z = complex(z)
    if z.imag == 0:
        _require_regular(
            z.real,
            np.concatenate([pair.H0.eigenvalues, pair.Hplus.eigenvalues]),
        )
    p = pair.pert.p
    r0 = _weighted_gram(pair._B0, pair.H0.eigenvalues, z)
    rp = _weighted_gram(pair._Bp, pair.Hplus.eigenvalues, z)
    phi = pair.pert.J + r0
    phi_plus = np.eye(p, dtype=complex) + r0[:p, :p]
    phi_tminus = np.eye(pair.pert.m - p, dtype=complex) - rp[p:, p:]
    return phi, phi_plus, phi_tminus


def xi_counting(pair: PairModel, which: str = "full") -> StepFunction:
    """Difference of eigenvalue counting functions as an exact StepFunction.

    which="full" counts (H0, H); "plus" counts (H0, H+); "minus" counts
    (H+, H).  Serves as the brute-force oracle for the shift operators.
    """
    spec = {
        "full": (pair.H0.eigenvalues, pair.H.eigenvalues),
        "plus": (pair.H0.eigenvalues, pair.Hplus.eigenvalues),
        "minus": (pair.Hplus.eigenvalues, pair.H.eigenvalues),
    }
    try:
        spec_a, spec_b = spec[which]
    except KeyError:
        raise ValueError(f"unknown selector {which!r}") from None
    return counting_difference(spec_a, spec_b)


def counting_difference(spec_a, spec_b) -> StepFunction:
    """StepFunction lam -> #{a <= lam} - #{b <= lam}."""
    events = np.concatenate(
        [np.column_stack([spec_a, np.ones(len(spec_a))]),
         np.column_stack([spec_b, -np.ones(len(spec_b))])]
    )
    events = events[np.argsort(events[:, 0], kind="stable")]
    bps, vals, running = [], [0], 0
    for lam, delta in events:
        running += delta
        if bps and lam - bps[-1] < 1e-14:
            vals[-1] = running  # coincident eigenvalues merge
        else:
            bps.append(lam)
            vals.append(running)
    return StepFunction(np.array(bps), np.array(vals))


def spectral_shift_operators(pair: PairModel, lam: float) -> SpectralShiftSample:
    """Xi_plus, Xi_minus, and xi at a regular real energy.

    At regular lam the boundary values of Phi_plus and Phi_tilde_minus are
    Hermitian, so both shift operators are negative spectral projections and
    xi = tr Xi_plus - tr Xi_minus is an exact integer.
    """
    _require_regular(lam, pair.all_eigenvalues(), "lambda")
    _, phi_plus, phi_tminus = phi_maps(pair, lam)
    xi_plus = _neg_proj_hermitian(phi_plus)
    xi_minus = _neg_proj_hermitian(phi_tminus)
    xi = float(np.trace(xi_plus).real - np.trace(xi_minus).real)
    return SpectralShiftSample(lam=lam, XiPlus=xi_plus, XiMinus=xi_minus, xi=xi)


def _neg_proj_hermitian(m: np.ndarray) -> np.ndarray:
    if m.size == 0:
        return m
    return negative_spectral_projection((m + m.conj().T) / 2)


def spectral_shift_operators_eps(
    pair: PairModel, lam: float, eps: float
) -> SpectralShiftSample:
    """Epsilon-regularized shift operators from branch logs at lam + i*eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = lam + 1j * eps
    _, phi_plus, phi_tminus = phi_maps(pair, z)
    xi_plus = np.zeros((0, 0), dtype=complex)
    xi_minus = np.zeros((0, 0), dtype=complex)
    if phi_plus.size:
        v = log_dissipative(phi_plus).value
        xi_plus = (v - v.conj().T) / (2j * np.pi)
    if phi_tminus.size:
        v = log_antidissipative(phi_tminus).value
        xi_minus = -(v - v.conj().T) / (2j * np.pi)
    xi = float(np.trace(xi_plus).real - np.trace(xi_minus).real)
    return SpectralShiftSample(lam=lam, XiPlus=xi_plus, XiMinus=xi_minus, xi=xi)


def xi_from_determinant(
    pair: PairModel, lam: float, eps: float, steps: int = 200
) -> float:
    """xi via the perturbation determinant det(I + V (H0 - lam - i*eps)^(-1)).

    The scalar log branch is fixed by tracking the determinant's argument
    continuously along a geometric descent in epsilon, starting far enough
    up the half-plane that the determinant is close to 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    scale = np.max(np.abs(pair.all_eigenvalues())) + np.linalg.norm(pair.V, 2)
    eps0 = max(100.0 * (scale + abs(lam)), eps)
    eps_path = np.geomspace(eps0, eps, steps)
    u = pair.H0.eigenvectors
    vh = u.conj().T @ pair.V @ u  # V in the H0 eigenbasis
    n = pair.H0.dim
    theta = None
    prev = None
    for e in eps_path:
        res = 1.0 / (pair.H0.eigenvalues - (lam + 1j * e))
        det = np.linalg.det(np.eye(n) + vh * res[None, :])
        if abs(det) < 1e-12:
            raise ArgTrackingLost(f"determinant {det} too close to zero")
        if theta is None:
            theta = np.angle(det)
        else:
            theta += np.angle(det / prev)
        prev = det
    return float(theta / np.pi)


def krein_resolvent_residual(pair: PairModel, z: complex) -> float:
    """Residual of Krein's trace formula at z.

    |tr((H-z)^(-1) - (H0-z)^(-1)) + int xi(lam) (lam-z)^(-2) dlam| with the
    integral in closed form over the step pieces.
    """
    z = complex(z)
    spectra = np.concatenate([pair.H0.eigenvalues, pair.H.eigenvalues])
    if z.imag == 0:
        _require_regular(z.real, spectra)
    tr_diff = np.sum(1.0 / (pair.H.eigenvalues - z)) - np.sum(
        1.0 / (pair.H0.eigenvalues - z)
    )
    step = xi_counting(pair, "full")
    return float(abs(tr_diff + step.integral_resolvent_sq(z)))


def trace_formula_residual(pair: PairModel, f, support=None) -> float:
    """Residual of the generalized trace formula tr(f(H)-f(H0)) = int xi f'.

    ``f`` is a callable (typically a spline through samples); the xi-weighted
    integral of f' is evaluated exactly piece by piece via the fundamental
    theorem of calculus.
    """
    spectra = np.concatenate([pair.H0.eigenvalues, pair.H.eigenvalues])
    if support is not None:
        lo, hi = support
        if lo > spectra.min() - 1e-9 or hi < spectra.max() + 1e-9:
            raise SupportTooSmall(
                f"support ({lo}, {hi}) does not cover the spectra with margin"
            )
    lhs = float(np.sum(f(pair.H.eigenvalues)) - np.sum(f(pair.H0.eigenvalues)))
    rhs = xi_counting(pair, "full").integrate_derivative_of(f)
    return abs(lhs - rhs)


def sum_rule(pair: PairModel):
    """(int xi, tr V, int |xi|, trace norm of V); Krein's sum rules."""
    step = xi_counting(pair, "full")
    trace_v = float(np.trace(pair.V).real)
    trace_norm_v = float(np.sum(np.linalg.svd(pair.V, compute_uv=False)))
    return step.integral(), trace_v, step.integral_abs(), trace_norm_v


def _tr_log_upper(m: np.ndarray) -> complex:
    """tr log of a dissipative matrix via scalar branch logs of eigenvalues."""
    return complex(sum(log_imcut_scalar(w) for w in np.linalg.eigvals(m)))


def logphi_derivative_residual(pair: PairModel, z: complex):
    """Residuals of the resolvent-trace/log-derivative identities.

    Central finite differences in z against tr((H0-z)^(-1) - (H+-z)^(-1))
    and tr((H+-z)^(-1) - (H-z)^(-1)).
    """
    z = complex(z)
    if z.imag == 0:
        raise PoleProximity("z must be non-real")
    h = 1e-5 * (1 + abs(z))

    def tr_logs(zz):
        _, phi_plus, phi_tminus = phi_maps(pair, zz)
        tp = _tr_log_upper(phi_plus) if phi_plus.size else 0.0
        tm = (
            np.conj(_tr_log_upper(phi_tminus.conj().T))
            if phi_tminus.size
            else 0.0
        )
        return tp, tm

    tp_hi, tm_hi = tr_logs(z + h)
    tp_lo, tm_lo = tr_logs(z - h)
    d_plus = (tp_hi - tp_lo) / (2 * h)
    d_minus = (tm_hi - tm_lo) / (2 * h)

    def tr_res(op, zz):
        return np.sum(1.0 / (op.eigenvalues - zz))

    lhs_plus = tr_res(pair.H0, z) - tr_res(pair.Hplus, z)
    lhs_minus = tr_res(pair.Hplus, z) - tr_res(pair.H, z)
    return float(abs(lhs_plus - d_plus)), float(abs(lhs_minus - d_minus))
