"""Half-kinetic 1D Schrodinger operator with Dirichlet decoupling.

H = -(1/2) d^2/dx^2 + V on (-L, L) with Dirichlet walls, discretized by the
standard 3-point stencil.  Removing the grid node at the decoupling point y
realizes the two-sided Dirichlet (Friedrichs) operator; the diagonal
Green's function G(z, y, y), its boundary sign pattern xi(lambda, y), the
Donoghue m-functions, and the trace-formula recovery of V(y) all derive
from this pair of tridiagonal matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import PoleProximity, WindowEmpty, ZeroGreen
from .finite_pair import StepFunction, counting_difference

__all__ = [
    "SchrodingerModel",
    "DiscretizedOperators",
    "build_operators",
    "green_diagonal",
    "green_column",
    "xi_lambda",
    "xi_counting_step",
    "recover_potential",
    "m_functions",
    "theorem411_sides",
    "theorem411_residual",
    "deficiency_link_residual",
    "lemma410_combination",
]

_POLE_MARGIN = 1e-8
_CLUSTER_TOL = 1e-6


@dataclass
class SchrodingerModel:
    """Configuration: potential, box size, grid spacing, decoupling point."""

    potential: object  # callable x -> real
    L: float = 20.0
    h: float = 0.02
    y: float = 0.0
    lambda_cut: float = None

    def __post_init__(self):
        if self.h > 0.1:
            raise ValueError("grid spacing must satisfy h <= 0.1")
        if self.L < 10:
            raise ValueError("box half-length must satisfy L >= 10")
        if not -self.L < self.y < self.L:
            raise ValueError("decoupling point must be interior")
        k = (self.y + self.L) / self.h
        if abs(k - round(k)) > 1e-9:
            raise ValueError("decoupling point must lie on the grid")
        if self.lambda_cut is None:
            # high-lambda discrete levels misrepresent the continuum; keep
            # only the bottom tenth of the discrete band 0..2/h^2
            self.lambda_cut = 0.2 / self.h**2


@dataclass
class DiscretizedOperators:
    """Tridiagonal full and Dirichlet-decoupled operators with spectra."""

    x: np.ndarray
    h: float
    iy: int
    vpot: np.ndarray
    diag: np.ndarray
    off: float
    evals_full: np.ndarray
    evals_dec: np.ndarray
    E0: float
    lambda_cut: float

    @property
    def y(self) -> float:
        return float(self.x[self.iy])


def build_operators(model: SchrodingerModel) -> DiscretizedOperators:
    """Assemble the pair (Hfull, Hdec) and their complete spectra."""
    h, L = model.h, model.L
    n = int(round(2 * L / h)) - 1
    x = -L + h * (1 + np.arange(n))
    vpot = np.array([float(model.potential(xi)) for xi in x])
    diag = 1.0 / h**2 + vpot
    off = -0.5 / h**2
    iy = int(round((model.y + L) / h)) - 1

    offs = np.full(n - 1, off)
    evals_full = sla.eigh_tridiagonal(diag, offs, eigvals_only=True)
    left_d, right_d = diag[:iy], diag[iy + 1:]
    evals_dec = np.concatenate(
        [
            sla.eigh_tridiagonal(left_d, np.full(iy - 1, off), eigvals_only=True)
            if iy > 1 else left_d,
            sla.eigh_tridiagonal(
                right_d, np.full(n - iy - 2, off), eigvals_only=True
            )
            if n - iy - 1 > 1 else right_d,
        ]
    )
    evals_dec.sort()
    return DiscretizedOperators(
        x=x, h=h, iy=iy, vpot=vpot, diag=diag, off=off,
        evals_full=evals_full, evals_dec=evals_dec,
        E0=float(evals_full[0]), lambda_cut=model.lambda_cut,
    )


def _solve_full(ops: DiscretizedOperators, z: complex, rhs: np.ndarray):
    n = ops.diag.size
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = ops.off
    ab[1] = ops.diag - z
    ab[2, :-1] = ops.off
    return sla.solve_banded((1, 1), ab, rhs)


def _solve_dec(ops: DiscretizedOperators, z: complex, rhs: np.ndarray):
    """Resolvent of the decoupled operator, embedded with a zero at iy."""
    out = np.zeros(rhs.size, dtype=complex)
    for sl in (slice(0, ops.iy), slice(ops.iy + 1, rhs.size)):
        d = ops.diag[sl]
        k = d.size
        if k == 0:
            continue
        ab = np.zeros((3, k), dtype=complex)
        ab[0, 1:] = ops.off
        ab[1] = d - z
        ab[2, :-1] = ops.off
        out[sl] = sla.solve_banded((1, 1), ab, rhs[sl])
    return out


def _check_regular(ops: DiscretizedOperators, z: complex, which="full"):
    if abs(complex(z).imag) > 0:
        return
    spec = ops.evals_full if which == "full" else ops.evals_dec
    if np.min(np.abs(spec - complex(z).real)) <= _POLE_MARGIN:
        raise PoleProximity(f"z={z} within {_POLE_MARGIN} of the spectrum")


def green_column(ops: DiscretizedOperators, z: complex) -> np.ndarray:
    """G(z, ., y): the y-column of the continuum-normalized Green kernel."""
    _check_regular(ops, z)
    e = np.zeros(ops.diag.size, dtype=complex)
    e[ops.iy] = 1.0
    return _solve_full(ops, z, e) / ops.h


def green_diagonal(ops: DiscretizedOperators, z: complex) -> complex:
    """G(z, y, y); scalar Herglotz in z, real off the spectrum."""
    return complex(green_column(ops, z)[ops.iy])


def _merged_clusters(ops: DiscretizedOperators, lo: float, hi: float):
    """Sorted cluster representatives and net counting jumps in (lo, hi).

    Coincident full/decoupled eigenvalues (within _CLUSTER_TOL) merge into a
    single breakpoint carrying the net jump of N_full - N_dec.
    """
    events = np.concatenate(
        [
            np.column_stack([ops.evals_full, np.ones(ops.evals_full.size)]),
            np.column_stack([ops.evals_dec, -np.ones(ops.evals_dec.size)]),
        ]
    )
    events = events[(events[:, 0] > lo) & (events[:, 0] < hi)]
    events = events[np.argsort(events[:, 0], kind="stable")]
    reps, jumps = [], []
    for lam, delta in events:
        if reps and lam - reps[-1] < _CLUSTER_TOL:
            jumps[-1] += delta
        else:
            reps.append(lam)
            jumps.append(delta)
    return np.array(reps), np.array(jumps)


def xi_lambda(ops: DiscretizedOperators, lo: float = None, hi: float = None):
    """xi(lambda, y) on [lo, hi] as a StepFunction, from the sign of G.

    xi = 1 where G(lambda, y, y) < 0 and 0 where G > 0, evaluated at the
    midpoint of every gap between consecutive (clustered) eigenvalues of
    Hfull and Hdec.  The returned step is clipped to 0 outside [lo, hi].
    """
    if lo is None:
        lo = ops.E0 - 1.0
    if hi is None:
        hi = ops.lambda_cut
    for edge in (lo, hi):
        if np.min(np.abs(np.concatenate([ops.evals_full, ops.evals_dec]) - edge)) \
                <= _POLE_MARGIN:
            raise PoleProximity(f"window edge {edge} too close to an eigenvalue")
    reps, jumps = _merged_clusters(ops, lo, hi)
    edges = np.concatenate([[lo], reps, [hi]])
    vals = [0]
    running = int(np.sum(ops.evals_full <= lo) - np.sum(ops.evals_dec <= lo))
    for a, b, jump in zip(edges[:-1], edges[1:], np.concatenate([[0], jumps])):
        running += int(jump)
        if b - a > 10 * _CLUSTER_TOL:
            g = green_diagonal(ops, (a + b) / 2).real
            val = 1 if g < 0 else 0
            if val != running:
                raise AssertionError(
                    f"Green-sign xi {val} disagrees with counting {running} "
                    f"on ({a}, {b})"
                )
        vals.append(running)
    vals.append(0)
    return StepFunction(edges, np.array(vals))


def xi_counting_step(ops: DiscretizedOperators) -> StepFunction:
    """Counting oracle N_full - N_dec over the whole discrete spectrum."""
    return counting_difference(ops.evals_full, ops.evals_dec)


def recover_potential(ops: DiscretizedOperators, z_list):
    """Trace-formula estimates of V(y) at each (negative) z.

    estimate(z) = E0 + z^2 * int_{E0}^{cut} (lam - z)^(-2) (1 - 2 xi) dlam
    with the integral in closed form over the step pieces; the estimates
    plateau near V(y) inside the validity window of the discretization.
    """
    z_list = np.atleast_1d(np.asarray(z_list, dtype=float))
    if np.any(z_list >= -10):
        raise ValueError("need z <= -10 for the asymptotic window")
    cut = ops.lambda_cut
    if cut <= ops.E0 or not np.any(
        (ops.evals_full > ops.E0) & (ops.evals_full < cut)
    ):
        raise WindowEmpty("no spectrum between E0 and the cutoff")
    spec = np.concatenate([ops.evals_full, ops.evals_dec])
    while np.min(np.abs(spec - cut)) <= 10 * _POLE_MARGIN:
        cut += 1e-6
    # xi vanishes below E0, so widening the window there changes nothing
    step = xi_lambda(ops, ops.E0 - 1e-3, cut)
    out = []
    for z in z_list:
        total = 1.0 / (ops.E0 - z) - 1.0 / (cut - z)
        total -= 2.0 * step.integral_resolvent_sq(z).real
        out.append(float(ops.E0 + z * z * total))
    return out


def m_functions(ops: DiscretizedOperators, z: complex):
    """Donoghue m-functions (m_pi2, m_F) of the full/decoupled pair.

    m_pi2 = (G(z,y,y) - Re G(i,y,y)) / Im G(i,y,y);
    m_F = -G(z,y,y)^(-1) / Im G(i,y,y) - tan(alpha_F) with
    tan(alpha_F) = -Re G(i,y,y) / Im G(i,y,y).
    """
    gi = green_diagonal(ops, 1j)
    g = green_diagonal(ops, z)
    m_pi2 = (g - gi.real) / gi.imag
    if abs(g) < 1e-12:
        raise ZeroGreen(f"G(z,y,y) = {g} too small to invert")
    tan_alpha = -gi.real / gi.imag
    m_f = -1.0 / (g * gi.imag) - tan_alpha
    return m_pi2, m_f


def _free_kernel_overlap(ops: DiscretizedOperators, z: float) -> float:
    """v(z) = int exp(-2 sqrt(2|z|) |x - y|) V(x) dx by the trapezoid rule."""
    kappa = np.sqrt(2.0 * abs(z))
    w = np.exp(-2.0 * kappa * np.abs(ops.x - ops.y))
    return float(np.trapezoid(w * ops.vpot, dx=ops.h))


def theorem411_sides(
    ops: DiscretizedOperators, ops_free: DiscretizedOperators, z: float
):
    """Both sides of the leading-order resolvent-weighted shift identity.

    lhs = int (lam - z)^(-2) (xi_free - xi) dlam over the full discrete
    spectrum (the difference has compact support); rhs = -d/dz of
    v(z)/(i sqrt(2 z)) with v the exponentially localized overlap of V.
    """
    if z > -20:
        raise ValueError("need z <= -20")
    diff = counting_difference(
        np.concatenate([ops_free.evals_full, ops.evals_dec]),
        np.concatenate([ops_free.evals_dec, ops.evals_full]),
    )
    lhs = diff.integral_resolvent_sq(z).real

    def ratio(zz):
        return _free_kernel_overlap(ops, zz) / (-np.sqrt(2.0 * abs(zz)))

    dz = 1e-3 * abs(z)
    rhs = -(ratio(z + dz) - ratio(z - dz)) / (2 * dz)
    return lhs, rhs


def theorem411_residual(
    ops: DiscretizedOperators, ops_free: DiscretizedOperators, z: float
) -> float:
    """|lhs - rhs| * z^2 for the leading-order identity at large -z."""
    lhs, rhs = theorem411_sides(ops, ops_free, z)
    return float(abs(lhs - rhs) * z * z)


def deficiency_link_residual(
    ops: DiscretizedOperators, ops_free: DiscretizedOperators, z: float
) -> float:
    """Residual of u_+(z) being proportional to (I - R_dec V) u_+^0(z).

    u_+ is the normalized Green column of the perturbed operator, u_+^0 of
    the free one, R_dec the embedded decoupled resolvent of the perturbed
    operator and V the potential; the identity is exact at matrix level.
    """
    if z >= min(ops.E0, ops_free.E0):
        raise ValueError("need z below both spectra")
    u = green_column(ops, z).real
    u0 = green_column(ops_free, z).real
    v = ops.vpot - ops_free.vpot
    w = u0 - _solve_dec(ops, z, v * u0).real
    u = u / np.linalg.norm(u)
    w = w / np.linalg.norm(w)
    if np.dot(u, w) < 0:
        w = -w
    return float(np.linalg.norm(u - w))


def lemma410_combination(
    ops: DiscretizedOperators, ops_free: DiscretizedOperators, z: float
) -> float:
    """M(z) - c^2 m(z) + c^2 v(z): tends to a constant as z -> -inf.

    M and m are the Donoghue m-functions of the perturbed and free pairs,
    built from the deficiency families u_+(z) = u_+(i) + (z-i) R_dec(z)
    u_+(i), anchored at m(i) = i; v(z) = (u_+^0(z), V u_+^0(z)) with
    h-weighted inner products; c > 0 normalizes (I - R_dec(i) V) u_+^0(i),
    which fixes the phase of the perturbed deficiency vector as well.
    """
    h = ops.h
    v = ops.vpot - ops_free.vpot
    g0 = green_column(ops_free, 1j)
    u0_i = g0 / (np.linalg.norm(g0) * np.sqrt(h))
    w = u0_i - _solve_dec(ops, 1j, v * u0_i)
    c = 1.0 / (np.linalg.norm(w) * np.sqrt(h))
    u_i = c * w

    def uplus(ops_, ui, zz):
        return ui + (zz - 1j) * _solve_dec(ops_, zz, ui)

    def dm(ops_, ui, zz):
        return 1j + (zz - 1j) * h * np.vdot(uplus(ops_, ui, np.conj(zz)), ui)

    big_m = dm(ops, u_i, z)
    m0 = dm(ops_free, u0_i, z)
    u0_z = uplus(ops_free, u0_i, z)
    vz = h * float(np.sum(v * np.abs(u0_z) ** 2))
    return float((big_m - c * c * m0 + c * c * vz).real)
