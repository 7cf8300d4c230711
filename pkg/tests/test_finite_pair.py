import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from xikit.branchlog import HermitianOperator
from xikit.errors import BadInvolution, PoleProximity, SupportTooSmall
from xikit.finite_pair import (
    StepFunction,
    build_pair,
    krein_resolvent_residual,
    logphi_derivative_residual,
    phi_maps,
    spectral_shift_operators,
    spectral_shift_operators_eps,
    sum_rule,
    trace_formula_residual,
    xi_counting,
    xi_from_determinant,
)


def random_pair(rng, n=8, m=4, p=2, scale=1.0):
    """Random sign-indefinite finite pair."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h0 = (a + a.conj().T) / 2
    k = scale * (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)))
    j = np.diag([1.0] * p + [-1.0] * (m - p))
    return build_pair(h0, k, j)


def regular_lambdas(pair, count, rng, margin=1e-6):
    """Sample energies across the spectra, away from every eigenvalue."""
    spectra = pair.all_eigenvalues()
    lo, hi = spectra.min() - 1.0, spectra.max() + 1.0
    out = []
    while len(out) < count:
        lam = rng.uniform(lo, hi)
        if np.min(np.abs(spectra - lam)) > margin:
            out.append(lam)
    return np.array(out)


class TestStepFunction:
    def test_call_and_pieces(self):
        s = StepFunction([0.0, 1.0, 3.0], [0, 1, -2, 0])
        assert s(-0.5) == 0
        assert s(0.5) == 1
        assert s(2.0) == -2
        assert s(5.0) == 0
        assert s.integral() == pytest.approx(1.0 - 4.0)
        assert s.integral_abs() == pytest.approx(1.0 + 4.0)

    def test_window_integral(self):
        s = StepFunction([0.0, 2.0], [0, 1, 0])
        assert s.window_integral(-1.0, 1.0) == pytest.approx(1.0)
        assert s.window_integral(0.5, 3.0) == pytest.approx(1.5)
        assert s.window_integral(-5.0, -1.0) == pytest.approx(0.0)

    def test_resolvent_sq_integral(self):
        s = StepFunction([0.0, 1.0], [0, 1, 0])
        z = 0.3 + 0.7j
        # oracle: dense midpoint rule
        mu = np.linspace(0, 1, 200001)[:-1] + 0.5 / 200000
        oracle = np.sum(1.0 / (mu - z) ** 2) / 200000
        assert s.integral_resolvent_sq(z) == pytest.approx(oracle, abs=1e-9)

    def test_integrate_derivative(self):
        s = StepFunction([-1.0, 2.0], [0, 3, 0])
        f = np.sin
        assert s.integrate_derivative_of(f) == pytest.approx(
            3 * (np.sin(2.0) - np.sin(-1.0))
        )

    def test_unbounded_support_rejected(self):
        s = StepFunction([0.0], [0, 1])
        with pytest.raises(ValueError):
            s.integral()


class TestBuildPair:
    def test_rank_one_scalar(self):
        pair = build_pair(np.zeros((1, 1)), np.array([[1.0]]), np.array([[1.0]]))
        np.testing.assert_allclose(pair.V, [[1.0]])
        np.testing.assert_allclose(pair.H.eigenvalues, [1.0])

    def test_rotated_involution(self):
        # J with off-diagonal structure gets diagonalized; V is unchanged
        rng = np.random.default_rng(0)
        n, m = 6, 3
        k = rng.standard_normal((n, m))
        q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        j = q @ np.diag([1.0, -1.0, -1.0]) @ q.T
        h0 = np.diag(rng.standard_normal(n))
        pair = build_pair(h0, k, j)
        np.testing.assert_allclose(pair.V, k @ j @ k.T, atol=1e-12)
        np.testing.assert_allclose(pair.pert.J, np.diag([1.0, -1.0, -1.0]), atol=1e-12)
        assert pair.pert.p == 1
        np.testing.assert_allclose(pair.V, pair.Vplus - pair.Vminus, atol=1e-12)

    def test_bad_involution(self):
        with pytest.raises(BadInvolution):
            build_pair(np.zeros((2, 2)), np.ones((2, 1)), np.array([[2.0]]))


class TestPhiMaps:
    def test_rank_one_closed_form(self):
        # H0 = 0, V = t: Phi(z) = 1 - t... no: Phi(z) = J + K*(H0-z)^(-1)K = 1 - t/z
        t = 2.0
        pair = build_pair(
            np.zeros((1, 1)), np.array([[np.sqrt(t)]]), np.array([[1.0]])
        )
        z = 1j
        phi, phi_plus, phi_tminus = phi_maps(pair, z)
        assert phi[0, 0] == pytest.approx(1.0 - t / z)
        assert phi_plus[0, 0] == pytest.approx(1.0 - t / z)
        assert phi_tminus.shape == (0, 0)

    def test_inverse_identities(self):
        # Phi(z)^(-1) = J - J K*(H-z)^(-1) K J
        # Phi_plus(z)^(-1) = I - K+*(H+ - z)^(-1) K+
        # Phi_tminus(z)^(-1) = I + K-*(H - z)^(-1) K-
        rng = np.random.default_rng(4)
        pair = random_pair(rng, n=7, m=4, p=2)
        k, j, p = pair.pert.K, pair.pert.J, pair.pert.p
        for z in (0.4 + 0.8j, -2.0 + 0.3j, 1.5 - 0.6j):
            phi, phi_plus, phi_tminus = phi_maps(pair, z)
            rh = pair.H.resolvent(z)
            rp = pair.Hplus.resolvent(z)
            inv_phi = j - j @ k.conj().T @ rh @ k @ j
            np.testing.assert_allclose(np.linalg.inv(phi), inv_phi, atol=1e-10)
            kp, km = k[:, :p], k[:, p:]
            inv_plus = np.eye(p) - kp.conj().T @ rp @ kp
            np.testing.assert_allclose(np.linalg.inv(phi_plus), inv_plus, atol=1e-10)
            inv_tminus = np.eye(k.shape[1] - p) + km.conj().T @ rh @ km
            np.testing.assert_allclose(
                np.linalg.inv(phi_tminus), inv_tminus, atol=1e-10
            )

    def test_herglotz_signs(self):
        # on the upper half-plane: Im Phi_plus >= 0, Im Phi_tminus <= 0
        rng = np.random.default_rng(8)
        pair = random_pair(rng)
        for _ in range(20):
            z = rng.uniform(-5, 5) + 1j * rng.uniform(0.05, 2.0)
            _, phi_plus, phi_tminus = phi_maps(pair, z)
            im_p = np.linalg.eigvalsh((phi_plus - phi_plus.conj().T) / 2j)
            assert im_p[0] >= -1e-10
            im_m = np.linalg.eigvalsh((phi_tminus - phi_tminus.conj().T) / 2j)
            assert im_m[-1] <= 1e-10

    def test_pole_proximity(self):
        pair = build_pair(np.zeros((1, 1)), np.array([[1.0]]), np.array([[1.0]]))
        with pytest.raises(PoleProximity):
            phi_maps(pair, 1e-12)


class TestXiCounting:
    def test_rank_one_window(self):
        # H0 = 0, V = t > 0: xi = 1 exactly on (0, t)
        t = 1.7
        pair = build_pair(
            np.zeros((1, 1)), np.array([[np.sqrt(t)]]), np.array([[1.0]])
        )
        step = xi_counting(pair, "full")
        np.testing.assert_allclose(step.breakpoints, [0.0, t])
        np.testing.assert_array_equal(step.values, [0, 1, 0])
        assert step.integral() == pytest.approx(t)

    def test_decomposition_consistency(self):
        # full shift equals plus-step minus (minus-step reversed)
        rng = np.random.default_rng(21)
        pair = random_pair(rng)
        full = xi_counting(pair, "full")
        plus = xi_counting(pair, "plus")
        minus = xi_counting(pair, "minus")
        for lam in regular_lambdas(pair, 50, rng):
            assert full(lam) == plus(lam) + minus(lam)

    def test_bad_selector(self):
        pair = build_pair(np.zeros((1, 1)), np.array([[1.0]]), np.array([[1.0]]))
        with pytest.raises(ValueError):
            xi_counting(pair, "sideways")


class TestSpectralShiftOperators:
    def test_matches_counting_oracle(self):
        # xi from negative spectral projections == counting difference,
        # exactly as integers, across random pairs and many energies
        rng = np.random.default_rng(42)
        for _ in range(10):
            pair = random_pair(rng)
            full = xi_counting(pair, "full")
            plus = xi_counting(pair, "plus")
            minus = xi_counting(pair, "minus")
            for lam in regular_lambdas(pair, 20, rng):
                s = spectral_shift_operators(pair, lam)
                tr_p = np.trace(s.XiPlus).real
                tr_m = np.trace(s.XiMinus).real
                assert round(s.xi, 6) == full(lam)
                assert round(tr_p, 6) == plus(lam)
                assert round(tr_m, 6) == -minus(lam)

    def test_operators_are_projections(self):
        rng = np.random.default_rng(1)
        pair = random_pair(rng)
        lam = regular_lambdas(pair, 1, rng)[0]
        s = spectral_shift_operators(pair, lam)
        for x in (s.XiPlus, s.XiMinus):
            np.testing.assert_allclose(x @ x, x, atol=1e-12)
        lo, hi = s.eig_extremes
        assert lo >= -1e-12 and hi <= 1 + 1e-12

    def test_pole_rejected(self):
        pair = build_pair(np.zeros((1, 1)), np.array([[1.0]]), np.array([[1.0]]))
        with pytest.raises(PoleProximity):
            spectral_shift_operators(pair, 1.0)


class TestEpsRegularized:
    def test_converges_to_boundary_value(self):
        rng = np.random.default_rng(33)
        pair = random_pair(rng)
        for lam in regular_lambdas(pair, 5, rng, margin=1e-2):
            exact = spectral_shift_operators(pair, lam)
            prev = np.inf
            for eps in (1e-3, 1e-5, 1e-7):
                approx = spectral_shift_operators_eps(pair, lam, eps)
                dev = max(
                    np.linalg.norm(approx.XiPlus - exact.XiPlus, 2),
                    np.linalg.norm(approx.XiMinus - exact.XiMinus, 2),
                )
                assert dev < prev + 1e-12
                prev = dev
            assert prev <= 1e-4
            assert abs(approx.xi - exact.xi) <= 1e-4

    def test_requires_positive_eps(self):
        pair = build_pair(np.zeros((1, 1)), np.array([[1.0]]), np.array([[1.0]]))
        with pytest.raises(ValueError):
            spectral_shift_operators_eps(pair, 0.5, 0.0)


class TestDeterminantRoute:
    def test_rank_one_closed_form(self):
        # D(lam + i eps) = 1 - t/(lam + i eps); xi -> 1 on (0, t)
        t = 2.0
        pair = build_pair(
            np.zeros((1, 1)), np.array([[np.sqrt(t)]]), np.array([[1.0]])
        )
        assert xi_from_determinant(pair, 1.0, 1e-9) == pytest.approx(1.0, abs=1e-6)
        assert xi_from_determinant(pair, 3.0, 1e-9) == pytest.approx(0.0, abs=1e-6)
        assert xi_from_determinant(pair, -1.0, 1e-9) == pytest.approx(0.0, abs=1e-6)

    def test_matches_projection_route(self):
        # two independent computational routes agree at small epsilon
        rng = np.random.default_rng(55)
        for _ in range(5):
            pair = random_pair(rng)
            full = xi_counting(pair, "full")
            for lam in regular_lambdas(pair, 10, rng, margin=1e-2):
                got = xi_from_determinant(pair, lam, 1e-7)
                assert got == pytest.approx(full(lam), abs=1e-3)


class TestKreinFormula:
    def test_residual_small(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            pair = random_pair(rng)
            for _ in range(10):
                z = rng.uniform(-5, 5) + 1j * rng.uniform(0.1, 3.0)
                assert krein_resolvent_residual(pair, z) <= 1e-9

    def test_real_regular_z(self):
        rng = np.random.default_rng(78)
        pair = random_pair(rng)
        z = pair.all_eigenvalues().max() + 5.0
        assert krein_resolvent_residual(pair, z) <= 1e-9


class TestTraceFormula:
    def test_polynomial(self):
        rng = np.random.default_rng(9)
        pair = random_pair(rng)

        def f(x):
            return x**3 - 2 * x

        assert trace_formula_residual(pair, f) <= 1e-9

    def test_spline(self):
        rng = np.random.default_rng(10)
        pair = random_pair(rng)
        spectra = pair.all_eigenvalues()
        lo, hi = spectra.min() - 2, spectra.max() + 2
        xs = np.linspace(lo, hi, 2001)
        f = CubicSpline(xs, np.exp(-0.1 * xs**2) * np.sin(xs))
        assert trace_formula_residual(pair, f, support=(lo, hi)) <= 1e-9

    def test_support_too_small(self):
        rng = np.random.default_rng(12)
        pair = random_pair(rng)
        with pytest.raises(SupportTooSmall):
            trace_formula_residual(pair, np.sin, support=(-0.1, 0.1))


class TestSumRules:
    def test_first_sum_rule(self):
        rng = np.random.default_rng(88)
        for _ in range(10):
            pair = random_pair(rng)
            int_xi, tr_v, int_abs_xi, tracenorm_v = sum_rule(pair)
            assert int_xi == pytest.approx(tr_v, abs=1e-9)
            assert int_abs_xi <= tracenorm_v + 1e-9

    def test_sign_definite_case(self):
        # J = I: xi >= 0 everywhere and |xi| integrates to tr V exactly
        rng = np.random.default_rng(89)
        pair = random_pair(rng, m=3, p=3)
        step = xi_counting(pair, "full")
        assert np.all(step.values >= 0)
        int_xi, tr_v, int_abs_xi, _ = sum_rule(pair)
        assert int_abs_xi == pytest.approx(int_xi, abs=1e-12)
        assert int_xi == pytest.approx(tr_v, abs=1e-9)


class TestLogDerivative:
    def test_residuals(self):
        rng = np.random.default_rng(101)
        pair = random_pair(rng)
        for _ in range(5):
            z = rng.uniform(-4, 4) + 1j * rng.uniform(0.5, 2.0)
            r_plus, r_minus = logphi_derivative_residual(pair, z)
            assert r_plus <= 1e-5
            assert r_minus <= 1e-5

    def test_real_z_rejected(self):
        rng = np.random.default_rng(102)
        pair = random_pair(rng)
        with pytest.raises(PoleProximity):
            logphi_derivative_residual(pair, 0.5)
