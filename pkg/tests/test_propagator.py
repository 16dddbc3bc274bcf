import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hydrohist import phase_space as ps
from hydrohist import propagator as pr
from hydrohist.errors import FitQualityError, ResolutionError, StepSizeError

UNIT = pr.QbmParams(M=1.0, gamma=1.0, kT=1.0)


class TestClassicalPath:
    def test_momentum_decay(self):
        q, p = pr.classical_path(0.0, 2.0, 1.0, UNIT)
        assert p == pytest.approx(2.0 * np.exp(-2.0))

    def test_terminal_displacement(self):
        # q(inf) - q0 = p0 / (2 M gamma)
        q, _ = pr.classical_path(1.0, 3.0, 50.0, UNIT)
        assert q == pytest.approx(1.0 + 1.5)

    def test_short_time_ballistic(self):
        t = 1e-6
        q, _ = pr.classical_path(0.0, 2.0, t, UNIT)
        assert q == pytest.approx(2.0 * t, rel=1e-5)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            pr.classical_path(0.0, 1.0, -0.1, UNIT)


class TestKernelCovariance:
    def test_moment_ode_oracle(self):
        # independent oracle: integrate the second-moment ODE system of the
        # phase-space equation with solve_ivp at generic parameters
        params = pr.QbmParams(M=2.0, gamma=0.7, kT=1.3)
        g, M, kT = params.gamma, params.M, params.kT

        def rhs(t, y):
            vq, cqp, vp = y
            return [2 * cqp / M, vp / M - 2 * g * cqp, -4 * g * vp + 4 * M * g * kT]

        sol = solve_ivp(rhs, (0, 2.0), [0.0, 0.0, 0.0], rtol=1e-10, atol=1e-12)
        vq, cqp, vp = sol.y[:, -1]
        cov = pr.kernel_covariance(params, 2.0)
        assert cov[0, 0] == pytest.approx(vq, rel=1e-8)
        assert cov[0, 1] == pytest.approx(cqp, rel=1e-8)
        assert cov[1, 1] == pytest.approx(vp, rel=1e-8)

    def test_frozen_unit_values(self):
        # M = kT = gamma = 1, t = 10: var_q = t - 3/4 (+ exp corrections),
        # var_p = 1, cov = 1/2
        cov = pr.kernel_covariance(UNIT, 10.0)
        assert cov[0, 0] == pytest.approx(9.25, abs=1e-8)
        assert cov[1, 1] == pytest.approx(1.0, abs=1e-8)
        assert cov[0, 1] == pytest.approx(0.5, abs=1e-8)
        assert pr.kernel_covariance(UNIT, 5.0)[0, 0] == pytest.approx(4.25, abs=1e-4)

    def test_mean_map_columns(self):
        a = pr.kernel_mean_map(UNIT, 10.0)
        assert a[0, 1] == pytest.approx(0.5, abs=1e-8)
        assert a[1, 1] == pytest.approx(np.exp(-20.0))
        assert a[0, 0] == 1.0 and a[1, 0] == 0.0


class TestLongtimeCoefficients:
    def test_frozen_values_t10(self):
        c = pr.longtime_coefficients(UNIT, 10.0)
        assert c.alpha == pytest.approx(0.5)
        assert c.beta == pytest.approx(0.05)
        assert c.epsilon == pytest.approx(-0.05)

    def test_covariance_inverse(self):
        c = pr.longtime_coefficients(UNIT, 10.0)
        cov = c.covariance()
        # exponent matrix is half the inverse covariance
        inv = np.linalg.inv(cov)
        assert inv[1, 1] == pytest.approx(2 * c.alpha)
        assert inv[0, 0] == pytest.approx(2 * c.beta)
        assert inv[0, 1] == pytest.approx(c.epsilon)

    def test_early_time_warns(self):
        with pytest.warns(UserWarning):
            pr.longtime_coefficients(UNIT, 1.0)

    def test_nonpositive_time_rejected(self):
        with pytest.raises(ValueError):
            pr.longtime_coefficients(UNIT, 0.0)

    def test_matches_exact_asymptotically(self):
        t = 200.0
        cov_l = pr.longtime_coefficients(UNIT, t).covariance()
        cov_e = pr.kernel_covariance(UNIT, t)
        assert np.max(np.abs(cov_l - cov_e) / cov_e[0, 0]) < 1e-2


class TestPropagateAnalytic:
    def setup_method(self):
        self.w0 = ps.gaussian_wigner(-25, 25, 256, -6, 6, 128,
                                     var_q=0.25, var_p=0.5)

    def test_zero_time_identity(self):
        w = pr.propagate_analytic(self.w0, 0.0, UNIT)
        assert np.allclose(w.values, self.w0.values)

    def test_moment_recovery(self):
        t = 10.0
        wt = pr.propagate_analytic(self.w0, t, UNIT)
        a = pr.kernel_mean_map(UNIT, t)
        cov0 = np.array([[0.25, 0.0], [0.0, 0.5]])
        cov = a @ cov0 @ a.T + pr.kernel_covariance(UNIT, t)
        _, _, vq, vp, cqp = ps.moments(wt)
        assert vq == pytest.approx(cov[0, 0], rel=2e-3)
        assert vp == pytest.approx(cov[1, 1], rel=2e-3)
        assert cqp == pytest.approx(cov[0, 1], abs=2e-3 * cov[0, 0])

    def test_mass_preserved(self):
        wt = pr.propagate_analytic(self.w0, 5.0, UNIT)
        assert wt.integral() == pytest.approx(1.0, abs=1e-9)

    def test_longtime_mode_matches_coefficients(self):
        t = 10.0
        wt = pr.propagate_analytic(self.w0, t, UNIT, mode="longtime")
        cov = pr.longtime_coefficients(UNIT, t).covariance()
        _, _, vq, vp, cqp = ps.moments(wt)
        # longtime mean map resets p to 0 and adds the terminal drift in q
        assert vq == pytest.approx(cov[0, 0] + 0.25 + 0.25 * 0.5, rel=5e-3)
        assert vp == pytest.approx(cov[1, 1], rel=5e-3)
        assert cqp == pytest.approx(cov[0, 1], rel=5e-3)

    def test_domain_overflow_raises(self):
        small = ps.gaussian_wigner(-4, 4, 64, -4, 4, 64, var_q=0.25, var_p=0.5)
        with pytest.raises(ResolutionError):
            pr.propagate_analytic(small, 20.0, UNIT)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            pr.propagate_analytic(self.w0, 1.0, UNIT, mode="bogus")


class TestFokkerPlanck:
    def test_thermal_state_stationary(self):
        # uniform in q (periodic) times Maxwellian in p is an exact fixed
        # point of the Chang-Cooper discretization
        p = np.linspace(-5, 5, 96)
        vals = np.ones(96)[:, None] * np.exp(-p ** 2 / 2.0)[None, :]
        w = ps.normalize(ps.WignerGrid(-10, 10, 96, -5, 5, 96, vals))
        w2 = pr.evolve_fokker_planck(w, 1.0, UNIT, periodic_q=True)
        assert ps.l1_distance(w, w2) < 1e-12

    def test_moments_match_exact_kernel(self):
        w0 = ps.gaussian_wigner(-18, 18, 160, -6, 6, 96, var_q=0.25, var_p=0.5)
        t = 2.0
        wt = pr.evolve_fokker_planck(w0, t, UNIT)
        a = pr.kernel_mean_map(UNIT, t)
        cov0 = np.array([[0.25, 0.0], [0.0, 0.5]])
        cov = a @ cov0 @ a.T + pr.kernel_covariance(UNIT, t)
        _, _, vq, vp, cqp = ps.moments(wt)
        assert vq == pytest.approx(cov[0, 0], rel=2e-2)
        assert vp == pytest.approx(cov[1, 1], rel=2e-2)
        assert cqp == pytest.approx(cov[0, 1], rel=5e-2)

    def test_l1_against_analytic(self):
        w0 = ps.gaussian_wigner(-18, 18, 160, -6, 6, 96, var_q=0.25, var_p=0.5)
        t = 2.0
        wt = pr.evolve_fokker_planck(w0, t, UNIT)
        wa = pr.propagate_analytic(w0, t, UNIT)
        assert ps.l1_distance(wa, wt) < 1e-2

    def test_mass_conserved(self):
        w0 = ps.gaussian_wigner(-18, 18, 160, -6, 6, 96, var_q=0.25, var_p=0.5)
        wt = pr.evolve_fokker_planck(w0, 1.0, UNIT)
        assert wt.integral() == pytest.approx(1.0, abs=1e-8)

    def test_oversized_step_rejected(self):
        w0 = ps.gaussian_wigner(-18, 18, 160, -6, 6, 96)
        bound = pr.fokker_planck_dt_bound(w0, UNIT)
        with pytest.raises(StepSizeError):
            pr.step_fokker_planck(w0, 2.0 * bound, UNIT)


class TestMasterEquation:
    def setup_method(self):
        self.params = pr.QbmParams(M=1.0, gamma=0.25, kT=1.0)
        self.n = 128
        self.x_min, self.x_max = -10.0, 10.0
        self.x = np.linspace(self.x_min, self.x_max, self.n)

    def cat_state(self, d=4.0, s2=0.25):
        psi = (np.exp(-(self.x - d / 2) ** 2 / (4 * s2))
               + np.exp(-(self.x + d / 2) ** 2 / (4 * s2)))
        psi /= np.sqrt(np.trapezoid(np.abs(psi) ** 2, self.x))
        return ps.DensityMatrix(self.x_min, self.x_max, self.n,
                                np.outer(psi, psi.conj()))

    def test_off_diagonal_decay_rate(self):
        # initial rate of |rho(x, -x)| decay is 2 M gamma kT (2x)^2
        d = 4.0
        rho0 = self.cat_state(d=d)
        i = np.argmin(np.abs(self.x - d / 2))
        j = np.argmin(np.abs(self.x + d / 2))
        dt = 5e-4
        rho1 = pr.evolve_master_equation(rho0, dt, self.params, dt=dt)
        num = np.abs(rho1.kernel[i, j]) - np.abs(rho0.kernel[i, j])
        rate = -num / (dt * np.abs(rho0.kernel[i, j]))
        sep = self.x[i] - self.x[j]
        expected = 2 * self.params.M * self.params.gamma * self.params.kT * sep ** 2
        assert rate == pytest.approx(expected, rel=0.05)

    def test_trace_conserved(self):
        rho0 = self.cat_state()
        rho1 = pr.evolve_master_equation(rho0, 0.05, self.params)
        assert rho1.trace() == pytest.approx(rho0.trace(), abs=1e-8)

    def test_hermitian_after_step(self):
        rho0 = self.cat_state()
        rho1 = pr.evolve_master_equation(rho0, 0.05, self.params)
        dev = np.max(np.abs(rho1.kernel - rho1.kernel.conj().T))
        assert dev < 1e-12

    def test_moments_cross_check_with_kernel(self):
        # evolve a Gaussian state through the density-matrix picture and
        # compare Wigner-space moments with the exact kernel prediction
        p0, p1, n_p = ps.conjugate_momentum_axis(self.x_min, self.x_max, self.n)
        w0 = ps.gaussian_wigner(self.x_min, self.x_max, self.n, p0, p1, n_p,
                                var_q=1.0, var_p=0.5)
        rho0 = ps.wigner_to_density(w0)
        t = 0.5
        rho_t = pr.evolve_master_equation(rho0, t, self.params)
        w_t = ps.density_to_wigner(rho_t)
        _, _, vq, vp, cqp = ps.moments(w_t)
        a = pr.kernel_mean_map(self.params, t)
        cov0 = np.array([[1.0, 0.0], [0.0, 0.5]])
        cov = a @ cov0 @ a.T + pr.kernel_covariance(self.params, t)
        assert vq == pytest.approx(cov[0, 0], rel=2e-2)
        assert vp == pytest.approx(cov[1, 1], rel=2e-2)
        assert cqp == pytest.approx(cov[0, 1], rel=5e-2)

    def test_oversized_step_rejected(self):
        rho0 = self.cat_state()
        bound = pr.master_dt_bound(rho0, self.params)
        with pytest.raises(StepSizeError):
            pr.step_master_equation(rho0, 2.0 * bound, self.params)


class TestDiffusionDiagnostics:
    def test_coefficient(self):
        assert pr.diffusion_coefficient(UNIT) == pytest.approx(0.5)
        assert pr.diffusion_coefficient(
            pr.QbmParams(M=2.0, gamma=0.5, kT=1.0)) == pytest.approx(0.5)

    def test_fit_recovers_theory(self):
        w0 = ps.gaussian_wigner(-60, 60, 384, -6, 6, 96, var_q=0.5, var_p=1.0)
        times = np.linspace(5, 20, 8)
        margs = [ps.position_marginal(pr.propagate_analytic(w0, t, UNIT))
                 for t in times]
        fit = pr.fit_diffusion(times, margs, UNIT)
        assert fit.relative_error < 1e-3
        assert fit.D_theory == pytest.approx(0.5)

    def test_non_monotone_series_rejected(self):
        times = np.array([5.0, 6.0, 7.0, 8.0])
        samples = np.exp(-np.linspace(-4, 4, 64) ** 2)
        samples /= np.trapezoid(samples, dx=8 / 63)
        m = ps.Marginal(axis="position", samples=samples,
                        spacing=8 / 63, origin=-4.0)
        with pytest.raises(FitQualityError):
            pr.fit_diffusion(times, [m, m, m, m], UNIT)

    def test_too_few_samples_rejected(self):
        with pytest.raises(FitQualityError):
            pr.fit_diffusion([5.0, 6.0], [None, None], UNIT)

    def test_pre_diffusive_window_warns(self):
        w0 = ps.gaussian_wigner(-60, 60, 256, -6, 6, 64, var_q=0.5, var_p=1.0)
        times = np.linspace(1, 4, 4)
        margs = [ps.position_marginal(pr.propagate_analytic(w0, t, UNIT))
                 for t in times]
        with pytest.warns(UserWarning):
            pr.fit_diffusion(times, margs, UNIT)

    def test_constitutive_relation_longtime(self):
        w0 = ps.gaussian_wigner(-60, 60, 384, -6, 6, 96, var_q=0.5, var_p=1.0)
        wt = pr.propagate_analytic(w0, 12.0, UNIT)
        res = pr.constitutive_check(wt, UNIT)
        assert res.relative_sup < 1e-2

    def test_constitutive_fails_far_from_equilibrium(self):
        # a drifting packet violates the gradient form of the current
        w = ps.gaussian_wigner(-20, 20, 160, -6, 6, 96, mean_p=2.0,
                               var_q=1.0, var_p=0.5)
        res = pr.constitutive_check(w, UNIT)
        assert res.relative_sup > 0.5


class TestParams:
    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            pr.QbmParams(M=0.0, gamma=1.0, kT=1.0)
        with pytest.raises(ValueError):
            pr.QbmParams(M=1.0, gamma=-1.0, kT=1.0)
