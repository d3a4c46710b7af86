import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import ks_2samp

from nonrev import zigzag
from nonrev.zigzag import (EnvelopeViolation, IntensitySpec, PhiEps, Potential,
                           SmoothObservable, intensity, phi_eps,
                           simulate_zigzag, zz_gaussian)


def free_potential():
    """U identically zero: the process never flips."""
    return Potential(U=lambda x: np.zeros(x.shape[:-1]),
                     grad=lambda x: np.zeros_like(x), d=1,
                     hessian_bound=lambda x, v, tau: 0.0)


class TestPhiEps:
    def test_eps0_is_metropolis(self):
        rule = PhiEps(0.0)
        for r in (0.0, 0.3, 1.0, 2.5):
            assert phi_eps(rule, r) == min(1.0, r)

    def test_balance_and_domination(self):
        rule = PhiEps(0.7)
        for r in np.logspace(-3, 3, 31):
            lhs = r * phi_eps(rule, 1.0 / r)
            rhs = phi_eps(rule, r)
            assert lhs == pytest.approx(rhs, rel=1e-12)
            assert rhs <= min(1.0, r) + 1e-15
        assert phi_eps(rule, 0.0) == 0.0

    def test_value_at_one(self):
        # phi_1(1) = 2 (1 - Phi(1/2))
        from scipy.stats import norm
        assert phi_eps(PhiEps(1.0), 1.0) == pytest.approx(2 * (1 - norm.cdf(0.5)))

    def test_monte_carlo_oracle(self):
        # phi_eps(r) = E[min(1, r e^W)], W ~ N(-eps/2, eps)
        eps = 0.5
        rule = PhiEps(eps)
        rng = np.random.default_rng(42)
        w = rng.standard_normal(1_000_000) * math.sqrt(eps) - eps / 2
        ew = np.exp(w)
        for r in (0.2, 0.8, 1.0, 1.7, 4.0):
            draws = np.minimum(1.0, r * ew)
            mc = draws.mean()
            se = draws.std(ddof=1) / math.sqrt(draws.size)
            assert abs(phi_eps(rule, r) - mc) < 4 * se

    def test_smoothing_bounds(self):
        # 0 <= phi_0 - phi_eps <= phi_0 * sqrt(e^eps - 1)
        eps = 0.3
        rule = PhiEps(eps)
        q = math.sqrt(math.expm1(eps))
        for r in np.logspace(-2, 2, 25):
            p0 = min(1.0, r)
            pe = phi_eps(rule, r)
            assert -1e-14 <= p0 - pe <= p0 * q + 1e-14

    def test_penalty_sup_bound(self):
        eps = 0.2
        bound = zigzag.penalty_sup_bound(eps)
        assert bound == pytest.approx(-math.log1p(-math.sqrt(math.expm1(eps))))
        spec_p = IntensitySpec(kind="penalty", eps=eps)
        spec_c = IntensitySpec(kind="canonical")
        pot = zz_gaussian([1.0])
        for xi in np.linspace(-4, 4, 41):
            x = np.array([xi])
            v = np.array([1.0])
            gap = abs(float(intensity(spec_p, pot, 0, x, v))
                      - float(intensity(spec_c, pot, 0, x, v)))
            assert gap <= bound + 1e-12
        with pytest.raises(ValueError):
            zigzag.penalty_sup_bound(math.log(2) + 0.01)

    def test_negative_eps_rejected(self):
        with pytest.raises(ValueError):
            PhiEps(-0.1)


class TestIntensities:
    POT = zz_gaussian([1.5])

    def specs(self):
        return [IntensitySpec("canonical"),
                IntensitySpec("penalty", eps=0.4),
                IntensitySpec("barker"),
                IntensitySpec("canonical-plus-gamma", gamma=0.3)]

    def test_switching_identity(self):
        # lambda_i(x, v) - lambda_i(x, -v) = dU/dx_i v_i for every kind
        for spec in self.specs():
            for xi in (-2.0, -0.3, 0.0, 1.7):
                x = np.array([xi])
                for vi in (1.0, -1.0):
                    v = np.array([vi])
                    diff = (float(intensity(spec, self.POT, 0, x, v))
                            - float(intensity(spec, self.POT, 0, x, -v)))
                    assert diff == pytest.approx(xi / 1.5 ** 2 * vi, abs=1e-12)

    def test_canonical_is_minimal(self):
        spec_c = IntensitySpec("canonical")
        for spec in self.specs()[1:]:
            for xi in (-2.0, 0.0, 0.5, 3.0):
                x, v = np.array([xi]), np.array([1.0])
                assert (float(intensity(spec, self.POT, 0, x, v))
                        >= float(intensity(spec_c, self.POT, 0, x, v)) - 1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((50, 1))
        v = np.ones((50, 1))
        for spec in self.specs():
            assert np.all(intensity(spec, self.POT, 0, x, v) >= 0)

    def test_callable_gamma(self):
        spec = IntensitySpec("canonical-plus-gamma",
                             gamma=lambda x: 0.1 * x[..., 0] ** 2)
        x, v = np.array([[2.0]]), np.array([[-1.0]])
        base = intensity(IntensitySpec("canonical"), self.POT, 0, x, v).item()
        assert intensity(spec, self.POT, 0, x, v).item() == pytest.approx(base + 0.4)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            IntensitySpec("smooth")
        with pytest.raises(ValueError):
            IntensitySpec("penalty", eps=0.0)
        with pytest.raises(ValueError):
            IntensitySpec(refresh_rate=-1.0)
        with pytest.raises(ValueError):
            IntensitySpec(refresh_mode="half")


class TestExactInversion:
    def test_against_numeric_integral(self):
        # Lambda(t) = int_0^t (a + b s)_+ + gamma ds; the returned time solves
        # Lambda(t) = e
        for a, b, gamma, e in [(0.5, 2.0, 0.0, 1.3), (-1.0, 0.5, 0.0, 0.2),
                               (0.3, 1.0, 0.7, 2.0), (-2.0, 1.5, 0.4, 0.1),
                               (-2.0, 1.5, 0.4, 3.0)]:
            t = zigzag._exact_flip_time(a, b, gamma, e)
            integral = quad(lambda s: max(0.0, a + b * s) + gamma, 0.0, t)[0]
            assert integral == pytest.approx(e, abs=1e-9)


class TestSimulation:
    def test_free_flight_has_no_events(self):
        traj = simulate_zigzag(free_potential(), IntensitySpec("canonical"),
                               [0.5], [1.0], horizon=10.0,
                               rng=np.random.default_rng(0))
        assert traj.n_events == 0
        x, v = traj.state_at([10.0])
        assert x[0, 0] == pytest.approx(10.5)

    def test_gaussian_moments(self):
        pot = zz_gaussian([1.0])
        rng = np.random.default_rng(3)
        traj = simulate_zigzag(pot, IntensitySpec("canonical"),
                               [0.0], [1.0], horizon=20_000.0, rng=rng)
        T = traj.horizon
        moments = [zigzag.trajectory_integral(
            traj, lambda x, v, k=k: x[:, 0] ** k, degree=k) / T
            for k in (1, 2, 3, 4)]
        assert abs(moments[0]) < 0.1
        assert abs(moments[1] - 1.0) < 0.1
        assert abs(moments[2]) < 0.3
        assert abs(moments[3] - 3.0) < 0.4
        # float accumulation scales with the time stamps, here up to 2e4
        assert traj.reconstruction_error() < 1e-9

    def test_thinning_matches_exact_inversion_in_law(self):
        # first-event times from x = 0.5, v = +1 under the two schedulers
        pot = zz_gaussian([1.0])
        spec = IntensitySpec("canonical")
        rng1 = np.random.default_rng(10)
        rng2 = np.random.default_rng(20)
        n = 3000
        exact = np.array([zigzag._exact_flip_time(0.5, 1.0, 0.0,
                                                  rng1.exponential())
                          for _ in range(n)])
        thinned = np.array([zigzag._thinned_flip_time(
            spec, pot, 0, np.array([0.5]), np.array([1.0]), rng2)
            for _ in range(n)])
        assert ks_2samp(exact, thinned).pvalue > 1e-3

    def test_forced_thinning_agrees_on_moments(self):
        pot = zz_gaussian([1.0])
        spec = IntensitySpec("canonical")
        traj = simulate_zigzag(pot, spec, [0.0], [1.0], horizon=5000.0,
                               rng=np.random.default_rng(7), force_thinning=True)
        m2 = zigzag.trajectory_integral(traj, lambda x, v: x[:, 0] ** 2,
                                        degree=2) / traj.horizon
        assert abs(m2 - 1.0) < 0.15

    def test_envelope_violation_detected(self):
        lying = Potential(U=lambda x: 0.5 * np.sum(x * x, axis=-1),
                          grad=lambda x: x, d=1,
                          hessian_bound=lambda x, v, tau: 0.05)
        with pytest.raises(EnvelopeViolation):
            simulate_zigzag(lying, IntensitySpec("canonical"), [5.0], [1.0],
                            horizon=100.0, rng=np.random.default_rng(0))

    def test_refresh_events_labelled(self):
        pot = zz_gaussian([1.0, 1.0])
        spec = IntensitySpec("canonical", refresh_rate=2.0, refresh_mode="partial")
        traj = simulate_zigzag(pot, spec, [0.0, 0.0], [1.0, -1.0],
                               horizon=200.0, rng=np.random.default_rng(1))
        labels = set(traj.types)
        assert "refresh" in labels
        assert any(lab.startswith("flip(") for lab in labels)

    def test_input_validation(self):
        pot = zz_gaussian([1.0])
        with pytest.raises(ValueError):
            simulate_zigzag(pot, IntensitySpec(), [0.0], [1.0], 0.0,
                            np.random.default_rng(0))
        with pytest.raises(ValueError):
            simulate_zigzag(pot, IntensitySpec(), [0.0], [0.5], 1.0,
                            np.random.default_rng(0))


class TestTrajectoryTools:
    @staticmethod
    def short_traj():
        return simulate_zigzag(zz_gaussian([1.0]), IntensitySpec("canonical"),
                               [0.3], [1.0], horizon=50.0,
                               rng=np.random.default_rng(5))

    def test_integral_against_riemann(self):
        traj = self.short_traj()
        f = lambda x, v: np.cos(x[:, 0]) + x[:, 0] ** 2
        ts = (np.arange(500_000) + 0.5) * (traj.horizon / 500_000)
        x, v = traj.state_at(ts)
        riemann = float(np.sum(f(x, v))) * (traj.horizon / ts.size)
        val = zigzag.trajectory_integral(traj, f)
        assert val == pytest.approx(riemann, abs=1e-6)

    def test_integral_exact_for_polynomials(self):
        traj = self.short_traj()
        # quartic integrated segment by segment in closed form
        total = 0.0
        for k in range(traj.times.size - 1):
            a, b = traj.times[k], traj.times[k + 1]
            x0, v0 = traj.X[k, 0], traj.V[k, 0]
            total += quad(lambda s: (x0 + (s - a) * v0) ** 4, a, b)[0]
        x_end, v_end = traj.X[-1, 0], traj.V[-1, 0]
        total += quad(lambda s: (x_end + (s - traj.times[-1]) * v_end) ** 4,
                      traj.times[-1], traj.horizon)[0]
        val = zigzag.trajectory_integral(traj, lambda x, v: x[:, 0] ** 4, degree=4)
        assert val == pytest.approx(total, rel=1e-10)

    def test_state_at_bounds(self):
        traj = self.short_traj()
        with pytest.raises(ValueError):
            traj.state_at([-0.1])
        with pytest.raises(ValueError):
            traj.state_at([traj.horizon + 1.0])

    def test_csv_export(self, tmp_path):
        traj = self.short_traj()
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x_1,v_1,event_type"
        assert len(lines) == traj.times.size + 1
        t0, x0, v0, lab = lines[1].split(",")
        assert (float(t0), lab) == (0.0, "start")
        # every value round-trips through float
        for line in lines[1:]:
            t, x, v, _ = line.split(",")
            float(t), float(x), float(v)

    def test_batch_means_zero_for_constants(self):
        traj = self.short_traj()
        est = zigzag.batch_means_variance(traj, lambda x, v: np.ones(x.shape[0]),
                                          0.0, traj.horizon, degree=0)
        assert abs(est) < 1e-20

    def test_batch_means_needs_events(self):
        traj = simulate_zigzag(free_potential(), IntensitySpec(), [0.0], [1.0],
                               horizon=5.0, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            zigzag.batch_means_variance(traj, lambda x, v: x[:, 0], 0.0, 5.0)


class TestVarianceEstimation:
    def test_se_shrinks_with_horizon(self):
        pot = zz_gaussian([1.0])
        spec = IntensitySpec("canonical")
        f = lambda x, v: x[:, 0] ** 2
        _, se_short, per_short = zigzag.estimate_var_continuous(
            pot, spec, f, horizon=400.0, replicates=12, lam=0.0, seed=2, degree=2)
        _, se_long, per_long = zigzag.estimate_var_continuous(
            pot, spec, f, horizon=1600.0, replicates=12, lam=0.0, seed=2, degree=2)
        # quadrupling the horizon should roughly halve the spread
        assert 0.25 < se_long / se_short < 0.95
        assert per_short.size == per_long.size == 12

    def test_discounted_estimate_positive_and_below_lam0(self):
        pot = zz_gaussian([1.0])
        spec = IntensitySpec("canonical")
        f = lambda x, v: x[:, 0]
        est0, _, _ = zigzag.estimate_var_continuous(
            pot, spec, f, horizon=600.0, replicates=8, lam=0.0, seed=3, degree=1)
        est2, _, _ = zigzag.estimate_var_continuous(
            pot, spec, f, horizon=600.0, replicates=8, lam=2.0, seed=3, degree=1)
        assert est0 > est2 > 0

    def test_validation(self):
        pot = zz_gaussian([1.0])
        f = lambda x, v: x[:, 0]
        with pytest.raises(ValueError):
            zigzag.estimate_var_continuous(pot, IntensitySpec(), f, 100.0,
                                           replicates=1, lam=0.0, seed=0)
        with pytest.raises(ValueError):
            zigzag.estimate_var_continuous(pot, IntensitySpec(), f, 100.0,
                                           replicates=4, lam=-0.5, seed=0)


class TestGeneratorAndQuadrature:
    def test_expectation_mu_gaussian_moments(self):
        pot = zz_gaussian([1.3])
        assert zigzag.expectation_mu(pot, lambda x, v: np.ones(x.shape[0])) \
            == pytest.approx(1.0, abs=1e-12)
        assert zigzag.expectation_mu(pot, lambda x, v: x[:, 0] ** 2) \
            == pytest.approx(1.3 ** 2, abs=1e-10)
        assert zigzag.expectation_mu(pot, lambda x, v: x[:, 0] * v[:, 0]) \
            == pytest.approx(0.0, abs=1e-12)

    def test_generator_integrates_to_zero(self):
        # E_mu[(Lg)] = 0 for a basis of smooth observables, all four kinds
        pot = zz_gaussian([1.0])
        basis = [
            SmoothObservable(lambda x, v: x[:, 0],
                             lambda x, v: np.ones_like(x)),
            SmoothObservable(lambda x, v: x[:, 0] ** 2,
                             lambda x, v: 2 * x),
            SmoothObservable(lambda x, v: x[:, 0] * v[:, 0],
                             lambda x, v: v),
            SmoothObservable(lambda x, v: np.sin(x[:, 0]) * v[:, 0],
                             lambda x, v: np.cos(x[:, :1]) * v),
            SmoothObservable(lambda x, v: x[:, 0] ** 3 + v[:, 0],
                             lambda x, v: 3 * x ** 2),
        ]
        specs = [IntensitySpec("canonical"),
                 IntensitySpec("penalty", eps=0.3),
                 IntensitySpec("barker"),
                 IntensitySpec("canonical-plus-gamma", gamma=0.4,
                               refresh_rate=1.0)]
        for spec in specs:
            for g in basis:
                val = zigzag.expectation_mu(
                    pot, lambda x, v: zigzag.generator_apply(pot, spec, g, x, v))
                assert abs(val) < 1e-6

    def test_gap_zero_for_equal_specs(self):
        pot = zz_gaussian([1.0])
        spec = IntensitySpec("canonical")
        g = SmoothObservable(lambda x, v: x[:, 0] * v[:, 0], lambda x, v: v)
        assert abs(zigzag.dirichlet_gap_quadrature(pot, spec, spec, g)) < 1e-12

    def test_gap_extra_gamma_closed_form(self):
        # the canonical process dominates the gamma-augmented one; for
        # g = x v the gap is 2 gamma E[x^2]
        pot = zz_gaussian([1.0])
        g = SmoothObservable(lambda x, v: x[:, 0] * v[:, 0], lambda x, v: v)
        gap = zigzag.dirichlet_gap_quadrature(
            pot, IntensitySpec("canonical"),
            IntensitySpec("canonical-plus-gamma", gamma=0.5), g)
        assert gap == pytest.approx(1.0, abs=1e-8)
        # and the reversed orientation is exactly the negation
        rev = zigzag.dirichlet_gap_quadrature(
            pot, IntensitySpec("canonical-plus-gamma", gamma=0.5),
            IntensitySpec("canonical"), g)
        assert rev == pytest.approx(-1.0, abs=1e-8)

    def test_dimension_guards(self):
        pot3 = zz_gaussian([1.0, 1.0, 1.0])
        g = SmoothObservable(lambda x, v: x[:, 0], lambda x, v: np.ones_like(x))
        with pytest.raises(ValueError):
            zigzag.dirichlet_gap_quadrature(pot3, IntensitySpec(),
                                            IntensitySpec(), g)
        pot9 = zz_gaussian(np.ones(9))
        with pytest.raises(ValueError):
            zigzag.expectation_mu(pot9, lambda x, v: np.ones(x.shape[0]))


class TestTabulatedPotential:
    def test_matches_analytic_gaussian(self):
        xs = np.linspace(-6, 6, 401)
        pot_tab = zigzag.zz_tabulated(xs, 0.5 * xs ** 2)
        pot = zz_gaussian([1.0])
        spec = IntensitySpec("canonical")
        for xi in (-2.0, -0.5, 1.0, 3.0):
            x, v = np.array([xi]), np.array([1.0])
            assert (float(intensity(spec, pot_tab, 0, x, v))
                    == pytest.approx(float(intensity(spec, pot, 0, x, v)),
                                     abs=1e-6))

    def test_simulation_runs_via_thinning(self):
        xs = np.linspace(-6, 6, 401)
        pot_tab = zigzag.zz_tabulated(xs, 0.5 * xs ** 2)
        traj = simulate_zigzag(pot_tab, IntensitySpec("canonical"), [0.0], [1.0],
                               horizon=500.0, rng=np.random.default_rng(9))
        m2 = zigzag.trajectory_integral(traj, lambda x, v: x[:, 0] ** 2,
                                        degree=2) / traj.horizon
        assert abs(m2 - 1.0) < 0.3
