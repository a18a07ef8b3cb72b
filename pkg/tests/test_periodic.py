import math

import numpy as np
import pytest

from lipnnm.densela import ModalSystem, generalized_modes
from lipnnm.errors import (
    ContinuationStalledError,
    DegenerateAmplitudeError,
    InvalidArgumentError,
    NonContractionError,
    ResonanceError,
)
from lipnnm.model import EstimatorConfig, NonlinearLaw, StructureModel
from lipnnm.periodic import (
    check_nonresonance,
    continuation_periodic,
    eta0,
    exact_period_piecewise_1dof,
    find_periodic_1dof_fixed_point,
    find_periodic_estimator,
    physical_return_defect,
)
from lipnnm.shooting import build_modal_ode, law_ode, periodicity_F

UNILATERAL = NonlinearLaw.unilateral()


def exact_omega(eps, omega=1.0):
    return 2 * math.pi / exact_period_piecewise_1dof(omega, eps)


def fake_modal(freqs):
    w = np.asarray(freqs, dtype=float)
    return ModalSystem(omega2=w**2, phi=np.eye(w.size))


class TestExactPeriod:
    @pytest.mark.parametrize("omega", [1.0, 2.5])
    def test_linear(self, omega):
        assert exact_period_piecewise_1dof(omega, 0.0) == pytest.approx(2 * math.pi / omega)

    def test_eps_three(self):
        assert exact_period_piecewise_1dof(1.0, 3.0) == pytest.approx(1.5 * math.pi)

    def test_eps_tenth(self):
        # pi (1 + 1/sqrt(1.1)), evaluated independently
        assert exact_period_piecewise_1dof(1.0, 0.1) == pytest.approx(6.1369837194, abs=1e-9)

    @pytest.mark.parametrize("omega, eps", [(1.0, -1.0), (0.0, 0.1), (-1.0, 0.1)])
    def test_invalid(self, omega, eps):
        with pytest.raises(InvalidArgumentError):
            exact_period_piecewise_1dof(omega, eps)


class TestEta0:
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0, -1.0])
    def test_unilateral_half(self, a):
        assert eta0(UNILATERAL, a, 4096) == pytest.approx(0.5, abs=1e-6)

    def test_identity_law(self):
        assert eta0(NonlinearLaw.custom(lambda x: x, 1.0), 1.3, 4096) == pytest.approx(1.0)

    def test_cubic(self):
        law = NonlinearLaw.custom(lambda x: x**3, 3.0)
        assert eta0(law, 1.0, 4096) == pytest.approx(0.75, abs=1e-10)

    def test_zero_amplitude(self):
        with pytest.raises(InvalidArgumentError):
            eta0(UNILATERAL, 0.0)


class TestNonresonance:
    def test_irrational_ok(self):
        status = check_nonresonance(fake_modal([1.0, math.sqrt(2), math.sqrt(5)]))
        assert status.ok and not status.violations

    def test_integer_ratio(self):
        status = check_nonresonance(fake_modal([1.0, 2.0]))
        assert not status.ok and status.errors == (2,)

    def test_near_integer_warns(self):
        status = check_nonresonance(fake_modal([1.0, 2.0005]), tol_res=1e-3)
        assert status.ok and status.warnings == (2,)

    def test_reference_mode(self):
        # relative to the second mode, 3 / 1.5 = 2 is an integer
        status = check_nonresonance(fake_modal([1.0, 1.5, 3.0]), mode_index=2)
        assert status.errors == (3,)

    def test_chain3_is_nonresonant(self, chain3_modal):
        assert check_nonresonance(chain3_modal).ok

    def test_solver_refuses_resonance(self):
        # two uncoupled masses with stiffness 1 and 4: omega ratio exactly 2
        m = StructureModel([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 4.0], [1.0, 1.0],
                           0.0, 0.1)
        ode = build_modal_ode(m, generalized_modes(m.stiffness, m.masses))
        with pytest.raises(ResonanceError):
            find_periodic_estimator(ode, 1.0, 0.1)


class TestFixedPoint:
    def test_linear_limit(self):
        sol = find_periodic_1dof_fixed_point(UNILATERAL, 1.0, 0.0)
        assert sol.eta == pytest.approx(eta0(UNILATERAL, 1.0), abs=1e-12)
        assert sol.report.iterations <= 2

    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
    def test_matches_oracle(self, eps):
        sol = find_periodic_1dof_fixed_point(UNILATERAL, 1.0, eps)
        assert sol.omega_eps == pytest.approx(exact_omega(eps), rel=1e-6)
        assert sol.residual <= 1e-8

    def test_ratio_halves_with_eps(self):
        r = [find_periodic_1dof_fixed_point(UNILATERAL, 1.0, e).report.measured_contraction
             for e in (0.1, 0.05)]
        assert 0.3 <= r[1] / r[0] <= 0.7

    def test_frequency_and_omega(self):
        sol = find_periodic_1dof_fixed_point(UNILATERAL, 1.0, 0.1, omega=3.0)
        assert sol.omega_eps == pytest.approx(exact_omega(0.1, 3.0), rel=1e-6)

    def test_zero_amplitude(self):
        with pytest.raises(InvalidArgumentError):
            find_periodic_1dof_fixed_point(UNILATERAL, 0.0, 0.1)

    def test_degenerate_amplitude(self):
        # linear law, eps = 1: the first iterate doubles the frequency and int cos x vanishes
        law = NonlinearLaw.custom(lambda x: np.asarray(x, dtype=float), 1.0)
        with pytest.raises(DegenerateAmplitudeError):
            find_periodic_1dof_fixed_point(law, 1.0, 1.0)

    def test_non_contraction(self):
        with pytest.raises(NonContractionError) as info:
            find_periodic_1dof_fixed_point(UNILATERAL, 1.0, 4.0, N=512)
        assert not info.value.report.converged


class TestEstimatorOneDof:
    def test_linear_limit(self, unilateral_ode):
        sol = find_periodic_estimator(unilateral_ode, 1.0, 0.0)
        assert sol.report.iterations <= 2
        assert sol.residual <= 1e-8

    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
    def test_matches_oracle(self, unilateral_ode, eps):
        sol = find_periodic_estimator(unilateral_ode, 1.0, eps)
        assert sol.omega_eps == pytest.approx(exact_omega(eps), rel=1e-6)

    def test_amplitude_independence(self, unilateral_ode):
        for eps in (0.1, 0.3):
            e1 = find_periodic_estimator(unilateral_ode, 1.0, eps).eta
            e2 = find_periodic_estimator(unilateral_ode, 2.0, eps).eta
            assert e1 == pytest.approx(e2, abs=1e-8)

    def test_frequency_relation(self, unilateral_ode):
        sol = find_periodic_estimator(unilateral_ode, 1.0, 0.2)
        w = sol.omega_eps
        assert 1 / w**2 == pytest.approx((1 - 0.2 * sol.eta) / sol.omega1**2, rel=1e-15)
        assert sol.period_physical == pytest.approx(2 * math.pi / w, rel=1e-15)

    def test_record(self, unilateral_ode):
        d = find_periodic_estimator(unilateral_ode, 1.0, 0.1).to_dict()
        assert set(d) == {"a1", "eps", "eta", "b", "a", "omega_eps", "period", "residual",
                          "iterations", "ratios"}
        assert len(d["ratios"]) == d["iterations"] - 1

    def test_custom_law(self):
        # hardening spring x'' + x + eps x^3 = 0; b1 is free, so the orbit found may be
        # phase shifted and its amplitude A follows from the energy
        eps = 0.05
        law = NonlinearLaw.custom(lambda x: np.asarray(x) ** 3, 3.0)
        sol = find_periodic_estimator(law_ode(law, EstimatorConfig(alpha=0.25)), 1.0, eps, N=512)
        a, v = 1.0, sol.omega_eps * sol.params.b[0]
        energy = 0.5 * v**2 + 0.5 * a**2 + 0.25 * eps * a**4
        A = math.sqrt((-1 + math.sqrt(1 + 4 * eps * energy)) / eps)
        nodes, weights = np.polynomial.legendre.leggauss(200)
        phi = (nodes + 1) * math.pi / 4
        T = math.pi * np.sum(weights / np.sqrt(1 + 0.5 * eps * A**2 * (1 + np.sin(phi) ** 2)))
        assert sol.omega_eps == pytest.approx(2 * math.pi / T, rel=1e-9)

    def test_fixed_point_on_custom_law(self):
        eps = 0.05
        law = NonlinearLaw.custom(lambda x: np.asarray(x) ** 3, 3.0)
        sol = find_periodic_1dof_fixed_point(law, 1.0, eps)
        nodes, weights = np.polynomial.legendre.leggauss(200)
        phi = (nodes + 1) * math.pi / 4
        T = math.pi * np.sum(weights / np.sqrt(1 + 0.5 * eps * (1 + np.sin(phi) ** 2)))
        assert sol.omega_eps == pytest.approx(2 * math.pi / T, rel=1e-9)

    def test_physical_defect(self, unilateral_ode):
        sol = find_periodic_estimator(unilateral_ode, 1.0, 0.2)
        defect, size = physical_return_defect(sol, law=UNILATERAL, N=8 * 2048)
        assert defect <= 10 * max(sol.residual, 1e-12) * (1 + size)


@pytest.fixture(scope="module")
def sweep(chain3, chain3_modal):
    ode = build_modal_ode(chain3, chain3_modal)
    return ode, {e: find_periodic_estimator(ode, 1.0, e) for e in (0.0125, 0.025, 0.05)}


class TestEstimatorChain:
    def test_residual(self, sweep):
        for sol in sweep[1].values():
            assert sol.residual <= 1e-8

    def test_slope_fallback_recorded(self, sweep):
        assert any("0.25" in w for w in sweep[1][0.05].warnings)

    def test_mode_limit(self, sweep):
        eps = sorted(sweep[1])
        dev = []
        for e in eps:
            traj = sweep[1][e].trajectory
            x = traj.x.copy()
            x[:, 0] -= np.cos(traj.grid)
            dev.append(np.max(np.abs(x)))
        slope = np.polyfit(np.log(eps), np.log(dev), 1)[0]
        assert slope >= 0.9

    def test_eta_tends_to_eta0(self, sweep):
        ode, sols = sweep
        e0 = eta0(ode, 1.0)
        gaps = [abs(sols[e].eta - e0) / e for e in sorted(sols)]
        assert max(gaps) < 10.0

    def test_physical_defect(self, sweep, chain3):
        ode, sols = sweep
        for e, sol in sols.items():
            defect, size = physical_return_defect(sol, chain3.with_epsilon(e), ode, N=8 * 2048)
            assert defect <= 10 * max(sol.residual, 1e-12) * (1 + size)

    def test_explicit_lambda(self, chain3_ode):
        sol = find_periodic_estimator(chain3_ode, 1.0, 0.05, cfg=EstimatorConfig(lam=0.3))
        assert sol.residual <= 1e-8


class TestContinuation:
    def test_single_stage(self, unilateral_ode):
        [sol] = continuation_periodic(unilateral_ode, [0.1], 1.0)
        direct = find_periodic_estimator(unilateral_ode, 1.0, 0.1)
        np.testing.assert_array_equal(sol.params.y, direct.params.y)

    def test_one_dof_sweep(self, unilateral_ode):
        schedule = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
        sols = continuation_periodic(unilateral_ode, schedule, 1.0)
        assert [s.params.eps for s in sols] == schedule
        for s in sols:
            assert s.omega_eps == pytest.approx(exact_omega(s.params.eps), rel=1e-6)

    def test_chain_eta_lipschitz_in_eps(self, chain3_ode):
        schedule = [0.02, 0.04, 0.06, 0.08, 0.1]
        sols = continuation_periodic(chain3_ode, schedule, 1.0)
        eta = np.array([s.eta for s in sols])
        slopes = np.abs(np.diff(eta) / np.diff(schedule))
        assert np.all(np.isfinite(slopes)) and slopes.max() < 10.0
        for s in sols:
            assert np.linalg.norm(periodicity_F(chain3_ode, s.params)) <= 1e-8

    def test_stall_reports_partial(self):
        ode = law_ode(NonlinearLaw.unilateral(5.0))
        with pytest.raises(ContinuationStalledError) as info:
            continuation_periodic(ode, [0.01, 3.0], 1.0, N=512, max_halvings=1)
        assert info.value.partial and info.value.partial[0].params.eps == 0.01

    @pytest.mark.parametrize("schedule", [[], [0.2, 0.1]])
    def test_bad_schedule(self, unilateral_ode, schedule):
        with pytest.raises(InvalidArgumentError):
            continuation_periodic(unilateral_ode, schedule, 1.0)

