import math

import numpy as np
import pytest

from oracles import bernoulli_energy
from pblab import spectral as sp
from pblab.errors import BlowUpError, PicardError, StabilityError
from pblab.integrator import (StepConfig, cfl_number, energy_budget, evolve, grid_index, integrate,
                              phi_functions, stable_dt, step, substep, trajectory_rows)
from pblab.model import ForcingSpec, ModelParams


def _shear_energy_error(lat, cfg, k=1, nu=1.0, nu0=1.0, t=1.0):
    p = ModelParams(nu, nu0, lat)
    u0 = sp.shear_mode(lat, math.sqrt(2.0), wavenumber=k)
    u1 = evolve(u0, 0.0, t, cfg, p, ForcingSpec.zero())
    exact = bernoulli_energy(t, nu, nu0, 1.0, k2=k * k)
    return abs(sp.l2_sq(lat, u1) - exact) / exact


def test_step_config_validation():
    for bad in ({"dt": 0.0}, {"dt": 0.1, "scheme": "rk4"}, {"dt": 0.1, "cfl_safety": 2.0},
                {"dt": 0.1, "nonlinear_viscosity_mode": "implicit"}):
        with pytest.raises(ValueError):
            StepConfig(**bad)


def test_phi_functions_against_definitions():
    z = np.array([-30.0, -2.0, -0.6, -0.4, -1e-3, 0.0, 1e-6, 0.3])
    p1, p2, p3 = phi_functions(z)
    big = np.abs(z) > 0.1
    zb = z[big]
    assert np.allclose(p1[big], np.expm1(zb) / zb, rtol=1e-13)
    assert np.allclose(p2[big], (np.exp(zb) - 1 - zb) / zb ** 2, rtol=1e-10)
    assert np.allclose(p3[big], (np.exp(zb) - 1 - zb - zb ** 2 / 2) / zb ** 3, rtol=1e-8)
    i0 = list(z).index(0.0)
    assert (p1[i0], p2[i0], p3[i0]) == (1.0, 0.5, 1.0 / 6.0)


def test_phi_functions_continuous_across_series_switch():
    z = np.array([-0.5 - 1e-12, -0.5 + 1e-12])
    for phi in phi_functions(z):
        assert abs(phi[0] - phi[1]) < 1e-11


def test_grid_index():
    assert grid_index(-20.0, 0.01) == -2000
    with pytest.raises(ValueError):
        grid_index(0.005, 0.01)


@pytest.mark.parametrize("k, dt", [(1, 1e-3), (2, 5e-4)])
def test_etd2_matches_bernoulli_closed_form(lat8, k, dt):
    assert _shear_energy_error(lat8, StepConfig(dt), k=k) < 1e-5


def test_etd2_is_second_order(lat8):
    e1 = _shear_energy_error(lat8, StepConfig(1e-2))
    e2 = _shear_energy_error(lat8, StepConfig(5e-3))
    assert 3.6 <= e1 / e2 <= 4.4


def test_picard_mode_is_accurate(lat8):
    cfg = StepConfig(1e-2, nonlinear_viscosity_mode="picard")
    assert _shear_energy_error(lat8, cfg) < 1e-4


def test_picard_reports_nonconvergence(lat8, params8):
    cfg = StepConfig(0.1, nonlinear_viscosity_mode="picard", picard_max_iter=1, picard_tol=1e-15)
    u = sp.shear_mode(lat8, 1.0)
    with pytest.raises(PicardError):
        step(u, 0.0, cfg, params8, ForcingSpec.zero())


def test_imex_scheme_converges_at_second_order(lat8):
    e1 = _shear_energy_error(lat8, StepConfig(1e-2, scheme="imex_cn_ab2"))
    e2 = _shear_energy_error(lat8, StepConfig(5e-3, scheme="imex_cn_ab2"))
    assert e1 < 1e-3
    assert 3.0 <= e1 / e2 <= 5.0


def test_forced_steady_mode_is_a_fixed_point(lat8):
    # cos(x) e_y with f = 2 nu u + 2 nu0 ||u||^2 u is stationary
    p = ModelParams(0.5, 0.25, lat8)
    u = sp.shear_mode(lat8, 1.0)
    ens = sp.h1_sq(lat8, u)
    f = ForcingSpec.steady(lat8, (p.nu + p.nu0 * ens) * u)
    u1 = evolve(u, 0.0, 2.0, StepConfig(0.05), p, f)
    assert np.max(np.abs(u1 - u)) < 1e-14


def test_runs_concatenate_bit_exactly(lat8, params8):
    rng = np.random.default_rng(3)
    u0 = sp.random_field(lat8, rng, 1.0, kmax=2)
    f = ForcingSpec.tempered_exp(lat8, 0.5, sp.random_field(lat8, rng, 1.0, kmax=2))
    cfg = StepConfig(0.01)
    whole = evolve(u0, -1.0, 0.5, cfg, params8, f)
    mid = evolve(u0, -1.0, -0.3, cfg, params8, f)
    assert np.array_equal(evolve(mid, -0.3, 0.5, cfg, params8, f), whole)


def test_step_raises_on_viscous_bound_violation(lat8, params8):
    u = sp.shear_mode(lat8, 2.0)  # ||u||^2 = 2, lambda_max = 12
    cfg = StepConfig(0.1)
    assert stable_dt(u, cfg, params8) == pytest.approx(1.0 / 24.0)
    with pytest.raises(StabilityError):
        step(u, 0.0, cfg, params8, ForcingSpec.zero())
    step(u, 0.0, cfg, ModelParams(1.0, 0.0, lat8), ForcingSpec.zero())


def test_step_raises_on_cfl_violation(lat8, params8):
    u = sp.shear_mode(lat8, 50.0)
    cfg = StepConfig(0.5)
    assert stable_dt(u, cfg, params8) < 0.5
    with pytest.raises(StabilityError) as err:
        step(u, 0.0, cfg, params8, ForcingSpec.zero())
    assert err.value.dt_max < 0.5


def test_evolve_substeps_past_stability_bounds(lat8, params8):
    u = sp.shear_mode(lat8, 20.0)
    coarse = evolve(u, 0.0, 0.5, StepConfig(0.5), params8, ForcingSpec.zero())
    exact = bernoulli_energy(0.5, 1.0, 1.0, 200.0)
    assert abs(sp.l2_sq(lat8, coarse) - exact) < 1e-2 * exact


def test_substeps_resolve_a_violent_transient(lat8, params8):
    # E0 = 1e7 needs a first substep near 1e-9, far below dt / 2^16
    u = sp.shear_mode(lat8, math.sqrt(2e7))
    assert stable_dt(u, StepConfig(0.01), params8) < 0.01 / 2 ** 20
    for t in (0.01, 0.2):
        E = sp.l2_sq(lat8, evolve(u, 0.0, t, StepConfig(0.01), params8, ForcingSpec.zero()))
        exact = bernoulli_energy(t, 1.0, 1.0, 1e7)
        assert abs(E - exact) < 1e-2 * exact


def test_substep_covers_the_interval_exactly():
    calls = []

    def fn(state, t, s):
        if s > 0.3 / (1 + state):
            raise StabilityError(s, 0.3 / (1 + state))
        calls.append((t, s))
        return state + 1

    n = substep(0, 0.0, 1.0, fn)
    assert sum(s for _, s in calls) == 1.0
    assert all(t == sum(s for _, s in calls[:i]) for i, (t, _) in enumerate(calls))
    assert all(math.log2(s).is_integer() for _, s in calls)
    assert n == len(calls)
    with pytest.raises(StabilityError):
        substep(0, 0.0, 1.0, lambda state, t, s: (_ for _ in ()).throw(StabilityError(s, 0.0)))


def test_cfl_number_scales_with_dt(lat8):
    umax = np.array([1.0, 2.0, 0.0])
    assert math.isclose(cfl_number(lat8, umax, 0.2), 2 * cfl_number(lat8, umax, 0.1))


def test_non_finite_state_raises_blowup(lat8, params8):
    u = sp.shear_mode(lat8, 1.0)
    u[1, 1, 0, 0] = np.nan
    with pytest.raises(BlowUpError):
        evolve(u, 0.0, 0.1, StepConfig(0.01), params8, ForcingSpec.zero())


def test_integrate_records_samples_and_snapshots(lat8, params8):
    rng = np.random.default_rng(4)
    u0 = sp.random_field(lat8, rng, 1.0, kmax=2)
    f = ForcingSpec.steady(lat8, sp.random_field(lat8, rng, 1.0, kmax=2))
    written = []
    rec = integrate(u0, 0.0, 1.0, StepConfig(0.01), params8, f, sample_every=10,
                    snapshot_every=25, keep_states=True,
                    snapshot_writer=lambda t, u: written.append(t) or f"snap{len(written)}")
    assert len(rec) == 11
    assert np.allclose(rec.times, np.linspace(0, 1, 11))
    assert rec.state_times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert written == rec.state_times
    assert np.array_equal(rec.final, rec.states[-1])
    assert rec.E[0] == pytest.approx(1.0)
    assert rec.l4v_sum > 0


def test_energy_budget_closes_at_second_order(lat8, params8):
    rng = np.random.default_rng(5)
    u0 = sp.random_field(lat8, rng, 1.0, kmax=2)
    f = ForcingSpec.steady(lat8, sp.random_field(lat8, rng, 1.0, kmax=2))
    r = [energy_budget(integrate(u0, 0.0, 1.0, StepConfig(dt), params8, f)).max_abs
         for dt in (0.005, 0.0025)]
    assert r[0] < 2e-2
    assert 3.0 <= r[0] / r[1] <= 5.0


def test_energy_budget_vanishes_at_rest(lat8, params8):
    rec = integrate(lat8.zeros(), 0.0, 0.1, StepConfig(0.01), params8, ForcingSpec.zero())
    assert energy_budget(rec).max_abs == 0.0
    assert np.all(rec.E == 0.0)


def test_trajectory_rows(lat8, params8):
    u0 = sp.shear_mode(lat8, 1.0)
    rec = integrate(u0, 0.0, 0.05, StepConfig(0.01), params8, ForcingSpec.zero())
    rows = list(trajectory_rows(rec))
    assert len(rows) == 6
    assert set(rows[0]) == {"t", "E", "Ens", "Q", "frac14", "work", "residual", "f_vdual2", "f_h2"}
    assert rows[0]["residual"] is None and rows[-1]["residual"] is None
    assert abs(rows[2]["residual"]) < 1e-3


def test_unforced_energy_decays_at_poincare_rate(lat8, params8):
    u0 = sp.random_field(lat8, np.random.default_rng(6), 1.0, kmax=2)
    rec = integrate(u0, 0.0, 2.0, StepConfig(0.01), params8, ForcingSpec.zero())
    bound = rec.E[0] * np.exp(-2 * params8.nu * params8.lambda1 * rec.times)
    assert np.all(rec.E <= bound * (1 + 1e-12))
    assert np.all(np.diff(rec.E) < 0)
    assert np.all(rec.Ens >= params8.lambda1 * rec.E)


def test_continuous_dependence_on_initial_data(lat8, params8):
    rng = np.random.default_rng(7)
    u0 = sp.random_field(lat8, rng, 1.0, kmax=2)
    xi = sp.random_field(lat8, rng, 1.0, kmax=2)
    f = ForcingSpec.steady(lat8, sp.random_field(lat8, rng, 1.0, kmax=2))
    base = evolve(u0, 0.0, 1.0, StepConfig(0.01), params8, f)
    ratios = []
    for d in (1e-2, 1e-3, 1e-4):
        sep = math.sqrt(sp.l2_sq(lat8, evolve(u0 + d * xi, 0.0, 1.0, StepConfig(0.01), params8, f) - base))
        ratios.append(sep / d)
    assert max(ratios) < 2.0
    assert max(ratios) / min(ratios) < 1.5
