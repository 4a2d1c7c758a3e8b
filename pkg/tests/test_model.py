import math

import numpy as np
import pytest
from scipy.integrate import quad

from pblab import spectral as sp
from pblab.model import (ForcingSpec, ModelParams, grashof, rhs, tempered_integral,
                         tempered_integral_expression)


def _g(lat, seed, energy=1.0):
    return sp.random_field(lat, np.random.default_rng(seed), energy, kmax=2)


def _forcings(lat):
    return {
        "steady": ForcingSpec.steady(lat, _g(lat, 1)),
        "tempered": ForcingSpec.tempered_exp(lat, 0.3, _g(lat, 2)),
        "quasi": ForcingSpec.quasi_periodic(lat, [0.7, 1.9], [_g(lat, 3), _g(lat, 4, 0.5)]),
        "scaled": ForcingSpec.eps_scaled(0.4, ForcingSpec.quasi_periodic(lat, [1.3], [_g(lat, 5)])),
    }


def test_params_validation(lat8):
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0, lat8)
    with pytest.raises(ValueError):
        ModelParams(1.0, -1.0, lat8)
    assert ModelParams(0.5, 0.0, lat8).mu0 == 0.5


@pytest.mark.parametrize("name", ["steady", "tempered", "quasi", "scaled"])
@pytest.mark.parametrize("norm", ["H", "V'"])
def test_tempered_integral_matches_quadrature(lat8, name, norm):
    f = _forcings(lat8)[name]
    mu, t = 0.8, 1.5
    ref, _ = quad(lambda s: math.exp(mu * s) * f.norm_sq(s, lat8, norm), -80.0, t, limit=400)
    assert math.isclose(tempered_integral(f, mu, t, norm, lat8), ref, rel_tol=1e-8)


@pytest.mark.parametrize("name", ["steady", "tempered", "quasi", "scaled"])
def test_window_mean_matches_quadrature(lat8, name):
    f = _forcings(lat8)[name]
    t, w = 2.0, 3.5
    ref, _ = quad(lambda s: f.norm_sq(s, lat8, "H"), t - w, t, limit=200)
    assert math.isclose(f.window_mean(t, w, lat8), ref / w, rel_tol=1e-10)


def test_unit_tempered_integral_closed_form(lat8):
    g = sp.shear_mode(lat8, math.sqrt(2.0))  # |g|^2 = 1, ||g||_{V'}^2 = 1
    f = ForcingSpec.tempered_exp(lat8, 1.0, g)
    assert math.isclose(tempered_integral(f, 1.0, 0.0, "V'", lat8), 1.0 / 3.0)
    assert "e^(3 t) / 3" in tempered_integral_expression(f, 1.0)


def test_tempered_integral_rejects_nonpositive_rate(lat8):
    with pytest.raises(ValueError):
        tempered_integral(ForcingSpec.zero(), 0.0, 0.0, "H", lat8)


def test_forcing_is_projected(lat8, rng):
    raw = sp.from_grid(lat8, rng.standard_normal(lat8.grid_shape))
    f = ForcingSpec.steady(lat8, raw)
    sp.check_field(lat8, f.eval(0.0, lat8))


def test_eps_scaling_is_linear(lat8):
    inner = _forcings(lat8)["quasi"]
    f = ForcingSpec.eps_scaled(0.25, inner)
    assert np.allclose(f.eval(0.3, lat8), 0.25 * inner.eval(0.3, lat8))
    assert math.isclose(f.norm_sq(0.3, lat8), 0.0625 * inner.norm_sq(0.3, lat8))
    assert ForcingSpec.eps_scaled(0.0, inner).is_zero


def test_grashof_unit_case(lat8):
    p = ModelParams(1.0, 1.0, lat8)
    f = ForcingSpec.steady(lat8, sp.shear_mode(lat8, math.sqrt(2.0)))
    g = grashof(f, p, 0.0, 10.0)
    assert math.isclose(g.g_gen, 1.0)
    assert math.isclose(g.g_sup, 1.0)
    assert grashof(f, ModelParams(1.0, 0.0, lat8), 0.0, 10.0).g_gen is None


def test_grashof_sup_of_quasi_periodic(lat8):
    p = ModelParams(1.0, 0.5, lat8)
    g = _g(lat8, 6)
    f = ForcingSpec.quasi_periodic(lat8, [1.0], [g])
    rep = grashof(f, p, 0.0, 2 * math.pi)
    assert math.isclose(rep.g_sup, sp.l2_sq(lat8, g) / 0.25, rel_tol=1e-6)
    assert math.isclose(rep.g_gen, math.sqrt(sp.l2_sq(lat8, g) / 2) / 0.25, rel_tol=1e-12)


def test_rhs_energy_identity(lat8):
    p = ModelParams(0.7, 0.3, lat8)
    u = _g(lat8, 7)
    f = _forcings(lat8)["steady"]
    lhs = sp.inner(lat8, rhs(0.0, u, p, f), u)
    ens = sp.h1_sq(lat8, u)
    expected = -p.nu * ens - p.nu0 * ens ** 2 + sp.inner(lat8, f.eval(0.0, lat8), u)
    assert math.isclose(lhs, expected, rel_tol=1e-12)


def test_rhs_of_shear_mode_is_pure_damping(lat8):
    p = ModelParams(1.0, 1.0, lat8)
    u = sp.shear_mode(lat8, math.sqrt(2.0))
    assert np.allclose(rhs(0.0, u, p, ForcingSpec.zero()), -2.0 * u, atol=1e-15)


def test_describe_texts(lat8):
    fs = _forcings(lat8)
    assert fs["tempered"].describe() == "f(t) = exp(0.3 t) g"
    assert fs["scaled"].describe().startswith("f(t) = 0.4 * [")
