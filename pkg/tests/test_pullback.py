import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pblab import spectral as sp
from pblab.errors import InvalidFieldError, LatticeMismatchError
from pblab.integrator import StepConfig
from pblab.model import ForcingSpec, ModelParams
from pblab.pullback import (EnsembleCloud, UniverseSpec, attractor_estimate, compare_universes,
                            hausdorff_semidist, member_radius, nontriviality_check,
                            nontriviality_threshold, pullback_cloud, sample_member,
                            semicontinuity_experiment, vw_decomposition)

ETD = StepConfig(0.01)


def _cloud(lat, seeds, t=0.0, scale=1.0):
    return EnsembleCloud(t, [scale * sp.random_field(lat, np.random.default_rng(s)) for s in seeds], lat)


def test_universe_validation():
    with pytest.raises(ValueError):
        UniverseSpec.fixed_bounded(0.0)
    with pytest.raises(ValueError):
        UniverseSpec.tempered(0.0)
    with pytest.raises(ValueError):
        UniverseSpec.tempered(1.0, "subexp", alpha=0.5)
    with pytest.raises(ValueError):
        UniverseSpec.tempered(1.0, "cubic")


def test_universe_radii_and_membership():
    fixed = UniverseSpec.fixed_bounded(2.0)
    poly = UniverseSpec.tempered(0.5, "polynomial", 1.0, p=2.0)
    sub = UniverseSpec.tempered(1.0, "subexp", 1.0, alpha=0.3)
    assert fixed.rho(-100.0) == 2.0
    assert poly.rho(-3.0) == 16.0
    assert sub.rho(-10.0) == pytest.approx(math.exp(3.0))
    assert fixed.uniformly_bounded and not poly.uniformly_bounded and not sub.uniformly_bounded
    assert UniverseSpec.tempered(1.0, "polynomial", p=0.0).uniformly_bounded
    assert fixed.is_tempered_for(0.1) and poly.is_tempered_for(0.1)
    assert sub.is_tempered_for(1.0) and not sub.is_tempered_for(0.5)
    assert sub.to_dict()["family"] == "subexp"


def test_semidistance_basic_properties(lat8):
    a = _cloud(lat8, [1, 2, 3])
    b = _cloud(lat8, [1, 2])
    assert hausdorff_semidist(a, a) == 0.0
    assert hausdorff_semidist(b, a) == 0.0
    assert hausdorff_semidist(a, b) > 0.0
    c = _cloud(lat8, [4, 5])
    assert hausdorff_semidist(a, c) <= hausdorff_semidist(a, b) + hausdorff_semidist(b, c) + 1e-12


def test_semidistance_of_singletons_is_the_norm(lat8):
    u, v = _cloud(lat8, [1]), _cloud(lat8, [2])
    d = math.sqrt(sp.l2_sq(lat8, u.members[0] - v.members[0]))
    assert hausdorff_semidist(u, v) == pytest.approx(d)
    w = math.sqrt(sp.frac14_sq(lat8, u.members[0] - v.members[0]))
    assert hausdorff_semidist(u, v, norm="frac14") == pytest.approx(w)


def test_semidistance_rejects_mismatched_clouds(lat8):
    a = _cloud(lat8, [1])
    with pytest.raises(LatticeMismatchError):
        hausdorff_semidist(a, _cloud(sp.WaveLattice(16), [1]))
    with pytest.raises(ValueError):
        hausdorff_semidist(a, _cloud(lat8, [1], t=1.0))
    with pytest.raises(InvalidFieldError):
        EnsembleCloud(0.0, [], lat8)


@given(st.integers(0, 2 ** 31), st.floats(0.1, 10.0))
def test_semidistance_scales_linearly(seed, s):
    lat = sp.WaveLattice(8)
    a = _cloud(lat, [seed, seed + 1])
    b = _cloud(lat, [seed + 2])
    scaled = hausdorff_semidist(_cloud(lat, [seed, seed + 1], scale=s), _cloud(lat, [seed + 2], scale=s))
    assert scaled == pytest.approx(s * hausdorff_semidist(a, b), rel=1e-10)


def test_members_are_deterministic_and_stratified(lat8):
    a = sample_member(lat8, 2.0, 1, 4, seed=3, depth_tag=500)
    b = sample_member(lat8, 2.0, 1, 4, seed=3, depth_tag=500)
    assert np.array_equal(a, b)
    assert sp.l2_sq(lat8, a) == pytest.approx(member_radius(2.0, 1, 4) ** 2)
    assert member_radius(2.0, 0, 4) == 2.0
    assert not np.array_equal(a, sample_member(lat8, 2.0, 1, 4, seed=4, depth_tag=500))
    assert not np.array_equal(a, sample_member(lat8, 2.0, 1, 4, seed=3, depth_tag=1000))


def test_clouds_are_identical_across_thread_counts(lat8, params8):
    f = ForcingSpec.steady(lat8, sp.random_field(lat8, np.random.default_rng(9), 1.0, kmax=2))
    u = UniverseSpec.fixed_bounded(1.0)
    one = pullback_cloud(0.0, -1.0, u, 4, 11, params8, f, ETD, threads=1)
    many = pullback_cloud(0.0, -1.0, u, 4, 11, params8, f, ETD, threads=4)
    assert all(np.array_equal(x, y) for x, y in zip(one.members, many.members))
    assert one.radii == [1.0, 0.75, 0.5, 0.25]


def test_pullback_cloud_validation(lat8, params8):
    u = UniverseSpec.fixed_bounded(1.0)
    with pytest.raises(ValueError):
        pullback_cloud(0.0, 0.0, u, 2, 0, params8, ForcingSpec.zero(), ETD)
    with pytest.raises(ValueError):
        attractor_estimate(0.0, [-2.0, -1.0], u, 2, 1e-6, params8, ForcingSpec.zero(), ETD)


def test_attractor_estimate_contracts_without_forcing(lat8, params8):
    est = attractor_estimate(0.0, [-1.0, -2.0, -4.0], UniverseSpec.fixed_bounded(1.0), 2, 0.05,
                             params8, ForcingSpec.zero(), ETD, seed=1)
    assert len(est.gaps) == 2 and est.gaps[1] < est.gaps[0]
    assert est.diameters[-1] < est.diameters[0]
    assert est.converged
    d = est.to_dict()
    assert d["tau_schedule"] == [-1.0, -2.0, -4.0] and d["universe"]["kind"] == "fixed_bounded"


def test_compare_universes_needs_three(lat8, params8):
    with pytest.raises(ValueError):
        compare_universes(0.0, [-1.0], params8, ForcingSpec.zero(), ETD,
                          [UniverseSpec.fixed_bounded(1.0)])


def test_nontriviality_threshold_value(lat8):
    assert nontriviality_threshold(ModelParams(1.0, 1.0, lat8)) == pytest.approx(math.sqrt(0.2))
    assert nontriviality_threshold(ModelParams(1.0, 1.0, lat8)) == pytest.approx(0.447, abs=1e-3)


def test_nontriviality_check_reports_both_readings(lat8, params8):
    est = attractor_estimate(0.0, [-10.0, -20.0], UniverseSpec.fixed_bounded(1.0), 2, 1e-6, params8,
                             ForcingSpec.zero(), ETD)
    out = nontriviality_check(0.0, params8, ForcingSpec.zero(), est)
    assert out["grashof_generalized"] == 0.0
    assert out["regime"] == "trivial"
    assert out["predicted_by_below"] is False and out["predicted_by_above"] is True
    with pytest.raises(ValueError):
        nontriviality_check(0.0, ModelParams(1.0, 0.0, lat8), ForcingSpec.zero(), est)


def test_semicontinuity_validation(lat8, params8):
    with pytest.raises(ValueError):
        semicontinuity_experiment(0.0, [0.1, 0.2], ForcingSpec.zero(), [-1.0], params8, ETD)


def test_vw_decomposition(lat8, params8):
    rng = np.random.default_rng(2)
    u0 = sp.random_field(lat8, rng, 1.0, kmax=2)
    h = ForcingSpec.steady(lat8, sp.random_field(lat8, rng, 1.0, kmax=2))
    r = vw_decomposition(u0, -2.0, 0.0, 0.5, h, params8, ETD)
    assert r.max_rel_residual < 1e-12
    assert r.decay_holds
    assert r.w_energy[0] == 0.0 and r.w_energy[-1] > 0
    assert r.v_energy[-1] < r.v_energy[0] * math.exp(-4.0)
    # a shear mode has B(u, u) = 0, so without forcing w stays zero
    shear = vw_decomposition(sp.shear_mode(lat8, 1.0), -1.0, 0.0, 0.0, h, params8, ETD)
    assert np.max(shear.w_energy) < 1e-28
    with pytest.raises(ValueError):
        vw_decomposition(u0, -1.0, 0.0, 0.5, h, params8, StepConfig(0.01, scheme="imex_cn_ab2"))
