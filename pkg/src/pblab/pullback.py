"""Pullback experiments: universes, ensemble clouds and attractor estimates.

An attractor at time t is approximated by integrating a deterministic cloud
of initial states, sampled from the universe ball at time tau, forward to t
and letting tau recede along a schedule until successive clouds agree.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import spectral as sp
from .errors import BlowUpError, ConvergenceError, InvalidFieldError, LatticeMismatchError
from .integrator import _etd2, evolve, grid_index, substep
from .model import ForcingSpec, grashof

FAMILIES = ("constant", "polynomial", "subexp")
DISTANCE_NORMS = ("H", "frac14")


@dataclass(frozen=True)
class UniverseSpec:
    """Family of balls D(tau) = B(0, rho(tau)) in H.

    ``fixed_bounded``: rho = radius.  ``tempered``: rho(tau) is one of
    constant c, polynomial c (1 + |tau|)^p, subexp c e^{alpha |tau|}; the
    family is admissible for growth rate mu iff rho^2 e^{mu tau} -> 0 as
    tau -> -inf, which for subexp means 2 alpha < mu.
    """

    kind: str
    radius: float = 1.0
    mu: float | None = None
    family: str = "constant"
    power: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed_bounded", "tempered"):
            raise ValueError(f"unknown universe kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("universe radius must be positive")
        if self.kind == "tempered":
            if self.mu is None or not self.mu > 0:
                raise ValueError("tempered universe needs mu > 0")
            if self.family not in FAMILIES:
                raise ValueError(f"family must be one of {FAMILIES}")
            if self.family == "polynomial" and not self.power >= 0:
                raise ValueError("polynomial family needs p >= 0")
            if self.family == "subexp" and not 0 <= 2 * self.alpha < self.mu:
                raise ValueError(f"subexp family needs 0 <= alpha < mu/2, got alpha={self.alpha}, mu={self.mu}")

    @classmethod
    def fixed_bounded(cls, radius):
        return cls("fixed_bounded", radius=float(radius))

    @classmethod
    def tempered(cls, mu, family="constant", c=1.0, p=0.0, alpha=0.0):
        return cls("tempered", radius=float(c), mu=float(mu), family=family,
                   power=float(p), alpha=float(alpha))

    def rho(self, tau):
        if self.kind == "fixed_bounded" or self.family == "constant":
            return self.radius
        if self.family == "polynomial":
            return self.radius * (1.0 + abs(tau)) ** self.power
        return self.radius * math.exp(self.alpha * abs(tau))

    @property
    def uniformly_bounded(self):
        if self.kind == "fixed_bounded" or self.family == "constant":
            return True
        if self.family == "polynomial":
            return self.power == 0
        return self.alpha == 0

    def is_tempered_for(self, mu):
        """Symbolic membership in the mu-tempered universe."""
        if not mu > 0:
            return False
        if self.kind == "fixed_bounded" or self.family in ("constant", "polynomial"):
            return True
        return 2 * self.alpha < mu

    def to_dict(self):
        if self.kind == "fixed_bounded":
            return {"kind": "fixed_bounded", "radius": self.radius}
        return {"kind": "tempered", "mu": self.mu, "family": self.family,
                "c": self.radius, "p": self.power, "alpha": self.alpha}


@dataclass
class EnsembleCloud:
    t: float
    members: list
    lattice: sp.WaveLattice
    tau: float | None = None
    universe: UniverseSpec | None = None
    seed: int | None = None
    radii: list = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise InvalidFieldError("an ensemble cloud needs at least one member")
        self.lattice.check(*self.members)

    def __len__(self):
        return len(self.members)

    def diameter(self, norm="H"):
        x = _flatten(self, norm)
        return float(cdist(x, x).max()) if len(x) > 1 else 0.0

    def max_norm(self):
        return max(math.sqrt(sp.l2_sq(self.lattice, u)) for u in self.members)


def _flatten(cloud, norm="H"):
    lat = cloud.lattice
    if norm == "H":
        w = np.sqrt(lat.weight * lat.mask)
    elif norm == "frac14":
        w = np.sqrt(lat.weight * lat.mask * lat.kmag)
    else:
        raise ValueError(f"distance norm must be one of {DISTANCE_NORMS}")
    rows = []
    for u in cloud.members:
        z = (u * w).ravel()
        rows.append(np.concatenate([z.real, z.imag]))
    return np.array(rows)


def hausdorff_semidist(a, b, norm="H"):
    """sup over a of inf over b of the distance between members."""
    if len(a.members) == 0 or len(b.members) == 0:
        raise InvalidFieldError("semi-distance of an empty cloud")
    if a.lattice != b.lattice:
        raise LatticeMismatchError("clouds live on different lattices")
    if abs(a.t - b.t) > 1e-12 * max(1.0, abs(a.t)):
        raise ValueError(f"clouds are at different times {a.t} and {b.t}")
    d = cdist(_flatten(a, norm), _flatten(b, norm))
    return float(d.min(axis=1).max())


def member_radius(rho, j, n):
    """Member 0 sits on the sphere; the others are stratified inward."""
    return rho * (n - j) / n


def sample_member(lat, rho, j, n, seed, depth_tag, direction_kmax=3):
    """Deterministic member j of n in the ball of radius rho.

    The direction is a smooth Gaussian random field drawn from a
    counter-based generator keyed by the seed, so any member can be
    regenerated independently of the others.
    """
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(j), int(depth_tag)])
    rng = np.random.Generator(bitgen)
    r = member_radius(rho, j, n)
    return sp.random_field(lat, rng, energy=r * r, kmax=direction_kmax)


def _map(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def pullback_cloud(t, tau, universe, n_members, seed, params, forcing, cfg,
                   threads=1, direction_kmax=3):
    """Integrate a seeded cloud sampled from D(tau) forward to time t."""
    if not tau < t:
        raise ValueError("pullback needs tau < t")
    if n_members < 1:
        raise ValueError("n_members must be positive")
    lat = params.lattice
    rho = universe.rho(tau)
    depth_tag = abs(grid_index(tau, cfg.dt))
    starts = [sample_member(lat, rho, j, n_members, seed, depth_tag, direction_kmax)
              for j in range(n_members)]

    def run(j):
        try:
            return evolve(starts[j], tau, t, cfg, params, forcing)
        except BlowUpError as e:
            raise BlowUpError(e.t, f"member {j} blew up at t={e.t:.17g}") from e

    members = _map(run, list(range(n_members)), threads)
    return EnsembleCloud(t, members, lat, tau, universe, seed,
                         [member_radius(rho, j, n_members) for j in range(n_members)])


@dataclass
class AttractorEstimate:
    t: float
    cloud: EnsembleCloud
    cauchy_gap: float
    diameter: float
    converged: bool
    tol: float
    tau_schedule: list
    gaps: list
    diameters: list

    def to_dict(self):
        return {
            "t": self.t,
            "tau_schedule": list(self.tau_schedule),
            "gaps": list(self.gaps),
            "diameters": list(self.diameters),
            "cauchy_gap": self.cauchy_gap,
            "diameter": self.diameter,
            "converged": self.converged,
            "tol": self.tol,
            "max_norm": self.cloud.max_norm(),
            "universe": self.cloud.universe.to_dict() if self.cloud.universe else None,
        }


def attractor_estimate(t, tau_schedule, universe, n_members, tol, params, forcing, cfg,
                       seed=0, threads=1, norm="H", direction_kmax=3):
    """Clouds at every depth; the gap between depths k and k+1 is the larger
    of the two semi-distances.  The deepest cloud is returned as the estimate
    and the run counts as converged when the last gap is below tol."""
    taus = [float(x) for x in tau_schedule]
    if not taus:
        raise ValueError("empty tau schedule")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau schedule must be strictly decreasing")
    clouds = [pullback_cloud(t, tau, universe, n_members, seed, params, forcing, cfg,
                             threads, direction_kmax) for tau in taus]
    gaps = [max(hausdorff_semidist(b, a, norm), hausdorff_semidist(a, b, norm))
            for a, b in zip(clouds, clouds[1:])]
    diameters = [c.diameter(norm) for c in clouds]
    gap = gaps[-1] if gaps else math.inf
    return AttractorEstimate(t, clouds[-1], gap, diameters[-1], gap < tol, tol,
                             taus, gaps, diameters)


def compare_universes(t, tau_schedule, params, forcing, cfg, universes, n_members=4,
                      seed=0, tol=1e-6, threads=1):
    """Inclusion check between attractor estimates for three universes.

    ``universes`` is (fixed_bounded, tempered(mu), tempered(mu0)).  The
    inclusions hold when dist(A_F, A_mu) and dist(A_mu, A_mu0) are below tol.
    If every universe has uniformly bounded radii the estimates must
    coincide, so all six semi-distances are checked.
    """
    if len(universes) != 3:
        raise ValueError("need exactly three universes (fixed, tempered mu, tempered mu0)")
    names = ("fixed", "mu", "mu0")
    est = {}
    for name, u in zip(names, universes):
        e = attractor_estimate(t, tau_schedule, u, n_members, tol, params, forcing, cfg,
                               seed, threads)
        if not e.converged:
            raise ConvergenceError(f"estimate for universe {name} unconverged (gap {e.cauchy_gap:.3e})")
        est[name] = e
    semi = {f"{a}->{b}": hausdorff_semidist(est[a].cloud, est[b].cloud)
            for a in names for b in names if a != b}
    inclusion = semi["fixed->mu"] < tol and semi["mu->mu0"] < tol
    bounded = all(u.uniformly_bounded for u in universes)
    equality = all(v < tol for v in semi.values())
    return {
        "universes": {n: u.to_dict() for n, u in zip(names, universes)},
        "estimates": {n: e.to_dict() for n, e in est.items()},
        "semi_distances": semi,
        "inclusion_holds": inclusion,
        "equality_case": bounded,
        "equality_holds": equality if bounded else None,
        "holds": inclusion and (equality if bounded else True),
        "tol": tol,
    }


def nontriviality_threshold(p, c=1.0):
    """sqrt(nu0 / (c nu + 4 nu0^2 nu lambda1))."""
    return math.sqrt(p.nu0 / (c * p.nu + 4 * p.nu0 ** 2 * p.nu * p.lambda1))


def nontriviality_check(t, params, forcing, estimate, c=1.0, window=10.0):
    """Generalized Grashof number against the threshold, and the measured regime.

    Both readings of the threshold are recorded: ``G >= threshold`` predicts
    a nontrivial attractor, and ``G < threshold`` predicts one.  Neither is
    asserted.
    """
    if not params.nu0 > 0:
        raise ValueError("nontriviality check needs nu0 > 0")
    g = grashof(forcing, params, t, window)
    thr = nontriviality_threshold(params, c)
    nontrivial = estimate.diameter >= estimate.tol
    above = g.g_gen >= thr
    return {
        "t": t,
        "grashof_generalized": g.g_gen,
        "grashof_sup": g.g_sup,
        "threshold": thr,
        "c": c,
        "diameter": estimate.diameter,
        "tol": estimate.tol,
        "regime": "nontrivial" if nontrivial else "trivial",
        "above_threshold": above,
        "predicted_by_above": above == nontrivial,
        "predicted_by_below": (not above) == nontrivial,
    }


def semicontinuity_experiment(t, eps_list, h, tau_schedule, params, cfg, n_members=2,
                              seed=0, tol=1e-6, universe=None, threads=1):
    """d(eps) = dist(A_eps(t), A_0(t)) for f = eps h, with a log-log slope fit."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    universe = universe or UniverseSpec.fixed_bounded(1.0)

    def estimate(f):
        e = attractor_estimate(t, tau_schedule, universe, n_members, tol, params, f, cfg,
                               seed, threads)
        if not e.converged:
            raise ConvergenceError(f"unconverged estimate (gap {e.cauchy_gap:.3e})")
        return e

    a0 = estimate(ForcingSpec.zero())
    rows = []
    for eps in eps_list:
        if eps == 0.0:
            rows.append({"eps": 0.0, "d": hausdorff_semidist(a0.cloud, a0.cloud)})
            continue
        e = estimate(ForcingSpec.eps_scaled(eps, h))
        rows.append({"eps": eps, "d": hausdorff_semidist(e.cloud, a0.cloud),
                     "cauchy_gap": e.cauchy_gap, "diameter": e.diameter})
    d = np.array([r["d"] for r in rows])
    monotone = bool(np.all(np.diff(d) <= tol))
    pos = [(r["eps"], r["d"]) for r in rows if r["eps"] > 0 and r["d"] > 0]
    slope = None
    if len(pos) >= 2:
        x, y = np.log(np.array(pos)).T
        slope = float(np.polyfit(x, y, 1)[0])
    return {
        "t": t,
        "rows": rows,
        "a0_diameter": a0.diameter,
        "a0_max_norm": a0.cloud.max_norm(),
        "monotone": monotone,
        "slope": slope,
        "tol": tol,
    }


@dataclass
class VWReport:
    times: np.ndarray
    residual: np.ndarray
    v_energy: np.ndarray
    w_energy: np.ndarray
    u_energy: np.ndarray
    v_decay_margin: np.ndarray
    max_rel_residual: float
    decay_holds: bool

    def to_dict(self):
        return {
            "max_rel_residual": self.max_rel_residual,
            "min_v_decay_margin": float(np.min(self.v_decay_margin)),
            "decay_holds": self.decay_holds,
            "t_end": float(self.times[-1]),
            "v_energy_end": float(self.v_energy[-1]),
            "w_energy_end": float(self.w_energy[-1]),
        }


def _vw_step(u, v, w, t, h, cfg, p, f):
    """One ETD2 step of (u, v, w) sharing u's stages, substepped like u."""
    return substep((u, v, w), t, h, lambda st, ts, s: _vw_stage(*st, ts, s, cfg, p, f))


def _vw_stage(u, v, w, t, h, cfg, p, f):
    lat = p.lattice
    u1, st = _etd2(u, t, h, cfg, p, f, want_stage=True)
    drift_a = p.nu0 * (sp.h1_sq(lat, st.a) - st.c)
    Fa = f.eval(t + h, lat)
    # v: no source; w: the full source; both with u's coefficient
    av = st.E * v
    Nav = -drift_a * lat.k2 * av
    v1 = av + st.P2 * Nav
    aw = st.E * w + st.P1 * st.N0
    Naw = -st.Ba + Fa - drift_a * lat.k2 * aw
    w1 = aw + st.P2 * (Naw - st.N0)
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(v1)) and np.all(np.isfinite(w1))):
        raise BlowUpError(t + h)
    return u1, v1, w1


def vw_decomposition(u0, tau, t, eps, h, params, cfg, slack_rel=1e-8):
    """Split u = v + w with v carrying the initial data and w the forcing.

    v_t + (nu + nu0 ||u||^2) A v = 0,               v(tau) = u0
    w_t + (nu + nu0 ||u||^2) A w = -B(u, u) + eps h, w(tau) = 0
    Both use the viscosity coefficient of the full solution u, so the split
    is exact and the residual measures roundoff only.
    """
    if cfg.scheme != "etd2":
        raise ValueError("the decomposition is co-integrated with the etd2 scheme")
    lat = params.lattice
    lat.check(u0)
    f = ForcingSpec.eps_scaled(eps, h) if eps else ForcingSpec.zero()
    i0, i1 = grid_index(tau, cfg.dt), grid_index(t, cfg.dt)
    u = np.array(u0, dtype=complex)
    v = u.copy()
    w = lat.zeros()
    times, res, ev, ew, eu = [], [], [], [], []

    def record(s):
        times.append(s)
        scale = math.sqrt(sp.l2_sq(lat, u)) + math.sqrt(sp.l2_sq(lat, v)) + math.sqrt(sp.l2_sq(lat, w))
        diff = math.sqrt(sp.l2_sq(lat, u - v - w))
        res.append(diff / scale if scale > 0 else 0.0)
        ev.append(sp.l2_sq(lat, v))
        ew.append(sp.l2_sq(lat, w))
        eu.append(sp.l2_sq(lat, u))

    record(i0 * cfg.dt)
    for i in range(i0, i1):
        u, v, w = _vw_step(u, v, w, i * cfg.dt, cfg.dt, cfg, params, f)
        record((i + 1) * cfg.dt)
    times = np.array(times)
    ev = np.array(ev)
    bound = ev[0] * np.exp(-2 * params.nu * params.lambda1 * (times - times[0]))
    margin = bound - ev
    decay_ok = bool(np.all(margin >= -slack_rel * max(ev[0], 1e-300)))
    return VWReport(times, np.array(res), ev, np.array(ew), np.array(eu), margin,
                    float(np.max(res)), decay_ok)
