"""Verifiers for the a priori energy estimates along recorded trajectories.

Every verifier is a pure function of a TrajectoryRecord and returns an
InequalityVerdict whose margin is min(RHS - LHS) over the checked samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import InsufficientDataError
from .model import tempered_integral

SLACK_REL = 1e-8
BALL_EPS = 0.25


@dataclass(frozen=True)
class InequalityVerdict:
    name: str
    holds: bool
    margin: float
    worst_time: float
    constants_used: dict
    slack: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "holds": bool(self.holds),
            "margin": float(self.margin),
            "worst_time": float(self.worst_time),
            "slack": float(self.slack),
            "constants_used": dict(self.constants_used),
            "details": dict(self.details),
        }


def _verdict(name, margins, times, scale, constants, slack_rel, **details):
    margins = np.asarray(margins, dtype=float)
    i = int(np.argmin(margins))
    slack = slack_rel * max(float(scale), 1e-300)
    m = float(margins[i])
    return InequalityVerdict(name, m >= -slack, m, float(times[i]), constants, slack, details)


def _require_forcing(record):
    if record.f_vdual2 is None or record.f_h2 is None:
        raise InsufficientDataError("record carries no forcing norms")
    if record.params is None:
        raise InsufficientDataError("record carries no model parameters")


def _trapezoid(y, t):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def verify_energy_inequality(record, slack_rel=SLACK_REL):
    """dE/dt + nu Ens + 2 nu0 Q <= (1/nu) ||f||_{V'}^2 at interior samples.

    dE/dt is the centered difference.  The looser form with 8/nu,
    (1/2) dE/dt + (nu/2) Ens + nu0 Q <= (8/nu) ||f||_{V'}^2, is evaluated on
    the same samples and reported in ``details``.
    """
    _require_forcing(record)
    t = record.times
    if len(t) < 3:
        raise InsufficientDataError("energy inequality needs at least three samples")
    p = record.params
    dE = (record.E[2:] - record.E[:-2]) / (t[2:] - t[:-2])
    ens, q, fv = record.Ens[1:-1], record.Q[1:-1], record.f_vdual2[1:-1]
    lhs = dE + p.nu * ens + 2 * p.nu0 * q
    sharp = fv / p.nu - lhs
    loose = 8.0 * fv / p.nu - (0.5 * dE + 0.5 * p.nu * ens + p.nu0 * q)
    scale = float(np.max(np.abs(dE)) + np.max(p.nu * ens + 2 * p.nu0 * q) + np.max(fv) / p.nu)
    v = _verdict(
        "energy_inequality", sharp, t[1:-1], scale,
        {"C_sharp": 1.0 / p.nu, "C_loose": 8.0 / p.nu}, slack_rel,
    )
    j = int(np.argmin(loose))
    slack = v.slack
    details = {
        "loose_margin": float(loose[j]),
        "loose_holds": bool(loose[j] >= -slack),
        "loose_worst_time": float(t[1:-1][j]),
    }
    return InequalityVerdict(v.name, v.holds, v.margin, v.worst_time, v.constants_used, slack, details)


def _check_mu(record, mu):
    p = record.params
    mu0 = p.nu * p.lambda1
    if not 0 < mu <= mu0 * (1 + 1e-12):
        raise ValueError(f"mu must lie in (0, nu lambda1] = (0, {mu0}], got {mu}")


def verify_decay_bound(record, mu, slack_rel=SLACK_REL):
    """E(t) <= E(tau) e^{-mu (t - tau)} + (1/nu) e^{-mu t} int_{-inf}^t e^{mu s} ||f||_{V'}^2 ds.

    The bound with the integral started at tau (the Gronwall form) is also
    evaluated and reported as ``from_tau_margin``.
    """
    _require_forcing(record)
    _check_mu(record, mu)
    p = record.params
    f = record.forcing
    lat = p.lattice
    t = record.times
    tau = t[0]
    ti = np.array([tempered_integral(f, mu, s, "V'", lat) for s in t])
    homog = record.E[0] * np.exp(-mu * (t - tau))
    inhom = np.exp(-mu * t) * ti / p.nu
    inhom_tau = np.exp(-mu * t) * (ti - ti[0]) / p.nu
    margin = homog + inhom - record.E
    margin_tau = homog + inhom_tau - record.E
    scale = float(np.max(homog + inhom) + np.max(record.E))
    v = _verdict("decay_bound", margin, t, scale, {"C": 1.0, "mu": float(mu)}, slack_rel)
    v.details["from_tau_margin"] = float(np.min(margin_tau))
    return v


def absorbing_radius_sq(f, p, mu, t):
    """rho_0^2(t) = 1 + 4/(nu lambda1) int_{-inf}^t e^{-mu (t - s)} ||f(s)||_{V'}^2 ds."""
    ti = tempered_integral(f, mu, t, "V'", p.lattice)
    return 1.0 + 4.0 / (p.nu * p.lambda1) * math.exp(-mu * t) * ti


def predicted_entry_time(e0, mu, eps=BALL_EPS):
    """Elapsed time after which E(tau) e^{-mu s} <= eps."""
    if e0 <= eps:
        return 0.0
    return math.log(e0 / eps) / mu


def verify_absorbing_radius(record, mu, slack_rel=SLACK_REL, eps=BALL_EPS):
    """E(t) <= rho_0^2(t) from the empirical entry time on.

    The entry time is the last exit from the ball.  From the decay bound the
    trajectory is certainly inside once E(tau) e^{-mu (t - tau)} <= eps, which
    gives the predicted elapsed time ln(E(tau)/eps)/mu; the verdict also
    requires the empirical entry not to come later than that.
    """
    _require_forcing(record)
    _check_mu(record, mu)
    p = record.params
    t = record.times
    rho2 = np.array([absorbing_radius_sq(record.forcing, p, mu, s) for s in t])
    scale = float(np.max(rho2) + np.max(record.E))
    slack = slack_rel * scale
    outside = np.nonzero(record.E > rho2 + slack)[0]
    if len(outside) and outside[-1] == len(t) - 1:
        raise InsufficientDataError("trajectory has not entered the absorbing ball by the end of the run")
    k = int(outside[-1]) + 1 if len(outside) else 0
    entry = float(t[k] - t[0])
    predicted = predicted_entry_time(float(record.E[0]), mu, eps)
    spacing = float(np.max(np.diff(t))) if len(t) > 1 else 0.0
    margin = rho2[k:] - record.E[k:]
    v = _verdict(
        "absorbing_radius", margin, t[k:], scale,
        {"mu": float(mu), "ball_eps": eps, "C": 4.0 / (p.nu * p.lambda1)}, slack_rel,
        entry_time=entry, predicted_entry_time=predicted,
    )
    in_time = entry <= predicted + spacing
    return InequalityVerdict(v.name, v.holds and in_time, v.margin, v.worst_time,
                             v.constants_used, v.slack, v.details)


def _index_of(t, target):
    j = int(np.searchsorted(t, target - 1e-9 * max(1.0, abs(target))))
    if j >= len(t) or abs(t[j] - target) > 1e-9 * max(1.0, abs(target)):
        return None
    return j


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def verify_time_avg_bounds(record, windows=None, slack_rel=SLACK_REL):
    """Unit-window integral bound and long-window averaged bounds.

    Unit windows:  nu int_t^{t+1} Ens + 2 nu0 int_t^{t+1} Q <= C sup ||f||_{V'}^2 + E(t)
    with C = 1/nu (sharp) and 16/nu (loose, reported in details).

    Long windows [s, t] ending at the last sample:
        nu <Ens> + 2 nu0 <Q> <= (E(s) - E(t))/W + 2/(nu lambda1) <|f|^2>.
    Dropping the transient term gives the asymptotic forms
    <Ens> <= 2 <|f|^2>/(nu^2 lambda1) and <Q> <= <|f|^2>/(nu nu0 lambda1);
    their margins are reported per window but do not enter the verdict.
    """
    _require_forcing(record)
    p = record.params
    t = record.times
    span = t[-1] - t[0]
    if span < 1.0 - 1e-9:
        raise InsufficientDataError("time-average bounds need at least one time unit")
    iens = _cumtrapz(record.Ens, t)
    iq = _cumtrapz(record.Q, t)
    ifh = _cumtrapz(record.f_h2, t)

    unit_m, unit_loose, unit_t, scales = [], [], [], []
    for i in range(len(t)):
        j = _index_of(t, t[i] + 1.0)
        if j is None:
            continue
        lhs = p.nu * (iens[j] - iens[i]) + 2 * p.nu0 * (iq[j] - iq[i])
        fsup = float(np.max(record.f_vdual2[i:j + 1]))
        unit_m.append(fsup / p.nu + record.E[i] - lhs)
        unit_loose.append(16.0 * fsup / p.nu + record.E[i] - lhs)
        unit_t.append(t[i])
        scales.append(lhs + fsup / p.nu + record.E[i])
    if not unit_t:
        raise InsufficientDataError("no sample pair one time unit apart")

    if windows is None:
        windows = [w for w in (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0) if w <= span + 1e-9]
    sweep = []
    long_m, long_t = [], []
    c = 2.0 / (p.nu * p.lambda1)
    for w in windows:
        i = _index_of(t, t[-1] - w)
        if i is None:
            raise InsufficientDataError(f"window {w} does not start on a sample")
        avg_ens = (iens[-1] - iens[i]) / w
        avg_q = (iq[-1] - iq[i]) / w
        avg_f = (ifh[-1] - ifh[i]) / w
        transient = (record.E[i] - record.E[-1]) / w
        m = transient + c * avg_f - (p.nu * avg_ens + 2 * p.nu0 * avg_q)
        row = {
            "window": float(w),
            "margin": float(m),
            "mean_ens": float(avg_ens),
            "mean_q": float(avg_q),
            "mean_f2": float(avg_f),
            "asymptotic_ens_margin": float(2 * avg_f / (p.nu ** 2 * p.lambda1) - avg_ens),
        }
        if p.nu0 > 0:
            row["asymptotic_q_margin"] = float(avg_f / (p.nu * p.nu0 * p.lambda1) - avg_q)
        sweep.append(row)
        long_m.append(m)
        long_t.append(t[i])
        scales.append(abs(transient) + c * avg_f + p.nu * avg_ens + 2 * p.nu0 * avg_q)

    margins = np.concatenate([unit_m, long_m])
    times = np.concatenate([unit_t, long_t])
    v = _verdict(
        "time_avg_bounds", margins, times, max(scales),
        {"C_unit_sharp": 1.0 / p.nu, "C_unit_loose": 16.0 / p.nu, "C_avg": c}, slack_rel,
        unit_margin=float(np.min(unit_m)),
        unit_loose_margin=float(np.min(unit_loose)),
        window_sweep=sweep,
        q_bound_skipped=p.nu0 == 0,
    )
    return v


def tail_norm_sq(lat, uh, m):
    """|A^{1/4}(I - P_m) u|^2 with P_m the projection on eigenvalues <= lambda_m.

    m = 0 is the empty projection, so the tail is |A^{1/4} u|^2.
    """
    if m < 0:
        raise ValueError("mode count must be nonnegative")
    if m == 0:
        return sp.frac14_sq(lat, uh)
    spec = sp.stokes_spectrum(lat)
    if m >= len(spec):
        return 0.0
    lam = spec[m - 1]
    sel = (lat.k2 > lam * (1 + 1e-12)) & lat.mask
    return float(np.sum(lat.weight * sel * lat.kmag * np.abs(uh) ** 2))


def tail_frontier(lat, states, targets):
    """For each target eps the smallest m whose tail stays <= eps over all states."""
    spec = sp.stokes_spectrum(lat)
    levels = [0] + [int(i) for i in np.nonzero(np.diff(spec) > 0)[0] + 1] + [len(spec)]
    tails = np.array([[tail_norm_sq(lat, u, m) for m in levels] for u in states])
    worst = tails.max(axis=0)
    frontier = {}
    for eps in targets:
        ok = np.nonzero(worst <= eps)[0]
        frontier[float(eps)] = int(levels[ok[0]]) if len(ok) else None
    return levels, tails, frontier


def verify_tail_smallness(record, m, eps=None, targets=(1e-1, 1e-2, 1e-4, 1e-6, 1e-8),
                          t_from=None, slack_rel=SLACK_REL):
    """Spectral tail |A^{1/4}(I - P_m) u(t)|^2 over stored snapshots.

    The verdict requires the tail to be nonincreasing in m at every snapshot
    and, if ``eps`` is given, the tail at m to stay below eps for snapshots
    at or after ``t_from``.  The (m, eps) frontier is reported in details.
    """
    if not record.states:
        raise InsufficientDataError("tail check needs stored snapshots")
    lat = record.params.lattice
    st = np.asarray(record.state_times)
    keep = np.ones(len(st), bool) if t_from is None else st >= t_from - 1e-12
    if not keep.any():
        raise InsufficientDataError("no snapshots after t_from")
    states = [u for u, k in zip(record.states, keep) if k]
    times = st[keep]
    levels, tails, frontier = tail_frontier(lat, states, targets)
    mono = -np.diff(tails, axis=1)  # nonnegative when nonincreasing in m
    scale = float(np.max(tails[:, 0])) if tails.size else 1.0
    tail_m = np.array([tail_norm_sq(lat, u, m) for u in states])
    if eps is None:
        margins = mono.min(axis=1) if mono.size else np.zeros(len(times))
    else:
        margins = np.minimum(mono.min(axis=1), eps - tail_m) if mono.size else eps - tail_m
    return _verdict(
        "tail_smallness", margins, times, scale, {"m": int(m), "eps": eps}, slack_rel,
        tail_at_m=[float(x) for x in tail_m],
        frontier={f"{k:g}": v for k, v in frontier.items()},
        levels=levels,
    )
