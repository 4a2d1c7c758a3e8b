"""Time integration of the Galerkin system.

The default scheme is a two-stage exponential Runge-Kutta method (ETD2RK).
The stiff operator (nu + nu0 c) A is integrated exactly with the viscosity
coefficient ``c`` frozen per step; everything else, including the drift
``-nu0 (||v||^2 - c) A v`` of the coefficient across the step, is explicit.
A step longer than the advective CFL bound or the drift bound
``cfl_safety / (nu0 ||u||^2 lambda_max)`` raises StabilityError; the run
drivers then cover the step with power-of-two substeps sized from the bound.

Times are anchored to the integer grid ``t_i = i * dt`` so that splitting a
run at a step boundary reproduces the unsplit run bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import BlowUpError, InsufficientDataError, PicardError, StabilityError

SCHEMES = ("etd2", "imex_cn_ab2")
VISCOSITY_MODES = ("explicit_coeff", "picard")
MAX_LEVELS = 48


@dataclass(frozen=True)
class StepConfig:
    dt: float
    scheme: str = "etd2"
    nonlinear_viscosity_mode: str = "explicit_coeff"
    picard_max_iter: int = 20
    picard_tol: float = 1e-12
    cfl_safety: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.nonlinear_viscosity_mode not in VISCOSITY_MODES:
            raise ValueError(f"nonlinear_viscosity_mode must be one of {VISCOSITY_MODES}")
        if not self.picard_tol > 0:
            raise ValueError("picard tol must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")


def phi_functions(z):
    """phi_1, phi_2, phi_3 evaluated elementwise at real z.

    phi_k(z) = sum_j z^j / (j + k)!, with a power series near zero.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.5
    zs = np.where(small, 1.0, z)
    p1 = np.expm1(zs) / zs
    p2 = (p1 - 1.0) / zs
    p3 = (p2 - 0.5) / zs
    if np.any(small):
        zz = np.where(small, z, 0.0)
        s1 = np.zeros_like(zz)
        s2 = np.zeros_like(zz)
        s3 = np.zeros_like(zz)
        for j in range(18, -1, -1):
            s1 = s1 * zz + 1.0 / math.factorial(j + 1)
            s2 = s2 * zz + 1.0 / math.factorial(j + 2)
            s3 = s3 * zz + 1.0 / math.factorial(j + 3)
        p1 = np.where(small, s1, p1)
        p2 = np.where(small, s2, p2)
        p3 = np.where(small, s3, p3)
    return p1, p2, p3


def grid_index(t, dt):
    """Integer i with t = i * dt, or ValueError if t is off the time grid."""
    i = int(round(t / dt))
    if abs(i * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t!r} is not a multiple of dt={dt!r}")
    return i


def cfl_number(lat, umax, dt):
    dx = lat.box_length / lat.n
    return dt * float(np.sum(umax)) / dx


def _dt_bound(lat, umax, c, cfg, p):
    """min(advective CFL bound, cfl_safety / (nu0 ||u||^2 lambda_max))."""
    speed = float(np.sum(umax))
    adv = cfg.cfl_safety * (lat.box_length / lat.n) / speed if speed > 0 else math.inf
    visc = cfg.cfl_safety / (p.nu0 * c * lat.lambda_max) if p.nu0 * c > 0 else math.inf
    return min(adv, visc)


def stable_dt(uh, cfg, p):
    """Largest dt allowed at state uh by the advective CFL bound and the
    stability bound of the explicitly treated nonlinear-viscosity drift."""
    lat = p.lattice
    u = sp.to_grid(lat, sp.truncate(lat, uh))
    umax = np.abs(u).reshape(3, -1).max(axis=1)
    return _dt_bound(lat, umax, sp.h1_sq(lat, uh), cfg, p)


@dataclass
class _Stage:
    """Pieces of one ETD2 step that the tangent propagator reuses."""
    c: float
    E: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    N0: np.ndarray
    a: np.ndarray
    Na: np.ndarray
    B0: np.ndarray
    Ba: np.ndarray


def _etd2_stage(lat, u, t, h, p, f, c, B0, F0=None):
    z = -(p.nu + p.nu0 * c) * lat.k2 * h
    p1, p2, _ = phi_functions(z)
    E = np.exp(z)
    P1 = h * p1
    P2 = h * p2
    F0 = f.eval(t, lat) if F0 is None else F0
    N0 = -B0 + F0
    drift = p.nu0 * (sp.h1_sq(lat, u) - c)
    if drift:
        N0 = N0 - drift * lat.k2 * u
    a = E * u + P1 * N0
    Ba = sp.nonlinear_term(lat, a, a)
    Na = -Ba + f.eval(t + h, lat) - p.nu0 * (sp.h1_sq(lat, a) - c) * lat.k2 * a
    return _Stage(c, E, P1, P2, N0, a, Na, B0, Ba)


def _check_dt(lat, umax, c, h, cfg, p):
    bound = _dt_bound(lat, umax, c, cfg, p)
    if h > bound:
        raise StabilityError(h, bound)


def _etd2(u, t, h, cfg, p, f, want_stage=False):
    lat = p.lattice
    B0, umax = sp.nonlinear_term_with_umax(lat, u)
    c = sp.h1_sq(lat, u)
    _check_dt(lat, umax, c, h, cfg, p)
    F0 = f.eval(t, lat)
    st = _etd2_stage(lat, u, t, h, p, f, c, B0, F0)
    if cfg.nonlinear_viscosity_mode == "picard" and p.nu0 > 0:
        resid = math.inf
        for it in range(cfg.picard_max_iter):
            u1 = st.a + st.P2 * (st.Na - st.N0)
            c_new = 0.5 * (sp.h1_sq(lat, u) + sp.h1_sq(lat, u1))
            resid = abs(c_new - st.c) / max(abs(c_new), 1e-300)
            if resid < cfg.picard_tol or c_new == st.c:
                break
            st = _etd2_stage(lat, u, t, h, p, f, c_new, B0, F0)
        else:
            raise PicardError(resid, cfg.picard_max_iter)
    u1 = st.a + st.P2 * (st.Na - st.N0)
    return (u1, st) if want_stage else u1


def _imex(u, t, h, cfg, p, f, history):
    """Crank-Nicolson on (nu + nu0 c_n) A, Adams-Bashforth 2 on the rest."""
    lat = p.lattice
    B0, umax = sp.nonlinear_term_with_umax(lat, u)
    c = sp.h1_sq(lat, u)
    _check_dt(lat, umax, c, h, cfg, p)
    raw = -B0 + f.eval(t, lat)
    if history is None or history[2] != h:
        u1 = _etd2(u, t, h, cfg, p, f)
    else:
        u_prev, raw_prev, _ = history
        N_prev = raw_prev - p.nu0 * (sp.h1_sq(lat, u_prev) - c) * lat.k2 * u_prev
        L = (p.nu + p.nu0 * c) * lat.k2
        u1 = ((1 - 0.5 * h * L) * u + h * (1.5 * raw - 0.5 * N_prev)) / (1 + 0.5 * h * L)
    return u1, (u, raw, h)


def step(uh, t, cfg, p, f, history=None):
    """Advance one step of size cfg.dt from time t.

    Raises StabilityError if cfg.dt violates the CFL budget at uh, BlowUpError
    on non-finite output and PicardError if the coefficient iteration fails.
    For ``imex_cn_ab2`` the first step (no history) is taken with ETD2.
    """
    p.lattice.check(uh)
    return _advance(uh, t, cfg.dt, cfg, p, f, history)[0]


def _advance(uh, t, h, cfg, p, f, history):
    if cfg.scheme == "etd2":
        u1, hist = _etd2(uh, t, h, cfg, p, f), None
    else:
        u1, hist = _imex(uh, t, h, cfg, p, f, history)
    if not np.all(np.isfinite(u1)):
        raise BlowUpError(t + h)
    return u1, hist


def substep(state, t, h, step_fn, bound=None):
    """Advance ``state`` over [t, t + h] with ``step_fn(state, t, s)``.

    The full step is tried first.  On StabilityError the interval is covered
    by substeps of size h / 2^k, each the largest that fits the budget
    reported at the current state, stays aligned to its own size and does
    not overshoot.  After a success the next substep may double.  A known
    ``bound`` skips the full-step attempt.
    """
    if bound is None:
        try:
            return step_fn(state, t, h)
        except StabilityError as e:
            bound = e.dt_max
    total = 1 << MAX_LEVELS
    pos = 0
    while pos < total:
        units = min(total - pos, pos & -pos or total)
        budget = int(bound / h * total) if math.isfinite(bound) else total
        while units > budget and units > 1:
            units >>= 1
        if units > budget:
            raise StabilityError(h / total, bound)
        s = h * units / total
        try:
            state = step_fn(state, t + h * pos / total, s)
        except StabilityError as e:
            if e.dt_max >= s:  # only possible through rounding; avoid looping
                raise
            bound = e.dt_max
            continue
        pos += units
        bound = 2.0 * s
    return state


def _advance_adaptive(uh, t, h, cfg, p, f, history):
    """One base step, split into substeps while the stability bound is violated."""
    try:
        return _advance(uh, t, h, cfg, p, f, history)
    except StabilityError as e:
        bound = e.dt_max
    u1 = substep(uh, t, h, lambda u, ts, s: _advance(u, ts, s, cfg, p, f, None)[0], bound)
    return u1, None


@dataclass
class TrajectoryRecord:
    """Sampled scalar diagnostics of one run (plus optional state snapshots)."""

    times: np.ndarray
    E: np.ndarray
    Ens: np.ndarray
    Q: np.ndarray
    frac14: np.ndarray
    work: np.ndarray
    f_vdual2: np.ndarray
    f_h2: np.ndarray
    params: object = None
    forcing: object = None
    states: list = field(default_factory=list)
    state_times: list = field(default_factory=list)
    snapshot_paths: list = field(default_factory=list)
    final: np.ndarray | None = None
    l4v_sum: float = 0.0  # sum Ens^2 dt, the discrete L^4(V) diagnostic

    def __len__(self):
        return len(self.times)

    @property
    def tau(self):
        return float(self.times[0])

    @property
    def t_end(self):
        return float(self.times[-1])


def sample_diagnostics(uh, t, p, f):
    lat = p.lattice
    ens = sp.h1_sq(lat, uh)
    fh = f.eval(t, lat)
    return (
        sp.l2_sq(lat, uh),
        ens,
        ens * ens,
        sp.frac14_sq(lat, uh),
        sp.inner(lat, fh, uh),
        sp.vdual_sq(lat, fh),
        sp.l2_sq(lat, fh),
    )


def integrate(u0, tau, t_end, cfg, p, f, sample_every=1, snapshot_every=0,
              snapshot_writer=None, keep_states=False):
    """Run the discrete process from (tau, u0) to t_end.

    Diagnostics are sampled every ``sample_every`` steps (and always at
    t_end).  When ``snapshot_every`` > 0 the state is stored in memory (if
    ``keep_states``) and/or handed to ``snapshot_writer(t, uh)`` which returns
    a path.
    """
    if not tau < t_end:
        raise ValueError("integrate needs tau < t_end")
    lat = p.lattice
    lat.check(u0)
    dt = cfg.dt
    i0 = grid_index(tau, dt)
    i1 = grid_index(t_end, dt)

    rows = []
    rec = TrajectoryRecord(*([None] * 8), params=p, forcing=f)
    u = np.array(u0, dtype=complex)
    history = None

    def snap(i, u):
        t = i * dt
        if keep_states:
            rec.states.append(u.copy())
            rec.state_times.append(t)
        if snapshot_writer is not None:
            rec.snapshot_paths.append(snapshot_writer(t, u))

    rows.append((i0 * dt,) + sample_diagnostics(u, i0 * dt, p, f))
    if snapshot_every:
        snap(i0, u)
    l4v = 0.0
    for i in range(i0, i1):
        u, history = _advance_adaptive(u, i * dt, dt, cfg, p, f, history)
        n = i + 1 - i0
        row = sample_diagnostics(u, (i + 1) * dt, p, f)
        l4v += row[2] * dt
        if n % sample_every == 0 or i + 1 == i1:
            rows.append(((i + 1) * dt,) + row)
        if snapshot_every and (n % snapshot_every == 0 or i + 1 == i1):
            snap(i + 1, u)
    cols = np.array(rows, dtype=float).T
    (rec.times, rec.E, rec.Ens, rec.Q, rec.frac14, rec.work, rec.f_vdual2, rec.f_h2) = cols
    rec.final = u
    rec.l4v_sum = l4v
    return rec


def evolve(u0, tau, t_end, cfg, p, f):
    """Final state S(t_end, tau) u0 without recording diagnostics."""
    lat = p.lattice
    lat.check(u0)
    dt = cfg.dt
    i0 = grid_index(tau, dt)
    i1 = grid_index(t_end, dt)
    if i1 < i0:
        raise ValueError("evolve needs tau <= t_end")
    u = np.array(u0, dtype=complex)
    history = None
    for i in range(i0, i1):
        u, history = _advance_adaptive(u, i * dt, dt, cfg, p, f, history)
    return u


@dataclass(frozen=True)
class EnergyBudget:
    max_abs: float
    t_mid: np.ndarray
    residual: np.ndarray


def energy_budget(record):
    """Residual d(E/2)/dt + nu Ens + nu0 Q - <f, u> at sample midpoints."""
    if len(record.times) < 2:
        raise InsufficientDataError("energy budget needs at least two samples")
    p = record.params
    t = record.times
    dE = np.diff(record.E) / np.diff(t)

    def mid(x):
        return 0.5 * (x[1:] + x[:-1])

    r = 0.5 * dE + p.nu * mid(record.Ens) + p.nu0 * mid(record.Q) - mid(record.work)
    return EnergyBudget(float(np.max(np.abs(r))), mid(t), r)


def centered_residual(record):
    """Per-sample energy residual from centered differences; NaN at the ends."""
    p = record.params
    t = record.times
    out = np.full(len(t), np.nan)
    if len(t) >= 3:
        dE = (record.E[2:] - record.E[:-2]) / (t[2:] - t[:-2])
        out[1:-1] = (0.5 * dE + p.nu * record.Ens[1:-1] + p.nu0 * record.Q[1:-1]
                     - record.work[1:-1])
    return out


def trajectory_rows(record):
    """One dict per sample with the JSONL field names."""
    res = centered_residual(record)
    for i in range(len(record.times)):
        yield {
            "t": record.times[i],
            "E": record.E[i],
            "Ens": record.Ens[i],
            "Q": record.Q[i],
            "frac14": record.frac14[i],
            "work": record.work[i],
            "residual": None if not np.isfinite(res[i]) else res[i],
            "f_vdual2": record.f_vdual2[i],
            "f_h2": record.f_h2[i],
        }
