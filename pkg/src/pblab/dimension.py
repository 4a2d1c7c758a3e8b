"""Tangent dynamics: linearized operators, trace sums, Lyapunov exponents and
the fractal-dimension bound curves.

Tangents are co-integrated with the base flow.  Each step applies the exact
derivative of the ETD2 step map (``full_gateaux``), or the same scheme with
the viscosity coefficient held at ||u||^2 (``paper_operator``), which is the
ETD2 discretization of the linear equation with operator
-(nu + nu0 ||u||^2) A U - B(u, U) - B(U, u).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import spectral as sp
from .errors import (BlowUpError, ConvergenceError, InsufficientDataError,
                     TangentCollapseError)
from .integrator import _etd2, evolve, grid_index, phi_functions, substep

VARIANTS = ("paper_operator", "full_gateaux")
COLLAPSE_RTOL = 1e-12


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _h1_inner_stack(lat, u, Us):
    """((u, U_i)) for each tangent in the stack."""
    return np.sum(lat.weight * lat.k2 * np.real(np.conj(u) * Us), axis=(-4, -3, -2, -1))


def _scalar_field(c, field_):
    """Broadcast per-tangent scalars c_i against a stack of fields."""
    return np.asarray(c).reshape(np.shape(c) + (1,) * 4) * field_


def tangent_rhs(u, U, variant, params, base=None):
    """F'(u) U for a field or a stack of fields U.

    paper_operator: -nu A U - nu0 ||u||^2 A U - B(u, U) - B(U, u)
    full_gateaux:   the same plus -2 nu0 ((u, U)) A u
    """
    _check_variant(variant)
    lat = params.lattice
    lat.check(u)
    if np.shape(U)[-4:] != lat.spectral_shape:
        lat.check(U)
    base = sp.base_grid(lat, u) if base is None else base
    out = -(params.nu + params.nu0 * sp.h1_sq(lat, u)) * lat.k2 * U - sp.symmetric_nonlinear(lat, base, U)
    if variant == "full_gateaux" and params.nu0:
        cdot = 2.0 * _h1_inner_stack(lat, u, U)
        out = out - params.nu0 * _scalar_field(cdot, lat.k2 * u)
    return out


def _tangent_stage(u, Us, S0, st, h, p, variant):
    """Exact derivative of one ETD2 step in the directions Us.

    S0 = B(u, U) + B(U, u) for the stack (shared with the trace evaluation).
    """
    lat = p.lattice
    full = variant == "full_gateaux" and p.nu0 > 0
    Ndot0 = -S0
    if full:
        cdot = 2.0 * _h1_inner_stack(lat, u, Us)
        z = -(p.nu + p.nu0 * st.c) * lat.k2 * h
        p1, p2, p3 = phi_functions(z)
        zdot = _scalar_field(-p.nu0 * h * cdot, lat.k2)
        Edot = st.E * zdot
        P1dot = h * (p1 - p2) * zdot
        P2dot = h * (p2 - 2.0 * p3) * zdot
        adot = Edot * u + st.E * Us + P1dot * st.N0 + st.P1 * Ndot0
    else:
        adot = st.E * Us + st.P1 * Ndot0
    ba = sp.base_grid(lat, st.a)
    drift = p.nu0 * (sp.h1_sq(lat, st.a) - st.c)
    Ndota = -sp.symmetric_nonlinear(lat, ba, adot) - drift * lat.k2 * adot
    if full:
        coef = 2.0 * _h1_inner_stack(lat, st.a, adot) - cdot
        Ndota = Ndota - p.nu0 * _scalar_field(coef, lat.k2 * st.a)
        return adot + P2dot * (st.Na - st.N0) + st.P2 * (Ndota - Ndot0)
    return adot + st.P2 * (Ndota - Ndot0)


def _tangent_step(u, Us, t, h, cfg, p, f, variant, S0=None):
    """Advance base and tangents together, substepping on stability violations."""
    lat = p.lattice

    def one(state, ts, s):
        u, Us, S0 = state
        u1, st = _etd2(u, ts, s, cfg, p, f, want_stage=True)
        if S0 is None:
            S0 = sp.symmetric_nonlinear(lat, sp.base_grid(lat, u), Us)
        U1 = _tangent_stage(u, Us, S0, st, s, p, variant)
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(U1))):
            raise BlowUpError(ts + s)
        return u1, U1, None

    u1, U1, _ = substep((u, Us, S0), t, h, one)
    return u1, U1


def _require_explicit(cfg):
    if cfg.nonlinear_viscosity_mode != "explicit_coeff" or cfg.scheme != "etd2":
        raise ValueError("tangent propagation requires the etd2 scheme with explicit_coeff")


def propagate_tangents(u0, Us0, tau, t, cfg, params, forcing, variant="full_gateaux"):
    """S(t, tau) u0 and the discrete linearization applied to Us0 (no rescaling)."""
    _check_variant(variant)
    _require_explicit(cfg)
    i0, i1 = grid_index(tau, cfg.dt), grid_index(t, cfg.dt)
    u = np.array(u0, dtype=complex)
    Us = np.array(Us0, dtype=complex)
    for i in range(i0, i1):
        u, Us = _tangent_step(u, Us, i * cfg.dt, cfg.dt, cfg, params, forcing, variant)
    return u, Us


def uniform_differentiability_check(u0, xi, tau, t, delta_list, params, forcing, cfg,
                                    variant="full_gateaux"):
    """r(delta) = |S(u0 + delta xi) - S(u0) - delta U(t)| / (delta |xi|).

    Returns the table and the least-squares slope of log r against log delta.
    """
    deltas = [float(d) for d in delta_list]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_list must be strictly decreasing")
    lat = params.lattice
    base, U = propagate_tangents(u0, xi, tau, t, cfg, params, forcing, variant)
    xin = math.sqrt(sp.l2_sq(lat, xi))
    rows = []
    for d in deltas:
        pert = evolve(u0 + d * xi, tau, t, cfg, params, forcing)
        r = math.sqrt(sp.l2_sq(lat, pert - base - d * U)) / (d * xin)
        rows.append({"delta": d, "r": r})
    r = np.array([row["r"] for row in rows])
    slope = float(np.polyfit(np.log(deltas), np.log(r), 1)[0]) if len(rows) > 1 else None
    return {
        "variant": variant,
        "rows": rows,
        "slope": slope,
        "floor": float(r.min()),
        "cross_term": float(2 * _h1_inner_stack(lat, u0, xi)),
    }


# ------------------------------------------------------------ bundles

def _flatten_stack(lat, Us):
    w = np.sqrt(lat.weight)
    z = (Us * w).reshape(len(Us), -1)
    return np.concatenate([z.real, z.imag], axis=1)


def _unflatten_stack(lat, X):
    n, m = X.shape
    half = m // 2
    z = (X[:, :half] + 1j * X[:, half:]).reshape((n,) + lat.spectral_shape)
    return z / np.sqrt(lat.weight)


def gram(lat, Us, Vs=None):
    """Matrix of H inner products (U_i, V_j)."""
    X = _flatten_stack(lat, Us)
    Y = X if Vs is None else _flatten_stack(lat, Vs)
    return X @ Y.T


def orthonormalize(lat, Us, step=0):
    """QR in the H inner product; returns (Q stack, R with positive diagonal).

    The spans of the leading j tangents are preserved for every j.
    """
    X = _flatten_stack(lat, Us)
    q, r = np.linalg.qr(X.T)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    q = q * s
    r = r * s[:, None]
    d = np.abs(np.diag(r))
    bad = np.nonzero(d <= COLLAPSE_RTOL * max(d.max(), 1e-300))[0]
    if len(bad):
        raise TangentCollapseError(step, int(bad[0]))
    return _unflatten_stack(lat, q.T), r


def nested_traces(G, M):
    """trace(G_j^{-1} M_j) over the leading j x j blocks, j = 1..n."""
    n = len(G)
    L = np.linalg.cholesky(G)
    out = np.empty(n)
    for j in range(1, n + 1):
        Lj = L[:j, :j]
        X = np.linalg.solve(Lj, M[:j, :j])
        Y = np.linalg.solve(Lj, X.T).T
        out[j - 1] = np.trace(Y)
    return out


@dataclass(frozen=True)
class BaseFlow:
    """Base trajectory specification: (tau, u0) run to tau + burn_in + horizon."""
    u0: np.ndarray
    tau: float
    horizon: float
    params: object
    forcing: object
    cfg: object
    burn_in: float = 0.0


@dataclass
class BundleResult:
    n: int
    variant: str
    reorth_interval: int
    t_start: float
    t_end: float
    q: np.ndarray
    q_tail: np.ndarray
    exponents: np.ndarray
    exponents_tail: np.ndarray
    kaplan_yorke: float
    skew_max: float
    reorth_count: int
    trace_times: np.ndarray = field(repr=False, default=None)
    trace_series: np.ndarray = field(repr=False, default=None)

    @property
    def converged_rel(self):
        """Relative change of q_n between the full and the tail window."""
        denom = np.maximum(np.abs(self.q), 1e-300)
        return float(np.max(np.abs(self.q - self.q_tail) / denom))

    def converged(self, rtol=0.05):
        return self.converged_rel <= rtol

    def to_dict(self):
        return {
            "n": self.n,
            "variant": self.variant,
            "reorth_interval": self.reorth_interval,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "q_n": [float(x) for x in self.q],
            "q_n_tail": [float(x) for x in self.q_tail],
            "exponents": [float(x) for x in self.exponents],
            "exponent_partial_sums": [float(x) for x in np.cumsum(self.exponents)],
            "kaplan_yorke": self.kaplan_yorke,
            "skew_max": self.skew_max,
            "reorth_count": self.reorth_count,
            "window_rel_change": self.converged_rel,
        }


def kaplan_yorke(exponents):
    """j + (mu_1 + ... + mu_j)/|mu_{j+1}| with j the last index of a
    nonnegative partial sum; 0 if mu_1 < 0 and n if no crossover is seen."""
    mu = np.sort(np.asarray(exponents, dtype=float))[::-1]
    s = np.cumsum(mu)
    nonneg = np.nonzero(s >= 0)[0]
    if len(nonneg) == 0:
        return 0.0
    j = int(nonneg[-1]) + 1
    if j >= len(mu):
        return float(len(mu))
    return float(j + s[j - 1] / abs(mu[j]))


def max_tangents(lat):
    return len(sp.stokes_spectrum(lat))


def initial_tangents(lat, n, init="stokes", seed=0):
    """First n Stokes eigenfunctions, optionally mixed with seeded random fields.

    The pure eigenbasis is exact for the rest state; the mixed start avoids
    tangents trapped in invariant subspaces of symmetric base flows.
    """
    Us = sp.stokes_eigenbasis(lat, n)
    if init == "stokes":
        return Us
    if init != "random":
        raise ValueError(f"init must be 'stokes' or 'random', got {init!r}")
    rng = np.random.Generator(np.random.Philox(key=int(seed), counter=[2, 0, 0, 0]))
    noise = np.stack([sp.random_field(lat, rng, 1.0) for _ in range(n)])
    return orthonormalize(lat, Us + noise)[0]


def propagate_bundle(flow, n, variant="full_gateaux", reorth_interval=10, check_skew=True,
                     init="stokes", seed=0):
    """Propagate n tangents along the base flow and accumulate traces and stretching.

    Tangents start from ``initial_tangents``.  After the burn-in
    the accumulators are reset; over the measuring window the instantaneous
    nested traces are integrated with the trapezoid rule and the logs of the
    QR diagonal are summed.  The tail diagnostics use the second half of the
    window.
    """
    _check_variant(variant)
    cfg, p, f = flow.cfg, flow.params, flow.forcing
    _require_explicit(cfg)
    lat = p.lattice
    if not 1 <= n <= max_tangents(lat):
        raise ValueError(f"n must lie in [1, {max_tangents(lat)}]")
    if reorth_interval < 1:
        raise ValueError("reorth_interval must be positive")
    dt = cfg.dt
    i0 = grid_index(flow.tau, dt)
    nb = grid_index(flow.burn_in, dt) if flow.burn_in else 0
    nh = grid_index(flow.horizon, dt)
    if nh < 2:
        raise InsufficientDataError("horizon must cover at least two steps")
    u = np.array(flow.u0, dtype=complex)
    Us = initial_tangents(lat, n, init, seed)

    def trace_at(u, Us):
        bg = sp.base_grid(lat, u)
        S = sp.symmetric_nonlinear(lat, bg, Us)
        FU = -(p.nu + p.nu0 * sp.h1_sq(lat, u)) * lat.k2 * Us - S
        if variant == "full_gateaux" and p.nu0:
            FU = FU - p.nu0 * _scalar_field(2.0 * _h1_inner_stack(lat, u, Us), lat.k2 * u)
        return nested_traces(gram(lat, Us), gram(lat, Us, FU)), S

    skew = 0.0

    def reorth(u, Us, S, step):
        nonlocal skew
        Q, R = orthonormalize(lat, Us, step)
        if check_skew:
            for e in Q:
                b = sp.trilinear(lat, u, e, e)
                scale = math.sqrt(max(sp.h1_sq(lat, u), 1e-300)) * sp.h1_sq(lat, e)
                skew = max(skew, abs(b) / scale if scale > 0 else abs(b))
        # S is linear in the tangents: S(u, U R^{-1}) = S(u, U) R^{-1}
        Rinv = np.linalg.inv(R)
        S = np.tensordot(Rinv.T, S, axes=1)
        return Q, np.log(np.diag(R)), S

    i = i0
    _, S = trace_at(u, Us)
    for _ in range(nb):
        u, Us = _tangent_step(u, Us, i * dt, dt, cfg, p, f, variant, S)
        i += 1
        S = None
        if (i - i0) % reorth_interval == 0:
            _, S = trace_at(u, Us)
            Us, _, S = reorth(u, Us, S, i - i0)
    Us, _, _ = reorth(u, Us, np.zeros_like(Us), i - i0)
    tr, S = trace_at(u, Us)

    t_start = i * dt
    half = nh // 2
    times = [t_start]
    series = [tr]
    integral = np.zeros(n)
    integral_half = None
    logs = np.zeros(n)
    logs_half = None
    count = 0
    for k in range(1, nh + 1):
        u, Us = _tangent_step(u, Us, i * dt, dt, cfg, p, f, variant, S)
        i += 1
        tr_new, S = trace_at(u, Us)
        integral += 0.5 * dt * (tr + tr_new)
        tr = tr_new
        times.append(i * dt)
        series.append(tr)
        if k % reorth_interval == 0 or k == nh or k == half:
            Us, lg, S = reorth(u, Us, S, i - i0)
            logs += lg
            count += 1
        if k == half:
            integral_half = integral.copy()
            logs_half = logs.copy()
    T = nh * dt
    Ttail = (nh - half) * dt
    q = integral / T
    q_tail = (integral - integral_half) / Ttail
    ex = logs / T
    ex_tail = (logs - logs_half) / Ttail
    return BundleResult(
        n, variant, reorth_interval, t_start, i * dt, q, q_tail, ex, ex_tail,
        kaplan_yorke(ex), skew, count, np.array(times), np.array(series),
    )


def trace_sum(flow, n, variant="full_gateaux", reorth_interval=10):
    """Time-averaged nested traces q_1..q_n along the base flow."""
    r = propagate_bundle(flow, n, variant, reorth_interval)
    return r.q, r


def lyapunov_exponents(flow, n, variant="full_gateaux", reorth_interval=10):
    """Leading n exponents and the Kaplan-Yorke dimension."""
    r = propagate_bundle(flow, n, variant, reorth_interval)
    return r.exponents, r.kaplan_yorke, r


# ------------------------------------------------------ bound curves

@lru_cache(maxsize=None)
def lattice_sum_constant(lat):
    """min over n of (sum of the n smallest Stokes eigenvalues) / n^{5/3}."""
    spec = sp.stokes_spectrum(lat)
    n = np.arange(1, len(spec) + 1)
    return float(np.min(np.cumsum(spec) / n ** (5.0 / 3.0)))


def paper_curve(n, nu, nu0, M, C=1.0, volume=(2 * math.pi) ** 3):
    """2nu/27 - pi nu n^2/(2|Omega|) - pi^2 nu0 n^4/|Omega|^2 + (C/nu) M."""
    n = np.asarray(n, dtype=float)
    return (2 * nu / 27 - math.pi * nu * n ** 2 / (2 * volume)
            - math.pi ** 2 * nu0 * n ** 4 / volume ** 2 + C * M / nu)


def torus_curve(n, nu, nu0, M, lat, C=1.0):
    """The same form with the eigenvalue-sum lower bound c n^{5/3} of the lattice."""
    n = np.asarray(n, dtype=float)
    s = lattice_sum_constant(lat) * n ** (5.0 / 3.0)
    return 2 * nu / 27 - nu * s / 2 - nu0 * s ** 2 + C * M / nu


def first_negative(values):
    idx = np.nonzero(np.asarray(values) < 0)[0]
    return int(idx[0]) + 1 if len(idx) else None


def fit_bound_constant(q, params, M, form="torus"):
    """Least-squares C in q_n ~ curve_0(n) + (C/nu) M; None when M = 0."""
    if M <= 0:
        return None
    n = np.arange(1, len(q) + 1)
    if form == "torus":
        base = torus_curve(n, params.nu, params.nu0, 0.0, params.lattice)
    else:
        base = paper_curve(n, params.nu, params.nu0, 0.0)
    return float(params.nu * np.mean(np.asarray(q) - base) / M)


def dimension_bound_report(result, params, grashof, M, C=1.0, C_F=1.0, n_max=100,
                           rtol=0.05, allow_unconverged=False):
    """Bound curves, their first negative n, the box-counting bound
    max{3, C_F G + 2 nu/27} and the measured first negative q_n."""
    if not allow_unconverged and not result.converged(rtol):
        raise ConvergenceError(
            f"q_n not converged: full vs tail window differ by {result.converged_rel:.3g}")
    n = np.arange(1, n_max + 1)
    pc = paper_curve(n, params.nu, params.nu0, M, C)
    tc = torus_curve(n, params.nu, params.nu0, M, params.lattice, C)
    g = grashof.g_sup if grashof is not None and grashof.g_sup is not None else 0.0
    measured = first_negative(result.q)
    n_star = first_negative(tc)
    consistent = None
    if measured is not None and n_star is not None:
        consistent = measured <= n_star
    return {
        "n": result.n,
        "q_n": [float(x) for x in result.q],
        "exponents": [float(x) for x in result.exponents],
        "kaplan_yorke": result.kaplan_yorke,
        "M": float(M),
        "C": C,
        "C_F": C_F,
        "additive_constant": 2 * params.nu / 27,
        "lattice_sum_constant": lattice_sum_constant(params.lattice),
        "bound_curve": [float(x) for x in pc],
        "bound_curve_torus": [float(x) for x in tc],
        "n_star": first_negative(pc),
        "n_star_torus": n_star,
        "paper_bound": max(3.0, C_F * g + 2 * params.nu / 27),
        "grashof": g,
        "measured_crossing": measured,
        "crossing_consistent": consistent,
        "fitted_C": fit_bound_constant(result.q, params, M),
    }
