"""Right-hand side of u_t + nu A u + nu0 ||u||^2 A u + B(u, u) = f, the forcing
catalog with closed-form tempered integrals, and Grashof numbers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .spectral import WaveLattice

NORMS = ("H", "V'")


@dataclass(frozen=True)
class ModelParams:
    nu: float
    nu0: float
    lattice: WaveLattice

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.nu0 >= 0:
            raise ValueError(f"nu0 must be nonnegative, got {self.nu0}")

    @property
    def lambda1(self):
        return self.lattice.lambda1

    @property
    def mu0(self):
        return self.nu * self.lattice.lambda1


def _norm_sq(lat, gh, norm):
    if norm == "H":
        return sp.l2_sq(lat, gh)
    if norm == "V'":
        return sp.vdual_sq(lat, gh)
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def _gram(lat, gs, norm):
    if norm == "H":
        ip = sp.inner
    elif norm == "V'":
        def ip(lat_, a, b):
            return float(np.sum(lat_.weight * lat_.inv_k2 * np.real(a * np.conj(b))))
    else:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    return np.array([[ip(lat, a, b) for b in gs] for a in gs])


def _galerkin(lat, gh):
    lat.check(gh)
    return sp.leray_project(lat, sp.truncate(lat, gh))


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Catalog entry for f(x, t).

    kinds: ``zero``; ``steady`` f = g; ``tempered_exp`` f = exp(sigma t) g with
    sigma > 0; ``quasi_periodic`` f = sum_j cos(omega_j t) g_j;
    ``eps_scaled`` f = eps * inner(t).  Fields are Galerkin-projected on
    construction.
    """

    kind: str
    g: np.ndarray | None = None
    sigma: float = 0.0
    omegas: tuple = ()
    gs: tuple = ()
    eps: float = 1.0
    inner: "ForcingSpec | None" = None
    meta: dict = field(default_factory=dict)

    # ---- constructors
    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def steady(cls, lat, g, **meta):
        return cls("steady", g=_galerkin(lat, g), meta=meta)

    @classmethod
    def tempered_exp(cls, lat, sigma, g, **meta):
        if not sigma > 0:
            raise ValueError(f"tempered_exp needs sigma > 0, got {sigma}")
        return cls("tempered_exp", g=_galerkin(lat, g), sigma=float(sigma), meta=meta)

    @classmethod
    def quasi_periodic(cls, lat, omegas, gs, **meta):
        if len(omegas) != len(gs) or not gs:
            raise ValueError("quasi_periodic needs matching, nonempty omega and g lists")
        return cls(
            "quasi_periodic",
            omegas=tuple(float(w) for w in omegas),
            gs=tuple(_galerkin(lat, g) for g in gs),
            meta=meta,
        )

    @classmethod
    def eps_scaled(cls, eps, inner):
        return cls("eps_scaled", eps=float(eps), inner=inner)

    # ---- evaluation
    def eval(self, t, lat):
        k = self.kind
        if k == "zero":
            return lat.zeros()
        if k == "steady":
            return self.g
        if k == "tempered_exp":
            return np.exp(self.sigma * t) * self.g
        if k == "quasi_periodic":
            out = lat.zeros()
            for w, g in zip(self.omegas, self.gs):
                out = out + np.cos(w * t) * g
            return out
        if k == "eps_scaled":
            return self.eps * self.inner.eval(t, lat)
        raise ValueError(f"unknown forcing kind {k!r}")

    @property
    def is_zero(self):
        if self.kind == "zero":
            return True
        if self.kind == "eps_scaled":
            return self.eps == 0.0 or self.inner.is_zero
        return False

    def norm_sq(self, t, lat, norm="V'"):
        """|f(t)|^2 or ||f(t)||_{V'}^2."""
        k = self.kind
        if k == "zero":
            return 0.0
        if k == "steady":
            return _norm_sq(lat, self.g, norm)
        if k == "tempered_exp":
            return np.exp(2 * self.sigma * t) * _norm_sq(lat, self.g, norm)
        if k == "quasi_periodic":
            c = np.cos(np.asarray(self.omegas) * t)
            return float(c @ _gram(lat, self.gs, norm) @ c)
        if k == "eps_scaled":
            return self.eps ** 2 * self.inner.norm_sq(t, lat, norm)
        raise ValueError(f"unknown forcing kind {k!r}")

    def window_mean(self, t, window, lat, norm="H"):
        """(1/W) int_{t-W}^t |f(s)|^2 ds in closed form."""
        if not window > 0:
            raise ValueError("window must be positive")
        k = self.kind
        if k == "zero":
            return 0.0
        if k == "steady":
            return _norm_sq(lat, self.g, norm)
        if k == "tempered_exp":
            a = 2 * self.sigma
            return _norm_sq(lat, self.g, norm) * np.exp(a * t) * (-np.expm1(-a * window)) / (a * window)
        if k == "quasi_periodic":
            G = _gram(lat, self.gs, norm)
            w = np.asarray(self.omegas)
            total = 0.0
            for j in range(len(w)):
                for l in range(len(w)):
                    for om in (w[j] - w[l], w[j] + w[l]):
                        if om == 0.0:
                            avg = 1.0
                        else:
                            avg = (np.sin(om * t) - np.sin(om * (t - window))) / (om * window)
                        total += 0.5 * G[j, l] * avg
            return float(total)
        if k == "eps_scaled":
            return self.eps ** 2 * self.inner.window_mean(t, window, lat, norm)
        raise ValueError(f"unknown forcing kind {k!r}")

    def sup_norm_sq(self, t, window, lat, norm="H", samples=4096):
        """sup_{s <= t} |f(s)|^2; quasi-periodic forcing is sampled on [t-W, t]."""
        k = self.kind
        if k == "zero":
            return 0.0
        if k in ("steady", "tempered_exp"):
            return self.norm_sq(t, lat, norm)
        if k == "quasi_periodic":
            G = _gram(lat, self.gs, norm)
            s = np.linspace(t - window, t, samples)
            c = np.cos(np.outer(s, self.omegas))
            return float(np.max(np.einsum("sj,jl,sl->s", c, G, c)))
        if k == "eps_scaled":
            return self.eps ** 2 * self.inner.sup_norm_sq(t, window, lat, norm, samples)
        raise ValueError(f"unknown forcing kind {k!r}")

    def describe(self):
        k = self.kind
        if k == "zero":
            return "f = 0"
        if k == "steady":
            return "f(t) = g"
        if k == "tempered_exp":
            return f"f(t) = exp({self.sigma:g} t) g"
        if k == "quasi_periodic":
            return "f(t) = " + " + ".join(f"cos({w:g} t) g_{j}" for j, w in enumerate(self.omegas))
        return f"f(t) = {self.eps:g} * [{self.inner.describe()}]"


def rhs(t, uh, p, f):
    """-nu A u - nu0 ||u||^2 A u - B(u, u) + P f(t)."""
    lat = p.lattice
    lat.check(uh)
    Au = uh * lat.k2
    coeff = p.nu + p.nu0 * sp.h1_sq(lat, uh)
    return -coeff * Au - sp.nonlinear_term(lat, uh, uh) + f.eval(t, lat)


def tempered_integral(f, mu, t, norm, lat):
    """int_{-inf}^t exp(mu s) ||f(s)||^2 ds in closed form (norm is 'H' or "V'").

    steady:          c e^{mu t} / mu
    tempered_exp:    c e^{(mu + 2 sigma) t} / (mu + 2 sigma)
    quasi_periodic:  sum_{jl} G_jl / 2 [I(w_j - w_l) + I(w_j + w_l)],
                     I(W) = e^{mu t} (mu cos Wt + W sin Wt) / (mu^2 + W^2)
    """
    if not mu > 0:
        raise ValueError(f"tempered integral needs mu > 0, got {mu}")
    k = f.kind
    if k == "zero":
        return 0.0
    if k == "steady":
        return _norm_sq(lat, f.g, norm) * np.exp(mu * t) / mu
    if k == "tempered_exp":
        a = mu + 2 * f.sigma
        return _norm_sq(lat, f.g, norm) * np.exp(a * t) / a
    if k == "quasi_periodic":
        G = _gram(lat, f.gs, norm)
        w = np.asarray(f.omegas)
        total = 0.0
        for j in range(len(w)):
            for l in range(len(w)):
                for om in (w[j] - w[l], w[j] + w[l]):
                    total += 0.5 * G[j, l] * (mu * np.cos(om * t) + om * np.sin(om * t)) / (mu ** 2 + om ** 2)
        return float(np.exp(mu * t) * total)
    if k == "eps_scaled":
        return f.eps ** 2 * tempered_integral(f.inner, mu, t, norm, lat)
    raise ValueError(f"unknown forcing kind {k!r}")


@dataclass(frozen=True)
class GrashofReport:
    g_sup: float | None
    g_gen: float | None
    window: float


def grashof(f, p, t, window):
    """G(t) = sup|f|^2/(nu0^2 lambda1) and G^g(t) = <|f|^2>^{1/2}/(nu0^2 lambda1).

    The long-time average is replaced by the mean over [t - window, t].
    """
    if p.nu0 == 0:
        return GrashofReport(None, None, window)
    lat = p.lattice
    denom = p.nu0 ** 2 * p.lambda1
    g_sup = f.sup_norm_sq(t, window, lat, "H") / denom
    g_gen = np.sqrt(max(f.window_mean(t, window, lat, "H"), 0.0)) / denom
    return GrashofReport(float(g_sup), float(g_gen), float(window))


def tempered_integral_expression(f, mu, norm="V'"):
    """Closed form of int_{-inf}^t e^{mu s} ||f(s)||^2 ds as text."""
    nm = "|g|^2" if norm == "H" else "||g||_{V'}^2"
    k = f.kind
    if k == "zero":
        return "0"
    if k == "steady":
        return f"{nm} e^({mu:g} t) / {mu:g}"
    if k == "tempered_exp":
        a = mu + 2 * f.sigma
        return f"{nm} e^({a:g} t) / {a:g}"
    if k == "quasi_periodic":
        return (f"e^({mu:g} t) sum_jl G_jl/2 [I(w_j - w_l) + I(w_j + w_l)], "
                f"I(W) = ({mu:g} cos(W t) + W sin(W t)) / ({mu:g}^2 + W^2), w = {list(f.omegas)}")
    return f"{f.eps:g}^2 * [{tempered_integral_expression(f.inner, mu, norm)}]"
