"""Fourier-lattice representation of divergence-free velocity fields on the
periodic box [0, 2pi]^3 and the operators acting on them.

A field is stored as a complex array of shape ``(3, N, N, N//2 + 1)`` holding
the half spectrum produced by a real FFT.  Coefficients are normalised so that

    u(x) = sum_k uh(k) exp(i k.x),        |u|^2 = sum_k |uh(k)|^2,

i.e. ``|u|^2`` is the volume average of ``|u(x)|^2`` over the box (Parseval with
unit normalisation).  Every norm and inner product in the package uses this
convention.  Sums over the full lattice are evaluated on the half spectrum with
the multiplicity weights in :attr:`WaveLattice.weight`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import InvalidFieldError, LatticeMismatchError

AXES = (-3, -2, -1)


@dataclass(frozen=True)
class WaveLattice:
    """Integer wavevectors k with -N/2 < k_i <= N/2 on the 2pi-periodic box.

    Stokes eigenvalues are |k|^2, so the first eigenvalue is ``lambda1 = 1``.
    Modes with some ``|k_i| > dealias_cut * N / 2`` are outside the Galerkin
    space and are kept at zero.
    """

    n: int
    dealias_cut: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n <= 0 or self.n % 2:
            raise ValueError(f"n_per_axis must be an even positive integer, got {self.n}")
        if not 0.0 < self.dealias_cut <= 1.0:
            raise ValueError(f"dealias_cut must lie in (0, 1], got {self.dealias_cut}")

    lambda1 = 1.0
    box_length = 2.0 * np.pi

    @property
    def spectral_shape(self):
        return (3, self.n, self.n, self.n // 2 + 1)

    @property
    def grid_shape(self):
        return (3, self.n, self.n, self.n)

    @property
    def volume(self):
        return self.box_length ** 3

    @cached_property
    def kx(self):
        return np.fft.fftfreq(self.n, 1.0 / self.n).reshape(-1, 1, 1)

    @cached_property
    def ky(self):
        return np.fft.fftfreq(self.n, 1.0 / self.n).reshape(1, -1, 1)

    @cached_property
    def kz(self):
        kz = np.arange(self.n // 2 + 1, dtype=float)
        # Nyquist is -N/2 in the full-lattice convention
        kz[-1] = -kz[-1]
        return kz.reshape(1, 1, -1)

    @cached_property
    def kvec(self):
        """Wavevector components broadcast to ``(3, N, N, N//2+1)``."""
        shape = self.spectral_shape[1:]
        return np.stack([np.broadcast_to(c, shape) for c in (self.kx, self.ky, self.kz)])

    @cached_property
    def k2(self):
        return self.kx ** 2 + self.ky ** 2 + self.kz ** 2

    @cached_property
    def kmag(self):
        return np.sqrt(self.k2)

    @cached_property
    def inv_k2(self):
        out = np.zeros_like(self.k2)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def weight(self):
        """Number of full-lattice modes represented by each half-spectrum entry."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w.reshape(1, 1, -1), self.spectral_shape[1:])

    @cached_property
    def kcut(self):
        return self.dealias_cut * self.n / 2.0

    @cached_property
    def mask(self):
        """True on retained (de-aliased, nonzero) modes."""
        kc = min(self.kcut, self.n / 2.0 - 0.5)  # Nyquist planes are never retained
        m = (np.abs(self.kx) <= kc) & (np.abs(self.ky) <= kc) & (np.abs(self.kz) <= kc)
        m = np.broadcast_to(m, self.spectral_shape[1:]).copy()
        m[0, 0, 0] = False
        return m

    @cached_property
    def kmax_retained(self):
        return int(min(np.floor(self.kcut + 1e-12), self.n // 2 - 1))

    @cached_property
    def lambda_max(self):
        """Largest retained Stokes eigenvalue."""
        return float(3 * self.kmax_retained ** 2)

    def zeros(self):
        return np.zeros(self.spectral_shape, dtype=complex)

    def check(self, *fields):
        for f in fields:
            if np.shape(f) != self.spectral_shape:
                raise LatticeMismatchError(
                    f"field of shape {np.shape(f)} does not live on lattice N={self.n} "
                    f"(expected {self.spectral_shape})"
                )


def to_grid(lat, uh):
    """Collocation-grid values of a (stack of) spectral field(s)."""
    scale = lat.n ** 3
    return sfft.irfftn(uh * scale, s=(lat.n,) * 3, axes=AXES)


def from_grid(lat, u):
    return sfft.rfftn(u, axes=AXES) / lat.n ** 3


def truncate(lat, uh):
    return np.where(lat.mask, uh, 0.0)


def leray_project(lat, raw):
    """Helmholtz-Leray projection: uh <- uh - k (k.uh)/|k|^2, and uh(0) = 0."""
    lat.check(raw)
    kdotu = np.einsum("i...,i...->...", lat.kvec, raw)
    out = raw - lat.kvec * (kdotu * lat.inv_k2)
    out[:, 0, 0, 0] = 0.0
    return out


def stokes_apply(lat, uh, s):
    """Fractional Stokes power A^s: multiply mode k by |k|^(2s)."""
    if not -1.0 <= s <= 2.0:
        raise ValueError(f"Stokes power s must lie in [-1, 2], got {s}")
    if s == 0:
        return uh.copy()
    if s == 1:
        return uh * lat.k2
    mult = np.zeros_like(lat.k2)
    nz = lat.k2 > 0
    mult[nz] = lat.k2[nz] ** s
    return uh * mult


# ---------------------------------------------------------------- norms

def inner(lat, uh, vh):
    """H inner product (u, v)."""
    return float(np.sum(lat.weight * np.real(uh * np.conj(vh))))


def inner_h1(lat, uh, vh):
    """V inner product ((u, v)) = (A^{1/2}u, A^{1/2}v)."""
    return float(np.sum(lat.weight * lat.k2 * np.real(uh * np.conj(vh))))


def l2_sq(lat, uh):
    return float(np.sum(lat.weight * (uh.real ** 2 + uh.imag ** 2)))


def h1_sq(lat, uh):
    return float(np.sum(lat.weight * lat.k2 * (uh.real ** 2 + uh.imag ** 2)))


def hfrac_sq(lat, uh, s):
    """|A^{s/2} u|^2 = sum |k|^(2s) |uh|^2."""
    mult = np.zeros_like(lat.k2)
    nz = lat.k2 > 0
    mult[nz] = lat.k2[nz] ** s
    return float(np.sum(lat.weight * mult * (uh.real ** 2 + uh.imag ** 2)))


def frac14_sq(lat, uh):
    """|A^{1/4} u|^2."""
    return float(np.sum(lat.weight * lat.kmag * (uh.real ** 2 + uh.imag ** 2)))


def vdual_sq(lat, fh):
    """||f||_{V'}^2 = |A^{-1/2} f|^2 for mean-zero divergence-free f."""
    return float(np.sum(lat.weight * lat.inv_k2 * (fh.real ** 2 + fh.imag ** 2)))


@dataclass(frozen=True)
class Norms:
    l2: float
    h1: float
    v_dual: float
    frac14: float


def norms(lat, uh):
    return Norms(
        np.sqrt(l2_sq(lat, uh)),
        np.sqrt(h1_sq(lat, uh)),
        np.sqrt(vdual_sq(lat, uh)),
        np.sqrt(frac14_sq(lat, uh)),
    )


# ----------------------------------------------------------- nonlinearity

def _advection(lat, uh, vh):
    """Grid values of u and of (u.grad)v, both de-aliased at input."""
    uh = truncate(lat, uh)
    vh = truncate(lat, vh)
    grad_v = 1j * lat.kvec[:, None] * vh[None, :]  # [i, j] = d_i v_j
    stacked = np.concatenate([uh, grad_v.reshape((9,) + uh.shape[1:])])
    g = to_grid(lat, stacked)
    u = g[:3]
    dv = g[3:].reshape((3, 3) + u.shape[1:])
    adv = np.einsum("i...,ij...->j...", u, dv)
    return u, adv


def nonlinear_term(lat, uh, vh):
    """B(u, v) = P((u.grad) v), pseudo-spectral with de-aliasing."""
    lat.check(uh, vh)
    _, adv = _advection(lat, uh, vh)
    return leray_project(lat, truncate(lat, from_grid(lat, adv)))


def nonlinear_term_with_umax(lat, uh):
    """B(u, u) together with the max collocation speed per component."""
    lat.check(uh)
    u, adv = _advection(lat, uh, uh)
    umax = np.abs(u).reshape(3, -1).max(axis=1)
    return leray_project(lat, truncate(lat, from_grid(lat, adv))), umax


@dataclass(frozen=True)
class BaseGrid:
    """Collocation values of u and grad u, reused across many linearizations."""
    u: np.ndarray
    du: np.ndarray  # [i, j] = d_i u_j


def base_grid(lat, uh):
    uh = truncate(lat, uh)
    grad = 1j * lat.kvec[:, None] * uh[None, :]
    g = to_grid(lat, np.concatenate([uh, grad.reshape((9,) + uh.shape[1:])]))
    return BaseGrid(g[:3], g[3:].reshape((3, 3) + g.shape[1:]))


def symmetric_nonlinear(lat, base, vh):
    """B(u, v) + B(v, u) for a field or a stack of fields v (leading axis)."""
    vh = truncate(lat, vh)
    lead = vh.shape[:-4]
    grad = 1j * lat.kvec[:, None] * vh[..., None, :, :, :, :]
    stacked = np.concatenate([vh, grad.reshape(lead + (9,) + vh.shape[-3:])], axis=-4)
    g = to_grid(lat, stacked)
    v = g[..., :3, :, :, :]
    dv = g[..., 3:, :, :, :].reshape(lead + (3, 3) + g.shape[-3:])
    adv = np.einsum("ixyz,...ijxyz->...jxyz", base.u, dv)
    adv += np.einsum("...ixyz,ijxyz->...jxyz", v, base.du)
    out = truncate(lat, from_grid(lat, adv))
    kdotu = np.einsum("ixyz,...ixyz->...xyz", lat.kvec, out)
    out = out - lat.kvec * (kdotu * lat.inv_k2)[..., None, :, :, :]
    out[..., :, 0, 0, 0] = 0.0
    return out


def trilinear(lat, uh, vh, wh):
    """b(u, v, w) = (B(u, v), w)."""
    lat.check(uh, vh, wh)
    return inner(lat, nonlinear_term(lat, uh, vh), wh)


def trilinear_quadrature(lat, uh, vh, wh):
    """b(u, v, w) as the collocation-grid average of u_i d_i v_j w_j."""
    lat.check(uh, vh, wh)
    _, adv = _advection(lat, uh, vh)
    w = to_grid(lat, truncate(lat, wh))
    return float(np.mean(np.sum(adv * w, axis=0)))


# ------------------------------------------------------- full-lattice I/O

def to_full(lat, uh):
    """Expand a half spectrum to the full ``(3, N, N, N)`` coefficient array."""
    n = lat.n
    full = np.zeros(lat.grid_shape, dtype=complex)
    h = n // 2 + 1
    full[..., :h] = uh
    # uh(-k) = conj(uh(k)) for the remaining kz
    idx = (-np.arange(n)) % n
    for kz in range(h, n):
        src = n - kz
        full[..., kz] = np.conj(uh[:, idx][:, :, idx][..., src])
    return full


def from_full(lat, full):
    return np.array(full[..., : lat.n // 2 + 1])


def hermitian_defect(lat, full):
    """max |uh(-k) - conj(uh(k))| over the full lattice."""
    n = lat.n
    idx = (-np.arange(n)) % n
    mirrored = full[:, idx][:, :, idx][..., idx]
    return float(np.max(np.abs(mirrored - np.conj(full)), initial=0.0))


def check_field(lat, uh, rtol=1e-12):
    """Raise InvalidFieldError unless uh is zero-mean, divergence-free and real."""
    lat.check(uh)
    scale = np.max(np.abs(uh), initial=0.0)
    if scale == 0.0:
        return
    if np.any(~np.isfinite(uh)):
        raise InvalidFieldError("field has non-finite coefficients")
    if np.max(np.abs(uh[:, 0, 0, 0])) > rtol * scale:
        raise InvalidFieldError("field has a nonzero mean mode")
    div = np.abs(np.einsum("i...,i...->...", lat.kvec, uh))
    if np.max(div) > rtol * scale * np.max(lat.kmag):
        raise InvalidFieldError(f"field is not divergence-free (max |k.u| = {np.max(div):.3e})")
    if hermitian_defect(lat, to_full(lat, uh)) > rtol * scale * 10:
        raise InvalidFieldError("field violates Hermitian symmetry")


# ------------------------------------------------------- field factories

def random_field(lat, rng, energy=1.0, kmax=None, slope=0.0):
    """Seeded random element of the Galerkin space with |u|^2 = energy.

    Real Gaussian noise on the grid is transformed, truncated, projected and
    optionally tilted by |k|^(-slope) before normalisation.
    """
    raw = from_grid(lat, rng.standard_normal(lat.grid_shape))
    uh = leray_project(lat, truncate(lat, raw))
    if kmax is not None:
        uh = np.where(lat.kmag <= kmax, uh, 0.0)
    if slope:
        uh = uh * np.where(lat.k2 > 0, lat.kmag, 1.0) ** (-slope)
    e = l2_sq(lat, uh)
    if e == 0.0 or energy == 0.0:
        return lat.zeros()
    return uh * np.sqrt(energy / e)


def _set_mode(lat, uh, k, vec):
    """Place amplitude vec at wavevector k (and its conjugate partner)."""
    n = lat.n
    kx, ky, kz = (int(c) for c in k)
    vec = np.asarray(vec, dtype=complex)
    if kz < 0 or (kz == 0 and (ky < 0 or (ky == 0 and kx < 0))):
        kx, ky, kz = -kx, -ky, -kz
        vec = np.conj(vec)
    uh[:, kx % n, ky % n, kz] += vec
    if kz == 0:
        uh[:, (-kx) % n, (-ky) % n, 0] += np.conj(vec)
    return uh


def shear_mode(lat, amplitude=1.0, direction=0, component=1, wavenumber=1):
    """u = amplitude * cos(wavenumber x_direction) e_component, so |u|^2 = amplitude^2/2."""
    if direction == component:
        raise ValueError("shear flow must vary across the velocity component")
    uh = lat.zeros()
    k = [0, 0, 0]
    k[direction] = wavenumber
    vec = np.zeros(3, dtype=complex)
    vec[component] = amplitude / 2.0
    return _set_mode(lat, uh, k, vec)


def kolmogorov_mode(lat, amplitude=1.0, wavenumber=1):
    """u = amplitude * sin(wavenumber x_2) e_1."""
    uh = lat.zeros()
    vec = np.zeros(3, dtype=complex)
    vec[0] = amplitude / 2j
    return _set_mode(lat, uh, [0, wavenumber, 0], vec)


def stokes_spectrum(lat):
    """Retained Stokes eigenvalues |k|^2 with multiplicity, ascending.

    Each wavevector pair {k, -k} carries two divergence-free polarizations and
    two real phases (cos, sin), i.e. two real eigen-directions per lattice
    point k once the pair is counted as two points.
    """
    n = lat.n
    freqs = np.fft.fftfreq(n, 1.0 / n)
    kx, ky, kz = np.meshgrid(freqs, freqs, freqs, indexing="ij")
    kc = lat.kmax_retained
    keep = (np.abs(kx) <= kc) & (np.abs(ky) <= kc) & (np.abs(kz) <= kc)
    k2 = (kx ** 2 + ky ** 2 + kz ** 2)[keep]
    k2 = k2[k2 > 0]
    full_k2 = np.repeat(k2, 2)
    return np.sort(full_k2)


def _canonical_wavevectors(lat):
    """One representative per {k, -k} pair among retained modes, ordered by |k|^2."""
    reps = []
    r = lat.kmax_retained
    for kx in range(-r, r + 1):
        for ky in range(-r, r + 1):
            for kz in range(0, r + 1):
                if kz == 0 and (ky < 0 or (ky == 0 and kx <= 0)):
                    continue
                reps.append((kx * kx + ky * ky + kz * kz, kx, ky, kz))
    reps.sort()
    return [(k2, (kx, ky, kz)) for k2, kx, ky, kz in reps]


def _polarizations(k):
    k = np.asarray(k, dtype=float)
    khat = k / np.linalg.norm(k)
    trial = np.eye(3)[np.argmin(np.abs(khat))]
    p1 = trial - khat * (trial @ khat)
    p1 /= np.linalg.norm(p1)
    p2 = np.cross(khat, p1)
    return p1, p2


def stokes_eigenbasis(lat, n):
    """First n H-orthonormal real Stokes eigenfields, ordered by eigenvalue."""
    out = []
    for _, k in _canonical_wavevectors(lat):
        for p in _polarizations(k):
            for phase in (1.0, -1j):  # cos(k.x) p, sin(k.x) p
                if len(out) == n:
                    return out
                uh = _set_mode(lat, lat.zeros(), k, phase * p / np.sqrt(2.0))
                out.append(uh)
    if len(out) < n:
        raise ValueError(f"lattice has only {len(out)} retained eigen-directions, asked for {n}")
    return out
