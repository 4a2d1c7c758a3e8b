"""Independent reference computations used by the tests."""
import itertools
import math

import numpy as np

from pblab import spectral as sp


def convolution_nonlinear(lat, uh, vh):
    """B(u, v) by direct summation over wavevector pairs p + q = k.

    (u.grad v)^(k) = sum_{p+q=k} (u(p) . i q) v(q), restricted to retained k,
    then projected onto divergence-free fields.  No FFTs are involved.
    """
    n = lat.n
    r = lat.kmax_retained
    U = sp.to_full(lat, uh)
    V = sp.to_full(lat, vh)
    modes = [k for k in itertools.product(range(-r, r + 1), repeat=3) if any(k)]
    idx = np.array(modes) % n
    Up = U[:, idx[:, 0], idx[:, 1], idx[:, 2]].T  # (m, 3)
    Vq = V[:, idx[:, 0], idx[:, 1], idx[:, 2]].T
    kq = np.array(modes, dtype=float)
    out = np.zeros((3, n, n, n), dtype=complex)
    # a[p, q] = u(p) . i q, contributes a[p, q] v(q) at k = p + q
    a = 1j * Up @ kq.T
    pos = {k: j for j, k in enumerate(modes)}
    for ip, p in enumerate(modes):
        for iq, q in enumerate(modes):
            k = (p[0] + q[0], p[1] + q[1], p[2] + q[2])
            if k in pos:
                out[:, k[0] % n, k[1] % n, k[2] % n] += a[ip, iq] * Vq[iq]
    half = sp.from_full(lat, out)
    return sp.leray_project(lat, sp.truncate(lat, half))


def bernoulli_energy(t, nu, nu0, e0, k2=1.0):
    """Closed-form |u(t)|^2 for a single Stokes mode of eigenvalue k2 with f = 0.

    dE/dt = -2 k2 (nu + nu0 k2 E) E, so
    E(t) = nu E0 e^{-2 nu k2 t} / (nu + nu0 k2 E0 (1 - e^{-2 nu k2 t})).
    """
    decay = math.exp(-2.0 * nu * k2 * t)
    return nu * e0 * decay / (nu + nu0 * k2 * e0 * (1.0 - decay))
