"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy/scipy version. ``VIBRONIC_DISABLE_NUMBA=1`` selects the numpy
path; both produce the same numbers to rounding.

The generators handled here all have the form ``H(lam) = diag(d) + lam * C``
with ``C`` real symmetric and stored as CSR.  The bosonic ladder structure
needed by the dissipator is passed as two coefficient vectors over the flat
index: ``down[i]`` is the matrix element ``<i-1|a|i>`` and ``up[i]`` is
``<i+1|a^dag|i>`` (zero at block edges).
"""

import numpy as np
import scipy.sparse as sp

from ._accel import USE_NUMBA, njit

__all__ = [
    "Generator",
    "schrodinger_rhs_numba",
    "schrodinger_rhs_numpy",
    "dop853_pulse_numba",
    "lindblad_rhs_numba",
    "lindblad_rhs_numpy",
    "wigner_numba",
    "wigner_numpy",
    "wigner_grid",
]


# --- pure state -----------------------------------------------------------


@njit
def schrodinger_rhs_numba(diag, indptr, indices, data, lam, psi, out):
    d = psi.shape[0]
    for i in range(d):
        acc = diag[i] * psi[i]
        s = 0.0j
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * psi[indices[k]]
        acc += lam * s
        out[i] = -1j * acc
    return out


def schrodinger_rhs_numpy(diag, csr, lam, psi):
    return -1j * (diag * psi + lam * (csr @ psi))


# Compiled DOP853 for the ramp. scipy's stepping is pure Python, and for the
# small spin-boson spaces its per-step overhead is ~90% of the wall clock. The
# controller below replicates scipy's RungeKutta/DOP853 step by step: the same
# initial-step heuristic, error norm, safety factor and step clamps. The
# tableau comes from scipy.integrate.DOP853 itself.

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@njit
def _pulse(t, v, lam_max):
    if t <= lam_max / v:
        return v * t
    return max(2.0 * lam_max - v * t, 0.0)


@njit
def _rms(x):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i].real * x[i].real + x[i].imag * x[i].imag
    return np.sqrt(acc / x.shape[0])


@njit
def dop853_pulse_numba(diag, indptr, indices, data, v, lam_max, y0, t0, t1, rtol, atol, max_step,
                       A, B, C, E3, E5):
    """Integrate ``i dy/dt = H(lam(t)) y`` from ``t0`` to ``t1``.

    Returns ``(y, status, nfev)``; ``status`` is 0 on success and -1 when
    the step size underflows.
    """
    n = y0.shape[0]
    ns = B.shape[0]
    K = np.empty((ns + 1, n), dtype=np.complex128)
    y = y0.copy()
    y_new = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    f = np.empty(n, dtype=np.complex128)
    scale = np.empty(n)
    t = t0
    schrodinger_rhs_numba(diag, indptr, indices, data, _pulse(t, v, lam_max), y, f)
    nfev = 1
    interval = abs(t1 - t0)
    if interval == 0.0:
        return y, 0, nfev

    # initial step (Hairer, Norsett & Wanner II.4)
    for i in range(n):
        scale[i] = atol + abs(y[i]) * rtol
    d0 = _rms(y / scale)
    d1 = _rms(f / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, interval)
    for i in range(n):
        tmp[i] = y[i] + h0 * f[i]
    schrodinger_rhs_numba(diag, indptr, indices, data, _pulse(t + h0, v, lam_max), tmp, y_new)
    nfev += 1
    d2 = _rms((y_new - f) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    h_abs = min(100.0 * h0, h1, interval, max_step)
    exponent = -1.0 / 8.0

    while t < t1:
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs > max_step:
            h_abs = max_step
        elif h_abs < min_step:
            h_abs = min_step
        accepted = False
        rejected = False
        t_new = t
        while not accepted:
            if h_abs < min_step:
                return y, -1, nfev
            t_new = t + h_abs
            if t_new > t1:
                t_new = t1
            h = t_new - t
            h_abs = abs(h)
            K[0] = f
            for s in range(1, ns):
                for i in range(n):
                    acc = 0.0j
                    for j in range(s):
                        acc += K[j, i] * A[s, j]
                    tmp[i] = y[i] + acc * h
                schrodinger_rhs_numba(diag, indptr, indices, data, _pulse(t + C[s] * h, v, lam_max), tmp, K[s])
            for i in range(n):
                acc = 0.0j
                for j in range(ns):
                    acc += K[j, i] * B[j]
                y_new[i] = y[i] + h * acc
            schrodinger_rhs_numba(diag, indptr, indices, data, _pulse(t + h, v, lam_max), y_new, K[ns])
            nfev += ns
            e5 = 0.0
            e3 = 0.0
            for i in range(n):
                sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
                a5 = 0.0j
                a3 = 0.0j
                for j in range(ns + 1):
                    a5 += K[j, i] * E5[j]
                    a3 += K[j, i] * E3[j]
                e5 += abs(a5 / sc) ** 2
                e3 += abs(a3 / sc) ** 2
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if err < 1.0:
                factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err**exponent)
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                accepted = True
            else:
                h_abs *= max(_MIN_FACTOR, _SAFETY * err**exponent)
                rejected = True
        t = t_new
        y[:] = y_new
        f[:] = K[ns]
    return y, 0, nfev


# --- density matrix ---------------------------------------------------------


@njit
def lindblad_rhs_numba(diag, indptr, indices, data, lam, down, up, g_down, g_up, rho, out):
    d = rho.shape[0]
    # diagonals of a^dag a and a a^dag
    nn = down * down
    aad = up * up
    for i in range(d):
        for j in range(d):
            r = rho[i, j]
            # -i [H, rho]
            hr = diag[i] * r
            rh = r * diag[j]
            s1 = 0.0j
            for k in range(indptr[i], indptr[i + 1]):
                s1 += data[k] * rho[indices[k], j]
            s2 = 0.0j
            for k in range(indptr[j], indptr[j + 1]):
                s2 += rho[i, indices[k]] * data[k]
            acc = -1j * (hr - rh + lam * (s1 - s2))
            if g_down != 0.0:
                jump = 0.0j
                if i + 1 < d and j + 1 < d:
                    jump = up[i] * up[j] * rho[i + 1, j + 1]
                acc += g_down * (jump - 0.5 * (nn[i] + nn[j]) * r)
            if g_up != 0.0:
                jump = 0.0j
                if i >= 1 and j >= 1:
                    jump = down[i] * down[j] * rho[i - 1, j - 1]
                acc += g_up * (jump - 0.5 * (aad[i] + aad[j]) * r)
            out[i, j] = acc
    return out


def lindblad_rhs_numpy(diag, csr, lam, down, up, g_down, g_up, rho):
    hr = diag[:, None] * rho + lam * (csr @ rho)
    # C symmetric, so rho @ C == (C @ rho.T).T
    rh = rho * diag[None, :] + lam * (csr @ rho.T).T
    out = -1j * (hr - rh)
    if g_down != 0.0:
        shifted = np.zeros_like(rho)
        shifted[:-1, :-1] = rho[1:, 1:]
        nn = down * down
        out += g_down * (np.outer(up, up) * shifted - 0.5 * (nn[:, None] + nn[None, :]) * rho)
    if g_up != 0.0:
        shifted = np.zeros_like(rho)
        shifted[1:, 1:] = rho[:-1, :-1]
        aad = up * up
        out += g_up * (np.outer(down, down) * shifted - 0.5 * (aad[:, None] + aad[None, :]) * rho)
    return out


_TABLEAU = {}


def _dop853_tableau(cls):
    if not _TABLEAU:
        ns = cls.n_stages
        _TABLEAU["t"] = tuple(np.ascontiguousarray(x, dtype=float) for x in (
            cls.A[:ns, :ns], cls.B, cls.C[:ns], cls.E3, cls.E5))
    return _TABLEAU["t"]


class Generator:
    """``H(lam) = diag(d) + lam * C`` plus optional bosonic ladder data.

    Dispatches right-hand-side evaluations to the active backend.
    """

    def __init__(self, diag, coupling, down=None, up=None):
        self.diag = np.ascontiguousarray(diag, dtype=float)
        csr = sp.csr_matrix(coupling, dtype=float)
        csr.sort_indices()
        self.csr = csr
        self.indptr = csr.indptr.astype(np.int64)
        self.indices = csr.indices.astype(np.int64)
        self.data = csr.data.astype(float)
        self.dim = self.diag.shape[0]
        self.down = None if down is None else np.ascontiguousarray(down, dtype=float)
        self.up = None if up is None else np.ascontiguousarray(up, dtype=float)

    def schrodinger(self, lam, psi):
        if USE_NUMBA:
            out = np.empty_like(psi)
            return schrodinger_rhs_numba(self.diag, self.indptr, self.indices, self.data, float(lam), psi, out)
        return schrodinger_rhs_numpy(self.diag, self.csr, lam, psi)

    def pulse_segment(self, velocity, lambda_max, psi, t0, t1, rel_tol, abs_tol, max_step=np.inf):
        """Compiled DOP853 over one segment of the up-down ramp.

        Returns ``(psi, status, nfev)``. Only available with numba.
        """
        from scipy.integrate import DOP853

        tab = _dop853_tableau(DOP853)
        return dop853_pulse_numba(
            self.diag, self.indptr, self.indices, self.data, float(velocity), float(lambda_max),
            np.ascontiguousarray(psi, dtype=np.complex128), float(t0), float(t1), float(rel_tol),
            float(abs_tol), float(max_step), *tab,
        )

    def lindblad(self, lam, rho, g_down=0.0, g_up=0.0):
        if (g_down or g_up) and self.down is None:
            raise ValueError("dissipator requested but no ladder data attached")
        down = self.down if self.down is not None else np.zeros(self.dim)
        up = self.up if self.up is not None else np.zeros(self.dim)
        if USE_NUMBA:
            out = np.empty_like(rho)
            return lindblad_rhs_numba(
                self.diag, self.indptr, self.indices, self.data, float(lam),
                down, up, float(g_down), float(g_up), rho, out,
            )
        return lindblad_rhs_numpy(self.diag, self.csr, lam, down, up, g_down, g_up, rho)


# --- Wigner function -----------------------------------------------------------
#
# Iterative Fock-basis recursion for the functions W_mn(alpha) of |m><n|,
# alpha = (x + i p) / sqrt(2), W = (2/pi) tr[rho D Pi D^dag], so W integrates to
# one against d^2 alpha = dx dp / 2.


@njit
def wigner_numba(rho, xs, ps):
    M = rho.shape[0]
    nx = xs.shape[0]
    npts = ps.shape[0]
    out = np.zeros((npts, nx))
    wl = np.zeros(M, dtype=np.complex128)
    sq = np.sqrt(np.arange(M) * 1.0)
    for ip in range(npts):
        for ix in range(nx):
            a = (xs[ix] + 1j * ps[ip]) / np.sqrt(2.0)
            ca = np.conj(a)
            wl[0] = 2.0 * np.exp(-2.0 * (a.real * a.real + a.imag * a.imag)) / np.pi
            w = rho[0, 0].real * wl[0].real
            for n in range(1, M):
                wl[n] = 2.0 * a * wl[n - 1] / sq[n]
                w += 2.0 * (rho[0, n] * wl[n]).real
            for m in range(1, M):
                temp = wl[m]
                wl[m] = (2.0 * ca * temp - sq[m] * wl[m - 1]) / sq[m]
                w += (rho[m, m] * wl[m]).real
                for n in range(m + 1, M):
                    t2 = (2.0 * a * wl[n - 1] - sq[m] * temp) / sq[n]
                    temp = wl[n]
                    wl[n] = t2
                    w += 2.0 * (rho[m, n] * wl[n]).real
            out[ip, ix] = w
    return out


def wigner_numpy(rho, xs, ps):
    M = rho.shape[0]
    X, P = np.meshgrid(xs, ps)
    a = (X + 1j * P) / np.sqrt(2.0)
    ca = np.conj(a)
    sq = np.sqrt(np.arange(M, dtype=float))
    wl = [2.0 * np.exp(-2.0 * np.abs(a) ** 2) / np.pi + 0j]
    w = rho[0, 0].real * wl[0].real
    for n in range(1, M):
        wl.append(2.0 * a * wl[n - 1] / sq[n])
        w = w + 2.0 * np.real(rho[0, n] * wl[n])
    for m in range(1, M):
        temp = wl[m]
        wl[m] = (2.0 * ca * temp - sq[m] * wl[m - 1]) / sq[m]
        w = w + np.real(rho[m, m] * wl[m])
        for n in range(m + 1, M):
            t2 = (2.0 * a * wl[n - 1] - sq[m] * temp) / sq[n]
            temp = wl[n]
            wl[n] = t2
            w = w + 2.0 * np.real(rho[m, n] * wl[n])
    return w


def wigner_grid(rho, xs, ps):
    """W(p_i, x_j) on the outer grid, rows indexed by momentum."""
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    xs = np.ascontiguousarray(xs, dtype=float)
    ps = np.ascontiguousarray(ps, dtype=float)
    if USE_NUMBA:
        return wigner_numba(rho, xs, ps)
    return wigner_numpy(rho, xs, ps)
