"""Discretized model manifolds.

Two grid families are provided.

``TorusGrid``
    The flat complex torus C^m / Z^{2m} sampled on N points per real axis.
    Field arrays carry the grid axes last, ordered ``(x1, y1, x2, y2)``.
    Derivatives are spectral.

``ChartGrid``
    CP^1 in the cylinder coordinate ``w = log z = s + i lam``.  Nodes sit on a
    colatitude/longitude lattice of the round sphere with no node at either
    pole; the colatitude runs from the point at infinity (theta = 0) to the
    origin of the affine chart (theta = pi).  Smooth functions on the sphere
    are differentiated spectrally through the double-Fourier extension in
    colatitude, and integrated with Fejer's first rule.

Every grid exposes the same small interface: ``m``, ``shape``, ``d_holo``,
``d_antiholo``, ``integrate_coordinate`` and a reference Hermitian frame used
by the curvature code (``ref_frame``).
"""

from __future__ import annotations

import numpy as np
from scipy.special import sph_harm_y


class GridError(ValueError):
    pass


def _wavenumbers(n, period=1.0):
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0  # drop Nyquist so odd derivatives stay real on real data
    return 2 * np.pi * k / period


def pairwise_sum(values, axes):
    """Sum over ``axes`` in a fixed order (numpy's pairwise reduction along each axis)."""
    out = values
    for ax in sorted(axes, reverse=True):
        out = np.sum(out, axis=ax)
    return out


class TorusGrid:
    """Periodic grid on the complex torus of dimension ``m`` (unit lattice).

    Parameters
    ----------
    m : int
        Complex dimension, 1 or 2.
    N : int
        Points per real axis, a power of two.
    """

    tag = "torus"

    def __init__(self, m: int, N: int = 64):
        if m not in (1, 2):
            raise GridError(f"torus dimension must be 1 or 2, got {m}")
        if N < 4 or N & (N - 1):
            raise GridError(f"N must be a power of two >= 4, got {N}")
        self.m, self.N = m, N
        self.shape = (N,) * (2 * m)
        self.h = 1.0 / N
        self._k = _wavenumbers(N)

    def __repr__(self):
        return f"TorusGrid(m={self.m}, N={self.N})"

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and (other.m, other.N) == (self.m, self.N)

    def __hash__(self):
        return hash(("torus", self.m, self.N))

    def spec(self) -> dict:
        return {"manifold": "torus", "m": self.m, "N": self.N}

    @property
    def size(self):
        return self.N ** (2 * self.m)

    @property
    def ndim(self):
        return 2 * self.m

    def coords(self):
        """Meshgrid ``[x1, y1, ...]`` of real coordinates in [0, 1)."""
        axis = np.arange(self.N) / self.N
        return np.meshgrid(*([axis] * (2 * self.m)), indexing="ij")

    def z(self, k=0):
        X = self.coords()
        return X[2 * k] + 1j * X[2 * k + 1]

    # spectral calculus -----------------------------------------------
    def _kvec(self, axis_index):
        shape = [1] * self.ndim
        shape[axis_index] = self.N
        return self._k.reshape(shape)

    def _deriv_hat(self, fhat, k, holo):
        kx = self._kvec(2 * k)
        ky = self._kvec(2 * k + 1)
        # d/dz = (d_x - i d_y)/2, d/dzbar = (d_x + i d_y)/2
        if holo:
            return 0.5 * (1j * kx + ky) * fhat
        return 0.5 * (1j * kx - ky) * fhat

    def _fft(self, f):
        return np.fft.fftn(f, axes=tuple(range(-self.ndim, 0)))

    def _ifft(self, f):
        return np.fft.ifftn(f, axes=tuple(range(-self.ndim, 0)))

    def d_holo(self, f, k: int):
        """``d f / d z_k`` of an array whose trailing axes are the grid."""
        return self._ifft(self._deriv_hat(self._fft(f), k, True))

    def d_antiholo(self, f, k: int):
        return self._ifft(self._deriv_hat(self._fft(f), k, False))

    def hessian(self, f):
        """``H[i, j] = d_i dbar_j f`` with shape (m, m, *leading, *grid)."""
        fhat = self._fft(f)
        m = self.m
        out = np.empty((m, m) + np.shape(f), complex)
        for i in range(m):
            di = self._deriv_hat(fhat, i, True)
            for j in range(m):
                out[i, j] = self._ifft(self._deriv_hat(di, j, False))
        return out

    def rel_hessian(self, f):
        """Reference-frame form of the complex Hessian, ``H_ref^{-1} hess^T``."""
        return np.swapaxes(self.hessian(f), 0, 1)

    def d_x(self, f, axis):
        return self._ifft(1j * self._kvec(axis) * self._fft(f))

    def flat_laplacian_symbol(self):
        """Fourier symbol of ``sum_k d_k dbar_k`` (negative semidefinite)."""
        total = 0.0
        for a in range(self.ndim):
            total = total - 0.25 * self._kvec(a) ** 2
        return np.broadcast_to(total, self.shape)

    def apply_symbol(self, f, symbol):
        return self._ifft(symbol * self._fft(f))

    # integration -----------------------------------------------------
    def integrate_coordinate(self, f):
        """Integral of ``f`` against ``dx1 dy1 ... dxm dym`` (trapezoid, spectrally exact)."""
        f = np.asarray(f)
        return pairwise_sum(f, range(f.ndim - self.ndim, f.ndim)) * self.h ** self.ndim

    def coordinate_weights(self):
        return np.full(self.shape, self.h ** self.ndim)

    # reference frame -------------------------------------------------
    def ref_frame(self):
        """Reference metric, its connection and curvature (all zero curvature: flat)."""
        m = self.m
        eye = np.zeros((m, m) + self.shape, complex)
        for a in range(m):
            eye[a, a] = 1.0
        A = np.zeros((m, m, m) + self.shape, complex)
        Theta = np.zeros((m, m, m, m) + self.shape, complex)
        return eye, A, Theta

    # random smooth data ----------------------------------------------
    def random_potential(self, rng, amplitude=0.01, max_freq=2):
        """Random real trigonometric polynomial with frequencies up to ``max_freq``.

        Scaled so that its sup norm is ``amplitude``.
        """
        X = self.coords()
        f = np.zeros(self.shape)
        for _ in range(4 + 2 * self.m):
            freqs = rng.integers(-max_freq, max_freq + 1, size=self.ndim)
            if not np.any(freqs):
                continue
            phase = 2 * np.pi * rng.random()
            arg = sum(2 * np.pi * int(fr) * x for fr, x in zip(freqs, X))
            f = f + rng.standard_normal() * np.cos(arg + phase)
        f = f - f.mean()
        scale = np.max(np.abs(f))
        if scale == 0:
            return f
        return amplitude * f / scale

    def meanzero(self, f, weight=None):
        """Subtract the (weighted) mean."""
        if weight is None:
            return f - self.integrate_coordinate(f)
        return f - self.integrate_coordinate(f * weight) / self.integrate_coordinate(weight)


def fejer_weights(n):
    """Fejer's first rule on the interior colatitudes (j + 1/2) pi / n.

    Integrates ``F(cos theta)`` over [-1, 1]; exact for polynomials of degree < n.
    """
    theta = (np.arange(n) + 0.5) * np.pi / n
    w = np.ones(n)
    for k in range(1, n // 2 + 1):
        w -= 2 * np.cos(2 * k * theta) / (4 * k * k - 1)
    return 2.0 / n * w


class ChartGrid:
    """CP^1 on the cylinder chart ``w = log z`` with a double-Fourier sphere lattice.

    Parameters
    ----------
    n_theta : int
        Colatitude nodes (interior, no poles).
    n_lam : int
        Longitude nodes, even.
    """

    tag = "cp1"
    m = 1

    def __init__(self, n_theta: int = 32, n_lam: int = 64):
        if n_lam % 2 or n_lam < 4 or n_theta < 4:
            raise GridError("need n_lam even and >= 4, n_theta >= 4")
        self.n_theta, self.n_lam = n_theta, n_lam
        self.shape = (n_theta, n_lam)
        self.theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
        self.lam = 2 * np.pi * np.arange(n_lam) / n_lam
        self.TH, self.LAM = np.meshgrid(self.theta, self.lam, indexing="ij")
        self.sin = np.sin(self.TH)
        self.cos = np.cos(self.TH)
        self._kt = _wavenumbers(2 * n_theta, 2 * np.pi)[:, None]
        self._kl = _wavenumbers(n_lam, 2 * np.pi)[None, :]
        # weight for integral against ds dlam = dtheta dlam / sin(theta)
        wt = fejer_weights(n_theta) / np.sin(self.theta) ** 2
        self._wcoord = (wt[:, None] * np.full(n_lam, 2 * np.pi / n_lam)[None, :])
        self._sh_cache = {}

    def __repr__(self):
        return f"ChartGrid(n_theta={self.n_theta}, n_lam={self.n_lam})"

    def __eq__(self, other):
        return isinstance(other, ChartGrid) and other.shape == self.shape

    def __hash__(self):
        return hash(("cp1", self.shape))

    def spec(self) -> dict:
        return {"manifold": "cp1", "m": 1, "n_theta": self.n_theta, "n_lam": self.n_lam}

    @property
    def size(self):
        return self.n_theta * self.n_lam

    @property
    def ndim(self):
        return 2

    def cartesian(self):
        """Unit-sphere coordinates (X, Y, Z) with Z = (|z|^2 - 1)/(|z|^2 + 1)."""
        return self.sin * np.cos(self.LAM), self.sin * np.sin(self.LAM), self.cos

    def z(self):
        """Affine chart coordinate z = cot(theta/2) e^{i lam}."""
        return np.exp(1j * self.LAM) / np.tan(self.TH / 2)

    # spectral calculus -----------------------------------------------
    def _extend(self, f):
        half = self.n_lam // 2
        flipped = np.roll(f[..., ::-1, :], -half, axis=-1)
        return np.concatenate([f, flipped], axis=-2)

    def d_theta(self, f):
        ext = self._extend(f)
        hat = np.fft.fft(ext, axis=-2)
        return np.fft.ifft(1j * self._kt * hat, axis=-2)[..., : self.n_theta, :]

    def d_lam(self, f):
        return np.fft.ifft(1j * self._kl * np.fft.fft(f, axis=-1), axis=-1)

    def d_s(self, f):
        # s = log cot(theta/2), so ds/dtheta = -1/sin(theta)
        return -self.sin * self.d_theta(f)

    def d_holo(self, f, k: int = 0):
        """``d/dw`` of a smooth function on the sphere."""
        if k != 0:
            raise GridError("CP^1 chart has one complex coordinate")
        return 0.5 * (self.d_s(f) - 1j * self.d_lam(f))

    def d_antiholo(self, f, k: int = 0):
        if k != 0:
            raise GridError("CP^1 chart has one complex coordinate")
        return 0.5 * (self.d_s(f) + 1j * self.d_lam(f))

    def hessian(self, f):
        return (0.25 * (self.d_s(self.d_s(f)) + self.d_lam(self.d_lam(f))))[None, None]

    def rel_hessian(self, f):
        """``H_ref^{-1} d dbar f = 2 pi Lap_sphere f``, smooth across the poles."""
        return (2 * np.pi * self.sphere_laplacian(f))[None, None]

    def sphere_laplacian(self, f):
        """Round unit-sphere Laplacian (negative semidefinite).

        Each longitudinal Fourier mode is fitted by weighted least squares with
        associated Legendre functions of degree below ``n_theta`` and
        differentiated exactly.  The double-Fourier formula would divide by
        sin^2 near the poles and amplify rounding noise by about (N / sin)^2
        per application, which ruins nested fourth-order operators; the fit
        discards the part of a grid function that is not regular on the sphere.
        """
        return self._apply_modes(f, "lap")

    def sphere_laplacian_inverse(self, f):
        """Mean-zero solution of ``Lap_sphere u = f`` (the mean of ``f`` is ignored)."""
        return self._apply_modes(f, "inv")

    def sphere_multiplier(self, f, mult, key):
        """Apply ``Y_lm -> mult(l) Y_lm`` for every degree the grid resolves.

        ``mult`` maps an array of degrees to multipliers; ``key`` names the
        multiplier for caching.
        """
        return self._apply_modes(f, ("mult", key), mult)

    def _apply_modes(self, f, kind, mult=None):
        F = np.fft.fft(f, axis=-1)
        out = np.einsum("kij,...jk->...ik", self._mode_matrices(kind, mult), F)
        out = np.fft.ifft(out, axis=-1)
        return np.real(out) if np.isrealobj(f) else out

    def _mode_matrices(self, kind, mult=None):
        """Per-mode matrices ``P diag(mult) P^+`` of shape (n_lam, n_theta, n_theta).

        The multiplier is ``-l(l+1)`` for the Laplacian, its reciprocal (zero
        at ``l = 0``) for the inverse, or a caller-supplied function of ``l``.
        """
        if kind not in self._sh_cache:
            nt, nl = self.n_theta, self.n_lam
            lmax = nt - 1
            sw = np.sqrt(fejer_weights(nt))
            mats = np.zeros((nl, nt, nt))
            for idx in range(nl):
                k = idx if idx < nl // 2 else idx - nl
                if idx == nl // 2 or abs(k) > lmax:
                    continue
                ells = np.arange(abs(k), lmax + 1)
                lam = -(ells * (ells + 1.0))
                if mult is not None:
                    lam = np.asarray(mult(ells), dtype=float)
                elif kind == "inv":
                    lam = np.divide(1.0, lam, out=np.zeros_like(lam), where=lam != 0)
                P = np.real(np.array([sph_harm_y(l, abs(k), self.theta, 0.0) for l in ells])).T
                pinv = np.linalg.pinv(sw[:, None] * P, rcond=1e-12) * sw[None, :]
                mats[idx] = P @ (lam[:, None] * pinv)
            self._sh_cache[kind] = mats
        return self._sh_cache[kind]

    # integration -----------------------------------------------------
    def integrate_coordinate(self, f):
        """Integral of ``f`` against ``ds dlam``.

        Exact (to Fejer accuracy) when ``f / sin(theta)^2`` is smooth on the sphere,
        which holds for every top-form coefficient in this chart.
        """
        f = np.asarray(f)
        return pairwise_sum(f * self._wcoord, (f.ndim - 2, f.ndim - 1))

    def coordinate_weights(self):
        return self._wcoord

    def integrate_sphere(self, f):
        """Integral of ``f`` against the round area form (total area 4 pi)."""
        return self.integrate_coordinate(f * self.sin ** 2)

    # spherical harmonics ---------------------------------------------
    @property
    def default_lmax(self):
        # products of two degree-lmax harmonics stay inside Fejer's exactness range
        return min(self.n_theta // 2 - 1, self.n_lam // 4 - 1)

    def sh_basis(self, lmax=None):
        """Real orthonormal spherical harmonics up to degree ``lmax`` at the nodes.

        Returns ``(Y, degrees)`` with ``Y`` of shape ``(nb, n_theta, n_lam)`` and
        ``int Y_a Y_b dA = delta_ab`` on the unit sphere.
        """
        lmax = self.default_lmax if lmax is None else lmax
        if lmax not in self._sh_cache:
            rows, degs = [], []
            for ell in range(lmax + 1):
                for mm in range(-ell, ell + 1):
                    y = sph_harm_y(ell, abs(mm), self.TH, self.LAM)
                    if mm > 0:
                        y = np.sqrt(2) * (-1) ** mm * np.real(y)
                    elif mm < 0:
                        y = np.sqrt(2) * (-1) ** mm * np.imag(y)
                    else:
                        y = np.real(y)
                    rows.append(y)
                    degs.append(ell)
            self._sh_cache[lmax] = (np.array(rows), np.array(degs))
        return self._sh_cache[lmax]

    def sh_analysis(self, f, lmax=None):
        """Coefficients against :meth:`sh_basis`; leading axes of ``f`` are kept, basis index last."""
        Y, _ = self.sh_basis(lmax)
        w = self._wcoord * self.sin ** 2
        return np.tensordot(np.asarray(f) * w, Y, axes=((-2, -1), (1, 2)))

    def sh_synthesis(self, coeffs, lmax=None):
        Y, _ = self.sh_basis(lmax)
        return np.tensordot(coeffs, Y, axes=(-1, 0))

    # reference frame -------------------------------------------------
    def fs_metric(self):
        """Fubini-Study coefficient ``g_{w wbar} = sin^2(theta) / (8 pi)``."""
        return self.sin ** 2 / (8 * np.pi)

    def ref_frame(self):
        """Fubini-Study metric, connection ``d log g`` and curvature in the chart.

        The connection is ``-cos(theta)`` and the curvature ``sin^2(theta)/2``;
        both are smooth on the sphere.
        """
        G = self.fs_metric()[None, None].astype(complex)
        A = (-self.cos)[None, None, None].astype(complex)
        Theta = (0.5 * self.sin ** 2)[None, None, None, None].astype(complex)
        return G, A, Theta

    # random smooth data ----------------------------------------------
    def random_potential(self, rng, amplitude=0.01, max_degree=3):
        """Random real polynomial in the Cartesian sphere coordinates, sup norm ``amplitude``."""
        X, Y, Z = self.cartesian()
        f = np.zeros(self.shape)
        for a in range(max_degree + 1):
            for b in range(max_degree + 1 - a):
                for c in range(max_degree + 1 - a - b):
                    if a + b + c == 0:
                        continue
                    f = f + rng.standard_normal() * X ** a * Y ** b * Z ** c
        f = f - self.integrate_sphere(f) / (4 * np.pi)
        return amplitude * f / np.max(np.abs(f))

    def meanzero(self, f, weight=None):
        if weight is None:
            weight = self.fs_metric()
        return f - self.integrate_coordinate(f * weight) / self.integrate_coordinate(weight)


def make_grid(manifold: str, m: int = 1, N: int = 64, n_theta: int = 32, n_lam: int = 64):
    if manifold == "torus":
        return TorusGrid(m, N)
    if manifold == "cp1":
        return ChartGrid(n_theta, n_lam)
    raise GridError(f"unknown manifold {manifold!r}")
