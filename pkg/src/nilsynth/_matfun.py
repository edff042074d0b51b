"""Analytic matrix functions of skew-symmetric matrices.

Everything downstream (geodesics, Jacobians, volume integrands) reduces to a
handful of scalar integrals of exponentials evaluated at purely imaginary
eigenvalues:

    phi1(z) = (e^z - 1)/z                 -> E1(lam, t) = int_0^t e^{s lam} ds
    psi1(z) = (e^z (z-1) + 1)/z^2         -> I1(lam, t) = int_0^t s e^{s lam} ds
    psi3(z)                               -> I3(lam, t) = int_0^t s^3 e^{s lam} ds
    dd1(a, b, t)                          -> divided difference of lam -> E1(lam, t)

All have removable singularities at z = 0 (resp. a = b); near those points a
truncated power series is used so the functions stay accurate to ~1e-14 in
double precision.  `SkewEig` packages the eigendecomposition of a real skew
matrix (via the Hermitian matrix iA) and exposes the matrix functions built
from these kernels, broadcasting over arrays of times.
"""

from __future__ import annotations

import math

import numpy as np

_SERIES_TERMS = 20
_SERIES_CUT = 0.5      # |z| below which the power series is used
_DD_CUT = 1e-5         # |(a-b)t| below which the midpoint expansion is used


def _series(z, coeffs):
    """Horner evaluation of sum_k coeffs[k] z^k."""
    out = np.zeros_like(z) + coeffs[-1]
    for c in coeffs[-2::-1]:
        out = out * z + c
    return out


_PHI1_C = [1.0 / float(math.factorial(n + 1)) for n in range(_SERIES_TERMS)]
_PSI1_C = [(n + 1) / float(math.factorial(n + 2)) for n in range(_SERIES_TERMS)]
_PSI3_C = [1.0 / (float(math.factorial(n)) * (n + 4)) for n in range(_SERIES_TERMS)]


def phi1(z):
    """(e^z - 1)/z with the removable singularity at 0 handled."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) - 1.0) / zs
    return np.where(small, _series(z, _PHI1_C), direct)


def psi1(z):
    """(e^z (z - 1) + 1)/z^2, the kernel of int_0^t s e^{s lam} ds."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) * (zs - 1.0) + 1.0) / zs**2
    return np.where(small, _series(z, _PSI1_C), direct)


def psi3(z):
    """Kernel of int_0^t s^3 e^{s lam} ds = t^4 psi3(lam t)."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) * (zs**3 - 3.0 * zs**2 + 6.0 * zs - 6.0) + 6.0) / zs**4
    return np.where(small, _series(z, _PSI3_C), direct)


def e1(lam, t):
    """int_0^t e^{s lam} ds for complex lam, broadcasting lam against t."""
    lam = np.asarray(lam, dtype=complex)
    t = np.asarray(t, dtype=float)
    return t * phi1(lam * t)


def i1(lam, t):
    """int_0^t s e^{s lam} ds."""
    lam = np.asarray(lam, dtype=complex)
    t = np.asarray(t, dtype=float)
    return t**2 * psi1(lam * t)


def i3(lam, t):
    """int_0^t s^3 e^{s lam} ds."""
    lam = np.asarray(lam, dtype=complex)
    t = np.asarray(t, dtype=float)
    return t**4 * psi3(lam * t)


def dd1(lam_a, lam_b, t):
    """Divided difference of lam -> e1(lam, t) at the pair (lam_a, lam_b).

    Equals int_0^t int_0^s e^{(s-u) lam_a} e^{u lam_b} du ds; symmetric in its
    first two arguments.  Near the diagonal the quotient is replaced by the
    midpoint expansion I1(mu) + (a-b)^2/24 * I3(mu).
    """
    a = np.asarray(lam_a, dtype=complex)
    b = np.asarray(lam_b, dtype=complex)
    t = np.asarray(t, dtype=float)
    a, b, t = np.broadcast_arrays(a, b, t)
    diff = a - b
    near = np.abs(diff) * np.maximum(np.abs(t), 1e-300) < _DD_CUT
    diff_safe = np.where(near, 1.0, diff)
    far = (e1(a, t) - e1(b, t)) / diff_safe
    mu = 0.5 * (a + b)
    close = i1(mu, t) + (diff**2 / 24.0) * i3(mu, t)
    return np.where(near, close, far)


class SkewEig:
    """Eigendecomposition of a real skew-symmetric matrix.

    A = V diag(lam) V^H with unitary V and purely imaginary lam, obtained from
    the Hermitian eigenproblem of iA.  Matrix functions are assembled as
    V f(lam) V^H; the results of all public methods are real.
    """

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        w, v = np.linalg.eigh(1j * a)
        self.m = a.shape[0]
        self.v = v
        self.lam = -1j * w.astype(complex)

    def _assemble(self, diag):
        # diag shape (..., m) -> (..., m, m)
        return np.einsum("ik,...k,jk->...ij", self.v, diag, self.v.conj()).real

    def _assemble_full(self, ker):
        # ker shape (..., m, m) entrywise in the eigenbasis
        return np.einsum("ik,...kl,jl->...ij", self.v, ker, self.v.conj()).real

    def transform(self, b: np.ndarray) -> np.ndarray:
        """V^H B V, the representation of B in the eigenbasis."""
        return self.v.conj().T @ b @ self.v

    def expm(self, t):
        """e^{tA}; orthogonal for every t."""
        t = np.asarray(t, dtype=float)
        return self._assemble(np.exp(self.lam * t[..., None]))

    def ma(self, t):
        """M_A(t) = int_0^t e^{sA} ds (defined for singular A as the integral)."""
        t = np.asarray(t, dtype=float)
        return self._assemble(e1(self.lam, t[..., None]))

    def ima(self, t):
        """int_0^t s e^{sA} ds."""
        t = np.asarray(t, dtype=float)
        return self._assemble(i1(self.lam, t[..., None]))

    def dma(self, b: np.ndarray, t):
        """Frechet derivative of A -> M_A(t) in the (skew) direction B."""
        t = np.asarray(t, dtype=float)
        bt = self.transform(b)
        ker = dd1(self.lam[:, None], self.lam[None, :], t[..., None, None])
        return self._assemble_full(ker * bt)

    def ckernel(self, b: np.ndarray, t):
        """C(t) = -1/2 int_0^t (e^{-sA} - I) A^{-1} B e^{sA} ds.

        The combination (e^{-sA} - I)A^{-1} is an entire function of A, so
        singular A is fine.  For the flow u(s) = e^{sA} u0, x(s) = M_A(s) u0
        one has  <C(t) u0, u0> = 1/2 int_0^t x(s)' B u(s) ds,  i.e. this is
        the quadratic kernel of the vertical displacement collected through B.
        """
        t = np.asarray(t, dtype=float)
        bt = self.transform(b)
        lam_a = self.lam[:, None]
        lam_b = self.lam[None, :]
        ker = dd1(lam_b - lam_a, lam_b, t[..., None, None])
        return 0.5 * self._assemble_full(ker * bt)
