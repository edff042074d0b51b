"""Geodesics from the origin: closed form, ODE oracle, unit-time Jacobian.

For a covector (u0, r) put A = r_1 L_1 + ... + r_k L_k.  The covector flow is
u(t) = e^{tA} u0 and the geodesic is

    x(t)   = M_A(t) u0,            M_A(t) = int_0^t e^{sA} ds,
    y_h(t) = <G_h(t) u0, u0>,      G_h(t) = -1/2 int_0^t (e^{-sA}-I)A^{-1} L_h e^{sA} ds,

both assembled in the eigenbasis of A with removable singularities handled
analytically.  The sign conventions are fixed once and for all by requiring
exact agreement with direct integration of the control system (the RK4 oracle
below); the closed form is a derived convenience, the ODE is the definition.

`exp_unit_time` is the time-1 exponential map on the whole covector space,
with the homogeneity E(1; t lambda) = E(t; lambda); `UnitTimeKernels` exposes
its analytic derivative, batched over horizontal covectors, which is what the
unit-ball volume quadrature integrates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._matfun import SkewEig
from .model import Covector, MetricSpec
from .skew import SkewMatrix, _as_matrix

_T1 = np.array(1.0)


@dataclass(frozen=True, eq=False)
class GeodesicPoint:
    """A point (x, y) reached at time t by a geodesic from the origin."""

    x: np.ndarray
    y: np.ndarray
    t: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


def _split_cov(spec: MetricSpec, cov: Covector):
    u0 = np.asarray(cov.u0, dtype=float)
    if u0.shape != (spec.m,):
        raise ValueError(f"u0 must have shape ({spec.m},), got {u0.shape}")
    r = np.asarray(cov.r, dtype=float)
    if r.shape != (spec.k,):
        raise ValueError(f"r must have shape ({spec.k},), got {r.shape}")
    return u0, r


def geodesic_closed_form(spec: MetricSpec, cov: Covector, t: float) -> GeodesicPoint:
    """Evaluate the geodesic with initial covector (u0, r) at time t.

    r = 0 gives the straight line (u0 t, 0) exactly; u0 need not be a unit
    vector (the same formulas evaluate the unit-time exponential map).
    """
    u0, r = _split_cov(spec, cov)
    if not np.any(r):
        return GeodesicPoint(x=u0 * t, y=np.zeros(spec.k), t=t)
    a = spec.vertical_matrix(r)
    se = SkewEig(a)
    ta = np.array(float(t))
    x = se.ma(ta) @ u0
    y = np.array([u0 @ se.ckernel(lh.entries, ta) @ u0 for lh in spec.L])
    return GeodesicPoint(x=x, y=y, t=float(t))


def geodesic_velocity(spec: MetricSpec, cov: Covector, t: float) -> np.ndarray:
    """(xdot, ydot) at time t: u(t) and 1/2 x(t)' L_h u(t)."""
    u0, r = _split_cov(spec, cov)
    if not np.any(r):
        return np.concatenate([u0, np.zeros(spec.k)])
    a = spec.vertical_matrix(r)
    se = SkewEig(a)
    ta = np.array(float(t))
    u = se.expm(ta) @ u0
    x = se.ma(ta) @ u0
    ydot = np.array([0.5 * x @ lh.entries @ u for lh in spec.L])
    return np.concatenate([u, ydot])


def geodesic_ode(spec: MetricSpec, cov: Covector, t: float,
                 steps: int = 2048) -> GeodesicPoint:
    """Fixed-step RK4 integration of the control system joint with the flow.

    State z = (u, x, y) with u' = A u, x' = u, y_h' = 1/2 x' L_h u and r
    constant.  Serves as the independent oracle for every closed form.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    u0, r = _split_cov(spec, cov)
    a = spec.vertical_matrix(r)
    ls = spec.matrices()
    m, k = spec.m, spec.k
    h = float(t) / steps

    def rhs(z):
        u = z[:m]
        x = z[m:2 * m]
        lu = ls @ u
        return np.concatenate([a @ u, u, 0.5 * (lu @ x)])

    z = np.concatenate([u0, np.zeros(m + k)])
    for _ in range(steps):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return GeodesicPoint(x=z[m:2 * m], y=z[2 * m:], t=float(t))


def c_matrix(a, a_tilde, t: float) -> np.ndarray:
    """C(t) = -1/2 int_0^t (e^{-sA}-I) A^{-1} A_tilde e^{sA} ds.

    Evaluated in the eigenbasis of A; zero-modulus blocks of A enter through
    their analytic limits, so A may be singular.  For the reduced-frame flow
    (A = r L_theta, A_tilde = r L_tilde) the quadratic form <C(t) u0, u0> is
    r times the second vertical coordinate of the geodesic.
    """
    a_ = _as_matrix(a)
    b_ = _as_matrix(a_tilde)
    SkewMatrix(a_)
    SkewMatrix(b_)
    return SkewEig(a_).ckernel(b_, np.array(float(t)))


def exp_unit_time(spec: MetricSpec, lambda0: Covector) -> GeodesicPoint:
    """The time-1 exponential map on the full covector space.

    Homogeneity gives exp_unit_time(t lambda) = geodesic(lambda, t), so rays
    through the origin of covector space trace the geodesics.
    """
    return geodesic_closed_form(spec, lambda0, 1.0)


class UnitTimeKernels:
    """Analytic derivative of lambda -> exp_unit_time at fixed vertical part.

    For fixed r the time-1 map is  u0 |-> (M_A u0, <G_h u0, u0>)  with A and
    the kernels G_h depending on r only.  The derivative in u0 is linear in
    the precomputed matrices; the r-columns use the Frechet derivative of
    M_A (exact, via divided differences) and of G_h (central differences on
    the matrix function, step ~ cbrt(eps)).  `jacobian_batch` evaluates the
    (m+k)x(m+k) determinant rows for many u0 at once.
    """

    _FD_STEP = 6.0e-6

    def __init__(self, spec: MetricSpec, r):
        r = np.asarray(r, dtype=float)
        self.spec = spec
        self.r = r
        m, k = spec.m, spec.k
        ls = [lh.entries for lh in spec.L]
        a = spec.vertical_matrix(r)
        se = SkewEig(a)
        self.ma = se.ma(_T1)
        self.dm = [se.dma(lj, _T1) for lj in ls]
        self.g = [se.ckernel(lh, _T1) for lh in ls]
        self.gsym = [gh + gh.T for gh in self.g]
        h = self._FD_STEP * max(1.0, float(np.linalg.norm(r)))
        self.dg = np.empty((k, k, m, m))
        for j in range(k):
            sp = SkewEig(a + h * ls[j])
            sm = SkewEig(a - h * ls[j])
            for hh in range(k):
                self.dg[hh, j] = (sp.ckernel(ls[hh], _T1)
                                  - sm.ckernel(ls[hh], _T1)) / (2.0 * h)

    def jacobian_matrix(self, u0: np.ndarray) -> np.ndarray:
        """D exp_unit_time at (u0, r): rows (x, y), columns (u0, r)."""
        m, k = self.spec.m, self.spec.k
        out = np.zeros((m + k, m + k))
        out[:m, :m] = self.ma
        for j in range(k):
            out[:m, m + j] = self.dm[j] @ u0
        for h in range(k):
            out[m + h, :m] = self.gsym[h] @ u0
            for j in range(k):
                out[m + h, m + j] = u0 @ self.dg[h, j] @ u0
        return out

    def det_batch(self, u0s: np.ndarray) -> np.ndarray:
        """det D exp_unit_time for a batch of horizontal covectors (N, m)."""
        n = u0s.shape[0]
        m, k = self.spec.m, self.spec.k
        jac = np.empty((n, m + k, m + k))
        jac[:, :m, :m] = self.ma
        for j in range(k):
            jac[:, :m, m + j] = u0s @ self.dm[j].T
        for h in range(k):
            jac[:, m + h, :m] = u0s @ self.gsym[h].T
            for j in range(k):
                jac[:, m + h, m + j] = np.einsum(
                    "ni,ij,nj->n", u0s, self.dg[h, j], u0s)
        return np.linalg.det(jac)


def unit_time_jacobian(spec: MetricSpec, lambda0: Covector) -> float:
    """det of the derivative of the time-1 exponential map at lambda0."""
    u0, r = _split_cov(spec, lambda0)
    ker = UnitTimeKernels(spec, r)
    return float(np.linalg.det(ker.jacobian_matrix(u0)))
