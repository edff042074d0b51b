"""Jacobian of the exponential map, its factorization at the cut time, and
first-conjugate-time search.

The full Jacobian is a finite-difference determinant of the arclength
exponential map.  The reduced Jacobian removes the first vertical coordinate
(its derivative row is determined by the Liouville pairings) and keeps
(x, y_2); it is proportional to the full one along each ray with an identical
zero set, and all its blocks except the y_2 / r derivatives are analytic.

At the cut time 2 pi/(a_1 r) the reduced determinant factors as

    <(C + C') u0, v1> . det M . det N

with v1 the rotation tangent of the top eigenplane, M the lower block of
M_A(t_cut) applied to the remaining sphere tangents, and N the top block of
the r-derivative columns.  det M has the closed form
4 u1 u3 sin^2(pi b/a) / (b^2 r^2), so the determinant vanishes identically in
u0 exactly when a = b for all pencil angles or when the bracket factor
degenerates, which is the quaternion classification of `quaternions`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._matfun import SkewEig
from .geodesics import geodesic_closed_form
from .model import Covector, MetricSpec, reduce_frame
from .quaternions import PairClassification, classify_pair
from .skew import block_diagonalize
from .synthesis import cut_time

_EPS_CBRT = float(np.finfo(float).eps) ** (1.0 / 3.0)
ZERO_TOL = 1e-7


class ConsistencyError(RuntimeError):
    """Classification and sampled-Jacobian verdicts disagree."""


@dataclass(frozen=True)
class CutFactorization:
    bracket_term: float
    det_m: float
    det_n: float

    @property
    def product(self) -> float:
        return self.bracket_term * self.det_m * self.det_n


@dataclass(frozen=True, eq=False)
class CutConjugateVerdict:
    equal: bool
    witness: dict | None


def tangent_frame(u0: np.ndarray, prefer_explicit: bool = True):
    """An (m-1)-frame spanning the tangent space of the sphere at u0.

    For m = 4 the explicit triple
        v1 = (-u2, u1, 0, 0), v2 = (0, 0, -u4, u3), v3 = (u3, 0, -u1, 0)
    is used when it is well conditioned (it is the one entering the cut-time
    factorization); otherwise an orthonormal completion is generated and the
    `degenerate` flag is set.
    """
    m = u0.shape[0]
    if m == 4 and prefer_explicit:
        v = np.array([
            [-u0[1], u0[0], 0.0, 0.0],
            [0.0, 0.0, -u0[3], u0[2]],
            [u0[2], 0.0, -u0[0], 0.0],
        ])
        norms = np.linalg.norm(v, axis=1)
        if norms.min() > 1e-6:
            gram = v @ v.T
            if np.linalg.det(gram) > 1e-9 * float(np.prod(norms ** 2)):
                return v, False
    basis = np.concatenate([u0[:, None], np.eye(m)], axis=1)
    q, _ = np.linalg.qr(basis)
    return q[:, 1:m].T.copy(), True


class ReducedJacobianScanner:
    """Reduced Jacobian of one geodesic as a function of t, batched.

    Works in the block frame of the pencil direction selected by r.  The
    x-derivatives and the y_2/u0 derivative are analytic; the y_2 derivatives
    in the vertical momenta use central differences on the closed form.
    """

    def __init__(self, spec: MetricSpec, cov: Covector):
        r_vec = np.asarray(cov.r, dtype=float)
        if not np.any(r_vec):
            raise ValueError("the reduced Jacobian requires r != 0")
        self.spec = spec
        self.k = spec.k
        m = spec.m
        if spec.k == 2:
            rf = reduce_frame(spec, r_vec)
            self.r = rf.r_mod
            self.lbd = rf.l_theta_bd
            self.ltl = rf.l_tilde_bd
            self.u0 = rf.to_block_frame(np.asarray(cov.u0, dtype=float))
        else:
            bd = block_diagonalize(spec.L[0])
            self.r = float(r_vec[0])
            self.lbd = bd.block_matrix()
            self.ltl = None
            self.u0 = bd.conjugator @ np.asarray(cov.u0, dtype=float)
        self.a = self.r * self.lbd
        self.se = SkewEig(self.a)
        self.tangents, self.degenerate_frame = tangent_frame(self.u0, m == 4)
        h1 = 1e-6 * max(1.0, abs(self.r))
        self._h1 = h1
        self._se_r1 = (SkewEig((self.r + h1) * self.lbd),
                       SkewEig((self.r - h1) * self.lbd))
        if self.k == 2:
            h2 = 1e-6 * max(1.0, abs(self.r))
            self._h2 = h2
            self._se_r2 = (SkewEig(self.a + h2 * self.ltl),
                           SkewEig(self.a - h2 * self.ltl))

    def values(self, ts) -> tuple[np.ndarray, np.ndarray]:
        """(J(t), column-norm scale) for an array of times."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        m, k = self.spec.m, self.k
        u0 = self.u0
        nt = ts.shape[0]
        ncols = (m - 1) + k

        ma_t = self.se.ma(ts)
        exp_t = self.se.expm(ts)
        cols = np.empty((nt, m + (k - 1), ncols))
        # x rows, sphere-tangent columns
        cols[:, :m, : m - 1] = np.einsum("tij,vj->tiv", ma_t, self.tangents)
        # x rows, d/dr1 (commuting direction: A = r * lbd)
        dxdr1 = (np.einsum("tij,j->ti", exp_t, u0) * ts[:, None]
                 - np.einsum("tij,j->ti", ma_t, u0)) / self.r
        cols[:, :m, m - 1] = dxdr1
        if k == 2:
            dma = self.se.dma(self.ltl, ts)
            cols[:, :m, m] = np.einsum("tij,j->ti", dma, u0)
            g2 = self.se.ckernel(self.ltl, ts)
            g2s = g2 + np.swapaxes(g2, -1, -2)
            cols[:, m, : m - 1] = np.einsum("ti,vi->tv",
                                            np.einsum("tij,j->ti", g2s, u0),
                                            self.tangents)
            sp, sm = self._se_r1
            y2p = np.einsum("i,tij,j->t", u0, sp.ckernel(self.ltl, ts), u0)
            y2m = np.einsum("i,tij,j->t", u0, sm.ckernel(self.ltl, ts), u0)
            cols[:, m, m - 1] = (y2p - y2m) / (2.0 * self._h1)
            sp, sm = self._se_r2
            y2p = np.einsum("i,tij,j->t", u0, sp.ckernel(self.ltl, ts), u0)
            y2m = np.einsum("i,tij,j->t", u0, sm.ckernel(self.ltl, ts), u0)
            cols[:, m, m] = (y2p - y2m) / (2.0 * self._h2)

        det = np.linalg.det(cols) / self.r
        col_norms = np.linalg.norm(cols, axis=1)
        scale = np.prod(col_norms, axis=1) / abs(self.r)
        return det, np.maximum(scale, 1e-300)

    def value(self, t: float) -> float:
        return float(self.values(np.array([t]))[0][0])

    def reference_magnitude(self, t_hi: float, samples: int = 33) -> float:
        """max |J| over (0, t_hi]: the natural size against which a zero of
        the determinant is judged.  The Hadamard column product is useless
        here because several columns may vanish together at the root."""
        ts = np.linspace(t_hi / samples, t_hi, samples)
        j, _ = self.values(ts)
        return float(np.max(np.abs(j)))


def jacobian_reduced(spec: MetricSpec, cov: Covector, t: float) -> float:
    """(1/r_1) det of the reduced map (x, y_2) in sphere-tangent and
    vertical-momentum directions; zero exactly at conjugate times."""
    return ReducedJacobianScanner(spec, cov).value(t)


def jacobian_full(spec: MetricSpec, cov: Covector, t: float) -> float:
    """Central finite-difference determinant of the full arclength
    exponential map (t, u0, r) -> (x, y); m = 4, k = 2."""
    if spec.m != 4 or spec.k != 2:
        raise ValueError("the full Jacobian is assembled for (4, 6) models")
    u0 = np.asarray(cov.u0, dtype=float)
    r = np.asarray(cov.r, dtype=float)
    tangents, _ = tangent_frame(u0, True)

    def emap(u, rv, tt):
        return geodesic_closed_form(spec, Covector(u, rv), tt).as_vector()

    cols = np.empty((6, 6))
    h_t = _EPS_CBRT * max(1.0, abs(t))
    cols[:, 0] = (emap(u0, r, t + h_t) - emap(u0, r, t - h_t)) / (2 * h_t)
    for i, v in enumerate(tangents):
        h = _EPS_CBRT
        cols[:, 1 + i] = (emap(u0 + h * v, r, t) - emap(u0 - h * v, r, t)) / (2 * h)
    for j in range(2):
        h = _EPS_CBRT * max(1.0, abs(r[j]))
        dr = np.zeros(2)
        dr[j] = h
        cols[:, 4 + j] = (emap(u0, r + dr, t) - emap(u0, r - dr, t)) / (2 * h)
    return float(np.linalg.det(cols))


def jacobian_scale(spec: MetricSpec, cov: Covector, t: float) -> float:
    """Hadamard scale (product of column norms) for zero tests on the
    reduced Jacobian."""
    return float(ReducedJacobianScanner(spec, cov).values(np.array([t]))[1][0])


def factor_at_cut(spec: MetricSpec, u0, theta: float, r: float) -> CutFactorization:
    """The three factors of the reduced Jacobian at the cut time.

    u0 is expressed in the block frame of L_theta (moduli a >= b).  det_m
    equals 4 u1 u3 sin^2(pi b/a)/(b^2 r^2) with the b -> 0 limit built in;
    the product reproduces r^2 * jacobian_reduced at t_cut.
    """
    if spec.m != 4 or spec.k != 2:
        raise ValueError("the cut factorization is specific to (4, 6) models")
    if r == 0.0:
        raise ValueError("r = 0 has no cut time")
    u0 = np.asarray(u0, dtype=float)
    l_th = spec.l_theta(theta)
    bd = block_diagonalize(l_th)
    a1, b1 = bd.moduli
    if a1 <= 0.0:
        raise ValueError("zero pencil direction")
    lt_bd = bd.conjugator @ spec.l_theta_tilde(theta).entries @ bd.conjugator.T
    a_mat = r * bd.block_matrix()
    se = SkewEig(a_mat)
    t_star = 2.0 * np.pi / (a1 * abs(r))
    ts = np.array(t_star)

    c_mat = se.ckernel(r * lt_bd, ts)
    v1 = np.array([-u0[1], u0[0], 0.0, 0.0])
    bracket = float(((c_mat + c_mat.T) @ u0) @ v1)

    b_mat = se.ma(ts)
    w23 = np.array([[-u0[3], -u0[0]], [u0[2], 0.0]])
    det_m = float(np.linalg.det(b_mat[2:, 2:] @ w23))

    exp_t = se.expm(ts)
    dxdr1 = (t_star * exp_t @ u0 - b_mat @ u0) / r
    dxdr2 = se.dma(lt_bd, ts) @ u0
    det_n = float(dxdr1[0] * dxdr2[1] - dxdr1[1] * dxdr2[0])
    return CutFactorization(bracket_term=bracket, det_m=det_m, det_n=det_n)


def det_m_closed_form(u0, theta_moduli, r: float) -> float:
    """4 u1 u3 sin^2(pi b/a) / (b^2 r^2), with the limit (pi/(a r))^2 4 u1 u3
    at b = 0."""
    a, b = theta_moduli
    u0 = np.asarray(u0, dtype=float)
    if b == 0.0:
        return 4.0 * u0[0] * u0[2] * (np.pi / (a * r)) ** 2
    return 4.0 * u0[0] * u0[2] * np.sin(np.pi * b / a) ** 2 / (b * r) ** 2


def first_conjugate_time(spec: MetricSpec, cov: Covector, t_max: float,
                         samples: int = 512, zero_tol: float = ZERO_TOL):
    """First zero of the reduced Jacobian in (0, t_max], or None.

    A sign-change scan is refined by root bracketing; zeros of even order
    (no sign change) are caught as dips of |J| below the scale-relative
    tolerance, with the cut time always included among the probes since it
    is the canonical location of such a zero.
    """
    if not np.any(np.asarray(cov.r, dtype=float)):
        raise ValueError("r = 0 geodesics have no conjugate time")
    scanner = ReducedJacobianScanner(spec, cov)
    t_cut_val = cut_time(spec, cov)
    t0 = 1e-3 * min(t_cut_val, t_max)
    ts = np.linspace(t0, t_max, samples)
    if t_cut_val <= t_max:
        extra = t_cut_val * np.array([1.0 - 1e-9, 1.0, 1.0 + 1e-9])
        ts = np.unique(np.concatenate([ts, extra]))
    j, scale = scanner.values(ts)

    roots = []
    sign = np.sign(j)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for i in flips:
        roots.append(brentq(scanner.value, ts[i], ts[i + 1], xtol=1e-12 * t_max))

    flagged = np.abs(j) <= zero_tol * scale
    i = 0
    n = ts.shape[0]
    while i < n:
        if flagged[i]:
            j0 = i
            while i + 1 < n and flagged[i + 1]:
                i += 1
            cluster = slice(j0, i + 1)
            best = j0 + int(np.argmin(np.abs(j[cluster])))
            lo = ts[max(best - 1, 0)]
            hi = ts[min(best + 1, n - 1)]
            roots.append(_refine_dip(scanner, lo, hi))
        i += 1
    if not roots:
        return None
    return float(min(roots))


def _refine_dip(scanner: ReducedJacobianScanner, lo: float, hi: float) -> float:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a_, b_ = lo, hi
    c_ = b_ - invphi * (b_ - a_)
    d_ = a_ + invphi * (b_ - a_)
    fc, fd = abs(scanner.value(c_)), abs(scanner.value(d_))
    for _ in range(60):
        if fc < fd:
            b_, d_, fd = d_, c_, fc
            c_ = b_ - invphi * (b_ - a_)
            fc = abs(scanner.value(c_))
        else:
            a_, c_, fc = c_, d_, fd
            d_ = a_ + invphi * (b_ - a_)
            fd = abs(scanner.value(d_))
    return 0.5 * (a_ + b_)


def cut_equals_conjugate(spec: MetricSpec, samples: int = 64,
                         seed: int = 0, zero_tol: float = ZERO_TOL
                         ) -> tuple[CutConjugateVerdict, PairClassification]:
    """Sampled verdict on whether the Jacobian vanishes at every cut time.

    Cross-validated against the algebraic pair classification; a mismatch
    raises ConsistencyError carrying the witness sample, since it indicates
    a tolerance misconfiguration rather than a mathematical possibility.
    """
    if spec.m != 4 or spec.k != 2:
        raise ValueError("the verdict is specific to (4, 6) models")
    rng = np.random.default_rng(seed)
    classification = classify_pair(spec.L[0], spec.L[1])
    expected = classification.cut_equals_conjugate

    worst = None
    all_zero = True
    for _ in range(samples):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        u0 = rng.normal(size=4)
        u0 /= np.linalg.norm(u0)
        cov = Covector(u0, (np.cos(theta), np.sin(theta)))
        scanner = ReducedJacobianScanner(spec, cov)
        t_c = cut_time(spec, cov)
        j, scale = scanner.values(np.array([t_c]))
        ratio = abs(j[0]) / scale[0]
        if worst is None or ratio > worst["ratio"]:
            worst = {"u0": u0, "theta": theta, "jacobian": float(j[0]),
                     "ratio": float(ratio)}
        if ratio > zero_tol:
            all_zero = False
    if all_zero != expected:
        raise ConsistencyError(
            f"sampled verdict {all_zero} disagrees with classification "
            f"{classification.kind.value}; witness {worst}")
    witness = None if all_zero else worst
    return CutConjugateVerdict(equal=all_zero, witness=witness), classification


def liouville_pairings(spec: MetricSpec, cov: Covector, t: float) -> np.ndarray:
    """Pairings of the transported covector with the Jacobian columns.

    Returns (m + k) numbers that are (1, 0, ..., 0) for every geodesic: the
    canonical covector at time t is (u(t) - 1/2 A x(t), -r) and annihilates
    all covector derivatives of the endpoint map while pairing to 1 with the
    velocity.  Derivative columns are central differences.
    """
    u0 = np.asarray(cov.u0, dtype=float)
    r = np.asarray(cov.r, dtype=float)
    m, k = spec.m, spec.k
    a = spec.vertical_matrix(r)
    se = SkewEig(a)
    ta = np.array(float(t))
    u_t = se.expm(ta) @ u0
    x_t = se.ma(ta) @ u0
    lam = np.concatenate([u_t - 0.5 * (a @ x_t), -r])

    def emap(u, rv, tt):
        return geodesic_closed_form(spec, Covector(u, rv), tt).as_vector()

    tangents, _ = tangent_frame(u0, m == 4)
    out = np.empty(m + k)
    h_t = _EPS_CBRT * max(1.0, abs(t))
    out[0] = lam @ (emap(u0, r, t + h_t) - emap(u0, r, t - h_t)) / (2 * h_t)
    for i, v in enumerate(tangents):
        h = _EPS_CBRT
        out[1 + i] = lam @ (emap(u0 + h * v, r, t)
                            - emap(u0 - h * v, r, t)) / (2 * h)
    for j in range(k):
        h = _EPS_CBRT * max(1.0, abs(r[j]))
        dr = np.zeros(k)
        dr[j] = h
        out[m - 1 + 1 + j] = lam @ (emap(u0, r + dr, t)
                                    - emap(u0, r - dr, t)) / (2 * h)
    return out
