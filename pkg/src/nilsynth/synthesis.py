"""The optimal synthesis: cut time, Maxwell partners, covector recovery.

An arclength geodesic with covector (u0, r) stays globally minimizing exactly
until 2 pi / max modulus of the eigenvalues of r_1 L_1 + r_2 L_2.  At that
time a rotation of u0 inside the top eigenplane of the pencil produces a
second geodesic through the same endpoint (a Maxwell partner); before it, the
covector is uniquely recoverable from the horizontal endpoint, which turns
distance computation inside the pre-cut domain into a two-parameter shooting
problem over (theta, T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._matfun import SkewEig
from .geodesics import GeodesicPoint, geodesic_closed_form, geodesic_velocity
from .model import Covector, MetricSpec, reduce_frame
from .skew import BlockDiagForm, block_diagonalize, spectrum_moduli

_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class ShootingError(RuntimeError):
    """Raised when the pre-cut shooting fails to converge on a target."""


@dataclass(frozen=True, eq=False)
class MaxwellPair:
    """A nontrivial covector reaching the same point at the same time."""

    omega_tilde: float
    partner: Covector
    endpoint_gap: float
    velocity_gap: float


@dataclass(frozen=True, eq=False)
class DistanceResult:
    time: float
    covector: Covector
    residual: float


def _require_arclength(cov: Covector):
    if not cov.is_arclength:
        raise ValueError("arclength synthesis requires ||u0|| = 1")


def cut_time(spec: MetricSpec, cov: Covector) -> float:
    """2 pi / max sigma(r_1 L_1 + ... + r_k L_k); +inf for r = 0."""
    _require_arclength(cov)
    r = np.asarray(cov.r, dtype=float)
    if r.shape != (spec.k,):
        raise ValueError(f"expected r of shape ({spec.k},)")
    if not np.any(r):
        return float("inf")
    a = spec.vertical_matrix(r)
    top = spectrum_moduli(a)[0]
    return 2.0 * np.pi / top


def _top_block_choice(bd: BlockDiagForm, u0_blk: np.ndarray):
    """Index of the maximal-modulus block carrying the largest u0 mass.

    Rotating any block tied at the top modulus preserves x and y1 at the
    Maxwell time; picking the one where u0 actually lives keeps the variation
    nontrivial whenever possible.
    """
    a1 = bd.moduli[0]
    tied = [i for i, a in enumerate(bd.moduli) if a >= a1 * (1.0 - 1e-12)]
    best = max(tied, key=lambda i: np.linalg.norm(u0_blk[2 * i: 2 * i + 2]))
    return best


def maxwell_partner(spec: MetricSpec, cov: Covector) -> MaxwellPair:
    """Construct the Maxwell partner meeting the geodesic at the cut time.

    The rotated covector solves sin(w/2) (C1 cos(w/2) + C2 sin(w/2)) = 0 with
    constants assembled from the symmetric part of the C kernel at the cut
    time; when both constants vanish (full rotational symmetry) the canonical
    root w = pi is returned.  The endpoint and velocity gaps of the returned
    pair are measured on the original frame.
    """
    _require_arclength(cov)
    r_vec = np.asarray(cov.r, dtype=float)
    if not np.any(r_vec):
        raise ValueError("r = 0: straight lines have no Maxwell point")

    if spec.k == 2:
        rf = reduce_frame(spec, r_vec)
        bd = rf.block
        r = rf.r_mod
        lt_bd = rf.l_tilde_bd
    else:
        bd = block_diagonalize(spec.L[0])
        r = abs(float(r_vec[0]))
        lt_bd = None

    u0_blk = bd.conjugator @ np.asarray(cov.u0, dtype=float)
    a1 = bd.moduli[0]
    t_star = 2.0 * np.pi / (a1 * r)
    blk = _top_block_choice(bd, u0_blk)
    sl = slice(2 * blk, 2 * blk + 2)
    w = u0_blk[sl]

    omega = np.pi
    if lt_bd is not None and np.linalg.norm(w) > 0.0:
        a_red = r * bd.block_matrix()
        c_mat = SkewEig(a_red).ckernel(r * lt_bd, np.array(t_star))
        sym = 0.5 * (c_mat + c_mat.T)
        c_diag = 0.5 * (sym[sl, sl][0, 0] + sym[sl, sl][1, 1])
        g = (sym @ u0_blk)[sl]
        c1 = w[1] * g[0] - w[0] * g[1]           # <J w, g>
        c2 = c_diag * float(w @ w) - float(w @ g)
        scale = max(np.abs(sym).max() * float(w @ w), 1e-300)
        if abs(c1) > 1e-11 * scale or abs(c2) > 1e-11 * scale:
            phi = np.arctan2(-c1, c2) % np.pi
            omega = 2.0 * phi if phi > 1e-12 else np.pi

    partner_blk = u0_blk.copy()
    cw, sw = np.cos(omega), np.sin(omega)
    partner_blk[sl] = [cw * w[0] + sw * w[1], -sw * w[0] + cw * w[1]]
    partner_u0 = bd.conjugator.T @ partner_blk
    partner = Covector(partner_u0, r_vec)

    p0 = geodesic_closed_form(spec, cov, t_star).as_vector()
    p1 = geodesic_closed_form(spec, partner, t_star).as_vector()
    v0 = geodesic_velocity(spec, cov, t_star)
    v1 = geodesic_velocity(spec, partner, t_star)
    return MaxwellPair(omega_tilde=float(omega), partner=partner,
                       endpoint_gap=float(np.linalg.norm(p0 - p1)),
                       velocity_gap=float(np.linalg.norm(v0 - v1)))


def _chi_sq(z):
    """(z / sin z)^2 on [0, pi), with the limit 1 at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    out = (zs / np.sin(zs)) ** 2
    return np.where(small, 1.0 + z * z / 3.0, out)


def _recover_in_frame(l_theta, x_bar: np.ndarray, t: float):
    """Solve for (u0_block, r >= 0) with M_{r L}(t) u0 = x_bar, r t <= 2pi/a1.

    Returns (u0 in the block frame, r, block form).  Raises ValueError when
    the endpoint is unreachable (||x|| > t) or no admissible r exists (the
    regime at or beyond the cut time, e.g. points on the vertical axis).
    """
    bd = block_diagonalize(l_theta)
    m = bd.dim
    x_blk = bd.conjugator @ x_bar
    xn = float(np.linalg.norm(x_bar))
    if xn > t:
        raise ValueError(f"unreachable endpoint: ||x|| = {xn:.6g} > t = {t:.6g}")

    mods = np.array(bd.moduli)
    rho = np.array([np.linalg.norm(x_blk[2 * i: 2 * i + 2])
                    for i in range(len(mods))])
    rho_extra = abs(x_blk[m - 1]) if bd.has_zero_row else 0.0
    a1 = mods[0]
    if a1 <= 0.0:
        raise ValueError("zero pencil has no cut-time normal form")
    s_max = 2.0 * np.pi / a1

    def f(s):
        val = np.sum((rho / t) ** 2 * _chi_sq(0.5 * mods * s))
        return val + (rho_extra / t) ** 2 - 1.0

    f0 = f(0.0)
    if f0 > 1e-13:
        raise ValueError("endpoint norm exceeds reachable set")
    if abs(f0) <= 1e-15:
        s_root = 0.0
    else:
        # f is increasing in s; find the smallest grid point past the root
        s_hi = None
        for eps in (0.5, 0.1, 1e-2, 1e-3, 1e-5, 1e-8, 1e-11, 1e-13):
            cand = s_max * (1.0 - eps)
            if f(cand) > 0.0:
                s_hi = cand
                break
        if s_hi is None:
            raise ValueError("no admissible covector before the cut time "
                             "for this endpoint")
        s_root = brentq(f, 0.0, s_hi, xtol=1e-15 * s_max, rtol=8.9e-16,
                        maxiter=200)

    r = s_root / t
    u_blk = np.zeros(m)
    for i, a in enumerate(mods):
        seg = x_blk[2 * i: 2 * i + 2]
        if a * r == 0.0:
            u_blk[2 * i: 2 * i + 2] = seg / t
        else:
            phi = 0.5 * a * s_root
            factor = a * r / (2.0 * np.sin(phi))
            c, s_ = np.cos(phi), np.sin(phi)
            rot_inv = np.array([[c, -s_], [s_, c]])
            u_blk[2 * i: 2 * i + 2] = factor * (rot_inv @ seg)
    if bd.has_zero_row:
        u_blk[m - 1] = x_blk[m - 1] / t
    return u_blk, float(r), bd


def recover_covector(spec: MetricSpec, x_bar, t: float) -> Covector:
    """Unique covector (u0, r, 0) whose geodesic has horizontal endpoint x_bar.

    Works in the frame of L_1 (theta = 0) and returns r >= 0; valid strictly
    before the cut time of the recovered geodesic.  ||x_bar|| = t returns the
    straight line (r = 0).
    """
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.shape != (spec.m,):
        raise ValueError(f"x_bar must have shape ({spec.m},)")
    u_blk, r, bd = _recover_in_frame(spec.L[0].entries, x_bar, float(t))
    u0 = bd.conjugator.T @ u_blk
    r_vec = np.zeros(spec.k)
    r_vec[0] = r
    return Covector(u0, r_vec)


def _shoot_residual(spec: MetricSpec, x_bar, y_bar, theta: float, t: float):
    if spec.k == 2:
        l_th = spec.l_theta(theta).entries
        r_dir = np.array([np.cos(theta), np.sin(theta)])
    else:
        sign = 1.0 if np.cos(theta) >= 0 else -1.0
        l_th = sign * spec.L[0].entries
        r_dir = np.array([sign])
    u_blk, r, bd = _recover_in_frame(l_th, x_bar, t)
    u0 = bd.conjugator.T @ u_blk
    cov = Covector(u0, r * r_dir)
    g = geodesic_closed_form(spec, cov, t)
    return g.y - y_bar, cov


def recover_geodesic(spec: MetricSpec, target, *, residual_tol: float = 1e-9,
                     max_newton: int = 40) -> DistanceResult:
    """Shoot for the unique pre-cut geodesic through a full target point.

    For each starting pair (theta, T) the horizontal endpoint is matched
    exactly by the monotone covector recovery; damped Newton with a finite
    difference Jacobian then drives the vertical residual to zero.  Raises
    ShootingError when no start converges (targets outside the pre-cut
    domain, e.g. on the vertical axis).
    """
    if isinstance(target, GeodesicPoint):
        x_bar = np.asarray(target.x, dtype=float)
        y_bar = np.asarray(target.y, dtype=float)
    else:
        x_bar, y_bar = (np.asarray(v, dtype=float) for v in target)
    if x_bar.shape != (spec.m,) or y_bar.shape != (spec.k,):
        raise ValueError("target has wrong dimensions")

    xn = float(np.linalg.norm(x_bar))
    scale = max(1.0, float(np.abs(y_bar).max()))
    if np.abs(y_bar).max() <= 1e-14 * max(1.0, xn) ** 2:
        if xn == 0.0:
            raise ShootingError("the origin is reached at time 0 only")
        cov = Covector(x_bar / xn, np.zeros(spec.k))
        return DistanceResult(time=xn, covector=cov, residual=0.0)

    sig = [spectrum_moduli(lh)[0] for lh in spec.L]
    t_lo = max(xn, max(2.0 * np.sqrt(abs(yb) / s) if s > 0 else 0.0
                       for yb, s in zip(y_bar, sig)))
    t_lo = max(t_lo, 1e-12)
    t_ladder = t_lo * np.array([1.0001, 1.05, 1.15, 1.35, 1.7, 2.3, 3.2, 4.6, 6.6])
    if spec.k == 2:
        theta_grid = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    else:
        theta_grid = np.array([0.0, np.pi])

    def try_newton(theta, t):
        z = np.array([theta, t])
        for _ in range(max_newton):
            try:
                f, cov = _shoot_residual(spec, x_bar, y_bar, z[0], z[1])
            except ValueError:
                return None
            fn = np.abs(f).max()
            if fn <= residual_tol * scale:
                return DistanceResult(time=float(z[1]), covector=cov,
                                      residual=float(fn))
            jac = np.zeros((spec.k, 2))
            h_th, h_t = 1e-7, 1e-7 * max(1.0, z[1])
            try:
                f_th, _ = _shoot_residual(spec, x_bar, y_bar, z[0] + h_th, z[1])
                f_t, _ = _shoot_residual(spec, x_bar, y_bar, z[0], z[1] + h_t)
            except ValueError:
                return None
            jac[:, 0] = (f_th - f) / h_th
            jac[:, 1] = (f_t - f) / h_t
            try:
                if spec.k == 2:
                    step = np.linalg.solve(jac, f)
                else:
                    step = np.array([0.0, f[0] / jac[0, 1]]) if jac[0, 1] != 0 \
                        else None
            except np.linalg.LinAlgError:
                return None
            if step is None:
                return None
            # damped update; keep T above the reachability floor
            lam = 1.0
            for _ in range(12):
                z_new = z - lam * step
                z_new[1] = max(z_new[1], xn * (1.0 + 1e-12))
                try:
                    f_new, _ = _shoot_residual(spec, x_bar, y_bar,
                                               z_new[0], z_new[1])
                    if np.abs(f_new).max() < fn:
                        z = z_new
                        break
                except ValueError:
                    pass
                lam *= 0.5
            else:
                return None
        return None

    best = None
    for t0 in t_ladder:
        for th0 in theta_grid:
            res = try_newton(th0, t0)
            if res is not None and (best is None or res.time < best.time):
                best = res
        if best is not None:
            break
    if best is None:
        raise ShootingError("shooting failed to converge; target does not "
                            "appear to lie in the pre-cut domain")
    return best


def distance_in_cut_domain(spec: MetricSpec, target) -> float:
    """Time of the unique pre-cut geodesic through the target.

    Equals the sub-Riemannian distance whenever the target is reached
    strictly before the cut time of its geodesic.
    """
    return recover_geodesic(spec, target).time
