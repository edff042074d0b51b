"""The splitting so(4) = Q + Qhat and the classification of matrix pairs.

Q (pure quaternions) and Qhat (pure skew quaternions) are the two commuting
3-dimensional ideals of so(4).  An element A = q + qhat has eigenvalue moduli
|q| + |qhat| and ||q| - |qhat||, so double eigenvalues occur exactly on
Q u Qhat.  A pair (L1, L2) is classified by how its span sits relative to the
two ideals; that classification decides whether the first conjugate locus of
the associated metric coincides with its cut locus.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .skew import SkewMatrix, _as_matrix, hs_inner

QUAT_I = np.array([[0., -1., 0., 0.],
                   [1., 0., 0., 0.],
                   [0., 0., 0., -1.],
                   [0., 0., 1., 0.]])
QUAT_J = np.array([[0., 0., -1., 0.],
                   [0., 0., 0., 1.],
                   [1., 0., 0., 0.],
                   [0., -1., 0., 0.]])
QUAT_K = np.array([[0., 0., 0., -1.],
                   [0., 0., -1., 0.],
                   [0., 1., 0., 0.],
                   [1., 0., 0., 0.]])
QUAT_IH = np.array([[0., -1., 0., 0.],
                    [1., 0., 0., 0.],
                    [0., 0., 0., 1.],
                    [0., 0., -1., 0.]])
QUAT_JH = np.array([[0., 0., 1., 0.],
                    [0., 0., 0., 1.],
                    [-1., 0., 0., 0.],
                    [0., -1., 0., 0.]])
QUAT_KH = np.array([[0., 0., 0., -1.],
                    [0., 0., 1., 0.],
                    [0., -1., 0., 0.],
                    [1., 0., 0., 0.]])

Q_BASIS = (QUAT_I, QUAT_J, QUAT_K)
QHAT_BASIS = (QUAT_IH, QUAT_JH, QUAT_KH)


class PairKind(Enum):
    BOTH_Q = "BothQ"
    BOTH_QHAT = "BothQhat"
    MIXED_SPLIT = "MixedSplit"
    GENERIC = "Generic"


class SigmaClass(Enum):
    SIGMA_INF = "SigmaInf"
    SIGMA_ZERO = "SigmaZero"
    NON_CRITICAL = "NonCritical"


@dataclass(frozen=True)
class QuatDecomp:
    """Coordinates of an so(4) element in the basis (i,j,k, ih,jh,kh)."""

    q: np.ndarray
    q_hat: np.ndarray

    @property
    def q_norm(self) -> float:
        return float(np.linalg.norm(self.q))

    @property
    def q_hat_norm(self) -> float:
        return float(np.linalg.norm(self.q_hat))


@dataclass(frozen=True)
class PairClassification:
    kind: PairKind
    sigma_class: SigmaClass
    double_eigenvalue_angles: tuple

    @property
    def cut_equals_conjugate(self) -> bool:
        """Whether the span certifies first conjugate locus == cut locus."""
        return self.kind is not PairKind.GENERIC


def _require_dim4(a: np.ndarray):
    if a.shape != (4, 4):
        raise ValueError(f"so(4) operation requires a 4x4 matrix, got {a.shape}")


def decompose(l) -> QuatDecomp:
    """Orthogonal projection onto the two ideals under the HS pairing."""
    a = _as_matrix(l)
    _require_dim4(a)
    q = np.array([hs_inner(a, b) for b in Q_BASIS])
    q_hat = np.array([hs_inner(a, b) for b in QHAT_BASIS])
    return QuatDecomp(q=q, q_hat=q_hat)


def reconstruct(dec: QuatDecomp) -> np.ndarray:
    out = np.zeros((4, 4))
    for c, b in zip(dec.q, Q_BASIS):
        out += c * b
    for c, b in zip(dec.q_hat, QHAT_BASIS):
        out += c * b
    return out


def eig_moduli_quat(l) -> tuple:
    """Eigenvalue moduli (|q| + |qh|, ||q| - |qh||) of a 4x4 skew matrix."""
    dec = decompose(l)
    nq, nh = dec.q_norm, dec.q_hat_norm
    return (nq + nh, abs(nq - nh))


def commutator_check(q_elem, qhat_elem) -> float:
    """Frobenius norm of the commutator [q_elem, qhat_elem].

    Zero whenever the arguments lie in Q and Qhat respectively; the two
    ideals commute elementwise.
    """
    a, b = _as_matrix(q_elem), _as_matrix(qhat_elem)
    _require_dim4(a)
    _require_dim4(b)
    return float(np.linalg.norm(a @ b - b @ a))


def _angle_norms(l1, l2):
    """Callables theta -> |q(theta)|, |qhat(theta)| for the rotated pencil."""
    d1, d2 = decompose(l1), decompose(l2)

    def norms(theta):
        c, s = np.cos(theta), np.sin(theta)
        q = np.sqrt((c * d1.q[0] + s * d2.q[0]) ** 2
                    + (c * d1.q[1] + s * d2.q[1]) ** 2
                    + (c * d1.q[2] + s * d2.q[2]) ** 2)
        qh = np.sqrt((c * d1.q_hat[0] + s * d2.q_hat[0]) ** 2
                     + (c * d1.q_hat[1] + s * d2.q_hat[1]) ** 2
                     + (c * d1.q_hat[2] + s * d2.q_hat[2]) ** 2)
        return q, qh

    return norms


def double_eigenvalue_angles(l1, l2, tol: float = 1e-9,
                             grid: int = 2048) -> tuple:
    """Angles theta in [0, 2pi) where cos(t) L1 + sin(t) L2 has a double eigenvalue.

    Scans min(|q(theta)|, |qhat(theta)|) on a dense grid and refines each dip
    below tolerance by golden-section search; zeros of even multiplicity are
    caught this way without relying on sign changes.  The function is a
    degree <= 2 trigonometric polynomial in each factor, so the 2048-point
    grid cannot skip a dip.  Returns () when the pencil sits entirely inside
    one ideal (every angle is a double eigenvalue).
    """
    norms = _angle_norms(l1, l2)
    thetas = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    q, qh = norms(thetas)
    g = np.minimum(q, qh)
    scale = max(float(np.max(np.maximum(q, qh))), 1e-300)
    if np.all(g <= tol * scale):
        return ()

    def gfun(theta):
        a, b = norms(theta)
        return min(a, b)

    # local minima on the periodic grid, kept if within reach of the tolerance
    candidates = []
    for i in range(grid):
        left, right = g[(i - 1) % grid], g[(i + 1) % grid]
        if g[i] <= left and g[i] <= right and g[i] < 64 * tol * scale + 1e-6 * scale:
            lo = thetas[(i - 1) % grid] if i > 0 else thetas[i] - 2 * np.pi / grid
            hi = thetas[i] + 2 * np.pi / grid
            # golden-section refine the dip
            invphi = (np.sqrt(5.0) - 1.0) / 2.0
            a_, b_ = lo, hi
            c_ = b_ - invphi * (b_ - a_)
            d_ = a_ + invphi * (b_ - a_)
            fc, fd = gfun(c_), gfun(d_)
            for _ in range(80):
                if fc < fd:
                    b_, d_, fd = d_, c_, fc
                    c_ = b_ - invphi * (b_ - a_)
                    fc = gfun(c_)
                else:
                    a_, c_, fc = c_, d_, fd
                    d_ = a_ + invphi * (b_ - a_)
                    fd = gfun(d_)
            theta_star = 0.5 * (a_ + b_)
            if gfun(theta_star) <= tol * scale:
                candidates.append(theta_star % (2 * np.pi))

    # cluster near-duplicates
    candidates.sort()
    out = []
    for th in candidates:
        if not out or min(abs(th - out[-1]), 2 * np.pi - abs(th - out[-1])) > 1e-6:
            out.append(th)
    if len(out) >= 2 and (2 * np.pi - out[-1]) + out[0] < 1e-6:
        out.pop()
    return tuple(out)


def classify_pair(l1, l2, tol: float = 1e-9) -> PairClassification:
    """Classify a linearly independent pair of so(4) matrices.

    kind records how span{L1, L2} meets the ideals: contained in Q, contained
    in Qhat, split one-dimensionally across both, or in general position.
    sigma_class grades the double-eigenvalue set of the pencil
    cos(t) L1 + sin(t) L2: every angle, finitely many angles (reported), or
    none.  Near-boundary pairs are classified as Generic (conservative).
    """
    a1, a2 = _as_matrix(l1), _as_matrix(l2)
    _require_dim4(a1)
    _require_dim4(a2)
    d1, d2 = decompose(a1), decompose(a2)

    gram = np.array([[hs_inner(a1, a1), hs_inner(a1, a2)],
                     [hs_inner(a1, a2), hs_inner(a2, a2)]])
    if np.linalg.det(gram) <= tol * max(gram[0, 0], gram[1, 1], 1e-300) ** 2:
        raise ValueError("pair is linearly dependent; bracket-generating "
                         "structure requires independent matrices")

    scale = max(np.linalg.norm([d1.q_norm, d1.q_hat_norm,
                                d2.q_norm, d2.q_hat_norm]), 1e-300)

    def rank2x3(rows):
        sv = np.linalg.svd(np.vstack(rows), compute_uv=False)
        return int(np.sum(sv > tol * scale))

    rank_q = rank2x3([d1.q, d2.q])
    rank_qhat = rank2x3([d1.q_hat, d2.q_hat])

    if rank_qhat == 0:
        kind = PairKind.BOTH_Q
    elif rank_q == 0:
        kind = PairKind.BOTH_QHAT
    elif rank_q == 1 and rank_qhat == 1:
        kind = PairKind.MIXED_SPLIT
    else:
        kind = PairKind.GENERIC

    if kind in (PairKind.BOTH_Q, PairKind.BOTH_QHAT):
        return PairClassification(kind=kind, sigma_class=SigmaClass.SIGMA_INF,
                                  double_eigenvalue_angles=())

    angles = double_eigenvalue_angles(a1, a2, tol=tol)
    sigma = SigmaClass.SIGMA_ZERO if angles else SigmaClass.NON_CRITICAL
    return PairClassification(kind=kind, sigma_class=sigma,
                              double_eigenvalue_angles=angles)
