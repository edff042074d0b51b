"""Dense skew-symmetric matrix algebra at small fixed sizes.

Provides the validated :class:`SkewMatrix` value type, the Hilbert-Schmidt
inner product, orthogonal block diagonalization into 2x2 rotation generators,
eigenvalue moduli, the matrix exponential, and the kernel matrix
M_A(t) = int_0^t e^{sA} ds evaluated blockwise so that singular blocks are
handled as removable limits rather than by inversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur

from ._matfun import SkewEig

SKEW_TOL = 1e-12
ORTHO_TOL = 1e-10


def _as_matrix(value) -> np.ndarray:
    if isinstance(value, SkewMatrix):
        return value.entries
    return np.asarray(value, dtype=float)


@dataclass(frozen=True, eq=False)
class SkewMatrix:
    """A real skew-symmetric matrix, validated at construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, np.abs(a).max())
        if np.abs(a + a.T).max() > SKEW_TOL * scale:
            raise ValueError("matrix is not skew-symmetric within tolerance")
        a = 0.5 * (a - a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __add__(self, other):
        return SkewMatrix(self.entries + _as_matrix(other))

    def __sub__(self, other):
        return SkewMatrix(self.entries - _as_matrix(other))

    def __neg__(self):
        return SkewMatrix(-self.entries)

    def __mul__(self, c: float):
        return SkewMatrix(self.entries * float(c))

    __rmul__ = __mul__

    @classmethod
    def zero(cls, m: int) -> "SkewMatrix":
        return cls(np.zeros((m, m)))


@dataclass(frozen=True)
class BlockDiagForm:
    """Orthogonal reduction M L M' = diag of 2x2 blocks [[0, a_i], [-a_i, 0]].

    moduli are sorted descending (zeros included, length floor(m/2)); for odd
    m a trailing 1x1 zero block is present and flagged by `has_zero_row`.
    """

    conjugator: np.ndarray
    moduli: tuple
    has_zero_row: bool = field(default=False)

    @property
    def dim(self) -> int:
        return self.conjugator.shape[0]

    def block_matrix(self) -> np.ndarray:
        """The canonical block-diagonal matrix with the stored moduli."""
        m = self.dim
        out = np.zeros((m, m))
        for i, a in enumerate(self.moduli):
            out[2 * i, 2 * i + 1] = a
            out[2 * i + 1, 2 * i] = -a
        return out

    def reconstruct(self) -> np.ndarray:
        """conjugator' . block_matrix . conjugator, recovering the source."""
        m_ = self.conjugator
        return m_.T @ self.block_matrix() @ m_


def hs_inner(l1, l2) -> float:
    """Hilbert-Schmidt pairing (1/m) trace(L1' L2)."""
    a, b = _as_matrix(l1), _as_matrix(l2)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.trace(a.T @ b)) / a.shape[0]


def hs_norm(l1) -> float:
    return float(np.sqrt(max(hs_inner(l1, l1), 0.0)))


def block_diagonalize(l) -> BlockDiagForm:
    """Orthogonal conjugation of a skew matrix into sorted 2x2 blocks.

    The sign convention puts +a_i at the (1,2) entry of each block; blocks
    are ordered by descending modulus.  Output is deterministic for a given
    input (stable sort on the Schur blocks).
    """
    a = _as_matrix(l)
    if isinstance(l, np.ndarray) or not isinstance(l, SkewMatrix):
        SkewMatrix(a)  # validate
    m = a.shape[0]
    scale = max(1.0, np.abs(a).max())
    t, z = schur(a, output="real")
    t = 0.5 * (t - t.T)  # the Schur form of a skew matrix is skew up to roundoff

    # Walk the quasi-diagonal: 2x2 blocks where the off-diagonal is nonzero.
    blocks = []  # (modulus, [cols]) ; singletons carry one column
    i = 0
    while i < m:
        if i + 1 < m and abs(t[i, i + 1]) > 1e-13 * scale:
            blocks.append((t[i, i + 1], [i, i + 1]))
            i += 2
        else:
            blocks.append((0.0, [i]))
            i += 1

    # Pair up zero singletons into zero 2x2 blocks; odd m leaves one over.
    paired = [b for b in blocks if len(b[1]) == 2]
    singles = [b for b in blocks if len(b[1]) == 1]
    while len(singles) >= 2:
        s1 = singles.pop(0)
        s2 = singles.pop(0)
        paired.append((0.0, [s1[1][0], s2[1][0]]))

    # Sign fix: flip the column pair so the conjugated block has +|b| at (1,2).
    cols = []
    moduli = []
    paired.sort(key=lambda b: -abs(b[0]))
    for b, idx in paired:
        if b < 0:
            idx = [idx[1], idx[0]]
        moduli.append(abs(b))
        cols.extend(idx)
    has_zero_row = False
    if singles:
        cols.append(singles[0][1][0])
        has_zero_row = True

    conj = z[:, cols].T.copy()
    _canonicalize_blocks(conj, len(moduli), has_zero_row)
    return BlockDiagForm(conjugator=conj, moduli=tuple(moduli),
                         has_zero_row=has_zero_row)


def _canonicalize_blocks(conj: np.ndarray, nblocks: int, has_zero_row: bool):
    """Fix the in-plane rotation freedom of each 2x2 eigenplane.

    Rotations within a block commute with [[0, a], [-a, 0]], so the Schur
    basis of each plane is arbitrary up to SO(2); rotate so the dominant
    source coordinate of the plane projects onto the first row with a zero
    second component.  Makes the output stable under tiny input
    perturbations (away from modulus ties).
    """
    m = conj.shape[1]
    for i in range(nblocks):
        p, q = 2 * i, 2 * i + 1
        weights = conj[p] ** 2 + conj[q] ** 2
        j = int(np.argmax(weights))
        norm = np.hypot(conj[p, j], conj[q, j])
        if norm < 1e-14:
            continue
        c, s = conj[p, j] / norm, conj[q, j] / norm
        rp = c * conj[p] + s * conj[q]
        rq = -s * conj[p] + c * conj[q]
        conj[p], conj[q] = rp, rq
    if has_zero_row:
        row = conj[m - 1]
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            conj[m - 1] = -row


def spectrum_moduli(l) -> tuple:
    """Moduli of the eigenvalues of a skew matrix, sorted descending.

    Length floor(m/2); zeros are included.  Computed from the Hermitian
    eigenvalues of iL, which come in +/- pairs (plus 0 for odd m).
    """
    a = _as_matrix(l)
    m = a.shape[0]
    w = np.linalg.eigvalsh(1j * a)
    top = np.sort(w)[::-1][: m // 2]
    return tuple(float(max(x, 0.0)) for x in top)


def skew_exp(l, t: float) -> np.ndarray:
    """e^{tL}, assembled from plane rotations by a_i t in the block frame."""
    a = _as_matrix(l)
    bd = block_diagonalize(a)
    m = a.shape[0]
    r = np.zeros((m, m))
    for i, ai in enumerate(bd.moduli):
        c, s = np.cos(ai * t), np.sin(ai * t)
        r[2 * i: 2 * i + 2, 2 * i: 2 * i + 2] = [[c, s], [-s, c]]
    if bd.has_zero_row:
        r[m - 1, m - 1] = 1.0
    return bd.conjugator.T @ r @ bd.conjugator


def m_a_matrix(a, t: float) -> np.ndarray:
    """M_A(t) = int_0^t e^{sA} ds, evaluated per block.

    Nonzero blocks are 2 sin(a_i t/2)/a_i times the rotation by a_i t/2;
    zero-modulus blocks contribute t * I (the a_i -> 0 limit), so singular A
    needs no special-casing by the caller.
    """
    a_ = _as_matrix(a)
    bd = block_diagonalize(a_)
    m = a_.shape[0]
    out = np.zeros((m, m))
    for i, ai in enumerate(bd.moduli):
        if ai == 0.0:
            out[2 * i, 2 * i] = out[2 * i + 1, 2 * i + 1] = t
        else:
            half = 0.5 * ai * t
            f = 2.0 * np.sin(half) / ai
            c, s = np.cos(half), np.sin(half)
            out[2 * i: 2 * i + 2, 2 * i: 2 * i + 2] = [[f * c, f * s],
                                                       [-f * s, f * c]]
    if bd.has_zero_row:
        out[m - 1, m - 1] = t
    return bd.conjugator.T @ out @ bd.conjugator


def skew_eig(a) -> SkewEig:
    """Complex eigendecomposition helper shared by the flow kernels."""
    return SkewEig(_as_matrix(a))
