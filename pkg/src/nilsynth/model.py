"""Corank-2 nilpotent metric models: validation, normalization, frame reduction.

A model is the data of m (rank), k (corank, 1 or 2) and k independent skew
matrices L_1..L_k; geodesics from the origin are parametrized by a covector
(u0, r).  For k = 2 and r != 0 the rotation r = |r| (cos t, sin t) reduces any
covector to the axis (|r|, 0) at the cost of rotating the matrix pencil and
conjugating the horizontal frame; `reduce_frame` packages that change of
coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .skew import SkewMatrix, BlockDiagForm, block_diagonalize, hs_inner, hs_norm

NORMALIZED_TOL = 1e-10
INDEPENDENCE_TOL = 1e-12
JSON_SKEW_TOL = 1e-9


def _gram(mats) -> np.ndarray:
    return np.array([[hs_inner(a, b) for b in mats] for a in mats])


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """A nilpotent model: rank m, corank k, skew matrices L_1..L_k.

    The matrices must be linearly independent (2-step bracket generation).
    `normalized` records whether they are orthonormal for the Hilbert-Schmidt
    pairing; it is detected at construction.
    """

    m: int
    L: tuple

    def __post_init__(self):
        mats = tuple(a if isinstance(a, SkewMatrix) else SkewMatrix(a)
                     for a in self.L)
        if not mats:
            raise ValueError("at least one matrix is required")
        if len(mats) > 2:
            raise ValueError("corank k >= 3 is not supported")
        if any(a.dim != self.m for a in mats):
            raise ValueError("matrix dimension does not match m")
        if self.m < 2:
            raise ValueError("rank m must be at least 2")
        g = _gram(mats)
        scale = max(float(np.max(np.diag(g))), 1e-300)
        if np.linalg.det(g) <= INDEPENDENCE_TOL * scale ** len(mats):
            raise ValueError("matrices are linearly dependent")
        object.__setattr__(self, "L", mats)

    @property
    def k(self) -> int:
        return len(self.L)

    @property
    def n(self) -> int:
        return self.m + self.k

    @property
    def normalized(self) -> bool:
        g = _gram(self.L)
        return bool(np.abs(g - np.eye(self.k)).max() <= NORMALIZED_TOL)

    def matrices(self) -> np.ndarray:
        """Stacked (k, m, m) array of the structure matrices."""
        return np.stack([a.entries for a in self.L])

    def vertical_matrix(self, r) -> np.ndarray:
        """r_1 L_1 + ... + r_k L_k for a k-vector r."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.k,):
            raise ValueError(f"expected r of shape ({self.k},), got {r.shape}")
        return np.einsum("h,hij->ij", r, self.matrices())

    def l_theta(self, theta: float) -> SkewMatrix:
        if self.k != 2:
            raise ValueError("pencil rotation requires corank 2")
        c, s = np.cos(theta), np.sin(theta)
        return SkewMatrix(c * self.L[0].entries + s * self.L[1].entries)

    def l_theta_tilde(self, theta: float) -> SkewMatrix:
        if self.k != 2:
            raise ValueError("pencil rotation requires corank 2")
        c, s = np.cos(theta), np.sin(theta)
        return SkewMatrix(-s * self.L[0].entries + c * self.L[1].entries)


@dataclass(frozen=True, eq=False)
class Covector:
    """Initial covector (u0, r): horizontal direction and vertical momenta."""

    u0: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        u0 = np.asarray(self.u0, dtype=float).copy()
        r = np.atleast_1d(np.asarray(self.r, dtype=float)).copy()
        u0.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "r", r)

    @property
    def k(self) -> int:
        return self.r.shape[0]

    @property
    def is_arclength(self) -> bool:
        return abs(np.linalg.norm(self.u0) - 1.0) <= 1e-9


@dataclass(frozen=True, eq=False)
class ReducedFrame:
    """The normal form of a corank-2 covector: r rotated onto (|r|, 0).

    theta and r_mod are the polar coordinates of r; l_theta/l_theta_tilde the
    rotated pencil; `block` the orthogonal reduction of l_theta; `omega_map`
    the block-orthogonal matrix diag(M, R_theta) on R^{m+2} intertwining the
    original geodesics with the reduced ones.
    """

    theta: float
    r_mod: float
    l_theta: SkewMatrix
    l_theta_tilde: SkewMatrix
    block: BlockDiagForm
    omega_map: np.ndarray

    @property
    def l_theta_bd(self) -> np.ndarray:
        """The block-diagonal representative M L_theta M'."""
        return self.block.block_matrix()

    @property
    def l_tilde_bd(self) -> np.ndarray:
        """M L_theta_tilde M', the companion matrix in the reduced frame."""
        m_ = self.block.conjugator
        return m_ @ self.l_theta_tilde.entries @ m_.T

    def to_block_frame(self, u0: np.ndarray) -> np.ndarray:
        return self.block.conjugator @ np.asarray(u0, dtype=float)

    def from_block_frame(self, u0: np.ndarray) -> np.ndarray:
        return self.block.conjugator.T @ np.asarray(u0, dtype=float)


def normalize(spec: MetricSpec) -> MetricSpec:
    """Gram-Schmidt the structure matrices under the HS pairing.

    Preserves the span (hence the metric up to the vertical change of
    coordinates that defines the Popp normalization); idempotent.
    """
    out = []
    for a in spec.L:
        v = a.entries.copy()
        for b in out:
            v = v - hs_inner(v, b) * b
        nrm = hs_norm(v)
        if nrm <= 1e-12:
            raise ValueError("matrices are linearly dependent")
        out.append(v / nrm)
    return MetricSpec(m=spec.m, L=tuple(SkewMatrix(v) for v in out))


def reduce_frame(spec: MetricSpec, r) -> ReducedFrame:
    """Rotate a nonzero corank-2 covector onto the (r, 0) axis.

    With M the conjugator of L_theta and R_theta the 2x2 rotation, the map
    Omega = diag(M, R_theta) satisfies, for every u0 and t,

        Omega . E(t; u0, r1, r2 | L1, L2)
            = E(t; M u0, |r|, 0 | M L_theta M', M L_tilde M').
    """
    if spec.k != 2:
        raise ValueError("frame reduction requires corank 2")
    r = np.asarray(r, dtype=float)
    r_mod = float(np.linalg.norm(r))
    if r_mod == 0.0:
        raise ValueError("r = 0 has no reduced frame; geodesics are straight lines")
    theta = float(np.arctan2(r[1], r[0]))
    l_theta = spec.l_theta(theta)
    l_tilde = spec.l_theta_tilde(theta)
    block = block_diagonalize(l_theta)
    c, s = np.cos(theta), np.sin(theta)
    omega = np.zeros((spec.m + 2, spec.m + 2))
    omega[: spec.m, : spec.m] = block.conjugator
    omega[spec.m:, spec.m:] = [[c, s], [-s, c]]
    return ReducedFrame(theta=theta, r_mod=r_mod, l_theta=l_theta,
                        l_theta_tilde=l_tilde, block=block, omega_map=omega)


def spec_to_dict(spec: MetricSpec) -> dict:
    return {"m": spec.m, "L": [a.entries.tolist() for a in spec.L]}


def spec_from_dict(data: dict) -> MetricSpec:
    if not isinstance(data, dict):
        raise ValueError("model file must contain a JSON object")
    unknown = set(data) - {"m", "L"}
    if unknown:
        raise ValueError(f"unknown fields in model: {sorted(unknown)}")
    if "m" not in data or "L" not in data:
        raise ValueError("model requires fields 'm' and 'L'")
    m = data["m"]
    if not isinstance(m, int) or m < 2:
        raise ValueError("'m' must be an integer >= 2")
    mats = []
    for idx, rows in enumerate(data["L"]):
        a = np.asarray(rows, dtype=float)
        if a.shape != (m, m):
            raise ValueError(f"matrix {idx} has shape {a.shape}, expected ({m}, {m})")
        scale = max(1.0, np.abs(a).max())
        if np.abs(a + a.T).max() > JSON_SKEW_TOL * scale:
            raise ValueError(f"matrix {idx} is not skew-symmetric within 1e-9")
        mats.append(SkewMatrix(0.5 * (a - a.T)))
    return MetricSpec(m=m, L=tuple(mats))


def load_spec(path) -> MetricSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def save_spec(spec: MetricSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2)
