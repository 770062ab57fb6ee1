"""Factored low-rank representations and tangent-space diagnostics.

Two value types: `LowRankMatrix` (Y = U S V^H with orthonormal U, V and a
small general S) and `TuckerTensor` (core C contracted with one orthonormal
basis matrix per mode).  Both are immutable; all functions return new values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatchError, RankError
from .tensor_ops import (
    adjoint,
    frobenius_norm,
    matricize,
    mode_product,
    multi_mode_product,
    qr_thin,
    svd_truncate,
)


@dataclass(frozen=True)
class LowRankMatrix:
    """Rank-r matrix in factored form U S V^H.

    U (m x r) and V (n x r) carry orthonormal columns; S (r x r) is a general
    small matrix, not assumed diagonal or symmetric.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r = self.s.shape[0]
        if self.s.shape != (r, r):
            raise DimensionMismatchError(f"S must be square, got {self.s.shape}")
        if self.u.shape[1] != r or self.v.shape[1] != r:
            raise DimensionMismatchError(
                f"factor widths {self.u.shape[1]}, {self.v.shape[1]} do not match rank {r}"
            )

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])


@dataclass(frozen=True)
class TuckerTensor:
    """Tucker tensor: core C (r_1 x ... x r_d) with orthonormal bases U_i (n_i x r_i)."""

    core: np.ndarray
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.factors) != self.core.ndim:
            raise DimensionMismatchError(
                f"{len(self.factors)} factors for an order-{self.core.ndim} core"
            )
        for i, u in enumerate(self.factors):
            if u.shape[1] != self.core.shape[i]:
                raise DimensionMismatchError(
                    f"factor {i} has {u.shape[1]} columns, core extent is {self.core.shape[i]}"
                )

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)


LowRank = Union[LowRankMatrix, TuckerTensor]


def reconstruct(y: LowRank) -> np.ndarray:
    """Dense array represented by the factored value."""
    if isinstance(y, LowRankMatrix):
        return y.u @ y.s @ adjoint(y.v)
    if isinstance(y, TuckerTensor):
        return multi_mode_product(y.core, y.factors)
    raise TypeError(f"cannot reconstruct {type(y).__name__}")


def truncate_dense(a, ranks) -> LowRank:
    """Quasi-best low-rank approximation of a dense array.

    An integer rank yields a `LowRankMatrix` via truncated SVD (the best
    rank-r approximation in Frobenius norm).  A rank tuple yields a
    `TuckerTensor` via the classical higher-order SVD: per-mode leading left
    singular vectors, core by orthogonal projection.
    """
    a = np.asarray(a)
    if isinstance(ranks, (int, np.integer)):
        if a.ndim != 2:
            raise DimensionMismatchError("integer rank requires a matrix input")
        u, sigma, v = svd_truncate(a, int(ranks))
        return LowRankMatrix(u, np.diag(sigma.astype(a.dtype, copy=False)), v)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != a.ndim:
        raise DimensionMismatchError(f"{len(ranks)} ranks for an order-{a.ndim} array")
    for i, r in enumerate(ranks):
        if r > a.shape[i]:
            raise RankError(f"rank {r} exceeds extent {a.shape[i]} in mode {i}")
    factors = []
    for i, r in enumerate(ranks):
        u, _, _ = np.linalg.svd(matricize(a, i), full_matrices=False)
        factors.append(u[:, :r])
    core = multi_mode_product(a, [adjoint(u) for u in factors])
    return TuckerTensor(core, tuple(factors))


def random_lowrank(dims: Sequence[int], ranks, seed: int) -> LowRank:
    """Seeded random factored value with orthonormal bases (QR of standard normals)."""
    rng = np.random.default_rng(seed)
    if isinstance(ranks, (int, np.integer)):
        m, n = dims
        r = int(ranks)
        if r > min(m, n):
            raise RankError(f"rank {r} exceeds min dim {min(m, n)}")
        u = qr_thin(rng.standard_normal((m, r))).q
        v = qr_thin(rng.standard_normal((n, r))).q
        s = rng.standard_normal((r, r))
        return LowRankMatrix(u, s, v)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims):
        raise DimensionMismatchError(f"{len(ranks)} ranks for {len(dims)} dims")
    factors = []
    for n, r in zip(dims, ranks):
        if r > n:
            raise RankError(f"rank {r} exceeds extent {n}")
        factors.append(qr_thin(rng.standard_normal((n, r))).q)
    core = rng.standard_normal(ranks)
    return TuckerTensor(core, tuple(factors))


def tangent_project(y: LowRankMatrix, z) -> np.ndarray:
    """Orthogonal projection of z onto the tangent space of the rank-r
    manifold at reconstruct(y): P(Y)Z = Z V V^H - U U^H Z V V^H + U U^H Z."""
    z = np.asarray(z)
    if z.shape != y.shape:
        raise DimensionMismatchError(f"z has shape {z.shape}, expected {y.shape}")
    zv = z @ y.v
    uhz = adjoint(y.u) @ z
    return zv @ adjoint(y.v) - y.u @ (adjoint(y.u) @ zv) @ adjoint(y.v) + y.u @ uhz


def tangent_defect(y: LowRankMatrix, z) -> float:
    """Frobenius norm of the non-tangential part of z at y."""
    z = np.asarray(z)
    return frobenius_norm(z - tangent_project(y, z))
