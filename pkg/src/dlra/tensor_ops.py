"""Dense matrix/tensor kernels: QR, truncated SVD, matricization, mode products.

Order-d arrays are plain numpy ndarrays.  All flattening uses the
colexicographic linear order (first index fastest, i.e. Fortran order), so a
matricize/tensorize round-trip is an exact permutation of memory.  Real and
complex data share one code path; adjoints replace transposes.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatchError, RankError


class QRFactors(NamedTuple):
    q: np.ndarray
    r: np.ndarray


class SVDFactors(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def adjoint(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose; reduces to the plain transpose on real arrays."""
    return a.conj().T


def qr_thin(a) -> QRFactors:
    """Thin Householder QR with the diag(R) >= 0 sign convention.

    The sign fix makes the factorization unique for full-rank input, so
    identical input bytes yield identical factors.  Rank-deficient input is
    completed to a Q with r orthonormal columns by the Householder
    factorization itself; the corresponding diagonal entries of R are zero.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionMismatchError(f"qr_thin expects a matrix, got order {a.ndim}")
    n, r = a.shape
    if n < r:
        raise DimensionMismatchError(f"qr_thin needs n >= r, got shape {n}x{r}")
    q, rr = np.linalg.qr(a, mode="reduced")
    d = np.diagonal(rr).copy()
    absd = np.abs(d)
    phase = np.where(absd > 0, d, 1.0)
    phase = phase / np.abs(phase)
    q = q * phase[None, :]
    rr = rr * np.conj(phase)[:, None]
    return QRFactors(q, rr)


def svd_truncate(a, rank: int) -> SVDFactors:
    """Best rank-r approximation factors of a matrix.

    Returns (u, sigma, v) with orthonormal u, v and sigma the leading
    singular values (1-d, nonincreasing); a ~ u @ diag(sigma) @ v^H.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionMismatchError(f"svd_truncate expects a matrix, got order {a.ndim}")
    if rank > min(a.shape):
        raise RankError(f"rank {rank} exceeds min dim {min(a.shape)}")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return SVDFactors(u[:, :rank], s[:rank], adjoint(vh[:rank, :]))


def matricize(t, mode: int) -> np.ndarray:
    """Mode-i unfolding: rows indexed by `mode`, columns by the remaining
    modes in colexicographic order (first remaining mode fastest)."""
    t = np.asarray(t)
    if not 0 <= mode < t.ndim:
        raise DimensionMismatchError(f"mode {mode} out of range for order {t.ndim}")
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1, order="F")


def tensorize(m, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Exact inverse of matricize for the given full dims."""
    m = np.asarray(m)
    dims = tuple(int(d) for d in dims)
    if not 0 <= mode < len(dims):
        raise DimensionMismatchError(f"mode {mode} out of range for order {len(dims)}")
    rest = dims[:mode] + dims[mode + 1 :]
    expected = (dims[mode], int(np.prod(rest, dtype=np.int64)))
    if m.shape != expected:
        raise DimensionMismatchError(f"matrix shape {m.shape} inconsistent with dims {dims}, mode {mode}")
    full = m.reshape((dims[mode],) + rest, order="F")
    return np.moveaxis(full, 0, mode)


def mode_product(t, mode: int, mat) -> np.ndarray:
    """Multiply `mat` into mode `mode`: result = Ten_i(mat @ Mat_i(t))."""
    t = np.asarray(t)
    mat = np.asarray(mat)
    if not 0 <= mode < t.ndim:
        raise DimensionMismatchError(f"mode {mode} out of range for order {t.ndim}")
    if mat.ndim != 2 or mat.shape[1] != t.shape[mode]:
        raise DimensionMismatchError(
            f"matrix shape {mat.shape} does not match mode-{mode} extent {t.shape[mode]}"
        )
    out = np.tensordot(mat, t, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def multi_mode_product(t, mats: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
    """Apply mats[i] to mode i for every i (optionally skipping one mode)."""
    out = np.asarray(t)
    for i, m in enumerate(mats):
        if i == skip or m is None:
            continue
        out = mode_product(out, i, m)
    return out


def frobenius_norm(t) -> float:
    """Euclidean norm of the entry vector of an arbitrary-order array."""
    return float(np.linalg.norm(np.asarray(t).ravel()))
