"""Shared builders for integrator tests: smooth explicit low-rank paths."""

import numpy as np
import scipy.linalg

from dlra import LowRankMatrix, OdeRhs, TuckerTensor
from dlra.tensor_ops import multi_mode_product, qr_thin


def orthonormal_path(n, r, seed, speed=1.0):
    """t -> n x r matrix with orthonormal columns, smooth in t."""
    rng = np.random.default_rng(seed)
    base = qr_thin(rng.standard_normal((n, r))).q
    g = rng.standard_normal((n, n))
    w = speed * (g - g.T) / 2.0

    def path(t):
        return scipy.linalg.expm(t * w) @ base

    return path


def explicit_lowrank_matrix_path(m, n, r, seed):
    """Explicit rank-r path A(t) = U(t) S(t) V(t)^T with invertible S(t) and
    well-conditioned basis overlaps for moderate steps.  Returns
    (rhs, a_of, factors_of)."""
    u_path = orthonormal_path(m, r, seed)
    v_path = orthonormal_path(n, r, seed + 1)
    rng = np.random.default_rng(seed + 2)
    s_base = np.diag(1.0 + np.arange(r, dtype=float)) + 0.2 * rng.standard_normal((r, r))
    s_dir = 0.5 * rng.standard_normal((r, r))

    def s_of(t):
        return s_base + t * s_dir

    def a_of(t):
        return u_path(t) @ s_of(t) @ v_path(t).T

    def fn(t, _y, eps=1e-6):
        return (a_of(t + eps) - a_of(t - eps)) / (2 * eps)

    rhs = OdeRhs(fn, increment=lambda ta, tb: a_of(tb) - a_of(ta))
    return rhs, a_of, lambda t: LowRankMatrix(u_path(t), s_of(t), v_path(t))


def explicit_tucker_path(dims, ranks, seed):
    """Explicit multilinear-rank path A(t) = C(t) x_i U_i(t)."""
    d = len(dims)
    u_paths = [orthonormal_path(dims[i], ranks[i], seed + i) for i in range(d)]
    rng = np.random.default_rng(seed + d)
    c_base = rng.standard_normal(ranks)
    c_dir = 0.3 * rng.standard_normal(ranks)

    def c_of(t):
        return c_base + t * c_dir

    def a_of(t):
        return multi_mode_product(c_of(t), [p(t) for p in u_paths])

    def fn(t, _y, eps=1e-6):
        return (a_of(t + eps) - a_of(t - eps)) / (2 * eps)

    rhs = OdeRhs(fn, increment=lambda ta, tb: a_of(tb) - a_of(ta))
    return rhs, a_of, lambda t: TuckerTensor(c_of(t), tuple(p(t) for p in u_paths))
