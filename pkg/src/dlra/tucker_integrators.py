"""Fixed-rank Tucker tensor BUG integrator.

One step updates all d basis matrices independently (K-steps against the
frozen old bases) and then solves a Galerkin differential equation for the
core tensor in the updated bases.  The co-range factor V_i^0 of each mode --
of size prod(n_j, j != i) x r_i -- is never materialized: products with it
are evaluated as a small Q_i contraction plus mode products with the old
bases.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, DivergenceError, RankError
from .lowrank import TuckerTensor, reconstruct
from .matrix_integrators import worker_count
from .substeps import OdeRhs, SubstepConfig, as_ode_rhs, solve_substep
from .tensor_ops import (
    adjoint,
    frobenius_norm,
    matricize,
    multi_mode_product,
    qr_thin,
    tensorize,
)


@dataclass(frozen=True)
class TuckerStepReport:
    """Result of one Tucker step; gramians[i] is the overlap U_i^1H U_i^0."""

    y1: TuckerTensor
    gramians: tuple[np.ndarray, ...]
    t: float
    wall_ms: float


def _core_orthogonal_factors(core: np.ndarray, mode: int):
    """QR of the adjoint mode-i unfolding of the core: Mat_i(C)^H = Q_i R_i.

    Returns (q_i, s_i) with s_i = R_i^H, so Mat_i(C) = s_i q_i^H and the
    implicit co-range factor V_i^0 has orthonormal columns.
    """
    mat = matricize(core, mode)
    if mat.shape[1] < mat.shape[0]:
        raise RankError(
            f"mode-{mode} rank {mat.shape[0]} exceeds the product of the other ranks"
        )
    q, r = qr_thin(adjoint(mat))
    return q, adjoint(r)


def evaluate_ki_rhs(f, k_i: np.ndarray, q_i: np.ndarray,
                    bases: tuple[np.ndarray, ...], mode: int, t: float) -> np.ndarray:
    """Basis-update right-hand side F_i(t, K_i V_i^0H) V_i^0 for one mode.

    The dense argument is rebuilt as Ten_i(K_i Q_i^H) multiplied into the old
    bases of the other modes; the result is contracted back the same way.  No
    n_i x prod(n_j) co-range matrix is ever formed.
    """
    f = as_ode_rhs(f)
    core_dims = [b.shape[1] for b in bases]
    core_dims[mode] = k_i.shape[0]
    g = tensorize(k_i @ adjoint(q_i), mode, core_dims)
    y = multi_mode_product(g, bases, skip=mode)
    z = f(t, y)
    w = multi_mode_product(z, [adjoint(b) for b in bases], skip=mode)
    return matricize(w, mode) @ q_i


def _ki_rhs(f: OdeRhs, q_i: np.ndarray, bases: tuple[np.ndarray, ...], mode: int) -> OdeRhs:
    inc = None
    if f.increment is not None:
        def inc(ta, tb, mode=mode, q_i=q_i):
            delta = f.increment(ta, tb)
            w = multi_mode_product(delta, [adjoint(b) for b in bases], skip=mode)
            return matricize(w, mode) @ q_i
    return OdeRhs(lambda t, k: evaluate_ki_rhs(f, k, q_i, bases, mode, t),
                  linear=f.linear, autonomous=f.autonomous, increment=inc)


def _core_rhs(f: OdeRhs, new_bases: tuple[np.ndarray, ...]) -> OdeRhs:
    adj = [adjoint(u) for u in new_bases]
    inc = None
    if f.increment is not None:
        inc = lambda ta, tb: multi_mode_product(f.increment(ta, tb), adj)
    return OdeRhs(lambda t, c: multi_mode_product(f(t, multi_mode_product(c, new_bases)), adj),
                  linear=f.linear, autonomous=f.autonomous, increment=inc)


def tucker_bug_step(f, y0: TuckerTensor, t0: float, h: float,
                    cfg: SubstepConfig | None = None) -> TuckerStepReport:
    """One fixed-rank Tucker BUG step from t0 to t0+h.

    For every mode i (independently, concurrently when DLR_THREADS >= 2):
    factor the core, integrate K_i' = F_i(t, K_i V_i^0H) V_i^0 from
    K_i(t0) = U_i^0 S_i^0, and QR the result into the new basis U_i^1 with
    overlap M_i = U_i^1H U_i^0.  Then integrate the core Galerkin equation
    C' = F(t, C x_i U_i^1) x_i U_i^1H from C(t0) = C0 x_i M_i.
    """
    f = as_ode_rhs(f)
    cfg = cfg or SubstepConfig()
    tic = time.perf_counter()
    c0 = y0.core
    bases0 = y0.factors
    d = c0.ndim
    t1 = t0 + h

    def run_mode(i):
        q_i, s_i = _core_orthogonal_factors(c0, i)
        k1 = solve_substep(_ki_rhs(f, q_i, bases0, i), t0, t1, bases0[i] @ s_i, cfg)
        u1 = qr_thin(k1).q
        return u1, adjoint(u1) @ bases0[i]

    if worker_count() >= 2 and d > 1:
        with ThreadPoolExecutor(max_workers=min(d, worker_count())) as pool:
            results = list(pool.map(run_mode, range(d)))
    else:
        results = [run_mode(i) for i in range(d)]
    new_bases = tuple(u for u, _ in results)
    gramians = tuple(m for _, m in results)

    c_init = multi_mode_product(c0, gramians)
    c1 = solve_substep(_core_rhs(f, new_bases), t0, t1, c_init, cfg)
    wall = (time.perf_counter() - tic) * 1e3
    return TuckerStepReport(TuckerTensor(c1, new_bases), gramians, t1, wall)


def tucker_integrate(f, y0: TuckerTensor, t0: float, t_end: float, h: float,
                     cfg: SubstepConfig | None = None,
                     observer: Callable[[int, float, TuckerTensor], None] | None = None,
                     store_trajectory: bool = True) -> list[TuckerStepReport]:
    """Drive tucker_bug_step over [t0, t_end]; same stepping rules as the
    matrix driver (reduced final step for non-multiple horizons)."""
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    cfg = cfg or SubstepConfig()
    span = t_end - t0
    if span == 0.0:
        return []
    n_full = int(np.floor(span / h + 1e-9))
    remainder = span - n_full * h
    if remainder <= 1e-9 * max(abs(t_end), abs(t0), 1.0):
        remainder = 0.0
    n_total = n_full + (1 if remainder > 0.0 else 0)

    reports: list[TuckerStepReport] = []
    y = y0
    for k in range(n_total):
        t_k = t0 + k * h
        h_k = h if k < n_full else remainder
        report = tucker_bug_step(f, y, t_k, h_k, cfg)
        y = report.y1
        if not np.all(np.isfinite(y.core)):
            raise DivergenceError(f"non-finite core at t = {report.t:.6g}")
        if observer is not None:
            observer(k, report.t, y)
        if store_trajectory or k == n_total - 1:
            reports.append(report)
    return reports


def permute_tensor(y: np.ndarray, sigma) -> np.ndarray:
    """Index permutation sigma(Y)[i_1,...,i_d] = Y[i_sigma(1),...,i_sigma(d)]."""
    sigma = tuple(sigma)
    return np.transpose(y, np.argsort(sigma))


def permutation_sign(sigma) -> int:
    sigma = tuple(sigma)
    sign = 1
    for i in range(len(sigma)):
        for j in range(i + 1, len(sigma)):
            if sigma[i] > sigma[j]:
                sign = -sign
    return sign


def permutation_condition_defect(f, t: float, y: np.ndarray, sigma, kind: str) -> float:
    """Defect of the permutation-compatibility condition at sample y.

    Checks sigma(F(t, sigma^{-1}(Y))) against F(t, Y) (symmetric) or
    sign(sigma) F(t, Y) (antisymmetric).  A right-hand side satisfying this
    for all Y and sigma propagates (anti-)symmetric data.
    """
    f = as_ode_rhs(f)
    sigma = tuple(sigma)
    inv = tuple(np.argsort(sigma))
    lhs = permute_tensor(f(t, permute_tensor(y, inv)), sigma)
    if kind == "symmetric":
        return frobenius_norm(lhs - f(t, y))
    if kind == "antisymmetric":
        return frobenius_norm(lhs - permutation_sign(sigma) * f(t, y))
    raise ValueError(f"kind must be 'symmetric' or 'antisymmetric', got {kind!r}")


@dataclass(frozen=True)
class TensorStructureReport:
    kind: str
    defect_initial: float
    defect_final: float
    step: TuckerStepReport


def check_structure_tensor(f, y0: TuckerTensor, t0: float, h: float,
                           cfg: SubstepConfig | None = None,
                           kind: str = "symmetric",
                           max_permutations: int = 24,
                           seed: int = 0) -> TensorStructureReport:
    """Run one Tucker step and report the worst (anti-)symmetry defect.

    The defect is max over sampled index permutations sigma of
    || sigma(Y1) - (+/-1)^sign(sigma) Y1 ||_F.  All d! permutations are used
    when there are at most `max_permutations`, otherwise a seeded sample.
    """
    if kind not in ("symmetric", "antisymmetric"):
        raise ValueError(f"kind must be 'symmetric' or 'antisymmetric', got {kind!r}")
    dims = y0.shape
    if len(set(dims)) != 1:
        raise DimensionMismatchError("structure checks need equal mode sizes")
    d = len(dims)

    perms = list(itertools.permutations(range(d)))
    if len(perms) > max_permutations:
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(perms), size=max_permutations, replace=False)
        perms = [perms[i] for i in idx]

    def worst_defect(dense):
        worst = 0.0
        for sigma in perms:
            target = dense if kind == "symmetric" else permutation_sign(sigma) * dense
            worst = max(worst, frobenius_norm(permute_tensor(dense, sigma) - target))
        return worst

    defect0 = worst_defect(reconstruct(y0))
    report = tucker_bug_step(f, y0, t0, h, cfg or SubstepConfig())
    defect1 = worst_defect(reconstruct(report.y1))
    return TensorStructureReport(kind, defect0, defect1, report)
