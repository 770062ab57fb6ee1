"""One-step maps for rank-r matrix dynamical low-rank approximation.

Implemented integrators:

* ``bug_step``            basis-update & Galerkin (BUG) step: K- and L-steps
                          update the bases independently (and may run
                          concurrently), then a Galerkin step evolves the
                          small coupling matrix forward in time.
* ``bug_step_modified``   variant whose S-step also starts from S0 and runs
                          concurrently; the result is mapped back through the
                          inverse basis overlaps, which must be well
                          conditioned.
* ``ksl_step``            projector-splitting (KSL) step: sequential K-step,
                          backward S-step, L-step.
* ``rk4_factors_step``    classical RK4 applied directly to the coupled
                          factor differential equations (contains S^{-1});
                          included as the standard-integrator baseline, it is
                          expected to fail for small singular values.

`integrate` drives any of these step maps over a time horizon.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError, DivergenceError, GramianSingularError
from .lowrank import LowRankMatrix, reconstruct
from .substeps import OdeRhs, SubstepConfig, as_ode_rhs, solve_substep
from .tensor_ops import adjoint, frobenius_norm, qr_thin

COND_LIMIT = 1e12  # inverse-overlap guard for the modified step


def worker_count() -> int:
    """Worker budget for concurrent substeps, capped by DLR_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("DLR_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MatrixStepReport:
    """Result of one integrator step.

    ``m`` and ``n`` are the basis overlaps U1^H U0 and V1^H V0 (None for
    steppers that do not form them).  ``wall_ms`` is measured per step and is
    excluded from any determinism guarantee.
    """

    y1: LowRankMatrix
    m: Optional[np.ndarray]
    n: Optional[np.ndarray]
    t: float
    wall_ms: float


def _k_rhs(f: OdeRhs, v0: np.ndarray) -> OdeRhs:
    inc = None
    if f.increment is not None:
        inc = lambda ta, tb: f.increment(ta, tb) @ v0
    return OdeRhs(lambda t, k: f(t, k @ adjoint(v0)) @ v0,
                  linear=f.linear, autonomous=f.autonomous, increment=inc)


def _l_rhs(f: OdeRhs, u0: np.ndarray) -> OdeRhs:
    inc = None
    if f.increment is not None:
        inc = lambda ta, tb: adjoint(f.increment(ta, tb)) @ u0
    return OdeRhs(lambda t, l: adjoint(f(t, u0 @ adjoint(l))) @ u0,
                  linear=f.linear, autonomous=f.autonomous, increment=inc)


def _galerkin_rhs(f: OdeRhs, u: np.ndarray, v: np.ndarray, sign: float = 1.0) -> OdeRhs:
    inc = None
    if f.increment is not None:
        inc = lambda ta, tb: sign * (adjoint(u) @ f.increment(ta, tb) @ v)
    return OdeRhs(lambda t, s: sign * (adjoint(u) @ f(t, u @ s @ adjoint(v)) @ v),
                  linear=f.linear, autonomous=f.autonomous, increment=inc)


def bug_step(f, y0: LowRankMatrix, t0: float, h: float,
             cfg: SubstepConfig | None = None) -> MatrixStepReport:
    """One BUG step from t0 to t0+h.

    K-step: K' = F(t, K V0^H) V0 from K(t0) = U0 S0, QR gives U1.
    L-step: L' = F(t, U0 L^H)^H U0 from L(t0) = V0 S0^H, QR gives V1.
    Both are independent and run concurrently when DLR_THREADS >= 2.
    S-step (forward in time): S' = U1^H F(t, U1 S V1^H) V1 from
    S(t0) = M S0 N^H with the overlaps M = U1^H U0, N = V1^H V0.
    """
    f = as_ode_rhs(f)
    cfg = cfg or SubstepConfig()
    tic = time.perf_counter()
    u0, s0, v0 = y0.u, y0.s, y0.v
    t1 = t0 + h

    def run_k():
        k1 = solve_substep(_k_rhs(f, v0), t0, t1, u0 @ s0, cfg)
        u1 = qr_thin(k1).q
        return u1, adjoint(u1) @ u0

    def run_l():
        l1 = solve_substep(_l_rhs(f, u0), t0, t1, v0 @ adjoint(s0), cfg)
        v1 = qr_thin(l1).q
        return v1, adjoint(v1) @ v0

    if worker_count() >= 2:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fk, fl = pool.submit(run_k), pool.submit(run_l)
            (u1, m), (v1, n) = fk.result(), fl.result()
    else:
        u1, m = run_k()
        v1, n = run_l()

    s_init = m @ s0 @ adjoint(n)
    s1 = solve_substep(_galerkin_rhs(f, u1, v1), t0, t1, s_init, cfg)
    wall = (time.perf_counter() - tic) * 1e3
    return MatrixStepReport(LowRankMatrix(u1, s1, v1), m, n, t1, wall)


def bug_step_modified(f, y0: LowRankMatrix, t0: float, h: float,
                      cfg: SubstepConfig | None = None) -> MatrixStepReport:
    """BUG variant with all three substeps independent.

    The S-step integrates S' = U0^H F(t, U0 S V0^H) V0 from S0 in the old
    bases; afterwards S1 = M^{-H} S(t1) N^{-1}.  The inverses exist only for
    steps small compared to the smallest singular value; the overlaps are
    rejected when their condition number exceeds 1e12.
    """
    f = as_ode_rhs(f)
    cfg = cfg or SubstepConfig()
    tic = time.perf_counter()
    u0, s0, v0 = y0.u, y0.s, y0.v
    t1 = t0 + h

    def run_k():
        k1 = solve_substep(_k_rhs(f, v0), t0, t1, u0 @ s0, cfg)
        u1 = qr_thin(k1).q
        return u1, adjoint(u1) @ u0

    def run_l():
        l1 = solve_substep(_l_rhs(f, u0), t0, t1, v0 @ adjoint(s0), cfg)
        v1 = qr_thin(l1).q
        return v1, adjoint(v1) @ v0

    def run_s():
        return solve_substep(_galerkin_rhs(f, u0, v0), t0, t1, s0, cfg)

    if worker_count() >= 2:
        with ThreadPoolExecutor(max_workers=min(3, worker_count())) as pool:
            fk, fl, fs = pool.submit(run_k), pool.submit(run_l), pool.submit(run_s)
            (u1, m), (v1, n), s_mid = fk.result(), fl.result(), fs.result()
    else:
        u1, m = run_k()
        v1, n = run_l()
        s_mid = run_s()

    for name, g in (("M", m), ("N", n)):
        sv = np.linalg.svd(g, compute_uv=False)
        # products of orthonormal-column matrices have sv <= 1, so a small
        # smallest singular value means an unbounded inverse
        if sv[-1] <= 0.0 or sv[0] / sv[-1] > COND_LIMIT or sv[-1] < 1.0 / COND_LIMIT:
            raise GramianSingularError(
                f"overlap {name} is numerically singular (sv range {sv[-1]:.3e}..{sv[0]:.3e})"
            )
    s1 = np.linalg.solve(adjoint(m), s_mid)
    s1 = np.linalg.solve(n.T, s1.T).T
    wall = (time.perf_counter() - tic) * 1e3
    return MatrixStepReport(LowRankMatrix(u1, s1, v1), m, n, t1, wall)


def ksl_step(f, y0: LowRankMatrix, t0: float, h: float,
             cfg: SubstepConfig | None = None) -> MatrixStepReport:
    """One projector-splitting (KSL) step from t0 to t0+h.

    Sequential: K-step (QR yields U1 and S-hat), backward S-step
    S' = -U1^H F(t, U1 S V0^H) V0, then L-step with QR yielding V1 and S1.
    """
    f = as_ode_rhs(f)
    cfg = cfg or SubstepConfig()
    tic = time.perf_counter()
    u0, s0, v0 = y0.u, y0.s, y0.v
    t1 = t0 + h

    k1 = solve_substep(_k_rhs(f, v0), t0, t1, u0 @ s0, cfg)
    u1, s_hat = qr_thin(k1)

    s_tilde = solve_substep(_galerkin_rhs(f, u1, v0, sign=-1.0), t0, t1, s_hat, cfg)

    l1 = solve_substep(_l_rhs(f, u1), t0, t1, v0 @ adjoint(s_tilde), cfg)
    v1, r_l = qr_thin(l1)
    s1 = adjoint(r_l)
    wall = (time.perf_counter() - tic) * 1e3
    return MatrixStepReport(LowRankMatrix(u1, s1, v1), None, None, t1, wall)


def rk4_factors_step(f, y0: LowRankMatrix, t0: float, h: float,
                     cfg: SubstepConfig | None = None) -> MatrixStepReport:
    """Classical RK4 applied to the coupled factor equations.

    U' = (I - U U^H) F V S^{-1},  S' = U^H F V,  V' = (I - V V^H) F^H U S^{-H}
    with F = F(t, U S V^H).  The explicit S^{-1} makes the step size limited
    by the smallest singular value; overflow and NaN are not trapped here.
    """
    f = as_ode_rhs(f)
    cfg = cfg or SubstepConfig()
    tic = time.perf_counter()

    def derivative(t, u, s, v):
        val = f(t, u @ s @ adjoint(v))
        fv = val @ v
        fhu = adjoint(val) @ u
        du = np.linalg.solve(s.T, (fv - u @ (adjoint(u) @ fv)).T).T
        dv = np.linalg.solve(s.conj(), (fhu - v @ (adjoint(v) @ fhu)).T).T
        ds = adjoint(u) @ fv
        return du, ds, dv

    u, s, v = y0.u, y0.s, y0.v
    steps = cfg.inner_steps
    dt = h / steps
    t = t0
    for _ in range(steps):
        du1, ds1, dv1 = derivative(t, u, s, v)
        du2, ds2, dv2 = derivative(t + dt / 2, u + dt / 2 * du1, s + dt / 2 * ds1, v + dt / 2 * dv1)
        du3, ds3, dv3 = derivative(t + dt / 2, u + dt / 2 * du2, s + dt / 2 * ds2, v + dt / 2 * dv2)
        du4, ds4, dv4 = derivative(t + dt, u + dt * du3, s + dt * ds3, v + dt * dv3)
        u = u + (dt / 6) * (du1 + 2 * du2 + 2 * du3 + du4)
        s = s + (dt / 6) * (ds1 + 2 * ds2 + 2 * ds3 + ds4)
        v = v + (dt / 6) * (dv1 + 2 * dv2 + 2 * dv3 + dv4)
        t += dt
    wall = (time.perf_counter() - tic) * 1e3
    return MatrixStepReport(LowRankMatrix(u, s, v), None, None, t0 + h, wall)


def integrate(stepper, f, y0: LowRankMatrix, t0: float, t_end: float, h: float,
              cfg: SubstepConfig | None = None,
              observer: Callable[[int, float, LowRankMatrix], None] | None = None,
              store_trajectory: bool = True) -> list[MatrixStepReport]:
    """Repeatedly apply a one-step map from t0 to t_end with step size h.

    If (t_end - t0) is not an integer multiple of h (to 1e-9 relative), the
    final step covers the remainder with a reduced step size.  The observer,
    when given, is called after every step with (step index, time, state).
    Raises DivergenceError when non-finite values appear in the factors.
    """
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

    reports: list[MatrixStepReport] = []
    y = y0
    for k in range(n_full + (1 if remainder > 0.0 else 0)):
        t_k = t0 + k * h
        h_k = h if k < n_full else remainder
        report = stepper(f, y, t_k, h_k, cfg)
        y = report.y1
        if not np.all(np.isfinite(y.s)):
            raise DivergenceError(f"non-finite factors at t = {report.t:.6g}")
        if observer is not None:
            observer(k, report.t, y)
        if store_trajectory or k == n_full + (1 if remainder > 0.0 else 0) - 1:
            reports.append(report)
    return reports


def structure_condition_defect(f, t: float, y, kind: str) -> float:
    """How far F is from the (skew-)symmetry-compatibility condition at sample y.

    symmetric:      || F(t, Y^T)^T - F(t, Y) ||_F
    skew:           || F(t, Y^T)^T + F(t, -Y) ||_F
    A right-hand side satisfying the condition for all Y propagates
    (skew-)symmetric initial data to (skew-)symmetric solutions.
    """
    f = as_ode_rhs(f)
    y = np.asarray(y)
    lhs = f(t, y.T).T
    if kind == "symmetric":
        return frobenius_norm(lhs - f(t, y))
    if kind == "skew":
        return frobenius_norm(lhs + f(t, -y))
    raise ValueError(f"kind must be 'symmetric' or 'skew', got {kind!r}")


@dataclass(frozen=True)
class StructureReport:
    kind: str
    defect_initial: float
    defect_final: float
    step: MatrixStepReport


def check_structure(f, y0: LowRankMatrix, t0: float, h: float,
                    cfg: SubstepConfig | None = None,
                    kind: str = "skew",
                    stepper=bug_step) -> StructureReport:
    """Run one step and report the (skew-)symmetry defect of the result.

    The defect is || Y1 -/+ Y1^T ||_F (minus for symmetric, plus for skew).
    The report is informational; no assertion is made here.
    """
    if kind not in ("symmetric", "skew"):
        raise ValueError(f"kind must be 'symmetric' or 'skew', got {kind!r}")
    m, n = y0.shape
    if m != n:
        raise DimensionMismatchError("structure checks need square matrices")
    sign = -1.0 if kind == "symmetric" else 1.0
    dense0 = reconstruct(y0)
    defect0 = frobenius_norm(dense0 + sign * dense0.T)
    report = stepper(f, y0, t0, h, cfg or SubstepConfig())
    dense1 = reconstruct(report.y1)
    defect1 = frobenius_norm(dense1 + sign * dense1.T)
    return StructureReport(kind, defect0, defect1, report)
