"""One-step solvers for the small substep differential equations.

Every substep unknown (K, L, S, or a core tensor) is treated as a flat array,
so a single solver implementation serves all of them.  Available methods:

* ``rk2``              Heun's second-order explicit Runge-Kutta method.
* ``rk4``              classical fourth-order Runge-Kutta method.
* ``exact-increment``  exact update for Y-independent right-hand sides that
                       expose their time increment.
* ``arnoldi``          Krylov approximation of the matrix exponential for
                       linear autonomous right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import ConfigurationError

METHODS = ("rk2", "rk4", "exact-increment", "arnoldi")


@dataclass(frozen=True)
class OdeRhs:
    """Right-hand side F(t, Y) of a (sub)step differential equation.

    ``linear`` and ``autonomous`` flag structural properties used to select
    exponential integrators.  ``increment`` is present when the rhs does not
    depend on Y at all; ``increment(ta, tb)`` must return the exact integral
    of the rhs over [ta, tb].
    """

    fn: Callable[[float, np.ndarray], np.ndarray]
    linear: bool = False
    autonomous: bool = False
    increment: Optional[Callable[[float, float], np.ndarray]] = None

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.fn(t, y)


def as_ode_rhs(f) -> OdeRhs:
    """Wrap a plain callable as an OdeRhs with conservative flags."""
    if isinstance(f, OdeRhs):
        return f
    return OdeRhs(fn=f)


@dataclass(frozen=True)
class SubstepConfig:
    """How the substep differential equations are integrated.

    ``inner_steps`` splits the step into equal sub-intervals; the default of 1
    applies the method once over the whole step.  ``krylov_dim`` only matters
    for the ``arnoldi`` method.
    """

    method: str = "rk4"
    inner_steps: int = 1
    krylov_dim: int = 20

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown substep method {self.method!r}")
        if self.inner_steps < 1:
            raise ConfigurationError("inner_steps must be >= 1")
        if self.krylov_dim < 1:
            raise ConfigurationError("krylov_dim must be >= 1")


def _heun_step(rhs, t, h, y):
    k1 = rhs(t, y)
    k2 = rhs(t + h, y + h * k1)
    return y + (h / 2.0) * (k1 + k2)


def _rk4_step(rhs, t, h, y):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2.0, y + (h / 2.0) * k1)
    k3 = rhs(t + h / 2.0, y + (h / 2.0) * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def krylov_expm_apply(apply_op, y0: np.ndarray, dt: float, krylov_dim: int,
                      breakdown_tol: float = 1e-14) -> np.ndarray:
    """Arnoldi approximation of expm(dt*A) @ y0 for a linear map A.

    ``apply_op`` maps arrays of y0's shape to arrays of the same shape.  One
    reorthogonalization sweep keeps the Krylov basis orthonormal to machine
    precision, so for skew-Hermitian A the step conserves the norm.  Iteration
    stops early on happy breakdown (Hessenberg subdiagonal below tolerance).
    """
    shape = y0.shape
    v0 = np.asarray(y0).ravel()
    beta = np.linalg.norm(v0)
    if beta == 0.0:
        return y0.copy()

    first = np.asarray(apply_op(v0.reshape(shape))).ravel()
    dtype = np.result_type(v0.dtype, first.dtype, np.float64)
    k = min(krylov_dim, v0.size)
    basis = np.zeros((v0.size, k + 1), dtype=dtype)
    hess = np.zeros((k + 1, k), dtype=dtype)
    basis[:, 0] = v0 / beta

    m = k
    for j in range(k):
        if j == 0:
            w = first.astype(dtype, copy=True) / beta
        else:
            w = np.asarray(apply_op(basis[:, j].reshape(shape))).ravel().astype(dtype, copy=False)
        # classical Gram-Schmidt with one reorthogonalization pass
        for _ in range(2):
            coeffs = basis[:, : j + 1].conj().T @ w
            w = w - basis[:, : j + 1] @ coeffs
            hess[: j + 1, j] += coeffs
        hnorm = np.linalg.norm(w)
        hess[j + 1, j] = hnorm
        scale = max(1.0, float(np.max(np.abs(hess[: j + 2, j]))))
        if hnorm < breakdown_tol * scale:
            m = j + 1
            break
        if j + 1 < k + 1:
            basis[:, j + 1] = w / hnorm
    else:
        m = k

    small = scipy.linalg.expm(dt * hess[:m, :m])
    out = beta * (basis[:, :m] @ small[:, 0])
    if not np.iscomplexobj(y0) and np.iscomplexobj(out):
        # operator stayed real; drop the zero imaginary part
        if np.max(np.abs(out.imag)) == 0.0:
            out = out.real
    return out.reshape(shape)


def exact_increment(rhs: OdeRhs, t0: float, t1: float, y0: np.ndarray) -> np.ndarray:
    """Exact update y0 + integral of a Y-independent rhs over [t0, t1]."""
    if rhs.increment is None:
        raise ConfigurationError("exact-increment requires a rhs with an explicit increment")
    return y0 + rhs.increment(t0, t1)


def solve_substep(rhs, t0: float, t1: float, y0: np.ndarray,
                  cfg: SubstepConfig) -> np.ndarray:
    """Integrate one substep differential equation from t0 to t1.

    Raises ConfigurationError when ``arnoldi`` is requested for a rhs that is
    not flagged linear and autonomous, or ``exact-increment`` for a rhs
    without an explicit increment.
    """
    rhs = as_ode_rhs(rhs)
    y0 = np.asarray(y0)
    if cfg.method == "exact-increment":
        return exact_increment(rhs, t0, t1, y0)
    if cfg.method == "arnoldi":
        if not (rhs.linear and rhs.autonomous):
            raise ConfigurationError("arnoldi requires a linear autonomous rhs")
        y = y0
        dt = (t1 - t0) / cfg.inner_steps
        for _ in range(cfg.inner_steps):
            y = krylov_expm_apply(lambda z: rhs(t0, z), y, dt, cfg.krylov_dim)
        return y
    one_step = _heun_step if cfg.method == "rk2" else _rk4_step
    y = y0
    dt = (t1 - t0) / cfg.inner_steps
    for i in range(cfg.inner_steps):
        y = one_step(rhs, t0 + i * dt, dt, y)
    return y
