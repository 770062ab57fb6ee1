"""Benchmark problems, reference solutions, and error metrics.

Three problems:

* ``problem_given_matrix``     explicitly given time-dependent matrix
                               exp(t W1) exp(t) D exp(t W2)^T with diagonal
                               D = diag(2^-j) and seeded random skew W1, W2;
                               the singular values are exp(t) 2^-j, so the
                               rank-r stress regime is built in.
* ``problem_imag_schrodinger`` discrete Schroedinger equation in imaginary
                               time with the torsional potential, d = 2 or 3.
* ``problem_schrodinger_2d``   complex Schroedinger equation with a quadratic
                               potential on a periodic Fourier collocation
                               grid over [-7.5, 7.5]^2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import ConfigurationError, DimensionMismatchError, MemoryGuardError
from .lowrank import LowRankMatrix, TuckerTensor, reconstruct
from .substeps import OdeRhs, krylov_expm_apply
from .tensor_ops import frobenius_norm, mode_product, multi_mode_product, qr_thin

DEFAULT_DENSE_CAP = 2 ** 24


@dataclass(frozen=True)
class Problem:
    """A right-hand side F(t, Y) with initial data and structure flags."""

    name: str
    dims: tuple[int, ...]
    field: str  # "real" | "complex"
    rhs: OdeRhs
    initial_value: np.ndarray
    exact_solution: Optional[Callable[[float], np.ndarray]] = None
    hermitian_generator: bool = False
    seed: Optional[int] = None

    @property
    def has_exact_increment(self) -> bool:
        return self.rhs.increment is not None


class _SkewMatrixExponential:
    """Fast evaluator of expm(t W) for a fixed real skew-symmetric W.

    Uses one real Schur decomposition W = Q T Q^T; T is block diagonal with
    2x2 rotation generators, so expm(t T) is assembled from cosines/sines and
    each evaluation costs two matrix products.
    """

    def __init__(self, w: np.ndarray):
        w = np.asarray(w, dtype=float)
        t_mat, q = scipy.linalg.schur(w, output="real")
        n = w.shape[0]
        scale = max(1.0, float(np.max(np.abs(t_mat))))
        pairs = []
        k = 0
        while k < n:
            if k + 1 < n and abs(t_mat[k + 1, k]) > 1e-14 * scale:
                pairs.append((k, t_mat[k, k + 1]))
                k += 2
            else:
                k += 1
        self._q = q
        self._pairs = pairs
        self._n = n

    def __call__(self, t: float) -> np.ndarray:
        rot = np.eye(self._n)
        for k, theta in self._pairs:
            c, s = np.cos(theta * t), np.sin(theta * t)
            rot[k, k] = c
            rot[k + 1, k + 1] = c
            rot[k, k + 1] = s
            rot[k + 1, k] = -s
        return self._q @ rot @ self._q.T


def problem_given_matrix(n: int, seed: int) -> Problem:
    """Explicit matrix path A(t) = expm(t W1) e^t D expm(t W2)^T.

    The right-hand side is the Y-independent derivative
    dA/dt = W1 A + A + A W2^T and the exact increment A(t1) - A(t0) is
    exposed, enabling exact substeps.
    """
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal((n, n))
    g2 = rng.standard_normal((n, n))
    w1 = (g1 - g1.T) / 2.0
    w2 = (g2 - g2.T) / 2.0
    d_diag = 2.0 ** (-np.arange(1, n + 1, dtype=float))
    e1 = _SkewMatrixExponential(w1)
    e2 = _SkewMatrixExponential(w2)

    @lru_cache(maxsize=8)
    def a_of(t: float) -> np.ndarray:
        mid = np.exp(t) * d_diag
        return e1(t) @ (mid[:, None] * e2(t).T)

    def fn(t, _y):
        a = a_of(float(t))
        return w1 @ a + a + a @ w2.T

    def increment(ta, tb):
        return a_of(float(tb)) - a_of(float(ta))

    rhs = OdeRhs(fn, linear=False, autonomous=False, increment=increment)
    return Problem(
        name="given-matrix",
        dims=(n, n),
        field="real",
        rhs=rhs,
        initial_value=a_of(0.0),
        exact_solution=lambda t: a_of(float(t)),
        seed=seed,
    )


def torsional_hamiltonian(n: int, d: int):
    """Returns (apply_h, dense_d, v_cos) for the discrete torsional operator
    H[Y] = -1/2 sum_j Y x_j D + Y x_1 Vcos ... x_d Vcos."""
    lap = np.zeros((n, n))
    idx = np.arange(n)
    lap[idx, idx] = 2.0
    lap[idx[:-1], idx[:-1] + 1] = -1.0
    lap[idx[:-1] + 1, idx[:-1]] = -1.0
    j = np.arange(-(n // 2), n - n // 2)
    v_cos = 1.0 - np.cos(2.0 * np.pi * j / n)
    pot = v_cos.copy()
    for _ in range(d - 1):
        pot = np.multiply.outer(pot, v_cos)

    def apply_h(y):
        out = np.zeros_like(y)
        for mode in range(d):
            out -= 0.5 * mode_product(y, mode, lap)
        return out + pot * y

    return apply_h, lap, v_cos


def problem_imag_schrodinger(n: int, d: int, seed: int = 0) -> Problem:
    """Discrete Schroedinger equation in imaginary time, Y' = -H[Y].

    Initial data: seeded random orthogonal bases U_i^0 and a diagonal core
    with entries 10^-j, j = 1..N -- singular values decay fast, so low-rank
    approximations of any rank r hit their plateau at the 10^-(r+1) level.
    """
    if n % 2 != 0:
        raise ConfigurationError("n must be even")
    if d not in (2, 3):
        raise ConfigurationError("d must be 2 or 3")
    apply_h, _, _ = torsional_hamiltonian(n, d)
    rhs = OdeRhs(lambda t, y: -apply_h(y), linear=True, autonomous=True)

    rng = np.random.default_rng(seed)
    bases = [qr_thin(rng.standard_normal((n, n))).q for _ in range(d)]
    core = np.zeros((n,) * d)
    diag_vals = 10.0 ** (-np.arange(1, n + 1, dtype=float))
    core[tuple(np.arange(n) for _ in range(d))] = diag_vals
    a0 = multi_mode_product(core, bases)

    return Problem(
        name="imag-schrodinger",
        dims=(n,) * d,
        field="real",
        rhs=rhs,
        initial_value=a0,
        seed=seed,
    )


def problem_schrodinger_2d(n: int) -> Problem:
    """Schroedinger equation i u_t = -1/2 Lap u + 1/2 x^T A x u on a periodic
    N x N Fourier grid over [-7.5, 7.5]^2, A = [[2, -1], [-1, 3]].

    The generator is Hermitian (flag set), so the exact flow conserves the
    Frobenius norm and Krylov exponential substeps apply.  The initial value
    is the normalized Gaussian pi^-1/2 exp(-x1^2/2 - (x2-1)^2/2) on the grid.
    """
    if n % 2 != 0:
        raise ConfigurationError("n must be even")
    length = 15.0
    x = -7.5 + length * np.arange(n) / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    d2 = np.real(np.fft.ifft((-(k ** 2))[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0))
    d2 = (d2 + d2.T) / 2.0  # exact circulant symmetry
    xg, yg = np.meshgrid(x, x, indexing="ij")
    v = 0.5 * (2.0 * xg ** 2 - 2.0 * xg * yg + 3.0 * yg ** 2)

    def fn(t, y):
        return -1j * (-0.5 * (d2 @ y + y @ d2) + v * y)

    u0 = (np.pi ** -0.5) * np.exp(-0.5 * x ** 2)[:, None] * np.exp(-0.5 * (x - 1.0) ** 2)[None, :]
    return Problem(
        name="schrodinger-2d",
        dims=(n, n),
        field="complex",
        rhs=OdeRhs(fn, linear=True, autonomous=True),
        initial_value=u0.astype(np.complex128),
        hermitian_generator=True,
    )


@dataclass
class ReferenceSolution:
    """High-accuracy dense snapshots of a problem trajectory."""

    times: np.ndarray
    snapshots: list[np.ndarray]
    method: str
    parameter: float
    dims: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.dims and self.snapshots:
            self.dims = self.snapshots[0].shape
        for snap in self.snapshots:
            if snap.shape != tuple(self.dims):
                raise DimensionMismatchError("snapshot dims differ from problem dims")

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t = {t}")
        return self.snapshots[i]


def compute_reference(problem: Problem, t_end: float, method: str = "rk45-adaptive",
                      tol_or_h: float = 1e-10, times=None, krylov_dim: int = 40,
                      max_dense_entries: int = DEFAULT_DENSE_CAP) -> ReferenceSolution:
    """Dense high-accuracy trajectory of the full problem.

    ``rk45-adaptive`` uses an embedded Dormand-Prince 4(5) pair with absolute
    and relative tolerance ``tol_or_h``; ``arnoldi-fixed`` steps the full
    linear autonomous system with a Krylov exponential at fixed step
    ``tol_or_h`` (snapshot times are snapped to that grid).
    """
    size = int(np.prod(problem.dims, dtype=np.int64))
    if size > max_dense_entries:
        raise MemoryGuardError(f"{size} dense entries exceed the cap {max_dense_entries}")
    if times is None:
        times = np.linspace(0.0, t_end, 11)
    times = np.asarray(times, dtype=float)
    dims = problem.dims
    y0 = problem.initial_value

    if method == "rk45-adaptive":
        def flat_rhs(t, y):
            return problem.rhs(t, y.reshape(dims, order="F")).ravel(order="F")

        sol = scipy.integrate.solve_ivp(
            flat_rhs, (0.0, t_end), y0.ravel(order="F"),
            method="RK45", rtol=tol_or_h, atol=tol_or_h, t_eval=times,
        )
        if not sol.success:
            raise RuntimeError(f"reference solver failed: {sol.message}")
        snaps = [sol.y[:, i].reshape(dims, order="F") for i in range(sol.y.shape[1])]
        return ReferenceSolution(times, snaps, method, float(tol_or_h))

    if method == "arnoldi-fixed":
        if not (problem.rhs.linear and problem.rhs.autonomous):
            raise ConfigurationError("arnoldi-fixed needs a linear autonomous problem")
        h = float(tol_or_h)
        if np.any(np.diff(times) < 0):
            raise ConfigurationError("snapshot times must be nondecreasing")
        targets = [int(round(t / h)) for t in times]
        actual = np.array([k * h for k in targets])
        snaps = []
        y = y0.copy()
        done = 0
        for target in targets:
            while done < target:
                y = krylov_expm_apply(lambda z: problem.rhs(0.0, z), y, h, krylov_dim)
                done += 1
            snaps.append(y.copy())
        return ReferenceSolution(actual, snaps, method, h)

    raise ConfigurationError(f"unknown reference method {method!r}")


def error_frobenius(y, ref) -> float:
    """|| reconstruct(y) - ref ||_F for a factored y and dense reference."""
    ref = np.asarray(ref)
    if isinstance(y, (LowRankMatrix, TuckerTensor)):
        dense = reconstruct(y)
    else:
        dense = np.asarray(y)
    if dense.shape != ref.shape:
        raise DimensionMismatchError(f"shapes {dense.shape} and {ref.shape} differ")
    return frobenius_norm(dense - ref)


_MAGIC = b"DLRT"
_VERSION = 1


def write_reference(path, ref: ReferenceSolution) -> None:
    """Binary snapshot file: magic, version, field byte, order, extents,
    snapshot count, then (time, payload) pairs in colexicographic order with
    little-endian float64 (complex as interleaved re, im)."""
    is_complex = any(np.iscomplexobj(s) for s in ref.snapshots)
    dims = tuple(int(d) for d in ref.dims)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BB", _VERSION, 1 if is_complex else 0))
        fh.write(struct.pack("<i", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}q", *dims))
        fh.write(struct.pack("<q", len(ref.snapshots)))
        for t, snap in zip(ref.times, ref.snapshots):
            fh.write(struct.pack("<d", float(t)))
            flat = np.asarray(snap).ravel(order="F")
            if is_complex:
                fh.write(flat.astype("<c16").tobytes())
            else:
                fh.write(flat.astype("<f8").tobytes())


def read_reference(path) -> ReferenceSolution:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a reference solution file")
        version, field_byte = struct.unpack("<BB", fh.read(2))
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        (order,) = struct.unpack("<i", fh.read(4))
        dims = struct.unpack(f"<{order}q", fh.read(8 * order))
        (count,) = struct.unpack("<q", fh.read(8))
        size = int(np.prod(dims, dtype=np.int64))
        dtype = "<c16" if field_byte == 1 else "<f8"
        itemsize = np.dtype(dtype).itemsize
        times = np.empty(count)
        snaps = []
        for i in range(count):
            (times[i],) = struct.unpack("<d", fh.read(8))
            buf = fh.read(size * itemsize)
            flat = np.frombuffer(buf, dtype=dtype)
            snaps.append(flat.reshape(dims, order="F").copy())
    return ReferenceSolution(times, snaps, "file", 0.0, dims=tuple(dims))
