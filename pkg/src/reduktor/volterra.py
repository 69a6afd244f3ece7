"""Volterra solvers for the averaged stochastic-reduction evolution.

The averaged evolution Mbar solves a linear Volterra equation of the
second kind,

    Mbar(T) = e^{-nu T} ( M(T) + nu * int_0^T M(T-t) Mbar(t) e^{nu t} dt ),

equivalently, with N(t) = e^{nu t} Mbar(t),

    N(T) = M(T) + nu * int_0^T M(T-t) N(t) dt.

The solvers march the rescaled equation with the composite trapezoid rule
on a uniform grid.  The back-rescaling divides by the scheme's own
discrete growth factor (the trapezoid solution of the scalar unit problem
n(T) = 1 + nu * int n), not by e^{nu T}: the two agree to O(h^2), but the
discrete factor is exactly the row/column-sum mode of the marched
solution, so every output node is doubly stochastic to machine precision
instead of drifting by e^{T nu^3 h^2 / 12}.

A generalized kernel form with arrival weight a(T) and memory weight
b(t, T), constrained by int_0^T b(t, T) dt = 1 - a(T), is solved by the
same marching scheme.

Sources are callables t -> (n, n) array; objects may additionally expose
``many(ts)`` for batched evaluation and ``left``/``right``/``jump_times``
for piecewise-continuous inputs, in which case quadrature panels never
straddle a discontinuity (jumps must sit on grid nodes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from .dstoch import DStochMatrix, dstoch_residual
from .errors import (
    GridTooCoarseError,
    KernelNormalizationViolation,
    TailBoundExceededError,
    UnsupportedOrderError,
    ValidationFailure,
)

TOL_TRAJ = 1e-7
DEFAULT_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0, h, 2h, ..., t_max with h = t_max / steps."""

    t_max: float
    steps: int

    def __post_init__(self):
        if self.t_max <= 0 or self.steps < 1:
            raise ValueError(f"need t_max > 0 and steps >= 1, got {self}")

    @property
    def h(self) -> float:
        return self.t_max / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        out = np.linspace(0.0, self.t_max, self.steps + 1)
        out.setflags(write=False)
        return out

    def index_of(self, t, tol=1e-9) -> int:
        """Node index of a time that must lie on the grid."""
        j = int(round(t / self.h))
        if not (0 <= j <= self.steps) or abs(t - j * self.h) > tol * max(1.0, abs(t)):
            raise ValueError(f"time {t!r} does not lie on the grid (h={self.h!r})")
        return j


@dataclass(frozen=True)
class SolverConfig:
    """Reduction rate, grid, and optional series truncation order."""

    nu: float
    grid: TimeGrid
    n_max: int | None = None

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"reduction rate must be >= 0, got {self.nu}")


@dataclass(frozen=True)
class Kernel:
    """Generalized arrival/memory kernel pair.

    ``a(T)`` weights the bare evolution, ``b(t, T)`` weights the memory
    integral; both nonnegative with int_0^T b(t, T) dt = 1 - a(T).
    Functions must broadcast over numpy arrays in their first argument.
    """

    a: object
    b: object
    description: str = ""


def poisson_kernel(nu) -> Kernel:
    """Kernel reproducing the exponential-waiting-time equation."""
    return Kernel(a=lambda T: np.exp(-nu * np.asarray(T, dtype=float)),
                  b=lambda t, T: nu * np.exp(-nu * (T - np.asarray(t, dtype=float))),
                  description=f"poisson(nu={nu:g})")


def kernel_normalization_residual(kernel: Kernel, T, quad_steps=1000) -> float:
    """| int_0^T b(t, T) dt + a(T) - 1 | by composite Simpson quadrature.

    Simpson (trapezoid with one Richardson step) is used so the residual
    reflects the kernel rather than quadrature error at moderate step
    counts; the step count is rounded up to an even number.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if T == 0:
        return float(abs(float(kernel.a(0.0)) - 1.0))
    m = int(quad_steps)
    if m % 2:
        m += 1
    ts = np.linspace(0.0, T, m + 1)
    vals = np.asarray(kernel.b(ts, T), dtype=float)
    if vals.shape != ts.shape:
        vals = np.array([float(kernel.b(t, T)) for t in ts])
    h = T / m
    integral = h / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum()
                          + 2.0 * vals[2:-1:2].sum())
    return float(abs(integral + float(kernel.a(T)) - 1.0))


# -- time-path protocol ------------------------------------------------------

class _CallablePath:
    """Wrap a plain callable as a smooth time path."""

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, t):
        out = self._fn(t)
        return np.asarray(getattr(out, "entries", out), dtype=float)

    def many(self, ts):
        return np.stack([self(t) for t in np.asarray(ts, dtype=float)])

    def left(self, t):
        return self(t)

    def right(self, t):
        return self(t)

    def jump_times(self, t0, t1):
        return np.empty(0)


class ConstantPath:
    """Time-independent matrix source."""

    def __init__(self, matrix):
        self.matrix = np.asarray(getattr(matrix, "entries", matrix), dtype=float)

    def __call__(self, t):
        return self.matrix

    def many(self, ts):
        return np.broadcast_to(self.matrix, (len(ts),) + self.matrix.shape)

    def left(self, t):
        return self.matrix

    def right(self, t):
        return self.matrix

    def jump_times(self, t0, t1):
        return np.empty(0)


def as_path(m):
    """Coerce a solver input into the time-path protocol."""
    if all(hasattr(m, k) for k in ("many", "left", "right", "jump_times")):
        return m
    if callable(m):
        return _CallablePath(m)
    raise TypeError(f"cannot interpret {type(m).__name__} as a time-dependent matrix")


@dataclass
class Trajectory:
    """Matrix values on a uniform grid, right-continuous at jump nodes."""

    grid: TimeGrid
    values: np.ndarray
    jump_nodes: tuple = ()
    left_values: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at_time(self, t) -> np.ndarray:
        return self.values[self.grid.index_of(t)]

    def __len__(self):
        return len(self.values)


def trajectory_to_csv(traj: Trajectory) -> str:
    """Serialize to CSV: header t,entry_0_0,... and 17 significant digits."""
    n = traj.values.shape[-1]
    header = "t," + ",".join(f"entry_{i}_{j}" for i in range(n) for j in range(n))
    lines = [header]
    for t, m in zip(traj.times, traj.values):
        row = [f"{t:.17g}"] + [f"{x:.17g}" for x in m.ravel()]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _validate_nodes(values, tol, what="trajectory"):
    for k, m in enumerate(values):
        res = dstoch_residual(m)
        if res > tol:
            raise ValidationFailure(k, res, detail=what)


def _unit_growth(nu, h, steps) -> np.ndarray:
    """Trapezoid solution of n(T) = 1 + nu * int_0^T n(t) dt on the grid.

    Equals ((1 + nu h / 2) / (1 - nu h / 2))^k; computed by the recursion
    so it shares the scheme's arithmetic exactly.
    """
    s = np.empty(steps + 1)
    s[0] = 1.0
    q = nu * h / 2.0
    for k in range(1, steps + 1):
        acc = 0.5 * s[0] + s[1:k].sum()
        s[k] = (1.0 + nu * h * acc) / (1.0 - q)
    return s


def march_solve(m, cfg: SolverConfig, *, tol_traj=TOL_TRAJ) -> Trajectory:
    """March the rescaled equation N(T) = M(T) + nu int_0^T M(T-t) N(t) dt.

    Composite trapezoid on the uniform grid; the implicit endpoint term is
    solved exactly through a precomputed factor.  The output is N divided
    by the discrete growth factor, validated doubly stochastic at every
    node within tol_traj.
    """
    path = as_path(m)
    grid, nu, h = cfg.grid, cfg.nu, cfg.grid.h
    K = grid.steps
    ts = grid.nodes
    jumps = np.asarray(path.jump_times(0.0, grid.t_max), dtype=float)
    s = _unit_growth(nu, h, K)
    q = nu * h / 2.0

    if jumps.size == 0:
        M = np.asarray(path.many(ts), dtype=float)
        n = M.shape[-1]
        pref = np.linalg.inv(np.eye(n) - q * M[0])
        N = np.empty_like(M)
        N[0] = M[0]
        for k in range(1, K + 1):
            acc = 0.5 * (M[k] @ N[0])
            if k > 1:
                acc += np.einsum("tij,tjk->ik", M[k - 1:0:-1], N[1:k])
            N[k] = pref @ (M[k] + nu * h * acc)
        out = N / s[:, None, None]
        _validate_nodes(out, tol_traj)
        return Trajectory(grid=grid, values=out)

    # Piecewise-continuous source: one-sided limits at jump nodes so the
    # trapezoid rule never straddles a discontinuity.
    jump_idx = sorted({grid.index_of(t) for t in jumps if 0.0 < t <= grid.t_max})
    ML = np.asarray(path.many(ts), dtype=float).copy()
    MR = ML.copy()
    for j in jump_idx:
        ML[j] = np.asarray(path.left(ts[j]), dtype=float)
        MR[j] = np.asarray(path.right(ts[j]), dtype=float)
    n = ML.shape[-1]
    pref = np.linalg.inv(np.eye(n) - q * MR[0])
    NL = np.empty_like(ML)
    NR = np.empty_like(ML)
    NL[0] = NR[0] = MR[0]
    for k in range(1, K + 1):
        acc = 0.5 * (ML[k] @ NR[0])
        if k > 1:
            acc += 0.5 * np.einsum("tij,tjk->ik", MR[k - 1:0:-1], NL[1:k])
            acc += 0.5 * np.einsum("tij,tjk->ik", ML[k - 1:0:-1], NR[1:k])
        NL[k] = pref @ (ML[k] + nu * h * acc)
        NR[k] = NL[k] + (MR[k] - ML[k])
    outL = NL / s[:, None, None]
    outR = NR / s[:, None, None]
    _validate_nodes(outR, tol_traj)
    for j in jump_idx:
        res = dstoch_residual(outL[j])
        if res > tol_traj:
            raise ValidationFailure(j, res, detail="left limit")
    return Trajectory(grid=grid, values=outR,
                      jump_nodes=tuple(jump_idx),
                      left_values={j: outL[j] for j in jump_idx})


def march_solve_general(m, kernel: Kernel, grid: TimeGrid, *,
                        tol_traj=TOL_TRAJ, norm_tol=1e-6) -> Trajectory:
    """March Mbar(T) = a(T) M(T) + int_0^T M(T-t) Mbar(t) b(t, T) dt.

    The kernel normalization is checked on sampled horizons first.  Each
    node is divided by the discrete unit-mode factor of the same scheme,
    keeping the output doubly stochastic to machine precision.
    """
    for T in (grid.t_max, grid.t_max / 2.0, grid.t_max / 4.0):
        res = kernel_normalization_residual(kernel, T, quad_steps=2048)
        if res > norm_tol:
            raise KernelNormalizationViolation(T, res)
    path = as_path(m)
    if np.asarray(path.jump_times(0.0, grid.t_max)).size:
        raise ValueError("the generalized-kernel solver requires a continuous source")
    h, K = grid.h, grid.steps
    ts = grid.nodes
    M = np.asarray(path.many(ts), dtype=float)
    n = M.shape[-1]
    eye = np.eye(n)
    out = np.empty_like(M)
    sigma = np.empty(K + 1)
    a0 = float(kernel.a(0.0))
    out[0] = a0 * M[0]
    sigma[0] = a0
    for k in range(1, K + 1):
        T = ts[k]
        bw = np.asarray(kernel.b(ts[:k + 1], T), dtype=float)
        aT = float(kernel.a(T))
        w = np.full(k + 1, h)
        w[0] = w[-1] = h / 2.0
        acc = np.einsum("t,tij,tjk->ik", (w * bw)[:k], M[k:0:-1], out[:k])
        diag = w[-1] * bw[-1]
        rhs = aT * M[k] + acc
        out[k] = np.linalg.solve(eye - diag * M[0], rhs)
        sigma[k] = (aT + float(np.dot((w * bw)[:k], sigma[:k]))) / (1.0 - diag)
    out /= sigma[:, None, None]
    _validate_nodes(out, tol_traj)
    return Trajectory(grid=grid, values=out)


@dataclass
class SeriesResult:
    """Truncated realization-count expansion at one horizon."""

    value: DStochMatrix
    n_terms: int
    tail_bound: float


def _series_levels(M, h, K):
    """Generator of iterated-integral levels F_1 = M, F_m = conv(M, F_{m-1})."""
    F = M.copy()
    u = np.ones(K + 1)
    yield F, u
    while True:
        Fn = np.zeros_like(F)
        un = np.zeros(K + 1)
        for j in range(1, K + 1):
            acc = 0.5 * (M[j] @ F[0]) + 0.5 * (M[0] @ F[j])
            uacc = 0.5 * (u[0] + u[j])
            if j > 1:
                acc += np.einsum("tij,tjk->ik", M[j - 1:0:-1], F[1:j])
                uacc += u[1:j].sum()
            Fn[j] = h * acc
            un[j] = h * uacc
        F, u = Fn, un
        yield F, u


def _pick_series_order(nu, T, n_max, tail_tol):
    mu = nu * T
    if n_max is not None:
        tail = float(stats.poisson.sf(n_max, mu)) if mu > 0 else 0.0
        if tail > tail_tol:
            raise TailBoundExceededError(
                f"Poisson tail P[K > {n_max}] = {tail:.3e} exceeds {tail_tol:g} at nu*T={mu:g}")
        return n_max, tail
    if mu == 0:
        return 0, 0.0
    k = max(1, int(math.ceil(mu)))
    while float(stats.poisson.sf(k, mu)) > tail_tol:
        k += 1
    return k, float(stats.poisson.sf(k, mu))


def neumann_series(m, cfg: SolverConfig, T, *, tail_tol=DEFAULT_TAIL_TOL) -> SeriesResult:
    """Realization-count expansion truncated by the Poisson tail bound.

    Evaluates sum_{k=0}^{n_max} nu^k F_{k+1}(T) over the normalizing unit
    series, where F_1 = M and F_{m+1}(T) = int_0^T M(T-t) F_m(t) dt by
    iterated trapezoid quadrature.  The e^{-nu T} prefactor cancels in the
    normalization, so no large exponentials are formed.
    """
    traj = neumann_series_trajectory(m, cfg, tail_tol=tail_tol, horizon=T)
    nmax, tail = _pick_series_order(cfg.nu, T, cfg.n_max, tail_tol)
    return SeriesResult(value=DStochMatrix(traj.values[-1]),
                        n_terms=nmax, tail_bound=tail)


def neumann_series_trajectory(m, cfg: SolverConfig, *, tail_tol=DEFAULT_TAIL_TOL,
                              horizon=None) -> Trajectory:
    """Series evaluation at every grid node up to the horizon."""
    grid, nu = cfg.grid, cfg.nu
    h = grid.h
    if h * nu > 0.5:
        raise GridTooCoarseError(
            f"h * nu = {h * nu:g} > 0.5; refine the grid for the series expansion")
    T = grid.t_max if horizon is None else float(horizon)
    K = grid.index_of(T)
    if K == grid.steps:
        sub = grid
    else:
        sub = TimeGrid(t_max=float(grid.nodes[K]), steps=K)
    path = as_path(m)
    if np.asarray(path.jump_times(0.0, T)).size:
        raise ValueError("the series evaluator requires a continuous source")
    M = np.asarray(path.many(grid.nodes[:K + 1]), dtype=float)
    nmax, _tail = _pick_series_order(nu, T, cfg.n_max, tail_tol)
    total = np.zeros_like(M)
    mass = np.zeros(K + 1)
    gen = _series_levels(M, h, K)
    coeff = 1.0
    for level in range(nmax + 1):
        F, u = next(gen)
        total += coeff * F
        mass += coeff * u
        coeff *= nu
    out = total / mass[:, None, None]
    _validate_nodes(out, 1e-9, "series")
    return Trajectory(grid=sub, values=out)


def derivative_consistency(m, traj: Trajectory, cfg: SolverConfig, k=1) -> float:
    """Residual of the once-differentiated equation along a trajectory.

    Differentiating the rescaled equation once gives

        Mbar'(T) = e^{-nu T} [ M'(T) + L1(T)
                               + nu int_0^T M(T-t) Mbar'(t) e^{nu t} dt ]

    with the lag term L1(T) = nu M(T) (Mbar(0) - 1), which vanishes for
    sources normalized to M(0) = identity.  Both derivatives are formed by
    second-order finite differences of the node values; the returned value
    is the largest sup-norm residual over the nodes.  Only first order
    (k=1) is supported.
    """
    if k != 1:
        raise UnsupportedOrderError(f"only k=1 is implemented, got k={k}")
    grid, nu, h = cfg.grid, cfg.nu, cfg.grid.h
    K = grid.steps
    ts = grid.nodes
    path = as_path(m)
    M = np.asarray(path.many(ts), dtype=float)
    Mbar = traj.values

    def fd(stack):
        d = np.empty_like(stack)
        d[1:-1] = (stack[2:] - stack[:-2]) / (2.0 * h)
        d[0] = (-3.0 * stack[0] + 4.0 * stack[1] - stack[2]) / (2.0 * h)
        d[-1] = (3.0 * stack[-1] - 4.0 * stack[-2] + stack[-3]) / (2.0 * h)
        return d

    dM = fd(M)
    dMbar = fd(Mbar)
    ew = np.exp(nu * ts)
    lag = Mbar[0] - np.eye(M.shape[-1])
    worst = 0.0
    for j in range(1, K + 1):
        w = np.full(j + 1, h)
        w[0] = w[-1] = h / 2.0
        integ = np.einsum("t,tij,tjk->ik", w * ew[:j + 1], M[j::-1], dMbar[:j + 1])
        rhs = np.exp(-nu * ts[j]) * (dM[j] + nu * (M[j] @ lag) + nu * integ)
        worst = max(worst, float(np.abs(dMbar[j] - rhs).max()))
    return worst
