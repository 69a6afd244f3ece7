"""Scalar reduction of the averaged-evolution equation.

When the input matrix family lies on the segment between the identity and
the uniform projector, M(t) = alpha(t) * 1 + (1 - alpha(t)) * Theta, the
matrix equation collapses to a scalar one for the coefficient beta(t) of
the averaged evolution:

    beta(T) = e^{-nu T} alpha(T)
              + nu e^{-nu T} int_0^T alpha(T-t) beta(t) e^{nu t} dt.

Three solution methods are provided: trapezoid marching (any input), an
exact polynomial method of steps for the alternating 1/0 input with period
tau, and a constant-coefficient ODE reconstruction for the raised-cosine
input at unit reduction rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .dstoch import theta
from .errors import (
    NonRealReconstructionError,
    ValidationFailure,
    ValueEscapeError,
)
from .volterra import TimeGrid, Trajectory, march_solve, SolverConfig

SCALAR_ESCAPE_TOL = 1e-7


# -- scalar inputs -----------------------------------------------------------

class ScalarInput:
    """Base class for inputs alpha(t) with values in [0, 1].

    Subclasses provide ``value`` (right-continuous), one-sided limits, and
    the set of discontinuities in an interval.
    """

    def value(self, t):
        raise NotImplementedError

    def values(self, ts):
        return np.array([self.value(t) for t in np.asarray(ts, dtype=float)])

    def left(self, t):
        return self.value(t)

    def right(self, t):
        return self.value(t)

    def jump_times(self, t0, t1):
        return np.empty(0)


class ConstantInput(ScalarInput):
    def __init__(self, c):
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"constant input must lie in [0, 1], got {c}")
        self.c = float(c)

    def value(self, t):
        return self.c

    def values(self, ts):
        return np.full(len(np.atleast_1d(ts)), self.c)


class PiecewiseInput(ScalarInput):
    """Repeating pattern of constant values on intervals of length tau.

    alpha(t) = pattern[floor(t / tau) mod len(pattern)], right-continuous.
    """

    def __init__(self, tau, pattern=(1.0, 0.0)):
        if tau <= 0:
            raise ValueError("tau must be positive")
        pattern = tuple(float(p) for p in pattern)
        if not pattern or any(not 0.0 <= p <= 1.0 for p in pattern):
            raise ValueError("pattern values must lie in [0, 1]")
        self.tau = float(tau)
        self.pattern = pattern

    def _segment(self, k):
        return self.pattern[k % len(self.pattern)]

    @staticmethod
    def _segment_index(r):
        # nudge by a few ulps so exact multiples land right-continuously
        # without absorbing genuinely lower points
        pad = 32.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(r))
        return np.floor(r + pad).astype(int)

    def value(self, t):
        return self._segment(int(self._segment_index(np.asarray(t / self.tau))))

    def values(self, ts):
        ks = self._segment_index(np.asarray(ts, dtype=float) / self.tau)
        pat = np.asarray(self.pattern)
        return pat[ks % len(pat)]

    def left(self, t):
        k = int(round(t / self.tau))
        if abs(t - k * self.tau) <= 1e-12 * max(1.0, t) and k >= 1:
            return self._segment(k - 1)
        return self.value(t)

    def right(self, t):
        return self.value(t)

    def jump_times(self, t0, t1):
        k0 = max(1, int(np.ceil(t0 / self.tau - 1e-12)))
        k1 = int(np.floor(t1 / self.tau + 1e-12))
        ts = [k * self.tau for k in range(k0, k1 + 1)
              if self._segment(k) != self._segment(k - 1)]
        return np.asarray(ts)


class CosineInput(ScalarInput):
    """alpha(t) = mean + amplitude * cos(t), constrained to [0, 1]."""

    def __init__(self, mean=0.5, amplitude=0.5):
        if mean - abs(amplitude) < 0.0 or mean + abs(amplitude) > 1.0:
            raise ValueError("cosine input leaves [0, 1]")
        self.mean = float(mean)
        self.amplitude = float(amplitude)

    def value(self, t):
        return self.mean + self.amplitude * np.cos(t)

    def values(self, ts):
        return self.mean + self.amplitude * np.cos(np.asarray(ts, dtype=float))


class TabulatedInput(ScalarInput):
    """Piecewise-linear interpolation of tabulated values in [0, 1]."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or len(times) < 2:
            raise ValueError("need matching 1-d time and value tables")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("tabulated values must lie in [0, 1]")
        self.times = times
        self.table = values

    def value(self, t):
        return float(np.interp(t, self.times, self.table))

    def values(self, ts):
        return np.interp(np.asarray(ts, dtype=float), self.times, self.table)


# -- scalar trajectory -------------------------------------------------------

@dataclass
class ScalarTrajectory:
    """beta values on a uniform grid plus a log of discontinuities.

    Node values are right-continuous; ``jumps`` holds (t, left, right)
    triples at the discontinuity times.
    """

    grid: TimeGrid
    beta: np.ndarray
    jumps: list = field(default_factory=list)

    @property
    def times(self):
        return self.grid.nodes

    def at_time(self, t):
        return float(self.beta[self.grid.index_of(t)])


def scalar_trajectory_to_csv(traj: ScalarTrajectory) -> str:
    """CSV with a commented ``jumps`` sidecar listing discontinuities."""
    lines = ["t,beta"]
    for t, b in zip(traj.times, traj.beta):
        lines.append(f"{t:.17g},{b:.17g}")
    if traj.jumps:
        lines.append("# jumps")
        lines.append("# t,left,right")
        for t, lo, hi in traj.jumps:
            lines.append(f"# {t:.17g},{lo:.17g},{hi:.17g}")
    return "\n".join(lines) + "\n"


# -- marching solver ---------------------------------------------------------

def scalar_march(alpha: ScalarInput, nu, grid: TimeGrid, *,
                 escape_tol=SCALAR_ESCAPE_TOL) -> ScalarTrajectory:
    """Trapezoid marching of the scalar equation.

    Works on the rescaled unknown N(t) = e^{nu t} beta(t) and divides by
    the discrete growth factor of the scheme.  Quadrature panels use
    one-sided limits at discontinuities of alpha, which therefore must sit
    on grid nodes.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    h, K = grid.h, grid.steps
    ts = grid.nodes
    jumps = np.asarray(alpha.jump_times(0.0, grid.t_max), dtype=float)
    jump_idx = sorted({grid.index_of(t) for t in jumps if 0.0 < t <= grid.t_max})

    aR = np.asarray(alpha.values(ts), dtype=float).copy()
    aL = aR.copy()
    for j in jump_idx:
        aL[j] = float(alpha.left(ts[j]))
        aR[j] = float(alpha.right(ts[j]))

    def march(lo, hi):
        denom = 1.0 - nu * h / 2.0 * hi[0]
        NL = np.empty(K + 1)
        NR = np.empty(K + 1)
        NL[0] = NR[0] = hi[0]
        for k in range(1, K + 1):
            acc = 0.5 * lo[k] * NR[0]
            if k > 1:
                acc += 0.5 * np.dot(hi[k - 1:0:-1], NL[1:k])
                acc += 0.5 * np.dot(lo[k - 1:0:-1], NR[1:k])
            NL[k] = (lo[k] + nu * h * acc) / denom
            NR[k] = NL[k] + (hi[k] - lo[k])
        return NL, NR

    NL, NR = march(aL, aR)
    # unit input through the same arithmetic path, so the normalized
    # solution of the unit problem is exactly one at every node
    ones = np.ones(K + 1)
    _, s = march(ones, ones)
    betaR = NR / s
    betaL = NL / s
    lo, hi = betaR.min(), betaR.max()
    if lo < -escape_tol or hi > 1.0 + escape_tol:
        k = int(np.argmin(betaR) if lo < -escape_tol else np.argmax(betaR))
        raise ValueEscapeError(k, float(betaR[k]))
    jumps_log = [(float(ts[j]), float(betaL[j]), float(betaR[j])) for j in jump_idx]
    return ScalarTrajectory(grid=grid, beta=betaR, jumps=jumps_log)


# -- lift to matrices --------------------------------------------------------

class LiftedPath:
    """Matrix path alpha(t) * 1 + (1 - alpha(t)) * Theta_n."""

    def __init__(self, alpha: ScalarInput, n):
        self.alpha = alpha
        self.n = int(n)
        self._eye = np.eye(self.n)
        self._theta = theta(self.n).entries

    def _lift(self, a):
        return a * self._eye + (1.0 - a) * self._theta

    def __call__(self, t):
        return self._lift(float(self.alpha.value(t)))

    def many(self, ts):
        a = np.asarray(self.alpha.values(ts), dtype=float)
        return a[:, None, None] * self._eye + (1.0 - a)[:, None, None] * self._theta

    def left(self, t):
        return self._lift(float(self.alpha.left(t)))

    def right(self, t):
        return self._lift(float(self.alpha.right(t)))

    def jump_times(self, t0, t1):
        return self.alpha.jump_times(t0, t1)


def lift_scalar(traj: ScalarTrajectory, n) -> Trajectory:
    """Lift a scalar trajectory to matrices beta * 1 + (1 - beta) * Theta_n."""
    if n < 2:
        raise ValueError("matrix lift needs n >= 2")
    eye = np.eye(n)
    th = theta(n).entries
    b = traj.beta
    values = b[:, None, None] * eye + (1.0 - b)[:, None, None] * th
    for k, m in enumerate(values):
        lo = m.min()
        if lo < -1e-9:
            raise ValidationFailure(k, float(-lo), "lifted trajectory")
    jump_nodes = tuple(traj.grid.index_of(t) for t, _, _ in traj.jumps)
    left_values = {traj.grid.index_of(t): lo * eye + (1.0 - lo) * th
                   for t, lo, _ in traj.jumps}
    return Trajectory(grid=traj.grid, values=values,
                      jump_nodes=jump_nodes, left_values=left_values)


# -- exact method of steps for the alternating input -------------------------

def piecewise_delay_solve(tau, nu, n_intervals, *, nodes_per_interval=200) -> ScalarTrajectory:
    """Exact interval-by-interval solution for the alternating 1/0 input.

    On each interval [i tau, (i+1) tau) the derivative of beta is a lag
    combination of earlier intervals,

        beta'(T) = nu * sum_{k=1}^{i} (-1)^k e^{-nu k tau} beta(T - k tau),

    with jump conditions beta(k tau +) - beta(k tau -) = (-1)^k e^{-nu k tau}.
    Since the interval-0 solution is constant, every interval is a
    polynomial in the local coordinate; the recursion integrates those
    polynomials exactly, so the first two intervals reproduce the analytic
    solutions 1 and 1 + (nu tau - nu T - 1) e^{-nu tau} to roundoff.
    """
    if tau <= 0 or nu < 0:
        raise ValueError("need tau > 0 and nu >= 0")
    K = int(n_intervals)
    if K < 1:
        raise ValueError("need at least one interval")
    decay = [(-1.0) ** k * np.exp(-nu * k * tau) for k in range(K + 1)]
    polys = [Polynomial([1.0])]
    for i in range(1, K):
        deriv = Polynomial([0.0])
        for k in range(1, i + 1):
            deriv = deriv + (nu * decay[k]) * polys[i - k]
        start = polys[i - 1](tau) + decay[i]
        polys.append(deriv.integ(1, k=[start]))

    grid = TimeGrid(t_max=K * tau, steps=K * int(nodes_per_interval))
    ts = grid.nodes
    beta = np.empty(len(ts))
    for idx, t in enumerate(ts):
        i = min(int(np.floor(t / tau + 1e-12)), K - 1)
        u = t - i * tau
        if idx == len(ts) - 1:
            # Final node: store the right-continuous value like scalar_march.
            beta[idx] = polys[K - 1](tau) + decay[K]
        else:
            beta[idx] = polys[i](u)
    jumps = [(k * tau, float(polys[k - 1](tau)),
              float(polys[k - 1](tau) + decay[k])) for k in range(1, K + 1)]
    return ScalarTrajectory(grid=grid, beta=beta, jumps=jumps)


# -- constant-coefficient ODE route for the raised-cosine input ---------------

# With alpha(t) = 1/2 + cos(t)/2 and unit reduction rate, the rescaled
# solution splits into oscillation channels e^t beta = a + b e^{it} +
# conj(b) e^{-it} whose coefficients satisfy constant-coefficient cubics:
#     a''' - a'' + a' - a/2 = 0          a(0) = a'(0) = a''(0) = 1/2
#     b''' + (3i-1) b'' - 2(1+i) b' + b/2 = 0
#                                        b(0) = 1/4, b'(0) = 1/4,
#                                        b''(0) = (1 - i)/4
# The channels are defined by a = 1/2 + (1/2) int N and
# b = 1/4 + (1/4) int e^{-it} N for N = e^t beta, from which the equations
# and initial data follow by differentiation.

_A_LAST_ROW = np.array([0.5, -1.0, 1.0])
_A_INIT = np.array([0.5, 0.5, 0.5])
_B_LAST_ROW = np.array([-0.5, 2.0 + 2.0j, 1.0 - 3.0j])
_B_INIT = np.array([0.25, 0.25, 0.25 - 0.25j])


def _companion_real6(last_row_complex):
    """Real 6x6 embedding [[Re, -Im], [Im, Re]] of a complex companion."""
    c = np.zeros((3, 3), dtype=complex)
    c[0, 1] = 1.0
    c[1, 2] = 1.0
    c[2, :] = last_row_complex
    top = np.hstack([c.real, -c.imag])
    bot = np.hstack([c.imag, c.real])
    return np.vstack([top, bot])


def _expm_states(system, y0, ts):
    """Rows of exp(system * t) @ y0 for each t via eigendecomposition."""
    w, v = np.linalg.eig(np.asarray(system, dtype=float))
    coef = np.linalg.solve(v, np.asarray(y0, dtype=complex))
    return np.real(np.exp(np.outer(ts, w))[:, None, :] * (v * coef)).sum(axis=2)


@dataclass
class TrigSolution:
    """Cosine-input solution with channel states for residual checking."""

    trajectory: ScalarTrajectory
    a_state: np.ndarray      # (len, 3): a, a', a''
    b_state: np.ndarray      # (len, 3) complex: b, b', b''
    imag_residual: float

    def states_at(self, ts):
        """Channel states at arbitrary times (exact, for residual oracles)."""
        ts = np.asarray(ts, dtype=float)
        a = _expm_states(_companion_matrix_a(), _A_INIT, ts)
        z = _expm_states(_companion_real6(_B_LAST_ROW),
                         np.concatenate([_B_INIT.real, _B_INIT.imag]), ts)
        return a, z[:, :3] + 1j * z[:, 3:]


def _companion_matrix_a():
    c = np.zeros((3, 3))
    c[0, 1] = 1.0
    c[1, 2] = 1.0
    c[2, :] = _A_LAST_ROW
    return c


def trig_ode_solve(grid: TimeGrid, *, imag_tol=1e-7) -> TrigSolution:
    """Solve the raised-cosine input case through the channel ODEs.

    The two cubics are integrated as first-order systems (the complex one
    as a 6-dimensional real system) by exact matrix exponentials of their
    companion matrices, and beta is reconstructed as
    e^{-t} (a + b e^{it} + conj(b) e^{-it}).  Raises when the reconstruction
    has imaginary residue above imag_tol.
    """
    ts = grid.nodes
    a_state = _expm_states(_companion_matrix_a(), _A_INIT, ts)
    z = _expm_states(_companion_real6(_B_LAST_ROW),
                     np.concatenate([_B_INIT.real, _B_INIT.imag]), ts)
    b_state = z[:, :3] + 1j * z[:, 3:]
    b = b_state[:, 0]
    osc = np.exp(1j * ts)
    recon = a_state[:, 0] + b * osc + np.conj(b) * np.conj(osc)
    imag_res = float(np.abs(recon.imag).max())
    if imag_res > imag_tol:
        raise NonRealReconstructionError(imag_res)
    beta = np.exp(-ts) * recon.real
    return TrigSolution(trajectory=ScalarTrajectory(grid=grid, beta=beta),
                        a_state=a_state, b_state=b_state,
                        imag_residual=imag_res)


def scalar_march_as_matrix(alpha: ScalarInput, nu, grid: TimeGrid, n) -> Trajectory:
    """Full matrix solve of the lifted input (cross-validation helper)."""
    return march_solve(LiftedPath(alpha, n), SolverConfig(nu=nu, grid=grid))
