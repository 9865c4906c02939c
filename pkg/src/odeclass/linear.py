"""Fundamental kernels and high-accuracy trajectories for x'' + a x' + b x = f.

The solution machinery has two independent routes on purpose. The primary
route integrates one augmented linear ODE system for (x, x', y1, y2, y2', Q)
with an adaptive Runge-Kutta pair, so every exponential-average is exact ODE
semantics rather than quadrature. The secondary route evaluates the
closed-form fundamental kernel k and convolves it against sampled data by the
trapezoid rule; it exists so the two routes can be checked against each other,
and is the one whose error shrinks like h^2 under grid refinement.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import lfilter

from .forcing import Expr, eval_forcing, scalar_callable
from .series import SampledSeries
from .system import SystemParams

__all__ = [
    "Kernel",
    "Trajectory",
    "IntegrationAbort",
    "make_kernel",
    "homogeneous_solution",
    "integrate",
    "repeated_exp_filter",
    "exp_filter_sampled",
    "convolve_kernel",
]

# Discriminants this close to zero collapse to the repeated-root formulas;
# the two-root expressions suffer catastrophic cancellation there.
_DEGENERATE_TOL = 1e-12


class IntegrationAbort(RuntimeError):
    """The adaptive integrator could not continue (step underflow or non-finite values).

    `last_time` is the last reachable output time; `partial` holds whatever
    prefix of the trajectory was completed, or None when fewer than two output
    points were reached.
    """

    def __init__(self, message, last_time=0.0, partial=None):
        super().__init__(message)
        self.last_time = float(last_time)
        self.partial = partial


@dataclass(frozen=True)
class Kernel:
    """Closed-form fundamental solution k with k(0)=0, k'(0)=1, and its derivatives.

    regime is one of "Overdamped", "Critical", "Underdamped". For the
    overdamped regime `p` and `q` are the two real characteristic roots
    (p > q); for the critical regime `p` is the repeated root and `q` is
    unused; for the underdamped regime `p` is the real part and `q` the
    angular frequency of the complex pair.
    """

    regime: str
    a: float
    b: float
    p: float
    q: float

    def k(self, t):
        t = np.asarray(t, dtype=float)
        if self.regime == "Overdamped":
            return (np.exp(self.p * t) - np.exp(self.q * t)) / (self.p - self.q)
        if self.regime == "Critical":
            return t * np.exp(self.p * t)
        return np.exp(self.p * t) * np.sin(self.q * t) / self.q

    def kprime(self, t):
        t = np.asarray(t, dtype=float)
        if self.regime == "Overdamped":
            return (self.p * np.exp(self.p * t) - self.q * np.exp(self.q * t)) / (self.p - self.q)
        if self.regime == "Critical":
            return (1.0 + self.p * t) * np.exp(self.p * t)
        s, w = self.p, self.q
        return np.exp(s * t) * (s * np.sin(w * t) / w + np.cos(w * t))

    def ksecond(self, t):
        t = np.asarray(t, dtype=float)
        if self.regime == "Overdamped":
            # through the kernel's own ODE: exact at t=0, where the two-root
            # form rounds (p^2 - q^2)/(p - q) away from p + q = -a
            return -self.a * self.kprime(t) - self.b * self.k(t)
        if self.regime == "Critical":
            return (2.0 * self.p + self.p**2 * t) * np.exp(self.p * t)
        s, w = self.p, self.q
        return np.exp(s * t) * ((s * s - w * w) * np.sin(w * t) / w + 2.0 * s * np.cos(w * t))


def make_kernel(params):
    """Build the fundamental kernel for the given coefficients.

    The regime follows the sign of the discriminant a^2 - 4b, with a
    relative-width dead band around zero mapped to the repeated-root form.
    """
    a, b = params.a, params.b
    disc = a * a - 4.0 * b
    if abs(disc) < _DEGENERATE_TOL * (1.0 + a * a):
        return Kernel("Critical", a, b, -a / 2.0, 0.0)
    if disc > 0.0:
        root = math.sqrt(disc)
        return Kernel("Overdamped", a, b, (-a + root) / 2.0, (-a - root) / 2.0)
    return Kernel("Underdamped", a, b, -a / 2.0, math.sqrt(-disc) / 2.0)


def homogeneous_solution(params, t):
    """Value and derivative at `t` of the unforced solution with the stored initial state.

    Returns the pair (x_H(t), x_H'(t)); both entries are arrays when `t` is.
    """
    kern = make_kernel(params)
    kv, kp, ks = kern.k(t), kern.kprime(t), kern.ksecond(t)
    a = params.a
    xh = params.xi0 * (kp + a * kv) + params.xi1 * kv
    xhp = params.xi0 * (ks + a * kp) + params.xi1 * kp
    return xh, xhp


@dataclass(frozen=True)
class Trajectory:
    """Solution bundle on a shared uniform grid.

    Carries x, x', the one- and two-fold exponential averages y1 and y2 (with
    y2'), and the cumulative forcing integral Q. `interpolant`, when present,
    is the integrator's dense output: a callable mapping times to the stacked
    6-row state (x, x', y1, y2, y2', Q).
    """

    grid: np.ndarray
    x: np.ndarray
    xprime: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y2prime: np.ndarray
    Q: np.ndarray
    params: SystemParams
    forcing: Expr
    interpolant: object = field(default=None, compare=False)

    def series(self, name):
        """One channel as a SampledSeries; name is a Trajectory field name."""
        return SampledSeries(self.grid, getattr(self, name))

    def state_at(self, times):
        """Dense-output state at arbitrary times within the grid span (6 rows)."""
        if self.interpolant is None:
            raise ValueError("trajectory was produced without dense output")
        return self.interpolant(np.asarray(times, dtype=float))

    @property
    def h(self):
        return float(self.grid[1] - self.grid[0])


def _augmented_rhs(params, f):
    a, b = params.a, params.b
    fn = scalar_callable(f)

    def rhs(t, u):
        fv = fn(t)
        if not math.isfinite(fv):
            raise IntegrationAbort(f"forcing became non-finite near t={t:.6g}", last_time=t)
        return (
            u[1],
            fv - a * u[1] - b * u[0],
            -u[2] + fv,
            u[4],
            fv - 2.0 * u[4] - u[3],
            fv,
        )

    return rhs


def integrate(params, f, horizon, tol=1e-9, h_max=0.01, dense=False):
    """Solve the augmented system for (x, x', y1, y2, y2', Q) up to `horizon`.

    Parameters
    ----------
    params : SystemParams
        Coefficients and initial state; y-channels always start at zero.
    f : forcing expression
        Closed-form forcing; evaluated pointwise by the integrator.
    horizon : float
        Final time, > 0.
    tol : float
        Local error control (absolute and relative) per adaptive step.
    h_max : float
        Output grid spacing bound; also the cap on internal step size so that
        narrow forcing features cannot be stepped over.
    dense : bool
        Keep the integrator's dense output for off-grid evaluation.

    Returns
    -------
    Trajectory

    Raises
    ------
    IntegrationAbort
        On step-size underflow or non-finite values; carries the last
        reachable time and the completed trajectory prefix, if any.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if h_max <= 0.0:
        raise ValueError("h_max must be positive")
    n = max(2, int(math.ceil(horizon / h_max)) + 1)
    grid = np.linspace(0.0, horizon, n)
    u0 = (params.xi0, params.xi1, 0.0, 0.0, 0.0, 0.0)
    sol = solve_ivp(
        _augmented_rhs(params, f),
        (0.0, horizon),
        u0,
        method="RK45",
        t_eval=grid,
        rtol=tol,
        atol=tol,
        max_step=h_max,
        dense_output=dense,
    )
    if sol.status != 0:
        last = float(sol.t[-1]) if sol.t.size else 0.0
        partial = None
        if sol.t.size >= 2:
            partial = _trajectory_from(sol.t, sol.y, params, f, sol.sol if dense else None)
        raise IntegrationAbort(
            f"integrator stalled at t={last:.6g}: {sol.message}", last_time=last, partial=partial
        )
    if not np.all(np.isfinite(sol.y)):
        last = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationAbort(f"non-finite state near t={last:.6g}", last_time=last)
    return _trajectory_from(sol.t, sol.y, params, f, sol.sol if dense else None)


def _trajectory_from(t, y, params, f, interpolant):
    return Trajectory(
        grid=np.array(t, dtype=float),
        x=np.array(y[0]),
        xprime=np.array(y[1]),
        y1=np.array(y[2]),
        y2=np.array(y[3]),
        y2prime=np.array(y[4]),
        Q=np.array(y[5]),
        params=params,
        forcing=f,
        interpolant=interpolant,
    )


def repeated_exp_filter(f, j, grid):
    """The j-fold unit exponential average of a closed-form forcing on `grid`.

    j=0 is the forcing itself sampled on the grid. For j >= 1 the cascade
    y_i' = -y_i + y_{i-1} (with y_0 = f) is integrated tightly, which keeps
    the result at integrator accuracy instead of quadrature accuracy.
    """
    if j not in (0, 1, 2, 3):
        raise ValueError("stage count j must be one of 0, 1, 2, 3")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or not np.all(np.diff(grid) > 0.0):
        raise ValueError("grid must be strictly increasing with at least two points")
    if j == 0:
        return SampledSeries(grid, eval_forcing(f, grid))
    fn = scalar_callable(f)

    def rhs(t, u):
        fv = fn(t)
        out = [-u[0] + fv]
        for i in range(1, j):
            out.append(-u[i] + u[i - 1])
        return out

    span = float(grid[-1] - grid[0])
    sol = solve_ivp(
        rhs,
        (float(grid[0]), float(grid[-1])),
        np.zeros(j),
        method="RK45",
        t_eval=grid,
        rtol=1e-11,
        atol=1e-12,
        max_step=min(0.01, span / 4.0),
    )
    if sol.status != 0:
        raise IntegrationAbort(
            f"filter integration stalled: {sol.message}",
            last_time=float(sol.t[-1]) if sol.t.size else float(grid[0]),
        )
    return SampledSeries(grid, sol.y[j - 1])


def exp_filter_sampled(s):
    """Unit exponential average of an already-sampled series on a uniform grid.

    Treats the samples as a piecewise-linear signal and applies the exact
    one-step propagator of y' = -y + u for linear input, so the only error is
    the O(h^2) interpolation of the input itself. The series must start at the
    signal's own start; the filter state starts at zero there.
    """
    h = _uniform_spacing(s.t)
    a1 = math.exp(-h)
    b1 = 1.0 - (1.0 - a1) / h
    b0 = (1.0 - a1) / h - a1
    # lfilter computes y[i] = b1*u[i] + b0*u[i-1] + a1*y[i-1]; zi cancels the
    # b1*u[0] contribution so the state truly starts at zero.
    out, _ = lfilter([b1, b0], [1.0, -a1], s.v, zi=np.array([-b1 * s.v[0]]))
    return SampledSeries(s.t, out)


def convolve_kernel(kern, s):
    """Trapezoid-rule convolution (kern * s)(t_i) on the uniform grid of `s`.

    `kern` may be a callable of time, an array aligned with the grid, or a
    SampledSeries on the same grid. Error is O(h^2); this path exists for
    residual checks against the ODE route, not for production evaluation.
    """
    h = _uniform_spacing(s.t)
    rel = s.t - s.t[0]
    if callable(kern):
        kv = np.asarray(kern(rel), dtype=float)
    elif isinstance(kern, SampledSeries):
        if kern.t.shape != s.t.shape or not np.allclose(kern.t, s.t, atol=1e-12):
            raise ValueError("kernel series must share the signal grid")
        kv = kern.v
    else:
        kv = np.asarray(kern, dtype=float)
        if kv.shape != s.t.shape:
            raise ValueError("kernel array must match the grid length")
    n = s.t.size
    full = np.convolve(kv, s.v)[:n]
    out = h * (full - 0.5 * (kv * s.v[0] + kv[0] * s.v))
    return SampledSeries(s.t, out)


def _uniform_spacing(t):
    d = np.diff(t)
    h = float(d[0])
    if not np.allclose(d, h, rtol=1e-9, atol=1e-12):
        raise ValueError("operation requires a uniform time grid")
    return h
