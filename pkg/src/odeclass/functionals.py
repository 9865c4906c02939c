"""Windowed averages of a forcing, computed from its cumulative integral Q.

Everything here works on Q rather than on f itself: the inner moving average
over a window of width theta is the O(1) difference Q(t) - Q((t-theta)+), and
the doubly averaged functional F needs only one short outer integral. Two
independent evaluation routes for F are kept deliberately. `double_average`
integrates the inner average by a trapezoid rule whose nodes include every
kink of the integrand, which makes it exact for the piecewise-linear
interpolant of Q. `functional_field` instead evaluates the exact quadratic
antiderivative of that interpolant in closed form. Agreement between the two
is one of the module's correctness oracles.
"""

import math
from dataclasses import dataclass

import numpy as np

from .forcing import eval_forcing
from .series import SampledSeries

__all__ = [
    "ThetaGrid",
    "FunctionalField",
    "moving_average",
    "delta_f",
    "lemma41_check",
    "double_average",
    "functional_field",
    "decomposition_check",
    "decomposition_residual",
]

_DEFAULT_H_OUTER = 0.005
_FINE_H = 2.0**-12


@dataclass(frozen=True)
class ThetaGrid:
    """Window-width samples on [0, 1] for both parameters; endpoints required.

    The endpoints matter: theta = 0 pins the exact-zero columns of the field,
    and theta = 1 is the widest window the classifier relies on.
    """

    theta1: np.ndarray
    theta2: np.ndarray

    def __post_init__(self):
        for name in ("theta1", "theta2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size < 2:
                raise ValueError(f"{name} must be a 1-D array with at least two samples")
            if not np.all(np.diff(arr) > 0.0):
                raise ValueError(f"{name} samples must be strictly increasing")
            if arr[0] != 0.0 or arr[-1] != 1.0:
                raise ValueError(f"{name} must start at 0.0 and end at 1.0")
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, n1=11, n2=None):
        if n2 is None:
            n2 = n1
        if n1 < 2 or n2 < 2:
            raise ValueError("a uniform grid needs at least two samples per axis")
        return cls(np.linspace(0.0, 1.0, n1), np.linspace(0.0, 1.0, n2))


@dataclass(frozen=True)
class FunctionalField:
    """F tabulated over a ThetaGrid and a time grid, plus the per-time sup.

    `values[i, j, m]` is F for (theta1[i], theta2[j]) at times[m]; `sup[m]`
    is the max of |values[..., m]| over the whole grid.
    """

    times: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    values: np.ndarray
    sup: np.ndarray

    def sup_series(self):
        return SampledSeries(self.times, self.sup)


def _require_cumulative(Q):
    if Q.t[0] != 0.0:
        raise ValueError("cumulative-integral series must start at t=0")


def moving_average(Q, theta, t):
    """Windowed integral of f over [(t-theta)+, t], read off Q.

    Q must be the cumulative integral of f from 0; values between grid nodes
    come from linear interpolation.
    """
    _require_cumulative(Q)
    if not 0.0 <= theta <= 1.0:
        raise ValueError("window width theta must lie in [0, 1]")
    return float(Q.at(t) - Q.at(max(t - theta, 0.0)))


def delta_f(f_sampled, Q, t):
    """Deviation of f at t from its own unit-window average."""
    return float(f_sampled.at(t)) - moving_average(Q, 1.0, t)


def lemma41_check(f, t, n_theta=32):
    """Two independently computed sides of the averaged-deviation balance.

    lhs integrates the deviation of f from its unit-window average over
    [0, t]; rhs integrates the theta-windowed average of f at time t over
    theta in [0, 1] (composite Simpson with n_theta panels). Both use an
    internal dyadic-step grid so the unit shift lands exactly on nodes. For
    t < 1 the window clips at the start of time and the theta integrand is
    constant beyond theta = t, so the quadrature splits there instead of
    smearing Simpson across the kink. Returns (lhs, rhs).
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if n_theta < 2:
        raise ValueError("n_theta must be at least 2")
    n_theta += n_theta % 2
    ts = np.arange(0.0, t, _FINE_H)
    if t - ts[-1] > 1e-15:
        ts = np.append(ts, t)
    fv = eval_forcing(f, ts)
    Q = np.concatenate(([0.0], np.cumsum(0.5 * (fv[1:] + fv[:-1]) * np.diff(ts))))
    shifted = np.interp(np.clip(ts - 1.0, 0.0, None), ts, Q)
    delta = fv - (Q - shifted)
    lhs = float(np.trapezoid(delta, ts))

    q_t = Q[-1]
    kink = min(t, 1.0)
    thetas = np.linspace(0.0, kink, n_theta + 1)
    g = q_t - np.interp(np.clip(t - thetas, 0.0, None), ts, Q)
    w = np.ones(n_theta + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    rhs = float(np.sum(w * g) * kink / (3.0 * n_theta))
    if t < 1.0:
        rhs += (1.0 - t) * q_t
    return lhs, rhs


def double_average(Q, theta1, theta2, t, h_outer=_DEFAULT_H_OUTER):
    """F at a single (theta1, theta2, t): the outer average of inner averages.

    The outer trapezoid runs over [(t-theta1)+, t] on nodes containing every
    breakpoint of the integrand (grid nodes, grid nodes shifted by theta2, and
    the clamp point), refined to spacing at most h_outer. With those nodes the
    trapezoid rule is exact for the linear interpolant of Q.
    """
    _require_cumulative(Q)
    if theta1 < 0.0 or theta2 < 0.0:
        raise ValueError("window widths must be non-negative")
    lo, hi = Q.span
    if t < lo or t > hi:
        raise ValueError(f"t={t} outside series coverage [{lo}, {hi}]")
    A = max(t - theta1, 0.0)
    if theta1 == 0.0 or theta2 == 0.0 or t == A:
        return 0.0
    inner = (A < Q.t) & (Q.t < t)
    knots = [np.array([A, t]), Q.t[inner]]
    shifted = Q.t + theta2
    knots.append(shifted[(A < shifted) & (shifted < t)])
    if A < theta2 < t:
        knots.append(np.array([theta2]))
    nodes = np.unique(np.concatenate(knots))
    gaps = np.diff(nodes)
    wide = gaps > h_outer
    if np.any(wide):
        fill = [
            np.linspace(nodes[i], nodes[i + 1], int(math.ceil(gaps[i] / h_outer)) + 1)[1:-1]
            for i in np.nonzero(wide)[0]
        ]
        nodes = np.unique(np.concatenate([nodes] + fill))
    g = np.interp(nodes, Q.t, Q.v) - np.interp(np.clip(nodes - theta2, 0.0, None), Q.t, Q.v)
    return float(np.trapezoid(g, nodes))


def _interpolant_antiderivative(Q):
    """Closed-form integral of the piecewise-linear interpolant of Q from 0.

    Returns a vectorized callable. On segment i the interpolant is linear, so
    its integral is the running trapezoid total plus a quadratic tail.
    """
    tq, vq = Q.t, Q.v
    R = np.concatenate(([0.0], np.cumsum(0.5 * (vq[1:] + vq[:-1]) * np.diff(tq))))
    slopes = np.diff(vq) / np.diff(tq)

    def at(tau):
        tau = np.asarray(tau, dtype=float)
        idx = np.clip(np.searchsorted(tq, tau, side="right") - 1, 0, tq.size - 2)
        d = tau - tq[idx]
        return R[idx] + vq[idx] * d + 0.5 * slopes[idx] * d * d

    return at


def functional_field(Q, grid, times):
    """Tabulate F over a ThetaGrid at the given times, with the grid sup.

    Uses the exact antiderivative of the linear interpolant of Q, so each
    (theta1, theta2) needs only four evaluations per time. Columns with an
    empty inner or outer window are exact zeros by definition.
    """
    _require_cumulative(Q)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D array")
    lo, hi = Q.span
    if times[0] < lo or times[-1] > hi + 1e-12:
        raise ValueError(f"times outside series coverage [{lo}, {hi}]")
    R = _interpolant_antiderivative(Q)
    n1, n2 = grid.theta1.size, grid.theta2.size
    values = np.zeros((n1, n2, times.size))
    r_t = R(times)
    for i, th1 in enumerate(grid.theta1):
        if th1 == 0.0:
            continue
        A = np.clip(times - th1, 0.0, None)
        r_A = R(A)
        for j, th2 in enumerate(grid.theta2):
            if th2 == 0.0:
                continue
            values[i, j] = (
                r_t - r_A - R(np.clip(times - th2, 0.0, None)) + R(np.clip(A - th2, 0.0, None))
            )
    sup = np.max(np.abs(values), axis=(0, 1))
    return FunctionalField(times=times, theta1=grid.theta1, theta2=grid.theta2, values=values, sup=sup)


def decomposition_check(Q, theta, delta, k, t, h_outer=_DEFAULT_H_OUTER):
    """Both sides of splitting one incremented window into base plus shifted tail.

    Incrementing component k of theta=(theta1, theta2) by delta >= 0 must, for
    t >= 2 + 2*delta, equal the base value plus the value of the window with
    component k replaced by delta, evaluated at t shifted back by theta_k.
    Returns (incremented, split) for residual assertion.
    """
    if k not in (1, 2):
        raise ValueError("component k must be 1 or 2")
    if delta < 0.0:
        raise ValueError("delta must be non-negative")
    th1, th2 = float(theta[0]), float(theta[1])
    if t < 2.0 + 2.0 * delta:
        raise ValueError("t must be at least 2 + 2*delta for the split to hold")
    if k == 1:
        lhs = double_average(Q, th1 + delta, th2, t, h_outer)
        rhs = double_average(Q, th1, th2, t, h_outer) + double_average(
            Q, delta, th2, t - th1, h_outer
        )
    else:
        lhs = double_average(Q, th1, th2 + delta, t, h_outer)
        rhs = double_average(Q, th1, th2, t, h_outer) + double_average(
            Q, th1, delta, t - th2, h_outer
        )
    return lhs, rhs


def decomposition_residual(Q, theta, delta, k, t, h_outer=_DEFAULT_H_OUTER):
    """Absolute gap between the two sides of the window-increment split."""
    lhs, rhs = decomposition_check(Q, theta, delta, k, t, h_outer)
    return abs(lhs - rhs)
