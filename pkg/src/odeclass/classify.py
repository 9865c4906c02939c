"""Finite-horizon trichotomy labels for solution and forcing channels.

The limiting quantities of interest (the largest sustained magnitude of x,
of y2, and of the two-parameter window functional) are limits superior at
infinite time and cannot be computed from a finite run. This module defines
the finite-horizon surrogate the package uses everywhere: split the horizon
into dyadic tail windows, take the max magnitude in each, and regress the
log of those maxima against the window index. A slope clearly below zero
means the channel is dying out, a slope clearly above zero means it grows,
and anything in between is a plateau. The slope thresholds come from a
configurable growth factor per window (default 1.2); that choice is a
declared heuristic, not a theorem, and it is surfaced in the CLI config.

Labels per channel follow the trichotomy: a Decaying channel is reported as
Converges, a Plateau as BoundedNonConvergent, Growing as Unbounded. The
channels fed by the solution (X), the exponential average (Y2), and the
window-functional sup (Fsup) must agree; their agreement flag is the main
cross-check the rest of the suite relies on. The y1 channel is reported but
kept out of the agreement check: it governs the (x, x') pair jointly, not x
alone.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .forcing import eval_forcing
from .functionals import ThetaGrid, functional_field
from .linear import IntegrationAbort, integrate
from .series import SampledSeries

__all__ = [
    "WindowPolicy",
    "LimsupEstimate",
    "DiagnosticsReport",
    "estimate_limsup",
    "classify",
    "chirp_diagnostic",
    "TREND_TO_LABEL",
    "AGREEMENT_CHANNELS",
]

TREND_TO_LABEL = {
    "Decaying": "Converges",
    "Plateau": "BoundedNonConvergent",
    "Growing": "Unbounded",
}

AGREEMENT_CHANNELS = ("X", "Y2", "Fsup")


@dataclasses.dataclass(frozen=True)
class WindowPolicy:
    """How the tail of a series is split and judged.

    windows dyadic tail windows are used; the trend threshold is ln(rho) on
    the regression slope of log window maxima, i.e. rho is the tolerated
    growth/decay factor per window before a channel stops counting as a
    plateau. eps_floor keeps the log finite on exactly-zero channels.
    """

    windows: int = 4
    rho: float = 1.2
    eps_floor: float = 1e-12

    def __post_init__(self):
        if int(self.windows) != self.windows or self.windows < 2:
            raise ValueError("need at least two windows")
        if not self.rho > 1.0:
            raise ValueError("rho must exceed 1")
        if not self.eps_floor > 0.0:
            raise ValueError("eps_floor must be positive")


@dataclasses.dataclass(frozen=True)
class LimsupEstimate:
    """Surrogate for the limiting magnitude of one channel.

    estimate is 0.0 for a Decaying channel, the last-window max for a
    Plateau, and +inf for a Growing one; window_maxima keeps the raw
    evidence so callers can report it.
    """

    channel: str
    window_maxima: np.ndarray
    estimate: float
    trend: str
    slope: float

    def __post_init__(self):
        if np.any(self.window_maxima < 0.0):
            raise ValueError("window maxima are magnitudes, must be >= 0")
        if self.trend not in TREND_TO_LABEL:
            raise ValueError(f"unknown trend {self.trend!r}")

    @property
    def label(self):
        return TREND_TO_LABEL[self.trend]


def estimate_limsup(s, policy=None, channel="series"):
    """Window maxima, trend, and point estimate for one sampled channel.

    The last window is [T/2, T], the one before [T/4, T/2], and so on for
    policy.windows windows; the series must cover all of them and put at
    least one sample into each.
    """
    if policy is None:
        policy = WindowPolicy()
    t0, T = s.span
    if not T > 0.0:
        raise ValueError("series must extend past t = 0")
    w = int(policy.windows)
    earliest = T / 2.0 ** w
    if t0 > earliest + 1e-12:
        raise ValueError(
            f"series starts at {t0:g}, too late to cover {w} dyadic windows "
            f"of horizon {T:g} (needs coverage from {earliest:g})"
        )
    maxima = np.empty(w)
    for j in range(w):
        lo = T / 2.0 ** (w - j)
        hi = T / 2.0 ** (w - j - 1)
        maxima[j] = s.window_max(lo, hi)

    slope = float(np.polyfit(np.arange(w), np.log(maxima + policy.eps_floor), 1)[0])
    threshold = math.log(policy.rho)
    if maxima[-1] <= policy.eps_floor:
        # floor-dominated: the channel has already died out to within the
        # log floor, which a flat regression would misread as a plateau
        trend, estimate = "Decaying", 0.0
    elif slope < -threshold:
        trend, estimate = "Decaying", 0.0
    elif slope > threshold:
        trend, estimate = "Growing", math.inf
    else:
        trend, estimate = "Plateau", float(maxima[-1])
    return LimsupEstimate(channel, maxima, estimate, trend, slope)


@dataclasses.dataclass(frozen=True)
class DiagnosticsReport:
    """Per-channel trends and labels plus the cross-channel agreement flag.

    agreement covers exactly the X, Y2, and Fsup channels. residuals may
    carry an identity-residual summary when the caller ran one; config
    echoes whatever run settings produced the report.
    """

    estimates: dict
    labels: dict
    agreement: bool
    residuals: tuple | None = None
    config: dict | None = None
    xsecond_forcing_gap: float | None = None

    def __post_init__(self):
        core = [self.labels[c] for c in AGREEMENT_CHANNELS if c in self.labels]
        expected = len(core) == len(AGREEMENT_CHANNELS) and len(set(core)) == 1
        if self.agreement != expected:
            raise ValueError("agreement flag contradicts the channel labels")


def classify(traj, field, policy=None, residuals=None, config=None):
    """Trend and trichotomy label for every channel of one trajectory.

    Estimates run on |x|, |x'|, |x''| (reconstructed as f - a x' - b x),
    |y1|, |y2|, |f|, and the window-functional sup. The field must cover the
    same horizon as the trajectory.
    """
    if policy is None:
        policy = WindowPolicy()
    if abs(float(field.times[-1]) - float(traj.grid[-1])) > 1e-9:
        raise ValueError("field and trajectory must share the horizon")

    fv = eval_forcing(traj.forcing, traj.grid)
    xsecond = fv - traj.params.a * traj.xprime - traj.params.b * traj.x
    channels = {
        "X": SampledSeries(traj.grid, traj.x),
        "Xprime": SampledSeries(traj.grid, traj.xprime),
        "Xsecond": SampledSeries(traj.grid, xsecond),
        "Y1": SampledSeries(traj.grid, traj.y1),
        "Y2": SampledSeries(traj.grid, traj.y2),
        "f": SampledSeries(traj.grid, fv),
        "Fsup": field.sup_series(),
    }
    estimates = {
        tag: estimate_limsup(series, policy, channel=tag)
        for tag, series in channels.items()
    }
    labels = {tag: est.label for tag, est in estimates.items()}
    agreement = len({labels[c] for c in AGREEMENT_CHANNELS}) == 1

    echo = {
        "a": traj.params.a, "b": traj.params.b,
        "xi0": traj.params.xi0, "xi1": traj.params.xi1,
        "horizon": float(traj.grid[-1]), "h": traj.h,
        "windows": policy.windows, "rho": policy.rho,
    }
    if config:
        echo.update(config)
    return DiagnosticsReport(
        estimates=estimates,
        labels=labels,
        agreement=agreement,
        residuals=tuple(residuals) if residuals is not None else None,
        config=echo,
        xsecond_forcing_gap=float(np.max(np.abs(xsecond - fv))),
    )


def chirp_diagnostic(A, params, horizon, tol=1e-8, h_max=0.01, policy=None,
                     theta_grid=None, return_trajectory=False):
    """Integrate a chirp built from envelope A and classify every channel.

    The envelope must be strictly positive and increasing (chirp_forcing
    checks). The interesting prediction: the y2 channel dies out while y1
    plateaus, so x converges even though the forcing grows. If the
    integrator gives up before the horizon, the partial trajectory is
    classified instead and the config echo records where it stopped. With
    return_trajectory the classified trajectory comes back alongside the
    report, so callers can dump the exact channels the labels were read from.
    """
    from .forcing import chirp_forcing

    f = chirp_forcing(A, check_horizon=max(horizon, 1.0))
    extra = {"kind": "chirp"}
    try:
        traj = integrate(params, f, horizon, tol=tol, h_max=h_max)
    except IntegrationAbort as exc:
        if exc.partial is None or float(exc.partial.grid[-1]) < 16.0 * h_max:
            raise
        traj = exc.partial
        extra["partial"] = True
        extra["abort_time"] = exc.last_time
    if theta_grid is None:
        theta_grid = ThetaGrid.uniform(5, 5)
    field = functional_field(traj.series("Q"), theta_grid, traj.grid)
    report = classify(traj, field, policy=policy, config=extra)
    if return_trajectory:
        return report, traj
    return report
