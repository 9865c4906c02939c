"""Sampled time series shared by the simulation, functional, and classifier layers."""

import numpy as np

__all__ = ["SampledSeries"]


class SampledSeries:
    """A real-valued series sampled on a strictly increasing time grid.

    Uniform spacing is not required here; operations that need it (the
    convolution helpers) check for themselves.
    """

    __slots__ = ("t", "v")

    def __init__(self, t, v):
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if t.ndim != 1 or v.ndim != 1:
            raise ValueError("series arrays must be one-dimensional")
        if t.shape != v.shape:
            raise ValueError("time and value arrays differ in length")
        if t.size < 2:
            raise ValueError("series needs at least two samples")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("time grid must be strictly increasing")
        self.t = t
        self.v = v

    def __len__(self):
        return self.t.size

    @property
    def span(self):
        return float(self.t[0]), float(self.t[-1])

    def at(self, times):
        """Linear interpolation of the series at `times` (scalar or array)."""
        lo, hi = self.span
        times_arr = np.asarray(times, dtype=float)
        if np.any(times_arr < lo - 1e-12) or np.any(times_arr > hi + 1e-12):
            raise ValueError(f"requested time outside series coverage [{lo}, {hi}]")
        out = np.interp(times_arr, self.t, self.v)
        return float(out) if np.isscalar(times) or times_arr.ndim == 0 else out

    def window_max(self, lo, hi):
        """Max of |values| over samples with lo <= t <= hi."""
        mask = (self.t >= lo) & (self.t <= hi)
        if not np.any(mask):
            raise ValueError(f"window [{lo}, {hi}] contains no samples")
        return float(np.max(np.abs(self.v[mask])))

    def __repr__(self):
        lo, hi = self.span
        return f"SampledSeries(n={len(self)}, span=[{lo:g}, {hi:g}])"
