"""Structural parameters of the second-order system x'' + a x' + b x = f."""

import math
from dataclasses import dataclass

__all__ = ["SystemParams"]


@dataclass(frozen=True)
class SystemParams:
    """Damping a, stiffness b, and initial state (x(0), x'(0)).

    Any real coefficients are accepted at construction; operations whose
    meaning depends on asymptotic stability call :meth:`require_stable`.
    """

    a: float
    b: float
    xi0: float = 0.0
    xi1: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "xi0", "xi1"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)

    def require_stable(self):
        if self.a <= 0.0 or self.b <= 0.0:
            raise ValueError(
                f"operation needs a stable system (a > 0 and b > 0), got a={self.a}, b={self.b}"
            )
        return self
