"""Radial curvature profile K with an exact power law near r0 = 1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositive


@dataclass(frozen=True)
class KProfile:
    """K(s) = 1 - c0 |s-1|^l for |s-1| <= delta, then C^1-capped.

    On delta <= |s-1| <= cap*delta the deficit follows the quadratic Hermite
    blend matching value and slope at delta with zero slope at cap*delta;
    beyond that K is constant.
    """

    c0: float = 1.0
    l: float = 2.0
    delta: float = 0.1
    cap: float = 2.0

    def __post_init__(self) -> None:
        if self.c0 < 0:
            raise NonPositive(f"c0 must be >= 0, got {self.c0}")
        if not (self.delta > 0 and self.cap > 1):
            raise NonPositive("need delta > 0 and cap > 1")
        if not self.floor > 0:
            raise NonPositive(f"capped K would reach {self.floor}; shrink delta or c0")

    @property
    def width(self) -> float:
        return (self.cap - 1.0) * self.delta

    @property
    def floor(self) -> float:
        """Constant value of K outside the blend zone."""
        return 1.0 - self.deficit(np.array([self.cap * self.delta]))[0]

    def deficit(self, dev) -> np.ndarray:
        """1 - K as a function of s - 1."""
        t = np.abs(np.asarray(dev, dtype=float))
        d, c0, l = self.delta, self.c0, self.l
        g0 = c0 * d**l
        g1 = c0 * l * d ** (l - 1)
        tt = np.minimum(t, self.cap * d) - d
        blend = g0 + g1 * tt - g1 * tt * tt / (2.0 * self.width)
        inner = c0 * np.minimum(t, d) ** l
        return np.where(t <= d, inner, blend)


def K_profile_eval(p: KProfile, s) -> np.ndarray:
    return 1.0 - p.deficit(np.asarray(s, dtype=float) - 1.0)
