"""Double-tower point configurations, the ansatz W and its symmetry class."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from .bubble import SpaceSpec, bubble_profile, warn_degenerate
from .errors import IndexOutOfRange, NonPositive

Sign = Literal["+", "-"]
TIE_TOL = 1e-12


@dataclass(frozen=True)
class TowerConfig:
    spec: SpaceSpec
    k: int
    r: float
    h: float
    lam: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise IndexOutOfRange(f"ring size k={self.k} must be >= 1")
        if not self.r > 0:
            raise NonPositive(f"r must be positive, got {self.r}")
        if not self.lam > 0:
            raise NonPositive(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.h <= 1.0:
            raise IndexOutOfRange(f"h={self.h} outside [0, 1]")
        if self.h in (0.0, 1.0):
            warn_degenerate(f"degenerate height h={self.h}: rings coincide or collapse")

    @cached_property
    def angles(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.k) / self.k

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """(plus, minus) arrays of shape (k, N)."""
        N = self.spec.N
        s = math.sqrt(1.0 - self.h * self.h)
        plus = np.zeros((self.k, N))
        plus[:, 0] = self.r * s * np.cos(self.angles)
        plus[:, 1] = self.r * s * np.sin(self.angles)
        plus[:, 2] = self.r * self.h
        minus = plus.copy()
        minus[:, 2] = -plus[:, 2]
        plus.flags.writeable = False
        minus.flags.writeable = False
        return plus, minus

    @property
    def centers(self) -> np.ndarray:
        """All 2k centers, plus ring first."""
        return np.vstack(self.points)

    def with_params(self, **kw) -> "TowerConfig":
        vals = dict(spec=self.spec, k=self.k, r=self.r, h=self.h, lam=self.lam)
        vals.update(kw)
        return TowerConfig(**vals)


def generate_points(cfg: TowerConfig) -> tuple[np.ndarray, np.ndarray]:
    return cfg.points


def dist_same(cfg: TowerConfig, j: int) -> float:
    """Distance from x^+_1 to x^+_{1+j}."""
    if not 1 <= j <= cfg.k - 1:
        raise IndexOutOfRange(f"j={j} not in 1..{cfg.k - 1}")
    return 2.0 * cfg.r * math.sqrt(1.0 - cfg.h**2) * math.sin(j * math.pi / cfg.k)


def dist_cross(cfg: TowerConfig, j: int) -> float:
    """Distance from x^+_1 to x^-_j."""
    if not 1 <= j <= cfg.k:
        raise IndexOutOfRange(f"j={j} not in 1..{cfg.k}")
    sn = math.sin((j - 1) * math.pi / cfg.k)
    return 2.0 * cfg.r * math.sqrt((1.0 - cfg.h**2) * sn * sn + cfg.h**2)


def bubble_stack(cfg: TowerConfig, y, *, normalized: bool = False) -> np.ndarray:
    """Every bubble of the tower evaluated at y; last axis indexes centers.

    Distances are formed directly (not via the expanded quadratic) so that
    points close to a far-away center keep full relative accuracy.
    """
    y = np.asarray(y, dtype=float)
    d = y[..., None, :] - cfg.centers
    d2 = np.einsum("...ji,...ji->...j", d, d)
    c = 1.0 if normalized else cfg.spec.cNm
    return bubble_profile(d2, cfg.lam, cfg.spec.n, c)


def eval_W(cfg: TowerConfig, y) -> np.ndarray:
    return bubble_stack(cfg, y).sum(axis=-1)


@dataclass(frozen=True)
class SectorId:
    j: int
    sign: Sign


def sector_of(cfg: TowerConfig, y) -> SectorId:
    """Angular sector containing y; boundaries go to the smaller index."""
    y = np.asarray(y, dtype=float)
    sign: Sign = "+" if y[2] >= 0 else "-"
    if y[0] == 0.0 and y[1] == 0.0:
        return SectorId(1, sign)
    width = 2.0 * math.pi / cfg.k
    phi = math.atan2(y[1], y[0]) % (2.0 * math.pi)
    t = phi / width + 0.5
    base = math.floor(t)
    frac = t - base
    idx = base % cfg.k
    if frac < TIE_TOL and cfg.k > 1:
        idx = min(idx, (idx - 1) % cfg.k)
    elif 1.0 - frac < TIE_TOL and cfg.k > 1:
        idx = min(idx, (idx + 1) % cfg.k)
    return SectorId(int(idx) + 1, sign)


def symmetry_sample(cfg: TowerConfig, n_points: int = 200, seed: int = 20240611) -> np.ndarray:
    """Deterministic sample concentrated around the tower."""
    rng = np.random.default_rng(seed)
    base = cfg.centers[rng.integers(0, 2 * cfg.k, n_points)]
    jitter = rng.normal(size=(n_points, cfg.spec.N))
    scale = np.geomspace(0.05, 2.0, n_points)[:, None] * cfg.r
    return base + jitter * scale


def symmetry_images(cfg: TowerConfig, y: np.ndarray) -> list[np.ndarray]:
    """Images of y under the generators of the symmetry class."""
    a = 2.0 * math.pi / cfg.k
    ca, sa = math.cos(a), math.sin(a)
    rot = y.copy()
    rot[..., 0] = ca * y[..., 0] - sa * y[..., 1]
    rot[..., 1] = sa * y[..., 0] + ca * y[..., 1]
    out = [rot]
    for c in range(1, cfg.spec.N):
        f = y.copy()
        f[..., c] = -f[..., c]
        out.append(f)
    return out


def symmetry_check(
    field: Callable[[np.ndarray], np.ndarray], cfg: TowerConfig, tol: float
) -> bool:
    """True iff field is invariant to relative tol under every generator."""
    y = symmetry_sample(cfg)
    base = np.asarray(field(y), dtype=float)
    scale = max(float(np.max(np.abs(base))), np.finfo(float).tiny)
    for img in symmetry_images(cfg, y):
        if np.max(np.abs(np.asarray(field(img), dtype=float) - base)) > tol * scale:
            return False
    return True


def points_csv(cfg: TowerConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "sign"] + [f"y{i + 1}" for i in range(cfg.spec.N)])
    plus, minus = cfg.points
    for sign, pts in (("+", plus), ("-", minus)):
        for j, p in enumerate(pts, start=1):
            w.writerow([j, sign] + [format(float(v), ".17g") for v in p])
    return buf.getvalue()


def kernel_rhl(cfg: TowerConfig, ell: int, y, j: int = 1, sign: Sign = "+") -> np.ndarray:
    """Derivative of U_{x^sign_j, Lambda} in r (ell=1), h (ell=2) or Lambda (ell=3)."""
    if ell not in (1, 2, 3):
        raise IndexOutOfRange(f"ell={ell} not in 1..3")
    plus, minus = cfg.points
    x = (plus if sign == "+" else minus)[j - 1]
    y = np.asarray(y, dtype=float)
    lam, n = cfg.lam, cfg.spec.n
    d = y - x
    rho2 = np.einsum("...i,...i->...", d, d)
    u = bubble_profile(rho2, lam, n, cfg.spec.cNm)
    q = 1.0 + lam * lam * rho2
    if ell == 3:
        return 0.5 * n * u * (1.0 - lam * lam * rho2) / (q * lam)
    if ell == 1:
        dx = x / cfg.r
    else:
        s = math.sqrt(1.0 - cfg.h**2)
        a = cfg.angles[j - 1]
        dx = np.zeros(cfg.spec.N)
        dx[0] = -cfg.r * cfg.h / s * math.cos(a)
        dx[1] = -cfg.r * cfg.h / s * math.sin(a)
        dx[2] = cfg.r if sign == "+" else -cfg.r
    # dU/dx = -grad_y U
    return n * lam * lam * u * (d @ dx) / q
