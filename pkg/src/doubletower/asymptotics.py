"""Lattice sums, interaction integrals and the expansion constants.

All expansion constants are computed on the unit-coefficient profile
(1 + |y|^2)^{-(N-2m)/2}; physical energies carry the factor
`ExpansionConstants.energy_scale` = c_{N,m}^{m*}.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Literal

import numpy as np
from scipy import integrate

from .bubble import (
    SpaceSpec,
    beta_moment,
    planar_axis_rule,
    radial_quad,
    sphere_abs_moment,
    sphere_area,
)
from .errors import DegenerateHeight, NonIntegrable, QuadratureFailure, SamplerDegenerate
from .profile import KProfile
from .tower import TowerConfig, dist_cross, dist_same, kernel_rhl

Provenance = Literal["closed-form", "series", "quadrature", "derived"]
CLOSED_FORM_RTOL = 1e-9
SERIES_RTOL = 1e-13


@dataclass(frozen=True)
class Constant:
    name: str
    value: float
    error: float
    provenance: Provenance
    check: float | None = None  # independent closed-form value when one exists

    @property
    def check_gap(self) -> float | None:
        if self.check is None:
            return None
        if self.check == 0:
            return abs(self.value)
        return abs(self.value / self.check - 1.0)


# ---------------------------------------------------------------- lattice sums


def sum_same_exact(cfg: TowerConfig) -> float:
    n = cfg.spec.n
    return math.fsum(dist_same(cfg, j) ** (-n) for j in range(1, cfg.k))


def sum_cross_exact(cfg: TowerConfig) -> float:
    n = cfg.spec.n
    return math.fsum(dist_cross(cfg, j) ** (-n) for j in range(1, cfg.k + 1))


def sum_same_asym(cfg: TowerConfig, c: "ExpansionConstants") -> float:
    n = cfg.spec.n
    return c.B1.value * cfg.k**n / (cfg.r * math.sqrt(1.0 - cfg.h**2)) ** n


def sum_cross_asym(cfg: TowerConfig, c: "ExpansionConstants") -> float:
    if cfg.h in (0.0, 1.0):
        raise DegenerateHeight(f"cross-sum asymptotics undefined at h={cfg.h}")
    n = cfg.spec.n
    return c.B2.value * cfg.k / (cfg.r**n * cfg.h ** (n - 1) * math.sqrt(1.0 - cfg.h**2))


@dataclass(frozen=True)
class SumReport:
    kind: Literal["same", "cross"]
    k: int
    exact: float
    asymptotic: float
    relative_gap: float
    remainder_model: str


def sum_report(cfg: TowerConfig, c: "ExpansionConstants", kind: str) -> SumReport:
    n = cfg.spec.n
    if kind == "same":
        ex, asy = sum_same_exact(cfg), sum_same_asym(cfg, c)
        model = "ln(k)/k^2" if n == 3 else "k^-2"
    elif kind == "cross":
        ex, asy = sum_cross_exact(cfg), sum_cross_asym(cfg, c)
        model = "(hk)^-1"
    else:
        raise ValueError(f"unknown sum kind {kind!r}")
    return SumReport(kind, cfg.k, ex, asy, abs(ex / asy - 1.0), model)


def fit_loglog_slope(x, y) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ------------------------------------------------------------------- constants


def const_B0(N: int, m: int) -> Constant:
    """Integral of (1+|z|^2)^{-(N+2m)/2} over R^N."""
    p = 0.5 * (N + 2 * m)
    res = radial_quad(lambda t: t ** (N - 1) * (1.0 + t * t) ** (-p), decay=2 * m + 1.0)
    s = sphere_area(N)
    closed = math.pi ** (N / 2) * math.gamma(m) / math.gamma(p)
    return Constant("B0", s * res.value, s * res.error, "quadrature", closed)


def const_B1(n: int) -> Constant:
    """2 zeta(n) / (2 pi)^n with the zeta series bracketed by integral tails."""
    if n < 2:
        raise NonIntegrable(f"series diverges for exponent {n}")
    block = 4096
    j0 = 1
    partial = 0.0
    while True:
        j = np.arange(j0, j0 + block, dtype=float)
        partial = math.fsum([partial, math.fsum(j ** (-n))])
        J = j0 + block - 1
        lo = (J + 1.0) ** (1 - n) / (n - 1)
        hi = J ** (1.0 - n) / (n - 1)
        if hi - lo < SERIES_RTOL * partial:
            break
        j0 += block
        block *= 2
    zeta = partial + 0.5 * (lo + hi)
    f = 2.0 / (2.0 * math.pi) ** n
    return Constant("B1", f * zeta, f * 0.5 * (hi - lo), "series")


def const_B2(n: int) -> Constant:
    if n < 2:
        raise NonIntegrable(f"integral diverges for exponent {n}")
    res = radial_quad(lambda s: (s * s + 1.0) ** (-0.5 * n), decay=float(n))
    f = 1.0 / (2 ** (n - 1) * math.pi)
    closed = math.sqrt(math.pi) * math.gamma((n - 1) / 2) / (2.0 * math.gamma(n / 2))
    return Constant("B2", f * res.value, f * res.error, "quadrature", f * closed)


def _abs_moment(N: int, power: float) -> tuple[float, float, float]:
    """Integral of |y_1|^power (1+|y|^2)^{-N} over R^N.

    Returns (value, error, closed_form). The radial and polar-angle factors
    are integrated separately.
    """
    if power <= -1:
        raise NonIntegrable(f"|y_1|^{power} is not locally integrable")
    decay = 2.0 * N - power - (N - 1)
    if decay <= 1:
        raise NonIntegrable(f"|y_1|^{power} U^m* is not integrable at infinity")
    rad = radial_quad(lambda t: t ** (power + N - 1) * (1.0 + t * t) ** (-N), decay=decay)
    ang, ang_err = integrate.quad(
        lambda phi: abs(math.cos(phi)) ** power * math.sin(phi) ** (N - 2),
        0.0,
        math.pi,
        points=[0.5 * math.pi],
        epsabs=0.0,
        epsrel=1e-13,
    )
    s = sphere_area(N - 1)
    val = s * ang * rad.value
    err = s * (ang * rad.error + ang_err * rad.value)
    closed = sphere_abs_moment(N, power) * beta_moment(N, power / 2, N)
    return val, err, closed


def const_A(spec: SpaceSpec) -> tuple[Constant, Constant, Constant]:
    N, l, c0, ms = spec.N, spec.l, spec.c0, spec.mstar_f
    mass, mass_err, mass_cf = _abs_moment(N, 0.0)
    a1 = 1.0 - 2.0 / ms
    A1 = Constant("A1", a1 * mass, a1 * mass_err, "quadrature", a1 * mass_cf)
    mom, mom_err, mom_cf = _abs_moment(N, l)
    f2 = 2.0 * c0 / ms
    A2 = Constant("A2", f2 * mom, f2 * mom_err, "quadrature", f2 * mom_cf)
    low, low_err, low_cf = _abs_moment(N, l - 2.0)
    f3 = c0 * l * (l - 1.0) / ms
    A3 = Constant("A3", f3 * low, f3 * low_err, "quadrature", f3 * low_cf)
    return A1, A2, A3


def stationary_height_coefficient(n: int, B4: float, B5: float) -> float:
    return ((n - 1) * B5 / (n * B4)) ** (1.0 / (n + 1))


@dataclass(frozen=True)
class ExpansionConstants:
    A1: Constant
    A2: Constant
    A3: Constant
    B0: Constant
    B1: Constant
    B2: Constant
    B4: Constant
    B5: Constant
    B6: Constant
    B7: Constant
    h0: float
    energy_scale: float

    def table(self) -> list[Constant]:
        return [getattr(self, f.name) for f in fields(self) if f.type in ("Constant", Constant)]

    def rows(self) -> list[dict]:
        return [
            {"name": c.name, "value": c.value, "error": c.error, "provenance": c.provenance}
            for c in self.table()
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "value", "error", "provenance"])
        for c in self.table():
            w.writerow([c.name, format(c.value, ".17g"), format(c.error, ".17g"), c.provenance])
        return buf.getvalue()


def compute_constants(spec: SpaceSpec) -> ExpansionConstants:
    n = spec.n
    A1, A2, A3 = const_A(spec)
    B0, B1, B2 = const_B0(spec.N, spec.m), const_B1(n), const_B2(n)
    B4 = Constant("B4", B0.value * B1.value, B0.value * B1.error + B1.value * B0.error, "derived")
    B5 = Constant("B5", B0.value * B2.value, B0.value * B2.error + B2.value * B0.error, "derived")
    h0 = stationary_height_coefficient(n, B4.value, B5.value)
    b6 = 0.5 * n * B4.value * h0**2 + B5.value / h0 ** (n - 1)
    b7 = 0.5 * n * (B4.value * h0**2 + (n - 1) * B5.value / h0 ** (n - 1))
    rel = (B4.error / B4.value) + (B5.error / B5.value)
    B6 = Constant("B6", b6, b6 * rel, "derived")
    B7 = Constant("B7", b7, b7 * rel, "derived")
    return ExpansionConstants(
        A1, A2, A3, B0, B1, B2, B4, B5, B6, B7, h0, spec.cNm ** spec.mstar_f
    )


# -------------------------------------------------------- interaction integral


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_samples: int
    seed: int


def sample_bubble_law(N: int, lam: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Points with density proportional to (1 + lam^2 |y|^2)^{-N}.

    With rho = lam |y|, rho^2/(1+rho^2) is Beta(N/2, N/2) distributed.
    """
    t = rng.beta(0.5 * N, 0.5 * N, size)
    rho = np.sqrt(t / (1.0 - t)) / lam
    g = rng.standard_normal((size, N))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rho[:, None]


def interaction_numeric(
    spec: SpaceSpec,
    d: float | np.ndarray,
    lam: float = 1.0,
    n_samples: int = 10**7,
    seed: int = 0,
    *,
    swap: bool = False,
    chunk: int = 10**6,
) -> MCEstimate | list[MCEstimate]:
    """Estimate the integral of U_{0,lam}^{m*-1} U_{x,lam} with |x| = d.

    Profiles are unit-coefficient. Samples follow the normalized U^{m*}
    law around the bubble carrying the m*-1 power (the origin, or x when
    `swap`). An array of separations reuses one sample stream.
    """
    ds = np.atleast_1d(np.asarray(d, dtype=float))
    if np.any(ds <= 0):
        raise ValueError("separation must be positive")
    N, n = spec.N, spec.n
    mass = beta_moment(N, 0.0, N)
    rng = np.random.default_rng(seed)
    s1 = np.zeros(ds.size)
    s2 = np.zeros(ds.size)
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        y = sample_bubble_law(N, lam, size, rng)
        r0 = 1.0 + lam * lam * np.einsum("ij,ij->i", y, y)
        for i, dd in enumerate(ds):
            z = y.copy()
            # carrier at the origin: other bubble at +d e1; swapped: carrier at d e1
            z[:, 0] += -dd if not swap else dd
            w = (r0 / (1.0 + lam * lam * np.einsum("ij,ij->i", z, z))) ** (0.5 * n)
            s1[i] += w.sum()
            s2[i] += (w * w).sum()
        done += size
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean * mean, 0.0)
    out = []
    for i in range(ds.size):
        val = mass * mean[i]
        err = mass * math.sqrt(var[i] / (n_samples - 1))
        if not err <= 0.5 * abs(val):
            raise SamplerDegenerate(f"stderr {err:.3g} exceeds half of estimate {val:.3g}")
        out.append(MCEstimate(float(val), float(err), n_samples, seed))
    return out[0] if np.ndim(d) == 0 else out


# --------------------------------------------------------------- Gram matrix


def kernel_gram(spec: SpaceSpec, cfg: TowerConfig, n_nodes: int = 80) -> np.ndarray:
    """Weighted Gram matrix of the r, h, Lambda derivatives of U_{x^+_1}."""
    x = cfg.points[0][0]
    e_r = x / np.linalg.norm(x)
    s = math.sqrt(1.0 - cfg.h**2)
    e_h = np.zeros(spec.N)
    e_h[0], e_h[2] = -cfg.h, s
    e_perp = np.zeros(spec.N)
    e_perp[1] = 1.0
    p, q, t, w = planar_axis_rule(spec.N, n_nodes, scale=1.0 / cfg.lam)
    y = x + p[:, None] * e_r + q[:, None] * e_h + t[:, None] * e_perp
    rho2 = p * p + q * q + t * t
    u = spec.cNm * (cfg.lam / (1.0 + cfg.lam**2 * rho2)) ** (0.5 * spec.n)
    wu = w * u ** (spec.mstar_f - 2.0)
    Z = np.stack([kernel_rhl(cfg, ell, y) for ell in (1, 2, 3)])
    G = (Z * wu) @ Z.T
    if not np.all(np.isfinite(G)) or np.any(np.diag(G) <= 0):
        raise QuadratureFailure("Gram quadrature produced a non-positive diagonal")
    return G


# ----------------------------------------------------- curvature weight integral


@dataclass(frozen=True)
class CurvatureIntegral:
    direct: float
    expansion: float
    error: float

    @property
    def relative_gap(self) -> float:
        if self.expansion == 0.0:
            return abs(self.direct)
        return abs(self.direct / self.expansion - 1.0)


def curvature_weight_integral(
    spec: SpaceSpec,
    cfg: TowerConfig,
    mu: float,
    kprof: KProfile,
    constants: ExpansionConstants | None = None,
) -> CurvatureIntegral:
    """Integral of (K(|y|/mu) - 1) U_{x^+_1,Lambda}^{m*} with U unit-coefficient.

    Outer variable rho = |y - x^+_1|; inner variable |y| - r, split at the
    kinks of K so each piece is integrated by a fixed Gauss rule.
    """
    if constants is None:
        constants = compute_constants(spec)
    N, lam, r = spec.N, cfg.lam, cfg.r
    ms = spec.mstar_f
    A2, A3 = constants.A2.value, constants.A3.value
    l = spec.l
    expansion = -0.5 * ms * (
        A2 / (lam**l * mu**l) + A3 * (mu - r) ** 2 / (lam ** (l - 2) * mu**l)
    )
    if kprof.c0 == 0:
        return CurvatureIntegral(0.0, expansion, 0.0)
    area = sphere_area(N - 1)
    xg, wg = np.polynomial.legendre.leggauss(48)
    d, cap = kprof.delta, kprof.cap * kprof.delta
    # kinks of the deficit, written as offsets v = |y| - r
    kinks = np.array([-cap, -d, 0.0, d, cap]) * mu + (mu - r)

    def inner(rho: float) -> float:
        # integrate over v = |y| - r; the polar weight becomes (1-c^2)^{(N-3)/2} (r+v)/(r rho)
        lo, hi = abs(r - rho) - r, rho
        cuts = np.concatenate(([lo], kinks[(kinks > lo) & (kinks < hi)], [hi]))
        a, b = cuts[:-1, None], cuts[1:, None]
        v = (0.5 * (b - a) * xg + 0.5 * (b + a)).ravel()
        wv = (0.5 * (b - a) * wg).ravel()
        c = (2.0 * r * v + v * v - rho * rho) / (2.0 * r * rho)
        jac = np.clip(1.0 - c * c, 0.0, None) ** (0.5 * (N - 3)) * (r + v) / (r * rho)
        dev = (v + (r - mu)) / mu
        val = -np.dot(wv, kprof.deficit(dev) * jac)
        return val * rho ** (N - 1) * (1.0 + lam * lam * rho * rho) ** (-N) * lam**N

    knots = sorted({0.0, 1.0 / lam, 4.0 / lam, d * mu, cap * mu})
    total, err = 0.0, 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        v, e = integrate.quad(inner, a, b, epsabs=0.0, epsrel=1e-12, limit=400)
        total += v
        err += e
    tail = radial_quad(lambda t: inner(knots[-1] + t), decay=N + 1.0, rtol=1.0)
    total += tail.value
    err += tail.error
    return CurvatureIntegral(float(area * total), expansion, float(area * err))
