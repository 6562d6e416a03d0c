"""Aubin-Talenti bubbles for (-Delta)^m, kernel functions and radial integrals."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (
    BadIndex,
    DimensionTooSmall,
    FlatnessOutOfRange,
    GridTooCoarse,
    NonPositive,
    QuadratureFailure,
)

QUAD_RTOL = 1e-10
TAIL_RTOL = 1e-12


def flatness_threshold(N: int, m: int) -> float:
    """Lower end l_{N,m} of the admissible flatness window."""
    n = N - 2 * m
    disc = math.sqrt(25 * n * n + 22 * n + 1)
    return n / (4 * (n + 1)) * (-3 * N + 6 * m - 1 + disc)


def normalization_constant(N: int, m: int) -> float:
    prod = 1
    for i in range(-m, m):
        prod *= N + 2 * i
    return float(prod) ** ((N - 2 * m) / (4 * m))


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


@dataclass(frozen=True)
class SpaceSpec:
    """Dimension, operator order and flatness data.

    Direct construction only checks N > 2m so that helper routines can be
    exercised outside the admissible regime; use `validate_space` for the full
    admissibility checks.
    """

    N: int
    m: int
    l: float = 2.0
    c0: float = 1.0

    def __post_init__(self) -> None:
        if self.m < 1 or self.N <= 2 * self.m:
            raise DimensionTooSmall(f"need N > 2m >= 2, got N={self.N}, m={self.m}")

    @property
    def n(self) -> int:
        """The recurring exponent N - 2m."""
        return self.N - 2 * self.m

    @property
    def mstar(self) -> Fraction:
        return Fraction(2 * self.N, self.N - 2 * self.m)

    @property
    def mstar_f(self) -> float:
        return 2.0 * self.N / (self.N - 2 * self.m)

    @property
    def cNm(self) -> float:
        return normalization_constant(self.N, self.m)

    @property
    def l_threshold(self) -> float:
        return flatness_threshold(self.N, self.m)

    @property
    def l_window(self) -> tuple[float, float]:
        return max(self.l_threshold, 2.0), float(self.n)


def validate_space(
    N: int, m: int, l: float, c0: float = 1.0, *, allow_flat: bool = False
) -> SpaceSpec:
    """Build a SpaceSpec after checking the admissible-regime hypotheses.

    `allow_flat` admits c0 = 0 so that downstream code can report the
    degenerate flat case explicitly.
    """
    if m < 1 or N < 2 * m + 3:
        raise DimensionTooSmall(f"N={N} < 2m+3={2 * m + 3}")
    if not (c0 > 0 or (allow_flat and c0 == 0)):
        raise NonPositive(f"c0 must be positive, got {c0}")
    n = N - 2 * m
    lt = flatness_threshold(N, m)
    if not (l > lt and 2.0 <= l <= n):
        raise FlatnessOutOfRange(
            f"l={l} outside ({lt:.6g}, {n}] intersected with [2, {n}]"
        )
    return SpaceSpec(N=N, m=m, l=float(l), c0=float(c0))


@dataclass(frozen=True)
class Bubble:
    center: tuple[float, ...]
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise NonPositive(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class KernelBasis:
    parent: Bubble
    index: int


def bubble_profile(rho2, lam: float, n: int, scale: float = 1.0):
    """scale * (lam / (1 + lam^2 rho^2))^{n/2}, vectorized over squared radii."""
    rho2 = np.asarray(rho2, dtype=float)
    return scale * (lam / (1.0 + lam * lam * rho2)) ** (0.5 * n)


def _sq_dist(y, center) -> np.ndarray:
    d = np.asarray(y, dtype=float) - np.asarray(center, dtype=float)
    return np.einsum("...i,...i->...", d, d)


def eval_bubble(b: Bubble, spec: SpaceSpec, y):
    """U_{x,Lambda}(y); `y` may carry leading batch axes."""
    return bubble_profile(_sq_dist(y, b.center), b.lam, spec.n, spec.cNm)


def eval_kernel(kb: KernelBasis, spec: SpaceSpec, y):
    """Z_i = dU/dy_i for i <= N and the dilation field for i = N+1."""
    i = kb.index
    if not (isinstance(i, (int, np.integer)) and 1 <= i <= spec.N + 1):
        raise BadIndex(f"kernel index {i} not in 1..{spec.N + 1}")
    lam = kb.parent.lam
    d = np.asarray(y, dtype=float) - kb.parent.x
    rho2 = np.einsum("...i,...i->...", d, d)
    u = bubble_profile(rho2, lam, spec.n, spec.cNm)
    q = lam * lam / (1.0 + lam * lam * rho2)
    if i <= spec.N:
        return -spec.n * q * d[..., i - 1] * u
    return 0.5 * spec.n * u * (1.0 - lam * lam * rho2) / (1.0 + lam * lam * rho2)


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    radius: float = math.inf


def radial_quad(
    g: Callable[[float], float], decay: float, *, rtol: float = QUAD_RTOL
) -> QuadResult:
    """Integrate g over (0, inf) where g(rho) ~ A rho^{-decay} at infinity.

    Dyadic panels are integrated adaptively until the power-law tail falls
    below TAIL_RTOL of the accumulated value; the tail is then added in
    closed form and counted in full as error.
    """
    if decay <= 1:
        raise QuadratureFailure(f"tail exponent {decay} is not integrable")
    total, err = 0.0, 0.0
    a = 0.0
    b = 0.5
    while True:
        val, e = integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
        err += e
        tail = abs(g(b)) * b / (decay - 1.0)
        if b >= 8.0 and tail <= TAIL_RTOL * abs(total):
            break
        if b > 1e12:
            raise QuadratureFailure("radial tail did not converge")
        a, b = b, 2.0 * b
    tail_signed = g(b) * b / (decay - 1.0)
    total += tail_signed
    err += abs(tail_signed)
    if not err <= rtol * abs(total):
        raise QuadratureFailure(f"error {err:.3g} above target for value {total:.6g}")
    return QuadResult(total, err, b)


def single_bubble_mass(spec: SpaceSpec, lam: float = 1.0) -> QuadResult:
    """Integral of U_{0,lam}^{m*} over R^N."""
    n, N, p = spec.n, spec.N, spec.mstar_f
    c = spec.cNm

    def g(rho: float) -> float:
        return (c * (lam / (1.0 + lam * lam * rho * rho)) ** (0.5 * n)) ** p * rho ** (N - 1)

    res = radial_quad(g, decay=N + 1.0)
    s = sphere_area(N)
    return QuadResult(s * res.value, s * res.error, res.radius)


def gradient_energy(spec: SpaceSpec, lam: float = 1.0) -> QuadResult:
    """Integral of |grad U_{0,lam}|^2 over R^N."""
    n, N, c = spec.n, spec.N, spec.cNm

    def g(rho: float) -> float:
        q = 1.0 + lam * lam * rho * rho
        du = c * n * lam ** (0.5 * n + 2) * rho * q ** (-0.5 * n - 1)
        return du * du * rho ** (N - 1)

    res = radial_quad(g, decay=N - 1.0)
    s = sphere_area(N)
    return QuadResult(s * res.value, s * res.error, res.radius)


def beta_moment(N: int, a: float, s: float) -> float:
    """Closed form of the integral of |y|^{2a} (1+|y|^2)^{-s} over R^N."""
    return (
        math.pi ** (N / 2)
        * math.gamma(a + N / 2)
        * math.gamma(s - a - N / 2)
        / (math.gamma(N / 2) * math.gamma(s))
    )


def sphere_abs_moment(N: int, l: float) -> float:
    """Mean of |omega_1|^l over the unit sphere S^{N-1}."""
    return math.gamma(N / 2) * math.gamma((l + 1) / 2) / (
        math.sqrt(math.pi) * math.gamma((N + l) / 2)
    )


def radial_laplacian(u: np.ndarray, step: float, N: int) -> np.ndarray:
    """Second-order radial Laplacian on nodes i*step, i = 0..len(u)-1.

    The origin value is the even extrapolation 1.5 v_1 - 0.6 v_2 + 0.1 v_3
    (exact for a + b rho^2 + c rho^4), which keeps
    the truncation error a smooth even function so that nested applications
    stay second order. The returned array is one node shorter because the
    last node lacks a right neighbour.
    """
    out = np.empty(len(u) - 1)
    rho = step * np.arange(1, len(u) - 1)
    up, mid, dn = u[2:], u[1:-1], u[:-2]
    out[1:] = (up - 2.0 * mid + dn) / step**2 + (N - 1) / rho * (up - dn) / (2.0 * step)
    out[0] = 1.5 * out[1] - 0.6 * out[2] + 0.1 * out[3]
    return out


@dataclass(frozen=True)
class ResidualReport:
    steps: tuple[float, ...]
    residuals: tuple[float, ...]
    orders: tuple[float, ...]

    @property
    def residual(self) -> float:
        return self.residuals[0]

    @property
    def order(self) -> float:
        return float(np.mean(self.orders))


def _residual_at(spec: SpaceSpec, step: float, r_max: float) -> float:
    M = int(round(r_max / step))
    if M < 32:
        raise GridTooCoarse(f"{M} interior nodes, need at least 32")
    rho = step * np.arange(M + 1 + spec.m)
    u = bubble_profile(rho * rho, 1.0, spec.n, spec.cNm)
    v = u
    for _ in range(spec.m):
        v = radial_laplacian(v, step, spec.N)
    lhs = (-1) ** spec.m * v
    rhs = u[: M + 1] ** (spec.mstar_f - 1.0)
    return float(np.max(np.abs(lhs[1:] - rhs[1:])) / np.max(rhs))


def radial_polyharmonic_residual(
    spec: SpaceSpec, grid_step: float, r_max: float, refinements: int = 2
) -> ResidualReport:
    """Finite-difference residual of (-Delta)^m U = U^{m*-1} for U = U_{0,1}.

    Runs at grid_step and `refinements` successive halvings and reports the
    pairwise observed orders.
    """
    if not grid_step > 0:
        raise NonPositive("grid_step must be positive")
    steps = tuple(grid_step / 2**i for i in range(refinements + 1))
    res = tuple(_residual_at(spec, h, r_max) for h in steps)
    orders = tuple(math.log2(res[i] / res[i + 1]) for i in range(refinements))
    return ResidualReport(steps, res, orders)


def planar_axis_rule(N: int, n_nodes: int, scale: float = 1.0):
    """Product rule for integrands depending on (y_a, y_b, |y_rest|) in R^N.

    Returns arrays (p, q, s, w) with the measure |S^{N-3}| s^{N-3} folded
    into w. Infinite ranges use the map t -> scale*tan(t).
    """
    if N < 3:
        raise DimensionTooSmall("planar rule needs N >= 3")
    x, wx = np.polynomial.legendre.leggauss(n_nodes)
    th = 0.5 * math.pi * 0.5 * (x + 1.0)
    wth = wx * 0.25 * math.pi
    # two-sided axis from a symmetric rule on (-pi/2, pi/2)
    t2 = 0.5 * math.pi * x
    w2 = wx * 0.5 * math.pi
    a = scale * np.tan(t2)
    wa = w2 * scale / np.cos(t2) ** 2
    s = scale * np.tan(th)
    ws = wth * scale / np.cos(th) ** 2
    if N == 3:
        ws = ws * 2.0  # S^0 has two points and s ranges over (0, inf)
        sw = ws
    else:
        sw = ws * sphere_area(N - 2) * s ** (N - 3)
    P, Q, S = np.meshgrid(a, a, s, indexing="ij")
    W = wa[:, None, None] * wa[None, :, None] * sw[None, None, :]
    return P.ravel(), Q.ravel(), S.ravel(), W.ravel()


def kernel_overlap(
    spec: SpaceSpec, i: int, j: int, lam: float = 1.0, n_nodes: int = 96
) -> float:
    """Integral of U^{m*-2} Z_i Z_j over R^N for 1 <= i, j <= N."""
    for idx in (i, j):
        if not 1 <= idx <= spec.N:
            raise BadIndex(f"kernel index {idx} not in 1..{spec.N}")
    p, q, s, w = planar_axis_rule(spec.N, n_nodes, scale=1.0 / lam)
    y = np.zeros((p.size, spec.N))
    a, b = (i - 1, j - 1) if i != j else (i - 1, (i % spec.N))
    rest = [c for c in range(spec.N) if c not in (a, b)]
    y[:, a] = p
    y[:, b] = q
    y[:, rest[0]] = s
    bub = Bubble(tuple([0.0] * spec.N), lam)
    u = eval_bubble(bub, spec, y)
    zi = eval_kernel(KernelBasis(bub, i), spec, y)
    zj = eval_kernel(KernelBasis(bub, j), spec, y)
    return float(np.sum(w * u ** (spec.mstar_f - 2.0) * zi * zj))


def warn_degenerate(msg: str) -> None:
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
