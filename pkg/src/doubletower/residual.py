"""Weighted sup-norms, the ansatz error term l_k and auxiliary inequalities."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .asymptotics import ExpansionConstants, compute_constants, fit_loglog_slope
from .bubble import SpaceSpec, sphere_area
from .energy import ExponentBook, lambda0_from, make_exponents
from .errors import EmptyGrid, InsufficientRange, NonPositive, SamplerDegenerate
from .profile import KProfile
from .tower import TowerConfig, dist_cross, dist_same, kernel_rhl


CHUNK = 4096


@dataclass(frozen=True)
class GridRecipe:
    n_radii: int = 48
    r_min: float = 0.1
    spread: float = 4.0  # outer shell radius in units of the nearest-neighbour distance
    n_dirs: int = 32
    n_far: int = 2048
    seed: int = 0


@dataclass(frozen=True)
class WeightedGrid:
    points: np.ndarray
    recipe: GridRecipe
    digest: str

    def __len__(self) -> int:
        return len(self.points)


def nearest_spacing(cfg: TowerConfig) -> float:
    cands = [dist_cross(cfg, 1)] if cfg.h > 0 else []
    if cfg.k > 1:
        cands.append(dist_same(cfg, 1))
    return min(cands) if cands else 2.0 * cfg.r


def local_frame(cfg: TowerConfig, x: np.ndarray) -> np.ndarray:
    """Orthonormal frame at a center: radial, ring tangent, height, then e_4..e_N."""
    N = cfg.spec.N
    e_r = x / np.linalg.norm(x)
    a = math.atan2(x[1], x[0])
    e_t = np.zeros(N)
    e_t[0], e_t[1] = -math.sin(a), math.cos(a)
    e_h = np.zeros(N)
    e_h[2] = 1.0
    e_h -= (e_h @ e_r) * e_r
    nh = np.linalg.norm(e_h)
    rows = [e_r, e_t] + ([e_h / nh] if nh > 1e-12 else [])
    for i in range(3, N):
        e = np.zeros(N)
        e[i] = 1.0
        rows.append(e)
    return np.array(rows)


def build_grid(cfg: TowerConfig, recipe: GridRecipe = GridRecipe()) -> WeightedGrid:
    """Shells around every center plus a far-field stratum.

    Shell radii are geometric from r_min to spread times the nearest-center
    spacing, shifted by a seeded fraction of one ratio step. Directions are
    the signed local frame of each center completed by seeded random unit
    vectors up to n_dirs. The far field is uniform in the ball of radius 2r.
    """
    rng = np.random.default_rng(recipe.seed)
    N = cfg.spec.N
    r_max = recipe.spread * nearest_spacing(cfg)
    ratio = (r_max / recipe.r_min) ** (1.0 / max(recipe.n_radii - 1, 1))
    radii = np.geomspace(recipe.r_min, r_max, recipe.n_radii) * ratio ** rng.random()
    n_rand = max(recipe.n_dirs - 2 * N, 0)
    rand = rng.standard_normal((n_rand, N))
    rand /= np.linalg.norm(rand, axis=-1, keepdims=True)
    blocks = []
    for x in cfg.centers:
        fr = local_frame(cfg, x)
        dirs = np.vstack([fr, -fr, rand])
        offs = (radii[:, None, None] * dirs[None]).reshape(-1, N)
        blocks.append(x + np.vstack([np.zeros((1, N)), offs]))
    g = rng.standard_normal((recipe.n_far, N))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    far = g * (2.0 * cfg.r * rng.random(recipe.n_far) ** (1.0 / N))[:, None]
    pts = np.vstack(blocks + [far])
    pts.flags.writeable = False
    meta = json.dumps(
        {"recipe": asdict(recipe), "k": cfg.k, "r": cfg.r, "h": cfg.h, "N": N}, sort_keys=True
    )
    digest = hashlib.sha256(meta.encode() + np.ascontiguousarray(pts).tobytes()).hexdigest()[:16]
    return WeightedGrid(pts, recipe, digest)


def weight(cfg: TowerConfig, y: np.ndarray, power: float) -> np.ndarray:
    """Sum over centers of (1 + |y - x|)^{-power}, chunked over points."""
    out = np.empty(len(y))
    C = cfg.centers
    for s in range(0, len(y), CHUNK):
        d = np.linalg.norm(y[s : s + CHUNK, None, :] - C[None], axis=-1)
        out[s : s + CHUNK] = np.sum((1.0 + d) ** (-power), axis=1)
    return out


@dataclass(frozen=True)
class NormReport:
    k: int
    tau: float
    norm_star: float | None
    norm_dblstar: float | None
    argmax: tuple[float, ...]
    grid_hash: str


def _field_values(field, grid: WeightedGrid) -> np.ndarray:
    if callable(field):
        vals = np.concatenate(
            [np.asarray(field(grid.points[s : s + CHUNK])) for s in range(0, len(grid), CHUNK)]
        )
    else:
        vals = np.asarray(field, dtype=float)
    if vals.shape != (len(grid),):
        raise ValueError("field values do not match the grid")
    return vals


def _sup(field, grid: WeightedGrid, cfg: TowerConfig, power: float) -> tuple[float, np.ndarray]:
    if len(grid) == 0:
        raise EmptyGrid("grid has no points")
    vals = np.abs(_field_values(field, grid))
    ratio = vals / weight(cfg, grid.points, power)
    i = int(np.argmax(ratio))
    return float(ratio[i]), grid.points[i]


def star_power(spec: SpaceSpec, tau: float) -> float:
    return 0.5 * spec.n + tau


def dblstar_power(spec: SpaceSpec, tau: float) -> float:
    return 0.5 * (spec.N + 2 * spec.m) + tau


def norm_star(field, grid: WeightedGrid, cfg: TowerConfig, tau: float) -> NormReport:
    v, at = _sup(field, grid, cfg, star_power(cfg.spec, tau))
    return NormReport(cfg.k, tau, v, None, tuple(map(float, at)), grid.digest)


def norm_dblstar(field, grid: WeightedGrid, cfg: TowerConfig, tau: float) -> NormReport:
    v, at = _sup(field, grid, cfg, dblstar_power(cfg.spec, tau))
    return NormReport(cfg.k, tau, None, v, tuple(map(float, at)), grid.digest)


def error_term_lk(cfg: TowerConfig, mu: float, p: KProfile, y) -> np.ndarray:
    """K(|y|/mu) W^{m*-1} - sum_j U_j^{m*-1}, evaluated without cancellation."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    q = cfg.spec.mstar_f - 1.0
    out = np.empty(len(y))
    C = cfg.centers
    c, n, lam = cfg.spec.cNm, cfg.spec.n, cfg.lam
    for s in range(0, len(y), CHUNK):
        yy = y[s : s + CHUNK]
        d2 = np.einsum("ijk,ijk->ij", yy[:, None, :] - C[None], yy[:, None, :] - C[None])
        U = c * (lam / (1.0 + lam * lam * d2)) ** (0.5 * n)
        top = np.max(U, axis=1)
        W = U.sum(axis=1)
        rest = W - top
        bump = top**q * np.expm1(q * np.log1p(rest / top))
        others = (U**q).sum(axis=1) - top**q
        dev = (np.linalg.norm(yy, axis=1) - mu) / mu
        out[s : s + CHUNK] = -p.deficit(dev) * W**q + (bump - others)
    return out


# ------------------------------------------------------------------- l_k scan


def predicted_lk_exponent(spec: SpaceSpec, eps1: float = 1e-3, flat: bool = False) -> float:
    """Bound exponent of ||l_k||_** in k, read off with k/mu_k = k^{-l/(n-l)}."""
    n, l, N, m = spec.n, spec.l, spec.N, spec.m
    first = l / (n - l) * (0.5 * (N + 2 * m) - (n - l) / n - eps1)
    second = n * l / (n - l)
    return -first if flat else -min(first, second)


@dataclass(frozen=True)
class ScanRow:
    k: int
    norm: float
    argmax: tuple[float, ...]
    grid_hash: str


@dataclass(frozen=True)
class ScanReport:
    rows: tuple[ScanRow, ...]
    slope: float
    predicted: float
    margin: float = 0.3

    @property
    def ks(self) -> list[int]:
        return [r.k for r in self.rows]

    @property
    def norms(self) -> list[float]:
        return [r.norm for r in self.rows]

    @property
    def passed(self) -> bool:
        return self.slope <= self.predicted + self.margin

    @property
    def monotone(self) -> bool:
        return all(a > b for a, b in zip(self.norms, self.norms[1:]))


def scan_config(spec: SpaceSpec, k: int, constants: ExpansionConstants, ex: ExponentBook, lam: float) -> TowerConfig:
    mu = float(k) ** ex.mu_exponent
    h = constants.h0 * float(k) ** (-ex.lambda_exponent)
    return TowerConfig(spec, k, mu, h, lam)


def lk_norm_scan(
    spec: SpaceSpec,
    ks: Sequence[int],
    exponents: ExponentBook | None = None,
    *,
    kprof: KProfile | None = None,
    recipe: GridRecipe = GridRecipe(),
    constants: ExpansionConstants | None = None,
    lam: float | None = None,
) -> ScanReport:
    """Fit the k-slope of ||l_k||_** at (mu_k, lambda_k, Lambda0).

    `kprof` defaults to the profile with `spec.c0` and `spec.l`; passing a flat
    profile keeps Lambda0 from `spec` and compares against the first
    branch of the bound only.
    """
    if len(ks) < 4:
        raise InsufficientRange(f"need at least 4 values of k, got {len(ks)}")
    ex = exponents or make_exponents(spec)
    consts = constants or compute_constants(spec)
    lam0 = lam if lam is not None else lambda0_from(spec, consts)
    prof = kprof or KProfile(spec.c0, spec.l)
    rows = []
    for k in ks:
        cfg = scan_config(spec, k, consts, ex, lam0)
        grid = build_grid(cfg, recipe)
        mu = cfg.r
        rep = norm_dblstar(lambda y: error_term_lk(cfg, mu, prof, y), grid, cfg, ex.tau)
        rows.append(ScanRow(k, rep.norm_dblstar, rep.argmax, rep.grid_hash))
    slope = fit_loglog_slope(ks, [r.norm for r in rows])
    pred = predicted_lk_exponent(spec, ex.eps1, flat=prof.c0 == 0)
    return ScanReport(tuple(rows), slope, pred)


# ------------------------------------------------------- kernel derivative decay


def kernel_decay_ratio(
    cfg: TowerConfig,
    ell: int,
    exponent: float | None = None,
    radii: np.ndarray | None = None,
    direction: np.ndarray | None = None,
) -> float:
    """max/median of |Zbar_ell| (1+rho)^exponent / (1 + r delta_{ell 2}) along a ray."""
    N = cfg.spec.N
    p = cfg.spec.n + 1 if exponent is None else exponent
    if radii is None:
        radii = np.geomspace(1.0 / cfg.lam, 1e3 / cfg.lam, 64)
    if direction is None:
        direction = np.arange(1.0, N + 1.0)
    direction = direction / np.linalg.norm(direction)
    y = cfg.points[0][0] + radii[:, None] * direction
    z = np.abs(kernel_rhl(cfg, ell, y)) * (1.0 + radii) ** p
    if ell == 2:
        z = z / (1.0 + cfg.r)
    return float(np.max(z) / np.median(z))


# ---------------------------------------------------- auxiliary inequalities


@dataclass(frozen=True)
class ConvolutionReport:
    norms: tuple[float, ...]
    estimates: tuple[float, ...]
    stderrs: tuple[float, ...]
    ratios: tuple[float, ...]

    @property
    def spread(self) -> float:
        return max(self.ratios) / min(self.ratios)

    @property
    def passed(self) -> bool:
        return self.spread <= 3.0


def convolution_bound_check(
    beta: float,
    n_samples: int = 400_000,
    *,
    N: int = 5,
    m: int = 1,
    seed: int = 0,
    norms: Sequence[float] = (1.0, 10.0, 100.0),
) -> ConvolutionReport:
    """Monte-Carlo check that the Riesz-type convolution decays like (1+|y|)^{-beta}.

    Inside B(y, (1+|y|)/2) the radius about y is drawn from t^{2m-1} so the
    |y-z|^{-(N-2m)} singularity cancels; outside, z is drawn from a
    Lomax-radius law about the origin with the ball excluded by indicator.
    """
    n = N - 2 * m
    if not 0 < beta < n:
        raise ValueError(f"beta={beta} must lie in (0, {n})")
    rng = np.random.default_rng(seed)
    S = sphere_area(N)
    alpha = 0.5 * beta
    est, errs, ratios = [], [], []
    half = n_samples // 2
    for yn in norms:
        y = np.zeros(N)
        y[0] = yn
        R = 0.5 * (1.0 + yn)
        # inner ball, radial law t^{2m-1} on [0, R]
        t = R * rng.random(half) ** (1.0 / (2 * m))
        w = rng.standard_normal((half, N))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        z = y + t[:, None] * w
        f_in = (1.0 + np.linalg.norm(z, axis=1)) ** (-2 * m - beta) * S * R ** (2 * m) / (2 * m)
        # outer region, |z| with density alpha (1+rho)^{-1-alpha}
        rho = (1.0 - rng.random(half)) ** (-1.0 / alpha) - 1.0
        w = rng.standard_normal((half, N))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        z = w * rho[:, None]
        dist = np.linalg.norm(z - y, axis=1)
        dens = alpha * (1.0 + rho) ** (-1.0 - alpha) / (S * np.maximum(rho, 1e-300) ** (N - 1))
        f_out = np.where(
            dist > R, dist ** (-n) * (1.0 + rho) ** (-2 * m - beta) / dens, 0.0
        )
        v = f_in.mean() + f_out.mean()
        e = math.sqrt(f_in.var() / half + f_out.var() / half)
        if not e <= 0.5 * v:
            raise SamplerDegenerate(f"stderr {e:.3g} exceeds half of estimate {v:.3g}")
        est.append(float(v))
        errs.append(float(e))
        ratios.append(float(v * (1.0 + yn) ** beta))
    return ConvolutionReport(tuple(norms), tuple(est), tuple(errs), tuple(ratios))


@dataclass(frozen=True)
class PairSplitReport:
    separations: tuple[float, ...]
    constants: tuple[float, ...]
    midpoint_ratio: tuple[float, ...]

    @property
    def stable(self) -> bool:
        c = self.constants
        return all(np.isfinite(c)) and max(c) / min(c) <= 2.0

    @property
    def midpoint_strict(self) -> bool:
        return all(r < 1.0 for r in self.midpoint_ratio)

    @property
    def passed(self) -> bool:
        return self.stable and all(r <= 1.0 for r in self.midpoint_ratio)


def pair_split_check(
    gamma1: float,
    gamma2: float,
    upsilon: float,
    trials: int = 200_000,
    *,
    N: int = 5,
    seed: int = 0,
    separations: Sequence[float] = (10.0, 100.0),
) -> PairSplitReport:
    """Empirical constant C in g(y) <= C D^{-upsilon} (sum of shifted powers).

    Here g(y) = (1+|y-x_n|)^{-gamma1} (1+|y-x_m|)^{-gamma2} with x_m = 0 and
    x_n = D e_1. C is the largest ratio over random samples plus a dense
    scan of the axis through both centers; the midpoint ratio is
    g/(C D^{-upsilon} sum) at y = x_n/2, equal to 1 only when the midpoint
    itself attains the supremum.
    """
    if not (gamma1 >= 1 and gamma2 >= 1 and 0 < upsilon <= min(gamma1, gamma2)):
        raise NonPositive("need gamma1, gamma2 >= 1 and 0 < upsilon <= min(gamma1, gamma2)")
    rng = np.random.default_rng(seed)
    s = gamma1 + gamma2 - upsilon

    def parts(y, D):
        xn = np.zeros(N)
        xn[0] = D
        a = 1.0 + np.linalg.norm(y - xn, axis=-1)
        b = 1.0 + np.linalg.norm(y, axis=-1)
        g = a ** (-gamma1) * b ** (-gamma2)
        bound = D ** (-upsilon) * (a ** (-s) + b ** (-s))
        return g, bound

    consts, mids = [], []
    for D in separations:
        k = trials // 4
        xn = np.zeros(N)
        xn[0] = D
        samples = [
            rng.standard_normal((k, N)) * D * rng.random((k, 1)),
            xn + rng.standard_normal((k, N)) * D * rng.random((k, 1)),
            np.outer(rng.random(k), xn) + rng.standard_normal((k, N)),
            rng.standard_normal((k, N)) * 10.0 * D,
            np.outer(np.linspace(-D, 2.0 * D, 3001), np.eye(N)[0]),
        ]
        y = np.vstack(samples)
        g, bound = parts(y, D)
        C = float(np.max(g / bound))
        consts.append(C)
        gm, bm = parts(0.5 * xn, D)
        mids.append(float(gm / (C * bm)))
    return PairSplitReport(tuple(separations), tuple(consts), tuple(mids))
