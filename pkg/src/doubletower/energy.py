"""Leading-order reduced energy F(r, h, Lambda), its critical scales and flow.

F is written as k*A1 + k^{1-E} * e(r, h, Lambda) with E = nl/(n-l) and an
O(1) excess e; comparisons against the energy levels are done on e so that
the k*A1 offset never swamps the k-dependent terms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import integrate

from .asymptotics import ExpansionConstants
from .bubble import SpaceSpec
from .errors import BadStart, DegenerateExponent, DegenerateFlat

INF = math.inf


def M_branches(spec: SpaceSpec) -> tuple[float, float, float, float]:
    """The four candidates whose minimum is M_{m,N,l}; l = n branches are +inf."""
    n, l, m, N = spec.n, spec.l, spec.m, spec.N
    a = (n - 1) / (n + 1)
    gap = n - l
    if gap == 0:
        return INF, INF, a, INF
    b1 = n * (l - 1) / gap - a
    b2 = l / gap * (4 * m - 2 * gap / n - n / l)
    b4 = (3 * l + 2 * m - N) / gap - a
    return b1, b2, a, b4


def M_exponent(spec: SpaceSpec) -> float:
    return min(M_branches(spec))


@dataclass(frozen=True)
class ExponentBook:
    mu_exponent: float
    lambda_exponent: float
    energy_exponent: float
    tau: float
    M: float
    theta_bar: float
    sigma_small: float = 0.1
    eps0: float = 1e-3
    eps1: float = 1e-3

    @property
    def tau_window(self) -> tuple[float, float]:
        lo = 1.0 / self.mu_exponent
        return lo, lo + self.eps1


def make_exponents(
    spec: SpaceSpec,
    *,
    eps1: float = 1e-3,
    eps0: float = 1e-3,
    theta_bar: float | None = None,
    tau: float | None = None,
    sigma_small: float = 0.1,
) -> ExponentBook:
    n, l = spec.n, spec.l
    if n == l:
        raise DegenerateExponent("l = N-2m makes the ring-radius exponent diverge")
    M = M_exponent(spec)
    tb = min(M, 0.2) if theta_bar is None else theta_bar
    if not 0 < tb <= M:
        raise ValueError(f"theta_bar={tb} must lie in (0, M={M}]")
    lo = (n - l) / n
    t = lo + 0.5 * eps1 if tau is None else tau
    if not lo < t < lo + eps1:
        raise ValueError(f"tau={t} outside ({lo}, {lo + eps1})")
    return ExponentBook(
        mu_exponent=n / (n - l),
        lambda_exponent=(n - 1) / (n + 1),
        energy_exponent=n * l / (n - l),
        tau=t,
        M=M,
        theta_bar=tb,
        sigma_small=sigma_small,
        eps0=eps0,
        eps1=eps1,
    )


@dataclass(frozen=True)
class ReducedEnergyModel:
    constants: ExpansionConstants
    spec: SpaceSpec
    exponents: ExponentBook
    k: int
    eta1: float = 1e-3

    def __post_init__(self) -> None:
        if self.constants.A2.value <= 0:
            raise DegenerateFlat("A2 = 0 (flat K): Lambda0 and the energy levels are undefined")

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def a(self) -> float:
        return self.exponents.lambda_exponent

    @property
    def E(self) -> float:
        return self.exponents.energy_exponent

    @property
    def scale(self) -> float:
        """k^{1-E}: converts the excess e into units of F."""
        return float(self.k) ** (1.0 - self.E)


def mu_k(model: ReducedEnergyModel) -> float:
    return float(model.k) ** model.exponents.mu_exponent


def lambda_k(model: ReducedEnergyModel) -> float:
    return model.constants.h0 * float(model.k) ** (-model.a)


def Lambda0(model: ReducedEnergyModel) -> float:
    return lambda0_from(model.spec, model.constants)


def lambda0_from(spec: SpaceSpec, c: ExpansionConstants) -> float:
    n, l = spec.n, spec.l
    if n == l:
        raise DegenerateExponent("Lambda0 undefined for l = N-2m")
    if c.A2.value <= 0:
        raise DegenerateFlat("A2 = 0 (flat K): Lambda0 is undefined")
    return (n * c.B4.value / (c.A2.value * l)) ** (1.0 / (n - l))


def h0(model: ReducedEnergyModel) -> float:
    return model.constants.h0


def _excess(model: ReducedEnergyModel, dr, q, lam):
    """e as a function of r - mu_k, 1 - h/lambda_k and Lambda."""
    c, n, l = model.constants, model.n, model.spec.l
    k2a = float(model.k) ** (2.0 * model.a)
    return (
        -c.B4.value / lam**n
        - (c.B6.value + c.B7.value * q * q) / (lam**n * k2a)
        + c.A2.value / lam**l
        + c.A3.value * dr * dr / lam ** (l - 2)
    )


def _excess_grad(model: ReducedEnergyModel, dr, q, lam):
    """(de/dr, de/dh, de/dLambda)."""
    c, n, l = model.constants, model.n, model.spec.l
    k2a = float(model.k) ** (2.0 * model.a)
    b67 = c.B6.value + c.B7.value * q * q
    de_dr = 2.0 * c.A3.value * dr / lam ** (l - 2)
    de_dh = 2.0 * c.B7.value * q / (lambda_k(model) * lam**n * k2a)
    de_dlam = (
        n * c.B4.value / lam ** (n + 1)
        + n * b67 / (lam ** (n + 1) * k2a)
        - l * c.A2.value / lam ** (l + 1)
        - (l - 2) * c.A3.value * dr * dr / lam ** (l - 1)
    )
    return de_dr, de_dh, de_dlam


def _offsets(model: ReducedEnergyModel, r, h):
    return r - mu_k(model), 1.0 - h / lambda_k(model)


def F_excess(model: ReducedEnergyModel, r, h, lam):
    dr, q = _offsets(model, r, h)
    return _excess(model, dr, q, lam)


def F_leading(model: ReducedEnergyModel, r, h, lam):
    k = float(model.k)
    return k * model.constants.A1.value + model.scale * F_excess(model, r, h, lam)


def Fbar(model: ReducedEnergyModel, r, h, lam):
    return -F_leading(model, r, h, lam)


def dF_dr(model: ReducedEnergyModel, r, h, lam):
    return model.scale * _excess_grad(model, *_offsets(model, r, h), lam)[0]


def dF_dh(model: ReducedEnergyModel, r, h, lam):
    return model.scale * _excess_grad(model, *_offsets(model, r, h), lam)[1]


def dF_dLambda(model: ReducedEnergyModel, r, h, lam):
    return model.scale * _excess_grad(model, *_offsets(model, r, h), lam)[2]


def leading_lambda_terms(model: ReducedEnergyModel, lam: float) -> tuple[float, float]:
    """The two k^{-E} terms of dF/dLambda that cancel at Lambda0."""
    c, n, l = model.constants, model.n, model.spec.l
    return (
        model.scale * n * c.B4.value / lam ** (n + 1),
        model.scale * l * c.A2.value / lam ** (l + 1),
    )


def stationary_point(model: ReducedEnergyModel) -> tuple[float, float, float]:
    """Interior zero of the modeled gradient: (mu_k, lambda_k, Lambda_*)."""
    c, n, l = model.constants, model.n, model.spec.l
    k2a = float(model.k) ** (2.0 * model.a)
    lam = (n * (c.B4.value + c.B6.value / k2a) / (l * c.A2.value)) ** (1.0 / (n - l))
    return mu_k(model), lambda_k(model), lam


def height_profile(model: ReducedEnergyModel, h):
    """B4 k^n (1-h^2)^{-n/2} + B5 k h^{1-n} (1-h^2)^{-1/2}."""
    c, n, k = model.constants, model.n, float(model.k)
    h = np.asarray(h, dtype=float)
    return c.B4.value * k**n * (1.0 - h * h) ** (-0.5 * n) + c.B5.value * k * h ** (1 - n) / np.sqrt(
        1.0 - h * h
    )


@dataclass(frozen=True)
class ParamBox:
    r: tuple[float, float]
    h: tuple[float, float]
    lam: tuple[float, float]

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(0.5 * (a + b) for a, b in (self.r, self.h, self.lam))

    @property
    def half_widths(self) -> tuple[float, float, float]:
        return tuple(0.5 * (b - a) for a, b in (self.r, self.h, self.lam))

    def contains(self, r: float, h: float, lam: float) -> bool:
        return all(a <= x <= b for x, (a, b) in zip((r, h, lam), (self.r, self.h, self.lam)))


def box_half_widths(model: ReducedEnergyModel) -> tuple[float, float, float]:
    k, tb = float(model.k), model.exponents.theta_bar
    return k**-tb, lambda_k(model) * k**-tb, k ** (-1.5 * tb)


def box_Dk(model: ReducedEnergyModel) -> ParamBox:
    mu, lk, l0 = mu_k(model), lambda_k(model), Lambda0(model)
    wr, wh, wl = box_half_widths(model)
    return ParamBox((mu - wr, mu + wr), (lk - wh, lk + wh), (l0 - wl, l0 + wl))


@dataclass(frozen=True)
class EnergyLevels:
    t1: float
    t2: float
    e1: float  # F-bar <= t1  iff  e >= e1
    e2: float  # F-bar <= t2  iff  e >= e2


def energy_levels(model: ReducedEnergyModel) -> EnergyLevels:
    c, n, l, k = model.constants, model.n, model.spec.l, float(model.k)
    l0 = Lambda0(model)
    gap = c.A2.value / l0**l - c.B4.value / l0**n
    e1 = gap + k ** (-2.5 * model.exponents.theta_bar)
    e2 = -model.eta1 * k**model.E
    base = -k * c.A1.value
    return EnergyLevels(base - model.scale * e1, base + k * model.eta1, e1, e2)


# ------------------------------------------------------------------ gradient flow

FlowStatus = Literal["ReachedT1", "LeftBox", "BudgetExhausted"]
FACES = ("r-", "r+", "h-", "h+", "Lambda-", "Lambda+")


@dataclass(frozen=True)
class FlowReport:
    status: FlowStatus
    exit_face: str | None
    steps: int
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    end_unit: tuple[float, float, float]
    time: float
    history_hash: str
    seed: int | None = None


@dataclass
class _Unit:
    """Affine map between box-normalized coordinates and (r, h, Lambda)."""

    center: tuple[float, float, float]
    widths: tuple[float, float, float]

    def to_params(self, z):
        return tuple(c + w * zi for c, w, zi in zip(self.center, self.widths, z))

    def from_params(self, p):
        return np.array([(x - c) / w for x, c, w in zip(p, self.center, self.widths)])


def flow_simulate(
    model: ReducedEnergyModel,
    start: tuple[float, float, float],
    *,
    t_max: float = 200.0,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    seed: int | None = None,
) -> FlowReport:
    """Integrate (r, h, Lambda)' = -grad F-bar until F-bar <= t1 or a face is hit.

    The system is solved in box-normalized coordinates with time rescaled by
    k^{1-E}; both are changes of variables, so trajectories are unchanged.
    """
    levels = energy_levels(model)
    mu, lk, l0 = mu_k(model), lambda_k(model), Lambda0(model)
    wr, wh, wl = box_half_widths(model)
    unit = _Unit((mu, lk, l0), (wr, wh, wl))
    z0 = unit.from_params(start)
    if not np.all(np.abs(z0) <= 1.0 + 1e-12):
        raise BadStart(f"start {start} lies outside D_k")

    def state(z):
        dr, q, lam = wr * z[0], -wh * z[1] / lk, l0 + wl * z[2]
        return dr, q, lam

    def excess(z):
        return _excess(model, *state(z))

    if excess(z0) < levels.e2:
        raise BadStart("F-bar(start) exceeds t2")

    def rhs(_t, z):
        gr, gh, gl = _excess_grad(model, *state(z))
        return [gr / wr, gh / wh, gl / wl]

    if excess(z0) >= levels.e1:
        h = _history_hash(np.asarray(z0)[:, None])
        return FlowReport("ReachedT1", None, 0, tuple(start), tuple(start), tuple(z0), 0.0, h, seed)

    def reach(_t, z):
        return excess(z) - levels.e1

    reach.terminal, reach.direction = True, 1.0
    events = [reach]
    for axis in range(3):
        for sgn in (-1.0, 1.0):
            ev = _face_event(axis, sgn)
            events.append(ev)
    sol = integrate.solve_ivp(
        rhs, (0.0, t_max), z0, method="RK45", rtol=rtol, atol=atol, events=events
    )
    z_end = sol.y[:, -1]
    status: FlowStatus = "BudgetExhausted"
    face = None
    t_end = float(sol.t[-1])
    hits = [(float(te[0]), i) for i, te in enumerate(sol.t_events) if len(te)]
    if hits:
        t_end, idx = min(hits)
        z_end = sol.y_events[idx][0]
        if idx == 0:
            status = "ReachedT1"
        else:
            status, face = "LeftBox", FACES[idx - 1]
    end = unit.to_params(z_end)
    return FlowReport(
        status,
        face,
        int(sol.t.size - 1),
        tuple(float(s) for s in start),
        tuple(float(x) for x in end),
        tuple(float(x) for x in z_end),
        t_end,
        _history_hash(sol.y),
        seed,
    )


def _face_event(axis: int, sgn: float) -> Callable:
    def ev(_t, z):
        return z[axis] - sgn

    ev.terminal = True
    ev.direction = sgn
    return ev


def _history_hash(y: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype="<f8").tobytes()).hexdigest()[:16]


def random_starts(model: ReducedEnergyModel, count: int, seed: int) -> list[tuple[float, float, float]]:
    """Uniform starts in D_k, kept only when F-bar <= t2."""
    rng = np.random.default_rng(seed)
    mu, lk, l0 = mu_k(model), lambda_k(model), Lambda0(model)
    wr, wh, wl = box_half_widths(model)
    levels = energy_levels(model)
    out = []
    while len(out) < count:
        z = rng.uniform(-1.0, 1.0, 3)
        p = (mu + wr * z[0], lk + wh * z[1], l0 + wl * z[2])
        if _excess(model, wr * z[0], -wh * z[1] / lk, p[2]) >= levels.e2:
            out.append(p)
    return out


# ------------------------------------------------------------------ min-max bracket


@dataclass(frozen=True)
class Bracket:
    lower: bool
    upper: bool
    segment_max: float
    grid_min: float
    t1: float
    t2: float


def bracket_from_values(segment, grid, t1: float, t2: float) -> Bracket:
    """Upper: max over the segment below t2. Lower: grid values above t1."""
    smax = float(np.max(segment))
    gmin = float(np.min(grid))
    return Bracket(gmin > t1, smax < t2, smax, gmin, t1, t2)


def minmax_bracket(model: ReducedEnergyModel, n_grid: int = 41) -> Bracket:
    """Bracket check with F-bar shifted by k*A1 and divided by k^{1-E}."""
    lev = energy_levels(model)
    lk, l0 = lambda_k(model), Lambda0(model)
    wr, wh, wl = box_half_widths(model)
    u = np.linspace(-1.0, 1.0, n_grid)
    seg = -_excess(model, wr * u, 0.0, l0)
    V, W = np.meshgrid(u, u, indexing="ij")
    grid = -_excess(model, 0.0, -wh * V / lk, l0 + wl * W)
    return bracket_from_values(seg, grid, -lev.e1, -lev.e2)


def r_face_margin(model: ReducedEnergyModel, n_grid: int = 21) -> float:
    """max over both r-faces of (F-bar - t1) in excess units; < 0 means below t1."""
    lev = energy_levels(model)
    lk, l0 = lambda_k(model), Lambda0(model)
    wr, wh, wl = box_half_widths(model)
    u = np.linspace(-1.0, 1.0, n_grid)
    V, W = np.meshgrid(u, u, indexing="ij")
    worst = -INF
    for sgn in (-1.0, 1.0):
        e = _excess(model, sgn * wr, -wh * V / lk, l0 + wl * W)
        worst = max(worst, float(np.max(lev.e1 - e)))
    return worst
