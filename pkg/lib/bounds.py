import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import comb

from lib.channels import ChannelFamily, h2, h2_inv
from lib.curve import Curve
from lib.de import DegreeDistribution, check_step, de_fixed_point, de_step
from lib.density import LN2, LDensity, battacharyya
from lib.parallel import parallel_map

logger = logging.getLogger(__name__)

INVERSION_STEPS = 60
CONTAINMENT_TOL = 1e-6
SCAN_POINTS = 2001


# information combining


def r_lower(ddp: DegreeDistribution, x: float) -> float:
    """Smallest check-output entropy for inputs of entropy x (BSC inputs)."""
    eps = h2_inv(x)
    return float(sum(c * h2((1 - (1 - 2 * eps) ** (d - 1)) / 2) for d, c in ddp.rho.items()))


def r_upper(ddp: DegreeDistribution, x: float) -> float:
    """Largest check-output entropy for inputs of entropy x (BEC inputs)."""
    return float(1.0 - ddp.rho_poly(1.0 - x))


def combining_lower(ddp: DegreeDistribution, x: float) -> float:
    """lambda(r_lower(x)); H(T_h(a)) >= h times this for every a with H(a) = x."""
    return float(ddp.lam_poly(r_lower(ddp, x)))


def f_term(i: int, h: float, x: float) -> float:
    """Entropy of a variable node with i BSC(h2^-1(x)) messages and a BSC(h2^-1(h)) channel."""
    eps_x, eps_h = h2_inv(x), h2_inv(h)
    j = np.arange(i + 1)
    weights = comb(i, j) * (1 - eps_x) ** j * eps_x ** (i - j)
    with np.errstate(divide="ignore", invalid="ignore"):
        q_x = math.log((1 - eps_x) / eps_x) if eps_x > 0 else math.inf
        q_h = math.log((1 - eps_h) / eps_h) if eps_h > 0 else math.inf
        shift = np.where(2 * j - i == 0, 0.0, (2 * j - i) * q_x)
        total = 0.0
        for k, a_k in ((1, 1 - eps_h), (-1, eps_h)):
            w = weights * a_k
            llr = shift + k * q_h
            terms = np.where(w > 0, w * np.logaddexp(0.0, -llr) / LN2, 0.0)
            total += float(np.nansum(terms))
    return total


def l_upper(ddp: DegreeDistribution, h: float, x: float) -> float:
    return float(sum(c * f_term(d - 1, h, x) for d, c in ddp.lam.items()))


def combining_upper(ddp: DegreeDistribution, h: float, x: float) -> float:
    """l_upper(h, r_upper(x)); H(T_h(a)) is at most this for every a with H(a) = x."""
    return l_upper(ddp, h, r_upper(ddp, x))


def exit_lower(ddp: DegreeDistribution, x: float) -> float:
    return float(ddp.node_lam_poly(r_lower(ddp, x)))


def exit_upper(ddp: DegreeDistribution, x: float) -> float:
    y = r_upper(ddp, x)
    return float(sum(c * f_term(d, 1.0, y) for d, c in ddp.node_lam.items()))


# fixed-point rectangles


@dataclass(frozen=True)
class Rectangle:
    x: float
    h_lo: float
    h_hi: float
    g_lo: float
    g_hi: float

    def contains(self, h: float, g: float, tol: float = CONTAINMENT_TOL) -> bool:
        return self.h_lo - tol <= h <= self.h_hi + tol and self.g_lo - tol <= g <= self.g_hi + tol


@dataclass
class RectangleRegion:
    rectangles: list[Rectangle]

    def at(self, x: float) -> Rectangle:
        for r in self.rectangles:
            if math.isclose(r.x, x, abs_tol=1e-12):
                return r
        raise KeyError(f"No rectangle at {x=}")

    def rows(self) -> list[list[float]]:
        return [[r.x, r.h_lo, r.h_hi, r.g_lo, r.g_hi] for r in self.rectangles]


def invert_l_upper(ddp: DegreeDistribution, x: float, x_prime: float, steps: int = INVERSION_STEPS) -> float:
    """max {h : l_upper(h, x') = x}, or 0 if no such h exists."""
    ends = [l_upper(ddp, h, x_prime) for h in (0.0, 0.5, 1.0)]
    if not ends[0] <= ends[1] + 1e-12 <= ends[2] + 2e-12:
        raise ValueError(f"l_upper is not increasing in h at x'={x_prime}: {ends}")
    if x > ends[2] or x < ends[0]:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = (lo + hi) / 2
        if l_upper(ddp, mid, x_prime) <= x:
            lo = mid
        else:
            hi = mid
    return lo


def fixed_point_rectangle(ddp: DegreeDistribution, x: float) -> Rectangle:
    lower = combining_lower(ddp, x)
    h_hi = min(1.0, x / lower) if lower > 0 else 1.0
    h_lo = invert_l_upper(ddp, x, r_upper(ddp, x))
    return Rectangle(x, h_lo, h_hi, exit_lower(ddp, x), exit_upper(ddp, x))


def fixed_point_rectangles(ddp: DegreeDistribution, xs: Sequence[float], threads: int = 1) -> RectangleRegion:
    """Rectangles that contain (h, EXIT) of every DE fixed point with entropy x."""
    return RectangleRegion(parallel_map(fixed_point_rectangle, [(ddp, float(x)) for x in xs], threads))


# Bhattacharyya diagnostics


def _b_tilde(ddp: DegreeDistribution, b: float) -> float:
    return float(sum(c * math.sqrt(max(0.0, 1 - (1 - b * b) ** (d - 1))) for d, c in ddp.rho.items()))


def bhattacharyya_fp_lower(ddp: DegreeDistribution, b_channel: float) -> float:
    """Smallest positive b with b = B_h lambda(b~(b)); any error-prone fixed point has B(f) at least this."""
    if b_channel <= 0.0:
        return 0.0

    def gap(b: float) -> float:
        return b - b_channel * ddp.lam_poly(_b_tilde(ddp, b))

    grid = np.linspace(0.0, 1.0, SCAN_POINTS)[1:]
    values = np.array([gap(b) for b in grid])
    negative = np.flatnonzero(values < 0)
    if len(negative) == 0:
        return 0.0
    k = negative[0]
    after = np.flatnonzero(values[k:] >= 0)
    if len(after) == 0:
        return 1.0
    k2 = k + after[0]
    return float(brentq(gap, grid[k2 - 1], grid[k2], xtol=1e-14))


def uniqueness_condition(ddp: DegreeDistribution, b_channel: float, b: float) -> bool:
    """B_h lambda'(1) rho'(1 - b^2) < 1: at most one error-prone fixed point with Bhattacharyya b."""
    return bool(b_channel * ddp.lam_prime(1.0) * ddp.rho_prime(1.0 - b * b) < 1.0)


def eps_star_23() -> float:
    """BSC crossover above which the (2,3) fixed-point lower bound enters the uniqueness region."""
    return 0.5 - math.sqrt((math.sqrt(17) - 1) / 32)


def eps_ls_23() -> float:
    """Local stability threshold of (2,3) over the BSC, where 2 B(eps) = 1."""
    return (2 - math.sqrt(3)) / 4


def bsc_battacharyya(eps: float) -> float:
    return math.sqrt(4 * eps * (1 - eps))


def fp_lower_23(eps: float) -> float:
    b = bsc_battacharyya(eps)
    return math.sqrt(max(0.0, 2 - b**-2)) if b > 0 else 0.0


def uniqueness_bound_23(eps: float) -> float:
    b = bsc_battacharyya(eps)
    return math.sqrt(max(0.0, 1 - 1 / (2 * b))) if b > 0 else 0.0


def _fixed_point_battacharyya(ddp: DegreeDistribution, family: ChannelFamily, eps: float, max_iter: int) -> float:
    state = de_fixed_point(ddp, family, h2(eps), max_iter=max_iter)
    return battacharyya(state.density)


def fixed_point_battacharyya_curve(ddp: DegreeDistribution, eps_grid: Sequence[float], family: ChannelFamily | None = None, threads: int = 1, max_iter: int = 5000) -> Curve:
    """Bhattacharyya parameter of the BP fixed point over the BSC, with both closed-form (2,3) bounds as columns."""
    family = family or ChannelFamily(ChannelFamily.Kind.BSC)
    eps_grid = np.asarray(eps_grid, dtype=float)
    values = parallel_map(_fixed_point_battacharyya, [(ddp, family, float(e), max_iter) for e in eps_grid], threads)
    columns = {
        "fp_lower": np.array([bhattacharyya_fp_lower(ddp, bsc_battacharyya(e)) for e in eps_grid]),
        "uniqueness": np.array([_uniqueness_level(ddp, bsc_battacharyya(e)) for e in eps_grid]),
    }
    return Curve(Curve.Role.BOUND, eps_grid, np.array(values), f"{ddp.label} fixed-point Bhattacharyya", columns)


def _uniqueness_level(ddp: DegreeDistribution, b_channel: float) -> float:
    """Smallest b in [0, 1] for which the uniqueness condition holds."""
    if uniqueness_condition(ddp, b_channel, 0.0):
        return 0.0
    if not uniqueness_condition(ddp, b_channel, 1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(INVERSION_STEPS):
        mid = (lo + hi) / 2
        if uniqueness_condition(ddp, b_channel, mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ContractionReport:
    lhs: float
    rhs: float
    alpha: float
    xi_measured: float
    xi_bound: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-12


def contraction_check(ddp: DegreeDistribution, family: ChannelFamily, h_1: float, h_2: float, a1: LDensity, a2: LDensity) -> ContractionReport:
    """|B(T_h_1(a1)) - B(T_h_2(a2))| against lambda'(1) B_h_1 |B(rho(a1)) - B(rho(a2))| + |B_h_1 - B_h_2|."""
    b_h1, b_h2 = family.battacharyya_of(h_1), family.battacharyya_of(h_2)
    lhs = abs(battacharyya(de_step(ddp, family.density(h_1), a1)) - battacharyya(de_step(ddp, family.density(h_2), a2)))
    check_gap = abs(battacharyya(check_step(ddp, a1)) - battacharyya(check_step(ddp, a2)))
    rhs = ddp.lam_prime(1.0) * b_h1 * check_gap + abs(b_h1 - b_h2)
    b1 = battacharyya(a1)
    input_gap = abs(b1 - battacharyya(a2))
    report = ContractionReport(
        lhs=lhs,
        rhs=rhs,
        alpha=float(ddp.lam_prime(1.0) * b_h1 * ddp.rho_prime(1.0 - b1 * b1)),
        xi_measured=check_gap / input_gap if input_gap > 0 else 0.0,
        xi_bound=float(ddp.rho_prime(1.0 - b1 * b1)),
    )
    logger.debug(f"{report=}")
    return report
