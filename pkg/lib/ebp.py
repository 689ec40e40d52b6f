import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.optimize import brentq

from lib.channels import ChannelFamily
from lib.curve import Curve
from lib.de import (
    DE_MAX_ITER,
    ConvergenceError,
    DegreeDistribution,
    check_step,
    de_fixed_point,
    node_density,
)
from lib.density import Atoms, LDensity, delta_inf, delta_zero, distance, entropy, lambda_of, var_convolve
from lib.kernels import gexit_functional
from lib.parallel import parallel_map

logger = logging.getLogger(__name__)

RX_TOL = 1e-8
EBP_TOL = 1e-7
EBP_MAX_ITER = 2000
REFINE_DH = 0.01
REFINE_ROUNDS = 3
SENTINELS = 5
SENTINEL_MISMATCH = 1e-4
MIN_GRID_POINTS = 20


class UnsolvableError(ValueError):
    pass


def rx_step(ddp: DegreeDistribution, family: ChannelFamily, x: float, a: LDensity) -> tuple[LDensity, float]:
    """One fixed-entropy DE step: the channel h with H(c_h * lambda(rho(a))) = x, and the resulting density."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"Target entropy must lie in [0, 1], got {x}")
    b = lambda_of(check_step(ddp, a), ddp.lam)
    reachable = entropy(b)
    if x > reachable + RX_TOL:
        raise UnsolvableError(f"Entropy {x} is out of reach: H(lambda(rho(a))) = {reachable}")
    if x <= 0.0:
        return delta_inf(family.grid), 0.0
    if x >= reachable - RX_TOL:
        return var_convolve(family.density(1.0), b), 1.0

    def residual(h: float) -> float:
        return entropy(var_convolve(family.density(h), b)) - x

    h = brentq(residual, 0.0, 1.0, xtol=RX_TOL / 10, rtol=1e-12)
    return var_convolve(family.density(h), b), h


@dataclass
class FixedPointPair:
    x: float
    h: float
    f: LDensity
    gexit_value: float
    exit_value: float
    converged: bool
    iters: int
    residual: float = 0.0


def _pair(ddp: DegreeDistribution, family: ChannelFamily, x: float, h: float, f: LDensity, converged: bool, iters: int) -> FixedPointPair:
    extrinsic = node_density(ddp, check_step(ddp, f))
    residual = abs(entropy(var_convolve(family.density(h), lambda_of(check_step(ddp, f), ddp.lam))) - entropy(f))
    return FixedPointPair(x, h, f, gexit_functional(family, h, extrinsic), entropy(extrinsic), converged, iters, residual)


def ebp_fixed_point(ddp: DegreeDistribution, family: ChannelFamily, x: float, init: LDensity | None = None, tol: float = EBP_TOL, max_iter: int = EBP_MAX_ITER) -> FixedPointPair:
    """Iterate the fixed-entropy step from init (the channel density of entropy x by default)."""
    a = family.density(x) if init is None else init
    h = x
    for it in range(1, max_iter + 1):
        new, h = rx_step(ddp, family, x, a)
        step = distance(a, new)
        a = new
        if step <= tol:
            return _pair(ddp, family, x, h, a, True, it)
    logger.warning(f"{ddp.label} {family.name} {x=}: fixed-entropy DE did not converge in {max_iter} iterations")
    return _pair(ddp, family, x, h, a, False, max_iter)


@dataclass
class EbpCurve:
    ddp: DegreeDistribution
    family: ChannelFamily
    points: list[FixedPointPair]
    s_regions: list[tuple[int, int]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def h(self) -> np.ndarray:
        return np.array([p.h for p in self.points])

    @property
    def g(self) -> np.ndarray:
        return np.array([p.gexit_value for p in self.points])

    def to_curve(self) -> Curve:
        columns = {
            "x": self.x,
            "entropy_residual": np.array([p.residual for p in self.points]),
            "converged": np.array([float(p.converged) for p in self.points]),
        }
        return Curve(Curve.Role.EBP, self.h, self.g, f"{self.ddp.label} {self.family.name} EBP", columns)


def find_s_regions(h: np.ndarray) -> list[tuple[int, int]]:
    """Maximal index runs (i, j) along increasing x on which h decreases."""
    regions = []
    down = np.diff(h) < 0
    i = 0
    while i < len(down):
        if down[i]:
            j = i
            while j < len(down) and down[j]:
                j += 1
            regions.append((i, j))
            i = j
        else:
            i += 1
    return regions


def _cold_start(ddp: DegreeDistribution, family: ChannelFamily, x: float) -> FixedPointPair:
    return ebp_fixed_point(ddp, family, x)


def ebp_curve(ddp: DegreeDistribution, family: ChannelFamily, xs: Sequence[float] | None = None, n_points: int = 101, threads: int = 1, sentinels: int = SENTINELS) -> EbpCurve:
    """Trace the complete fixed-point family from x = 1 downward with warm starts."""
    xs = np.linspace(0.0, 1.0, n_points) if xs is None else np.asarray(xs, dtype=float)
    logger.info(f"Tracing EBP curve of {ddp.label} over {family.name} ..")
    points: dict[float, FixedPointPair] = {}
    f = None
    for x in sorted(xs, reverse=True):
        if x <= 0.0:
            # Delta_inf, part of the trivial branch
            continue
        try:
            pair = ebp_fixed_point(ddp, family, float(x), init=f)
        except UnsolvableError:
            logger.info(f"Fixed-entropy step unsolvable below {x=:.4f}, stopping descent")
            break
        points[float(x)] = pair
        f = pair.f

    for _ in range(REFINE_ROUNDS):
        ordered = sorted(points)
        added = 0
        for lo, hi in zip(ordered, ordered[1:]):
            if abs(points[hi].h - points[lo].h) <= REFINE_DH:
                continue
            mid = (lo + hi) / 2
            try:
                points[mid] = ebp_fixed_point(ddp, family, mid, init=points[hi].f)
                added += 1
            except UnsolvableError:
                continue
        logger.debug(f"Refinement added {added} points")
        if added == 0:
            break

    ordered = [points[x] for x in sorted(points)]
    curve = EbpCurve(ddp, family, ordered, find_s_regions(np.array([p.h for p in ordered])))

    inner = [p for p in ordered if 0.0 < p.x < 1.0]
    if sentinels > 0 and inner:
        picks = [inner[int(k)] for k in np.linspace(0, len(inner) - 1, min(sentinels, len(inner)))]
        colds = parallel_map(_cold_start, [(ddp, family, p.x) for p in picks], threads)
        for warm, cold in zip(picks, colds):
            if abs(warm.gexit_value - cold.gexit_value) > SENTINEL_MISMATCH:
                message = f"Cold start at x={warm.x:.4f} gives g={cold.gexit_value:.6f}, warm start {warm.gexit_value:.6f}"
                logger.warning(message)
                curve.diagnostics.append(message)
    logger.info(f"Tracing EBP curve of {ddp.label} over {family.name} .. [done] {len(ordered)} points, {len(curve.s_regions)} S-regions")
    return curve


def bec_ebp_curve(ddp: DegreeDistribution, xs: Sequence[float], family: ChannelFamily | None = None) -> EbpCurve:
    """Closed-form BEC fixed points h(x) = x / lambda(1 - rho(1 - x)), g(x) = Lambda(1 - rho(1 - x)), kept where h <= 1."""
    family = family or ChannelFamily(ChannelFamily.Kind.BEC)
    points = []
    for x in sorted(float(v) for v in xs):
        if x <= 0.0:
            continue
        y = 1.0 - ddp.rho_poly(1.0 - x)
        h = x / ddp.lam_poly(y)
        if h > 1.0:
            continue
        g = ddp.node_lam_poly(y)
        points.append(FixedPointPair(x, h, Atoms.bec(x).to_density(family.grid), g, g, True, 0))
    return EbpCurve(ddp, family, points, find_s_regions(np.array([p.h for p in points])))


def bec_ebp_area(ddp: DegreeDistribution) -> float:
    """Integral of g dh over the complete BEC fixed-point family, x in (0, 1]."""

    def integrand(x: float) -> float:
        # integration by parts: g h |_0^1 - integral h dg
        y = 1.0 - ddp.rho_poly(1.0 - x)
        dg = ddp.lam_poly(y) / ddp.int_lam * ddp.rho_prime(1.0 - x)
        return x / ddp.lam_poly(y) * dg

    value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return 1.0 - value


def ebp_area(curve: EbpCurve | Curve) -> float:
    """Signed integral of g dh along the curve in order of increasing x."""
    if isinstance(curve, EbpCurve):
        curve = curve.to_curve()
    return curve.area()


# Maxwell construction


@dataclass
class MaxwellCut:
    h: float
    start: float
    end: float
    g_low: float
    g_high: float


def _crossing(h: np.ndarray, g: np.ndarray, level: float, indices: range) -> tuple[float, float] | None:
    # (parameter, g) of the first segment k in indices with h crossing level upward
    for k in indices:
        lo, hi = h[k], h[k + 1]
        if lo <= level <= hi and hi > lo:
            t = (level - lo) / (hi - lo)
            return k + t, g[k] + t * (g[k + 1] - g[k])
    return None


def _signed_area(h: np.ndarray, g: np.ndarray, level: float, first: int, last: int) -> tuple[float, tuple[float, float], tuple[float, float]] | None:
    left = _crossing(h, g, level, range(first - 1, -1, -1))
    right = _crossing(h, g, level, range(last, len(h) - 1))
    if left is None or right is None:
        return None
    (p1, g1), (p3, g3) = left, right
    k1, k3 = int(np.floor(p1)) + 1, int(np.floor(p3))
    hh = np.concatenate([[level], h[k1 : k3 + 1], [level]])
    gg = np.concatenate([[g1], g[k1 : k3 + 1], [g3]])
    area = float(np.trapezoid(hh - level, gg))
    return area, left, right


def _balanced_cut(h: np.ndarray, g: np.ndarray, first: int, last: int) -> MaxwellCut | None:
    top, bottom = float(np.max(h[first : last + 1])), float(np.min(h[first : last + 1]))

    def area_at(level: float) -> float:
        result = _signed_area(h, g, level, first, last)
        return np.nan if result is None else result[0]

    eps = 1e-12 * max(1.0, top)
    lo_area, hi_area = area_at(bottom + eps), area_at(top - eps)
    if np.isnan(lo_area) or np.isnan(hi_area) or lo_area * hi_area > 0:
        logger.warning(f"No balanced cut for S-region between h={bottom:.4f} and h={top:.4f}, skipping")
        return None
    level = brentq(area_at, bottom + eps, top - eps, xtol=1e-12)
    _, (p1, g1), (p3, g3) = _signed_area(h, g, level, first, last)
    return MaxwellCut(float(level), float(p1), float(p3), float(g1), float(g3))


def maxwell_cuts(h: np.ndarray, g: np.ndarray) -> list[MaxwellCut]:
    """Balanced vertical cuts for every S-region of the parametric curve (h, g), left to right.

    A cut whose span reaches into the next S-region is recomputed over both regions together.
    """
    regions = find_s_regions(h)
    cuts: list[MaxwellCut] = []
    i = 0
    while i < len(regions):
        j = i
        cut = _balanced_cut(h, g, regions[i][0], regions[j][1])
        while cut is not None and j + 1 < len(regions) and regions[j + 1][0] < cut.end:
            j += 1
            cut = _balanced_cut(h, g, regions[i][0], regions[j][1])
        if cut is not None:
            cuts.append(cut)
        i = j + 1
    return cuts


def _with_trivial_branch(curve: EbpCurve) -> tuple[np.ndarray, np.ndarray]:
    # the trivial fixed point Delta_inf exists for every h and carries g = 0
    h, g = curve.h, curve.g
    return np.concatenate([[0.0, h[0]], h]), np.concatenate([[0.0, 0.0], g])


def curve_cuts(curve: EbpCurve) -> list[MaxwellCut]:
    return maxwell_cuts(*_with_trivial_branch(curve)) if curve.s_regions else []


def maxwell_construction(curve: EbpCurve) -> Curve:
    """Single-valued MAP estimate from the EBP curve by equal-area vertical cuts."""
    if not curve.s_regions:
        return Curve(Curve.Role.MAP, curve.h, curve.g, f"{curve.ddp.label} {curve.family.name} MAP")
    h, g = _with_trivial_branch(curve)
    cuts = maxwell_cuts(h, g)
    keep_h, keep_g = [], []
    position = 0
    for cut in cuts:
        upto = int(np.floor(cut.start))
        keep_h += list(h[position : upto + 1]) + [cut.h, cut.h]
        keep_g += list(g[position : upto + 1]) + [cut.g_low, cut.g_high]
        position = int(np.floor(cut.end)) + 1
    keep_h += list(h[position:])
    keep_g += list(g[position:])
    for cut in cuts:
        logger.info(f"Maxwell cut of {curve.ddp.label} over {curve.family.name} at h={cut.h:.5f}")
    columns = {"cuts": np.full(len(keep_h), float(len(cuts)))}
    return Curve(Curve.Role.MAP, np.array(keep_h), np.array(keep_g), f"{curve.ddp.label} {curve.family.name} MAP", columns)


def maxwell_threshold(curve: EbpCurve) -> float:
    """First Maxwell cut, where the MAP GEXIT estimate first jumps (the start of a monotone curve otherwise).

    Later cuts are the secondary jumps of ensembles with several S-regions.
    """
    if not curve.s_regions:
        return float(curve.h[0])
    cuts = curve_cuts(curve)
    if not cuts:
        raise ConvergenceError(f"No balanced Maxwell cut found for {curve.ddp.label}", curve.to_curve())
    return cuts[0].h


def conditional_entropy_curve(map_curve: Curve) -> Curve:
    """Per-bit conditional entropy estimate: the integral of the MAP GEXIT curve from 0 to h."""
    h, g = map_curve.x, map_curve.y
    cumulative = cumulative_trapezoid(g, h, initial=0.0)
    return Curve(Curve.Role.BOUND, h, cumulative, f"{map_curve.label} conditional entropy")


# MAP threshold upper bound


@dataclass
class MapBound:
    h_bar: float
    bp: Curve
    entropy_bound: Curve


def _descending_bp_curve(ddp: DegreeDistribution, family: ChannelFamily, hs: np.ndarray, g: np.ndarray, converged: np.ndarray) -> Curve:
    # hs runs from 1 down, curves run up
    return Curve(Curve.Role.BP, hs[::-1], g[::-1], f"{ddp.label} {family.name} BP GEXIT", {"converged": converged[::-1].astype(float)})


def map_threshold_upper_bound(ddp: DegreeDistribution, family: ChannelFamily, n_points: int = 400, max_iter: int = DE_MAX_ITER) -> MapBound:
    """Largest h with integral_h^1 g_BP = r, and the lower bound r - integral_h^1 g_BP on the conditional entropy."""
    if n_points < MIN_GRID_POINTS:
        raise ConvergenceError(f"BP GEXIT grid of {n_points} points is too coarse to locate the MAP bound, need at least {MIN_GRID_POINTS}")
    r = ddp.design_rate
    logger.info(f"Integrating BP GEXIT of {ddp.label} over {family.name} ..")
    hs = np.linspace(1.0, 0.0, n_points + 1)
    g = np.zeros_like(hs)
    converged = np.ones_like(hs, dtype=bool)
    area = np.zeros_like(hs)
    # DE from the fixed point of a worse channel still lands on the BP fixed point
    a = delta_zero(family.grid)
    h_bar = None
    for k, h in enumerate(hs):
        state = de_fixed_point(ddp, family, float(h), init=a, max_iter=max_iter)
        a = state.density
        converged[k] = state.converged
        g[k] = gexit_functional(family, float(h), node_density(ddp, check_step(ddp, a)))
        if k == 0:
            continue
        area[k] = area[k - 1] + (g[k] + g[k - 1]) / 2 * (hs[k - 1] - hs[k])
        if h_bar is None and area[k] >= r:
            if not (converged[k] and converged[k - 1]):
                raise ConvergenceError(f"DE did not converge next to the MAP bound crossing at h={h:.4f}", _descending_bp_curve(ddp, family, hs[: k + 1], g[: k + 1], converged[: k + 1]))
            t = (r - area[k - 1]) / (area[k] - area[k - 1])
            h_bar = float(hs[k - 1] + t * (hs[k] - hs[k - 1]))
        if state.decoded and h_bar is not None:
            hs, g, area, converged = hs[: k + 1], g[: k + 1], area[: k + 1], converged[: k + 1]
            break
    if h_bar is None:
        raise ConvergenceError(f"Integrated BP GEXIT never reached the design rate {r}", _descending_bp_curve(ddp, family, hs, g, converged))
    logger.info(f"Integrating BP GEXIT of {ddp.label} over {family.name} .. [done] {h_bar=:.5f}")
    bp = _descending_bp_curve(ddp, family, hs, g, converged)
    bound = Curve(Curve.Role.BOUND, hs[::-1], (r - area)[::-1], f"{ddp.label} {family.name} entropy lower bound")
    return MapBound(h_bar, bp, bound)
