import logging
import math
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from lib.channels import ChannelFamily
from lib.curve import Curve
from lib.density import (
    DensityFunctionalReport,
    LDensity,
    delta_zero,
    distance,
    entropy,
    functionals,
    lambda_of,
    mixture,
    rho_of,
    symmetrize,
    var_convolve,
)
from lib.kernels import finite_difference_gexit, gexit_functional
from lib.parallel import parallel_map

logger = logging.getLogger(__name__)

DE_TOL = 1e-7
DE_MAX_ITER = 5000
SUCCESS_ENTROPY = 1e-6
RESYMMETRIZE_EVERY = 16
THRESHOLD_STEPS = 40
THRESHOLD_WIDTH = 1e-5
ALPHA_STEP = 1e-4


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, partial: Curve | None = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """Edge-perspective degree distribution pair; keys are node degrees."""

    lam: Mapping[int, float]
    rho: Mapping[int, float]
    name: str = ""

    def __post_init__(self):
        for label, poly in (("lambda", self.lam), ("rho", self.rho)):
            if not poly or min(poly) < 1:
                raise ValueError(f"Invalid {label} degrees: {dict(poly)}")
            if min(poly.values()) < 0:
                raise ValueError(f"Negative {label} coefficient: {dict(poly)}")
            if abs(sum(poly.values()) - 1.0) > 1e-9:
                raise ValueError(f"{label} coefficients must sum to 1, got {sum(poly.values())}")
        object.__setattr__(self, "lam", {d: float(c) for d, c in sorted(self.lam.items()) if c > 0})
        object.__setattr__(self, "rho", {d: float(c) for d, c in sorted(self.rho.items()) if c > 0})
        if not 0.0 < self.design_rate < 1.0:
            raise ValueError(f"Design rate {self.design_rate} of {self.label} is outside (0, 1)")

    @classmethod
    def regular(cls, l: int, r: int) -> "DegreeDistribution":
        return cls({l: 1.0}, {r: 1.0}, f"({l},{r})")

    @classmethod
    def parse(cls, text: str) -> "DegreeDistribution":
        """Parse "ldpc:l=x^2,r=x^5", "l=0.4x+0.6x^5;r=x^5", "l=(3x+6x^2+11x^17)/20,r=x^9" or "3,6"."""
        body = text.strip().lower().removeprefix("ldpc:").replace(" ", "")
        if m := re.fullmatch(r"\(?(\d+),(\d+)\)?", body):
            return cls.regular(int(m.group(1)), int(m.group(2)))
        parts = dict(p.split("=", 1) for p in re.split(r"[,;](?=[lr]=)", body) if "=" in p)
        if set(parts) != {"l", "r"}:
            raise ValueError(f"Invalid degree distribution: {text!r}")
        return cls(_parse_polynomial(parts["l"]), _parse_polynomial(parts["r"]), text.strip())

    @property
    def label(self) -> str:
        return self.name or f"l={self.lam},r={self.rho}"

    @property
    def int_lam(self) -> float:
        return sum(c / d for d, c in self.lam.items())

    @property
    def int_rho(self) -> float:
        return sum(c / d for d, c in self.rho.items())

    @property
    def design_rate(self) -> float:
        return 1.0 - self.int_rho / self.int_lam

    @property
    def node_lam(self) -> dict[int, float]:
        """Node-perspective variable degree distribution Lambda."""
        return {d: c / d / self.int_lam for d, c in self.lam.items()}

    def lam_poly(self, x: float | np.ndarray) -> float | np.ndarray:
        return sum(c * x ** (d - 1) for d, c in self.lam.items())

    def rho_poly(self, x: float | np.ndarray) -> float | np.ndarray:
        return sum(c * x ** (d - 1) for d, c in self.rho.items())

    def lam_prime(self, x: float | np.ndarray) -> float | np.ndarray:
        return sum(c * (d - 1) * x ** max(d - 2, 0) for d, c in self.lam.items() if d > 1)

    def rho_prime(self, x: float | np.ndarray) -> float | np.ndarray:
        return sum(c * (d - 1) * x ** max(d - 2, 0) for d, c in self.rho.items() if d > 1)

    def node_lam_poly(self, x: float | np.ndarray) -> float | np.ndarray:
        return sum(c * x**d for d, c in self.node_lam.items())


def _parse_polynomial(text: str) -> dict[int, float]:
    divisor = 1.0
    if m := re.fullmatch(r"\((.*)\)/([0-9.]+)", text):
        text, divisor = m.group(1), float(m.group(2))
    coefficients: dict[int, float] = {}
    for term in text.split("+"):
        m = re.fullmatch(r"([0-9.]*(?:e-?\d+)?)\*?(x(?:\^(\d+))?)?", term)
        if m is None or (not m.group(1) and not m.group(2)):
            raise ValueError(f"Invalid polynomial term: {term!r}")
        coefficient = float(m.group(1)) if m.group(1) else 1.0
        power = 0 if not m.group(2) else int(m.group(3) or 1)
        coefficients[power + 1] = coefficients.get(power + 1, 0.0) + coefficient / divisor
    total = sum(coefficients.values())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"Polynomial coefficients of {text!r} sum to {total}, expected 1")
    return {d: c / total for d, c in coefficients.items()}


def check_step(ddp: DegreeDistribution, a: LDensity) -> LDensity:
    return rho_of(a, ddp.rho)


def de_step(ddp: DegreeDistribution, c: LDensity, a: LDensity) -> LDensity:
    """T(a) = c * lambda(rho(a))."""
    return var_convolve(c, lambda_of(check_step(ddp, a), ddp.lam))


def node_density(ddp: DegreeDistribution, b: LDensity) -> LDensity:
    """Lambda(b): the extrinsic density of a bit given check messages b."""
    return lambda_of(b, {d + 1: c for d, c in ddp.node_lam.items()})


@dataclass
class DEState:
    h: float
    density: LDensity
    iterations: int
    converged: bool
    trace: list[DensityFunctionalReport] = field(default_factory=list)
    oscillating: bool = False

    @property
    def decoded(self) -> bool:
        return entropy(self.density) < SUCCESS_ENTROPY


def de_fixed_point(ddp: DegreeDistribution, family: ChannelFamily, h: float, init: LDensity | None = None, tol: float = DE_TOL, max_iter: int = DE_MAX_ITER) -> DEState:
    c = family.density(h)
    a = delta_zero(family.grid) if init is None else init
    trace = [functionals(a)]
    before = None
    for it in range(1, max_iter + 1):
        new = de_step(ddp, c, a)
        if it % RESYMMETRIZE_EVERY == 0:
            new = symmetrize(new)
        trace.append(functionals(new))
        step = distance(a, new)
        if step <= tol or trace[-1].entropy < SUCCESS_ENTROPY:
            return DEState(h, new, it, True, trace)
        if before is not None and distance(before, new) <= tol:
            logger.warning(f"{ddp.label} {family.name} {h=}: period-2 oscillation after {it} iterations, averaging")
            return DEState(h, mixture([0.5, 0.5], [a, new]), it, False, trace, oscillating=True)
        before, a = a, new
    logger.warning(f"{ddp.label} {family.name} {h=}: no convergence in {max_iter} iterations")
    return DEState(h, a, max_iter, False, trace)


def bp_threshold(ddp: DegreeDistribution, family: ChannelFamily, lo: float = 0.0, hi: float = 1.0, steps: int = THRESHOLD_STEPS, width: float = THRESHOLD_WIDTH, max_iter: int = DE_MAX_ITER) -> float:
    """Largest h for which DE from Delta_0 reaches Delta_inf, by bisection."""
    logger.info(f"Locating BP threshold of {ddp.label} over {family.name} ..")
    for _ in range(steps):
        if hi - lo <= width:
            break
        mid = (lo + hi) / 2
        state = de_fixed_point(ddp, family, mid, max_iter=max_iter)
        logger.debug(f"{mid=:.6f}: {state.iterations} iterations, entropy {entropy(state.density):.3e}")
        if state.decoded:
            lo = mid
        else:
            hi = mid
    logger.info(f"Locating BP threshold of {ddp.label} over {family.name} .. [done]")
    return (lo + hi) / 2


def stability_threshold(ddp: DegreeDistribution, family: ChannelFamily) -> float:
    """Channel entropy where lambda'(0) rho'(1) B(c_h) = 1 (1.0 if the condition never binds)."""
    slope = ddp.lam.get(2, 0.0) * ddp.rho_prime(1.0)
    if slope <= 1.0:
        return 1.0
    return brentq(lambda h: family.battacharyya_of(h) - 1.0 / slope, 0.0, 1.0, xtol=1e-12)


# BEC scalar recursion


def bec_recursion(ddp: DegreeDistribution, h: float, iterations: int, x0: float = 1.0) -> np.ndarray:
    xs = [x0]
    for _ in range(iterations):
        xs.append(h * ddp.lam_poly(1.0 - ddp.rho_poly(1.0 - xs[-1])))
    return np.array(xs)


def bec_bp_threshold(ddp: DegreeDistribution) -> float:
    """inf over x in (0, 1] of x / lambda(1 - rho(1 - x))."""

    def ratio(x: float) -> float:
        return x / ddp.lam_poly(1.0 - ddp.rho_poly(1.0 - x))

    xs = np.linspace(1e-4, 1.0, 10_001)
    values = np.array([ratio(x) for x in xs])
    k = int(np.argmin(values))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    best = minimize_scalar(ratio, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(min(best.fun, values[k], stability_threshold(ddp, ChannelFamily(ChannelFamily.Kind.BEC))))


# BP GEXIT and EXIT curves


def _bp_point(ddp: DegreeDistribution, family: ChannelFamily, h: float, max_iter: int) -> tuple[float, float, int, bool]:
    state = de_fixed_point(ddp, family, h, max_iter=max_iter)
    extrinsic = node_density(ddp, check_step(ddp, state.density))
    return gexit_functional(family, h, extrinsic), entropy(extrinsic), state.iterations, state.converged


def bp_curves(ddp: DegreeDistribution, family: ChannelFamily, hs: Sequence[float], threads: int = 1, max_iter: int = DE_MAX_ITER) -> tuple[Curve, Curve]:
    """BP GEXIT and BP EXIT curves over hs from one DE run per point, with iterations and converged columns."""
    points = parallel_map(_bp_point, [(ddp, family, float(h), max_iter) for h in hs], threads)
    g, e, iters, conv = (np.array(v, dtype=float) for v in zip(*points))
    columns = {"iterations": iters, "converged": conv}
    gexit = Curve(Curve.Role.BP, np.asarray(hs, dtype=float), g, f"{ddp.label} {family.name} BP GEXIT", columns)
    exit = Curve(Curve.Role.EXIT, np.asarray(hs, dtype=float), e, f"{ddp.label} {family.name} BP EXIT", dict(columns))
    return gexit, exit


def bp_gexit_curve(ddp: DegreeDistribution, family: ChannelFamily, hs: Sequence[float], threads: int = 1, max_iter: int = DE_MAX_ITER) -> Curve:
    return bp_curves(ddp, family, hs, threads, max_iter)[0]


def bp_exit_curve(ddp: DegreeDistribution, family: ChannelFamily, hs: Sequence[float], threads: int = 1, max_iter: int = DE_MAX_ITER) -> Curve:
    return bp_curves(ddp, family, hs, threads, max_iter)[1]


# interpolating families and matching


def _base(c: LDensity, t: float) -> LDensity:
    return mixture([1.0 - t, t], [delta_zero(c.grid), c])


def _trajectory(ddp: DegreeDistribution, c: LDensity, t: float, steps: int) -> list[LDensity]:
    out = [_base(c, t)]
    for _ in range(steps):
        out.append(de_step(ddp, c, out[-1]))
    return out


def interpolate_family(ddp: DegreeDistribution, c: LDensity, alpha: float) -> tuple[LDensity, LDensity]:
    """(a_alpha, b_alpha) with a_{l+t} = T^{l+1}((1-t) Delta_0 + t c) and b_alpha = rho(a_{alpha-1})."""
    if alpha < -1.0:
        raise ValueError(f"Interpolation parameter must be at least -1, got {alpha}")
    ell = math.floor(alpha)
    traj = _trajectory(ddp, c, alpha - ell, ell + 1)
    b = check_step(ddp, traj[-2]) if ell >= 0 else delta_zero(c.grid)
    return traj[-1], b


@dataclass
class MatchingChart:
    check: Curve
    variable: Curve
    check_area: float
    variable_left_area: float
    crosses: bool

    @property
    def capacity_ok(self) -> bool:
        return self.check_area + self.variable_left_area <= 1.0 + 1e-2


def matching_chart(ddp: DegreeDistribution, family: ChannelFamily, h: float, resolution: float = 0.1, max_alpha: int | None = None, step: float = ALPHA_STEP) -> MatchingChart:
    """Check-node and inverse-dual variable-node GEXIT curves of the interpolating family at channel h."""
    c = family.density(h)
    if max_alpha is None:
        state = de_fixed_point(ddp, family, h, max_iter=500)
        max_alpha = state.iterations + 1
    fractions = np.arange(0.0, 1.0, resolution)
    rows = []
    for t in fractions:
        traj = _trajectory(ddp, c, t, max_alpha + 1)
        traj_lo = _trajectory(ddp, c, max(t - step, 0.0), max_alpha + 1)
        traj_hi = _trajectory(ddp, c, t + step, max_alpha + 1)
        for k in range(max_alpha + 1):
            # alpha = k - 1 + t
            a = traj[k]
            if abs(entropy(traj_hi[k]) - entropy(traj_lo[k])) < 1e-12:
                break
            b_here = check_step(ddp, traj[k - 1]) if k > 0 else delta_zero(c.grid)
            b_next = check_step(ddp, a)
            g_check = finite_difference_gexit(traj_lo[k], traj_hi[k], b_next)
            g_var = finite_difference_gexit(traj_lo[k], traj_hi[k], b_here)
            rows.append((k - 1 + t, entropy(a), g_check, g_var))
    rows.sort()
    alpha, x, y_check, y_var = (np.array(v) for v in zip(*rows))
    # close both curves at a = Delta_inf
    x = np.append(x, 0.0)
    y_check = np.append(y_check, 0.0)
    y_var = np.append(y_var, 0.0)
    alpha = np.append(alpha, np.inf)
    check = Curve(Curve.Role.CHECK, x, y_check, f"{ddp.label} {family.name} check", {"alpha": alpha})
    variable = Curve(Curve.Role.VARIABLE, x, y_var, f"{ddp.label} {family.name} variable", {"alpha": alpha})
    crosses = bool(np.any(y_var < y_check - 1e-6))
    chart = MatchingChart(check, variable, check.sorted_by_x().area(), variable.left_area(), crosses)
    logger.info(f"Matching chart {ddp.label} at {h=}: check area {chart.check_area:.4f}, variable left area {chart.variable_left_area:.4f}, crosses {crosses}")
    return chart
