import logging
import math
import re
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import norm

from lib.density import (
    DEFAULT_GRID,
    LN2,
    Atoms,
    Grid,
    LDensity,
    SignedMeasure,
    delta_inf,
    delta_zero,
    entropy,
    lift_magnitudes,
    magnitude_split,
    mixture,
)

logger = logging.getLogger(__name__)

H_CLAMP = 1e-9

# m = 2/sigma^2 is the mean of the BAWGN L-density, its variance is 2m
M_MIN = 1e-12
M_MAX = 1e4


def h2(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1 - x) * math.log2(1 - x))


def h2_inv(y: float) -> float:
    """Root of h2(x) = y in [0, 1/2]."""
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 0.5
    return float(brentq(lambda x: h2(x) - y, 0.0, 0.5, xtol=1e-16, maxiter=200))


def gauss_nodes(m: float) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes and weights for E[f(L)], L ~ N(m, 2m)."""
    sd = math.sqrt(2 * m)
    step = min(sd / 4, 0.25)
    n = int(math.ceil(32 * sd / step)) + 1
    t = np.linspace(m - 16 * sd, m + 16 * sd, n)
    w = norm.pdf(t, loc=m, scale=sd) * (t[1] - t[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return t, w


def gauss_expect(m: float, f: Callable[[np.ndarray], np.ndarray]) -> float:
    t, w = gauss_nodes(m)
    return float(w @ f(t))


def gauss_expect_hermite(m: float, f: Callable[[np.ndarray], np.ndarray], n: int = 61) -> float:
    u, w = np.polynomial.hermite.hermgauss(n)
    return float(w @ f(m + 2 * math.sqrt(m) * u) / math.sqrt(math.pi))


def _exit(t: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, -t) / LN2


def bawgn_entropy(m: float) -> float:
    if m <= 0:
        return 1.0
    if math.isinf(m):
        return 0.0
    return gauss_expect(m, _exit)


def _bawgn_entropy_dm(m: float) -> float:
    # d/dm E[f(L)] = E[f'(L) + f''(L)] for L ~ N(m, 2m)
    return gauss_expect(m, lambda t: (-expit(-t) + expit(t) * expit(-t)) / LN2)


def m_from_entropy(h: float) -> float:
    if h <= 0.0:
        return math.inf
    if h >= 1.0:
        return 0.0
    log_m = brentq(lambda u: bawgn_entropy(math.exp(u)) - h, math.log(M_MIN), math.log(M_MAX), xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return math.exp(log_m)


def sigma_from_entropy(h: float) -> float:
    """Noise level sigma of the BAWGN channel with entropy h (0 for h <= 0, inf for h >= 1)."""
    m = m_from_entropy(h)
    if math.isinf(m):
        return 0.0
    if m == 0.0:
        return math.inf
    return math.sqrt(2 / m)


def entropy_from_sigma(sigma: float) -> float:
    if sigma <= 0:
        return 0.0
    if math.isinf(sigma):
        return 1.0
    return bawgn_entropy(2 / sigma**2)


@dataclass(frozen=True)
class ChannelFamily:
    """Entropy-parameterized family of BMS channels, degraded in h, with c_0 = Delta_inf and c_1 = Delta_0."""

    class Kind(Enum):
        BEC = "bec"
        BSC = "bsc"
        BAWGN = "bawgn"

    kind: "ChannelFamily.Kind"
    grid: Grid = DEFAULT_GRID

    @property
    def name(self) -> str:
        return self.kind.value

    def _check(self, h: float) -> None:
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"Channel entropy must lie in [0, 1], got {h}")

    def parameter(self, h: float) -> float:
        """Natural parameter: erasure probability, crossover probability or noise sigma."""
        self._check(h)
        match self.kind:
            case ChannelFamily.Kind.BEC:
                return h
            case ChannelFamily.Kind.BSC:
                return h2_inv(h)
            case ChannelFamily.Kind.BAWGN:
                return sigma_from_entropy(h)

    def atoms(self, h: float) -> Atoms:
        match self.kind:
            case ChannelFamily.Kind.BEC:
                return Atoms.bec(h)
            case ChannelFamily.Kind.BSC:
                return Atoms.bsc(h2_inv(h))
            case _:
                raise ValueError(f"{self.name} has no finite-atom representation")

    def density(self, h: float) -> LDensity:
        self._check(h)
        if h == 0.0:
            return delta_inf(self.grid)
        if h == 1.0:
            return delta_zero(self.grid)
        if self.kind != ChannelFamily.Kind.BAWGN:
            return self.atoms(h).to_density(self.grid)
        return self._bawgn_density(h)

    def _bawgn_density(self, h: float) -> LDensity:
        m = m_from_entropy(h)
        sd = math.sqrt(2 * m)
        grid = self.grid
        bins = norm.pdf(grid.points, loc=m, scale=sd) * grid.step
        upper = norm.sf(grid.l_max + grid.step / 2, loc=m, scale=sd)
        total = bins.sum()
        if total <= 0:
            return delta_inf(grid)
        bins *= (1.0 - upper) / total
        c = LDensity(grid, bins, upper)
        # quantization leaves a tiny entropy error; mix with an extreme density to remove it
        hq = entropy(c)
        if hq < h:
            t = (h - hq) / (1.0 - hq)
            c = mixture([t, 1 - t], [delta_zero(grid), c])
        elif hq > h:
            t = 1.0 - h / hq
            c = mixture([t, 1 - t], [delta_inf(grid), c])
        logger.debug(f"BAWGN density {h=}, {m=}, {upper=}, entropy error {hq - h:.3e}")
        return c

    def battacharyya_of(self, h: float) -> float:
        self._check(h)
        match self.kind:
            case ChannelFamily.Kind.BEC:
                return h
            case ChannelFamily.Kind.BSC:
                eps = h2_inv(h)
                return math.sqrt(4 * eps * (1 - eps))
            case ChannelFamily.Kind.BAWGN:
                return math.exp(-m_from_entropy(h) / 4) if h > 0 else 0.0

    def error_prob_of(self, h: float) -> float:
        self._check(h)
        match self.kind:
            case ChannelFamily.Kind.BEC:
                return h / 2
            case ChannelFamily.Kind.BSC:
                return h2_inv(h)
            case ChannelFamily.Kind.BAWGN:
                m = m_from_entropy(h)
                return float(norm.sf(math.sqrt(m / 2))) if not math.isinf(m) else 0.0

    def expect(self, h: float, f: Callable[[np.ndarray], np.ndarray], f_inf: float = 0.0) -> float:
        """Exact E[f(L)] under the channel with entropy h."""
        self._check(h)
        if self.kind == ChannelFamily.Kind.BAWGN:
            m = m_from_entropy(h)
            if math.isinf(m):
                return f_inf
            if m == 0.0:
                return float(f(np.zeros(1))[0])
            return gauss_expect(m, f)
        a = self.atoms(h)
        finite = np.isfinite(a.values)
        return float(a.probs[finite] @ f(a.values[finite]) + a.probs[~finite].sum() * f_inf)

    def d_expect_dh(self, h: float, f: Callable, df: Callable, d2f: Callable, f_inf: float = 0.0) -> float:
        """Analytic d/dh E[f(L)] under the channel with entropy h (h clamped away from 0 and 1)."""
        self._check(h)
        h = min(max(h, H_CLAMP), 1 - H_CLAMP)
        match self.kind:
            case ChannelFamily.Kind.BEC:
                return float(f(np.zeros(1))[0] - f_inf)
            case ChannelFamily.Kind.BSC:
                eps = h2_inv(h)
                y = math.log((1 - eps) / eps)
                v = np.array([y, -y])
                fv, dfv = f(v), df(v)
                dy_deps = -1.0 / (eps * (1 - eps))
                d_eps = fv[1] - fv[0] + ((1 - eps) * dfv[0] - eps * dfv[1]) * dy_deps
                return float(d_eps / math.log2((1 - eps) / eps))
            case ChannelFamily.Kind.BAWGN:
                m = m_from_entropy(h)
                dm = gauss_expect(m, lambda t: df(t) + d2f(t))
                return dm / _bawgn_entropy_dm(m)

    def d_density_dh(self, h: float) -> SignedMeasure:
        """Derivative of the quantized family density with respect to h."""
        self._check(h)
        h = min(max(h, H_CLAMP), 1 - H_CLAMP)
        grid = self.grid
        match self.kind:
            case ChannelFamily.Kind.BEC:
                bins = np.zeros(grid.n_bins)
                bins[grid.half] = 1.0
                return SignedMeasure(grid, bins, -1.0)
            case ChannelFamily.Kind.BSC:
                y = math.log((1 - h2_inv(h)) / h2_inv(h))
                j, _, dphi = magnitude_split(grid, y)
                mass = np.zeros(grid.half + 2)
                # phi(y(h)) = h, so the split weight moves linearly in h
                mass[j[0]] -= 1.0 / dphi[0]
                mass[j[0] + 1] += 1.0 / dphi[0]
                return lift_magnitudes(grid, mass[: grid.half + 1], float(mass[grid.half + 1]), signed=True)
            case ChannelFamily.Kind.BAWGN:
                m = m_from_entropy(h)
                x = grid.points
                c = norm.pdf(x, loc=m, scale=math.sqrt(2 * m)) * grid.step
                score = -1 / (2 * m) + (x - m) / (2 * m) + (x - m) ** 2 / (4 * m**2)
                bins = c * score / _bawgn_entropy_dm(m)
                return SignedMeasure(grid, bins, -bins.sum())


CHANNEL_RE = re.compile(r"^(bec|bsc|bawgn)(?::(h|eps|sigma)=([0-9.eE+-]+))?$")


def parse_channel(spec: str, grid: Grid = DEFAULT_GRID) -> tuple[ChannelFamily, float | None]:
    """Parse "bec:h=0.42", "bsc:eps=0.11", "bawgn:sigma=0.9" or a bare family name."""
    match = CHANNEL_RE.match(spec.strip().lower())
    if match is None:
        raise ValueError(f"Invalid channel spec: {spec!r}")
    kind, key, value = match.groups()
    family = ChannelFamily(ChannelFamily.Kind(kind), grid)
    if key is None:
        return family, None
    try:
        v = float(value)
    except ValueError as e:
        raise ValueError(f"Invalid channel parameter in {spec!r}") from e
    match key:
        case "h":
            h = v
        case "eps" if kind == "bsc":
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"Crossover probability must lie in [0, 1], got {v}")
            h = h2(min(v, 1 - v))
        case "sigma" if kind == "bawgn":
            h = entropy_from_sigma(v)
        case _:
            raise ValueError(f"Parameter {key!r} does not apply to {kind}")
    family._check(h)
    return family, h
