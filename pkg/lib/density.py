import json
import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.signal import fftconvolve
from scipy.special import entr, expit

logger = logging.getLogger(__name__)

L_MAX = 30.0
N_BINS = 4097
LN2 = np.log(2.0)

# sparse operands below this many nonzero bins are convolved directly
SPARSE_LIMIT = 64


@dataclass(frozen=True)
class Grid:
    """Uniform LLR grid x_k = -l_max + k*step with an odd number of points, so 0 and every +-x pair are grid points."""

    l_max: float = L_MAX
    n_bins: int = N_BINS

    def __post_init__(self):
        if self.n_bins < 5 or self.n_bins % 2 == 0:
            raise ValueError(f"Grid needs an odd number of bins >= 5, got {self.n_bins}")
        if not self.l_max > 0:
            raise ValueError(f"Grid half-width must be positive, got {self.l_max}")

    @property
    def half(self) -> int:
        return self.n_bins // 2

    @property
    def step(self) -> float:
        return self.l_max / self.half

    @property
    def points(self) -> np.ndarray:
        return _points(self)

    @property
    def magnitudes(self) -> np.ndarray:
        return _points(self)[self.half :]


DEFAULT_GRID = Grid()


@lru_cache(maxsize=16)
def _points(grid: Grid) -> np.ndarray:
    points = (np.arange(grid.n_bins) - grid.half) * grid.step
    points.setflags(write=False)
    return points


def abs_entropy(x: np.ndarray | float) -> np.ndarray:
    """Entropy of a symmetric two-point density at +-x, i.e. h2 of its error probability."""
    p = expit(-np.abs(np.asarray(x, dtype=float)))
    return (entr(p) + entr(1.0 - p)) / LN2


@dataclass(frozen=True, eq=False)
class LDensity:
    """Quantized L-density: masses on the grid points plus an atom at +infinity."""

    grid: Grid
    bins: np.ndarray
    atom_inf: float = 0.0

    def __post_init__(self):
        bins = np.array(self.bins, dtype=float)
        if bins.shape != (self.grid.n_bins,):
            raise ValueError(f"Expected {self.grid.n_bins} bins but got {bins.shape}")
        if not np.all(np.isfinite(bins)) or bins.min() < -1e-12:
            raise ValueError("Density masses must be finite and non-negative")
        if not -1e-12 <= self.atom_inf <= 1 + 1e-12:
            raise ValueError(f"Invalid atom at infinity: {self.atom_inf}")
        total = bins.sum() + self.atom_inf
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"Density has total mass {total}, expected 1")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "atom_inf", float(self.atom_inf))

    @property
    def l_max(self) -> float:
        return self.grid.l_max

    @property
    def n_bins(self) -> int:
        return self.grid.n_bins

    def is_symmetric(self, tol: float = 1e-8) -> bool:
        m = self.grid.half
        x = self.grid.magnitudes[1:]
        plus = self.bins[m + 1 :]
        minus = self.bins[m - 1 :: -1]
        return bool(np.max(np.abs(minus - np.exp(-x) * plus), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Signed counterpart of LDensity, used for derivatives of channel families."""

    grid: Grid
    bins: np.ndarray
    atom_inf: float = 0.0

    def __post_init__(self):
        bins = np.array(self.bins, dtype=float)
        if bins.shape != (self.grid.n_bins,):
            raise ValueError(f"Expected {self.grid.n_bins} bins but got {bins.shape}")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "atom_inf", float(self.atom_inf))

    @property
    def total(self) -> float:
        return float(self.bins.sum() + self.atom_inf)

    def integrate(self, values: np.ndarray, value_inf: float = 0.0) -> float:
        return float(self.bins @ values + self.atom_inf * value_inf)


@dataclass(frozen=True)
class DensityFunctionalReport:
    entropy: float
    battacharyya: float
    error_prob: float


def delta_zero(grid: Grid = DEFAULT_GRID) -> LDensity:
    bins = np.zeros(grid.n_bins)
    bins[grid.half] = 1.0
    return LDensity(grid, bins, 0.0)


def delta_inf(grid: Grid = DEFAULT_GRID) -> LDensity:
    return LDensity(grid, np.zeros(grid.n_bins), 1.0)


def _normalized(grid: Grid, bins: np.ndarray, atom_inf: float) -> LDensity:
    bins = np.clip(bins, 0.0, None)
    atom_inf = min(max(atom_inf, 0.0), 1.0)
    mass = bins.sum()
    if mass > 0:
        bins *= (1.0 - atom_inf) / mass
    return LDensity(grid, bins, atom_inf)


def _same_grid(*densities: LDensity) -> Grid:
    grid = densities[0].grid
    for d in densities[1:]:
        if d.grid != grid:
            raise ValueError(f"Grid mismatch: {grid} vs {d.grid}")
    return grid


# functionals


@lru_cache(maxsize=16)
def _entropy_weights(grid: Grid) -> np.ndarray:
    return np.logaddexp(0.0, -grid.points) / LN2


@lru_cache(maxsize=16)
def _battacharyya_weights(grid: Grid) -> np.ndarray:
    return np.exp(-grid.points / 2)


@lru_cache(maxsize=16)
def _error_weights(grid: Grid) -> np.ndarray:
    x = grid.points
    return 0.5 * np.where(x > 0, np.exp(-np.clip(x, 0, None)), 1.0)


def entropy(a: LDensity) -> float:
    return float(min(max(a.bins @ _entropy_weights(a.grid), 0.0), 1.0))


def battacharyya(a: LDensity) -> float:
    return float(a.bins @ _battacharyya_weights(a.grid))


def error_prob(a: LDensity) -> float:
    return float(a.bins @ _error_weights(a.grid))


def functionals(a: LDensity) -> DensityFunctionalReport:
    return DensityFunctionalReport(entropy(a), battacharyya(a), error_prob(a))


def mean_squared_soft_bit(a: LDensity) -> float:
    """E[tanh^2(L/2)]; the atom at infinity counts as 1."""
    return float(a.bins @ np.tanh(a.grid.points / 2) ** 2 + a.atom_inf)


def distance(a: LDensity, b: LDensity) -> float:
    fa, fb = functionals(a), functionals(b)
    return max(abs(fa.entropy - fb.entropy), abs(fa.battacharyya - fb.battacharyya), abs(fa.error_prob - fb.error_prob))


# exact atomic densities


@dataclass(frozen=True, eq=False)
class Atoms:
    """Exact symmetric density made of finitely many point masses; values may include +inf."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1:
            raise ValueError("Atom values and probabilities must be 1-d arrays of equal length")
        if probs.min(initial=0.0) < -1e-12 or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"Atom probabilities must be a distribution, got total {probs.sum()}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def bec(cls, h: float) -> "Atoms":
        return cls(np.array([0.0, np.inf]), np.array([h, 1.0 - h]))

    @classmethod
    def bsc(cls, eps: float) -> "Atoms":
        if eps <= 0:
            return cls(np.array([np.inf]), np.array([1.0]))
        if eps >= 0.5:
            return cls(np.array([0.0]), np.array([1.0]))
        y = np.log((1 - eps) / eps)
        return cls(np.array([y, -y]), np.array([1.0 - eps, eps]))

    def _expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        finite = np.isfinite(self.values)
        return float(self.probs[finite] @ f(self.values[finite]))

    def entropy(self) -> float:
        return self._expect(lambda y: np.logaddexp(0.0, -y) / LN2)

    def battacharyya(self) -> float:
        return self._expect(lambda y: np.exp(-y / 2))

    def error_prob(self) -> float:
        return self._expect(lambda y: 0.5 * np.where(y > 0, np.exp(-np.abs(y)), 1.0))

    def convolve(self, other: "Atoms") -> "Atoms":
        """Exact density of the sum of independent LLRs."""
        values = np.add.outer(self.values, other.values).ravel()
        probs = np.multiply.outer(self.probs, other.probs).ravel()
        keep = probs > 0
        return Atoms(values[keep], probs[keep])

    def magnitude_masses(self) -> tuple[np.ndarray, np.ndarray]:
        """Merged |value| -> total probability, infinite magnitudes included."""
        magnitudes, inverse = np.unique(np.abs(self.values), return_inverse=True)
        totals = np.bincount(inverse, weights=self.probs, minlength=len(magnitudes))
        return magnitudes, totals

    def to_density(self, grid: Grid = DEFAULT_GRID) -> LDensity:
        magnitudes, totals = self.magnitude_masses()
        mass, atom_inf = quantize_magnitudes(grid, magnitudes, totals)
        return lift_magnitudes(grid, mass, atom_inf)


def magnitude_split(grid: Grid, y: np.ndarray | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entropy-preserving split of magnitude y between grid magnitudes j and j+1.

    Returns (j, w, dphi) with a fraction w going to j+1; j == half means the upper
    neighbour is the atom at infinity. dphi = phi(x_{j+1}) - phi(x_j) < 0.
    """
    y = np.atleast_1d(np.abs(np.asarray(y, dtype=float)))
    m = grid.half
    j = np.minimum(np.floor(np.minimum(y, 2 * grid.l_max) / grid.step).astype(int), m)
    phi = abs_entropy(np.minimum(y, 1e300))
    phi_lo = abs_entropy(j * grid.step)
    phi_hi = np.where(j < m, abs_entropy((j + 1) * grid.step), 0.0)
    dphi = phi_hi - phi_lo
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dphi < 0, (phi - phi_lo) / dphi, 0.0)
    w = np.where(np.isinf(y), 1.0, np.clip(w, 0.0, 1.0))
    on_grid = np.isclose(y, j * grid.step, rtol=0, atol=1e-12 * grid.step) & (j < m)
    w = np.where(on_grid, 0.0, w)
    return j, w, dphi


def quantize_magnitudes(grid: Grid, magnitudes: np.ndarray, totals: np.ndarray) -> tuple[np.ndarray, float]:
    m = grid.half
    j, w, _ = magnitude_split(grid, magnitudes)
    mass = np.zeros(m + 2)
    np.add.at(mass, j, totals * (1 - w))
    np.add.at(mass, j + 1, totals * w)
    return mass[: m + 1], float(mass[m + 1])


def lift_magnitudes(grid: Grid, mass: np.ndarray, atom_inf: float, signed: bool = False) -> LDensity | SignedMeasure:
    """Distribute per-magnitude totals onto +-x in the symmetric ratio 1 : e^{-x}."""
    m = grid.half
    x = grid.magnitudes
    share = expit(x)
    bins = np.zeros(grid.n_bins)
    bins[m:] = mass * share
    bins[m::-1] += mass * (1.0 - share)
    bins[m] = mass[0]
    if signed:
        return SignedMeasure(grid, bins, atom_inf)
    return _normalized(grid, bins, atom_inf)


# algebra


def symmetrize(a: LDensity) -> LDensity:
    mass, _ = _magnitude_totals(a)
    return lift_magnitudes(a.grid, mass, a.atom_inf)


def _magnitude_totals(a: LDensity) -> tuple[np.ndarray, np.ndarray]:
    m = a.grid.half
    plus = a.bins[m:].copy()
    minus = np.zeros(m + 1)
    minus[1:] = a.bins[m - 1 :: -1]
    return plus + minus, (plus, minus)


def mixture(weights: Sequence[float], densities: Sequence[LDensity]) -> LDensity:
    grid = _same_grid(*densities)
    weights = np.asarray(weights, dtype=float)
    if weights.min() < 0 or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"Mixture weights must form a distribution: {weights}")
    bins = sum((w * d.bins for w, d in zip(weights, densities)), np.zeros(grid.n_bins))
    atom_inf = float(sum(w * d.atom_inf for w, d in zip(weights, densities)))
    return _normalized(grid, bins, atom_inf)


def _linear_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a)
    nz_a, nz_b = np.flatnonzero(a), np.flatnonzero(b)
    if len(nz_b) < len(nz_a):
        a, b, nz_a = b, a, nz_b
    if len(nz_a) <= SPARSE_LIMIT:
        full = np.zeros(2 * n - 1)
        for i in nz_a:
            full[i : i + n] += a[i] * b
        return full
    full = np.clip(fftconvolve(a, b), 0.0, None)
    expected = a.sum() * b.sum()
    if full.sum() > 0:
        full *= expected / full.sum()
    return full


def var_convolve(a: LDensity, b: LDensity) -> LDensity:
    """Density of the sum of independent LLRs (variable node combination)."""
    grid = _same_grid(a, b)
    atom_inf = 1.0 - (1.0 - a.atom_inf) * (1.0 - b.atom_inf)
    if atom_inf >= 1.0:
        return delta_inf(grid)
    m, n = grid.half, grid.n_bins
    full = _linear_convolve(a.bins, b.bins)
    bins = full[m : m + n].copy()
    bins[0] += full[:m].sum()
    overflow = full[m + n :].sum()
    return _normalized(grid, bins, atom_inf + overflow)


@lru_cache(maxsize=4)
def _check_table(grid: Grid) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Flat upper-triangle indices of magnitude pairs and the linear map to output magnitudes."""
    m = grid.half
    iu, ju = np.triu_indices(m + 1)
    x1, x2 = iu * grid.step, ju * grid.step
    z = np.logaddexp(0.0, x1 + x2) - np.logaddexp(x1, x2)
    pos = np.clip(z / grid.step, 0.0, m)
    j = np.minimum(np.floor(pos).astype(np.int64), m - 1)
    w = pos - j
    cols = np.arange(len(iu))
    table = sparse.csr_matrix((np.concatenate([1 - w, w]), (np.concatenate([j, j + 1]), np.concatenate([cols, cols]))), shape=(m + 1, len(iu)))
    logger.debug(f"Built check table for {grid=}, {table.nnz=}")
    return iu * (m + 1) + ju, table


def check_convolve(a: LDensity, b: LDensity) -> LDensity:
    """Density of 2 atanh(tanh(x/2) tanh(y/2)) for independent x ~ a, y ~ b (check node combination)."""
    grid = _same_grid(a, b)
    m = grid.half
    _, (pa, ma) = _magnitude_totals(a)
    _, (pb, mb) = _magnitude_totals(b)
    flat, table = _check_table(grid)

    def pair_sum(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        p = np.outer(u, v)
        p += p.T
        p[np.diag_indices(m + 1)] /= 2
        return p.ravel()[flat]

    same = pair_sum(pa, pb) + pair_sum(ma, mb)
    cross = pair_sum(pa, mb) + pair_sum(ma, pb)
    plus_out = table @ same
    minus_out = table @ cross

    bins = a.atom_inf * b.bins + b.atom_inf * a.bins
    bins[m:] += plus_out
    bins[m::-1] += minus_out
    return _normalized(grid, bins, a.atom_inf * b.atom_inf)


def _powers(a: LDensity, exponents: set[int], op: Callable[[LDensity, LDensity], LDensity], identity: LDensity) -> dict[int, LDensity]:
    memo: dict[int, LDensity] = {0: identity, 1: a}

    def power(k: int) -> LDensity:
        if k not in memo:
            memo[k] = op(power(k // 2), power(k - k // 2))
        return memo[k]

    return {k: power(k) for k in exponents}


def _polynomial_of(a: LDensity, coefficients: Mapping[int, float], op: Callable[[LDensity, LDensity], LDensity], identity: LDensity) -> LDensity:
    terms = {d: c for d, c in coefficients.items() if c > 0}
    if not terms or min(terms) < 1:
        raise ValueError(f"Invalid edge-perspective polynomial: {dict(coefficients)}")
    powers = _powers(a, {d - 1 for d in terms}, op, identity)
    if len(terms) == 1:
        return powers[next(iter(terms)) - 1]
    degrees = sorted(terms)
    return mixture([terms[d] for d in degrees], [powers[d - 1] for d in degrees])


def lambda_of(a: LDensity, lam: Mapping[int, float]) -> LDensity:
    """Sum of lam_i a^{(i-1) variable convolutions}."""
    return _polynomial_of(a, lam, var_convolve, delta_zero(a.grid))


def rho_of(a: LDensity, rho: Mapping[int, float]) -> LDensity:
    return _polynomial_of(a, rho, check_convolve, delta_inf(a.grid))


def degrade_by_bsc(a: LDensity, delta: float) -> LDensity:
    """Pass the bit through a BSC(delta) first; the output is physically degraded w.r.t. a."""
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"BSC crossover must lie in [0, 1/2], got {delta}")
    if delta == 0.0:
        return a
    return check_convolve(a, Atoms.bsc(delta).to_density(a.grid))


# |D| domain


@dataclass(frozen=True, eq=False)
class AbsDensity:
    s: np.ndarray
    mass: np.ndarray


def to_absD(a: LDensity) -> AbsDensity:
    totals, _ = _magnitude_totals(a)
    s = np.append(np.tanh(a.grid.magnitudes / 2), 1.0)
    return AbsDensity(s, np.append(totals, a.atom_inf))


def absD_functional(a: LDensity, kernel: Callable[[np.ndarray], np.ndarray]) -> float:
    d = to_absD(a)
    return float(d.mass @ kernel(d.s))


# serialization


def to_json(a: LDensity) -> str:
    return json.dumps({"l_max": a.grid.l_max, "n_bins": a.grid.n_bins, "bins": a.bins.tolist(), "atom_inf": a.atom_inf})


def from_json(text: str) -> LDensity:
    data = json.loads(text)
    try:
        return LDensity(Grid(float(data["l_max"]), int(data["n_bins"])), np.array(data["bins"], dtype=float), float(data["atom_inf"]))
    except KeyError as e:
        raise ValueError(f"Missing field in density JSON: {e}") from e
