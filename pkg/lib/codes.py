import logging
import math
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import comb, logsumexp
from scipy.stats import norm

from lib.channels import ChannelFamily, h2, m_from_entropy
from lib.curve import Curve
from lib.density import Atoms, LDensity, abs_entropy, entropy, lift_magnitudes, quantize_magnitudes
from lib.kernels import gexit_functional, gexit_kernel, kernel_absD, kernel_l

logger = logging.getLogger(__name__)

MAX_K = 20
MAX_ENUMERATION = 1 << 26
LLR_CLIP = 30.0
MAP_LLR_CLIP = 1e4
MONTECARLO_SAMPLES = 1_000_000

HAMMING_74_H = np.array(
    [
        [1, 0, 1, 0, 1, 0, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ],
    dtype=np.uint8,
)


class EnumerationError(ValueError):
    pass


class Mode(Enum):
    EXACT = "exact"
    MONTECARLO = "montecarlo"


def rref_gf2(matrix: np.ndarray) -> tuple[np.ndarray, list[int]]:
    m = np.array(matrix, dtype=np.uint8) % 2
    pivots: list[int] = []
    row = 0
    for col in range(m.shape[1]):
        hits = np.flatnonzero(m[row:, col])
        if len(hits) == 0:
            continue
        pivot = row + hits[0]
        m[[row, pivot]] = m[[pivot, row]]
        for r in np.flatnonzero(m[:, col]):
            if r != row:
                m[r] ^= m[row]
        pivots.append(col)
        row += 1
        if row == m.shape[0]:
            break
    return m[:row], pivots


def nullspace_gf2(matrix: np.ndarray) -> np.ndarray:
    """Basis (as rows) of {x : matrix x = 0} over GF(2)."""
    reduced, pivots = rref_gf2(matrix)
    n = matrix.shape[1]
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for r, p in enumerate(pivots):
            basis[i, p] = reduced[r, f]
    return basis


@dataclass(frozen=True, eq=False)
class TannerGraph:
    parity: np.ndarray

    @cached_property
    def var_checks(self) -> list[list[int]]:
        return [list(np.flatnonzero(self.parity[:, v])) for v in range(self.parity.shape[1])]

    @cached_property
    def check_vars(self) -> list[list[int]]:
        return [list(np.flatnonzero(row)) for row in self.parity]

    @property
    def n(self) -> int:
        return self.parity.shape[1]

    def _neighbors(self, node: int) -> list[int]:
        # variables are 0..n-1, checks n..n+m-1
        if node < self.n:
            return [self.n + c for c in self.var_checks[node]]
        return self.check_vars[node - self.n]

    def shortest_cycle_through(self, v: int) -> float:
        dist = {v: 0}
        branch = {v: -1}
        best = math.inf
        queue = deque([v])
        while queue:
            u = queue.popleft()
            if 2 * dist[u] + 1 >= best:
                break
            for w in self._neighbors(u):
                if w not in dist:
                    dist[w] = dist[u] + 1
                    branch[w] = w if u == v else branch[u]
                    queue.append(w)
                elif u != v and w != v and branch[w] != branch[u]:
                    best = min(best, dist[u] + dist[w] + 1)
        return best

    def is_tree_like(self, v: int, radius: int) -> bool:
        """True if the depth-radius neighbourhood of variable v (in edges) contains no cycle."""
        dist = {v: 0}
        parent = {v: -1}
        queue = deque([v])
        while queue:
            u = queue.popleft()
            if dist[u] >= radius:
                continue
            for w in self._neighbors(u):
                if w == parent[u]:
                    continue
                if w in dist:
                    return False
                dist[w] = dist[u] + 1
                parent[w] = u
                queue.append(w)
        return True

    @property
    def girths(self) -> list[float]:
        return [self.shortest_cycle_through(v) for v in range(self.n)]

    @cached_property
    def _edges(self) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
        ev = np.concatenate([np.array(vs, dtype=int) for vs in self.check_vars])
        ec = np.concatenate([np.full(len(vs), c, dtype=int) for c, vs in enumerate(self.check_vars)])
        slices = []
        start = 0
        for vs in self.check_vars:
            slices.append(np.arange(start, start + len(vs)))
            start += len(vs)
        return ev, ec, slices

    def bp_extrinsic(self, llrs: np.ndarray, iterations: int) -> np.ndarray:
        """Flooding-schedule BP; returns the extrinsic LLR of every bit after the given number of iterations."""
        if iterations < 0:
            raise ValueError(f"Iteration count must be non-negative, got {iterations}")
        llrs = np.clip(np.atleast_2d(np.asarray(llrs, dtype=float)), -LLR_CLIP, LLR_CLIP)
        ev, _, slices = self._edges
        incidence = np.zeros((len(ev), self.n))
        incidence[np.arange(len(ev)), ev] = 1.0
        tanh_max = math.tanh(LLR_CLIP / 2)
        v2c = llrs[:, ev]
        c2v = np.zeros_like(v2c)
        for _ in range(iterations):
            t = np.tanh(v2c / 2)
            for idx in slices:
                block = t[:, idx]
                ones = np.ones((block.shape[0], 1))
                prefix = np.cumprod(np.hstack([ones, block[:, :-1]]), axis=1)
                suffix = np.cumprod(np.hstack([ones, block[:, :0:-1]]), axis=1)[:, ::-1]
                c2v[:, idx] = 2 * np.arctanh(np.clip(prefix * suffix, -tanh_max, tanh_max))
            total = llrs + c2v @ incidence
            v2c = np.clip(total[:, ev] - c2v, -LLR_CLIP, LLR_CLIP)
        return c2v @ incidence


@dataclass(frozen=True, eq=False)
class LinearCode:
    """Proper binary linear code given by a k x n generator matrix."""

    generator: np.ndarray
    name: str = ""
    parity: np.ndarray | None = None

    def __post_init__(self):
        g = np.array(self.generator, dtype=np.uint8)
        if g.ndim != 2 or not np.all(g <= 1):
            raise ValueError(f"Generator must be a binary matrix, got shape {g.shape}")
        if len(rref_gf2(g)[0]) != g.shape[0]:
            raise ValueError(f"Generator of {self.name or 'code'} is not full rank")
        if np.any(g.sum(axis=0) == 0):
            raise ValueError(f"Code {self.name or ''} is not proper: zero generator column")
        if g.shape[0] > MAX_K:
            raise EnumerationError(f"Code dimension {g.shape[0]} exceeds enumeration limit {MAX_K}")
        h = nullspace_gf2(g) if self.parity is None else np.array(self.parity, dtype=np.uint8)
        if h.shape[1] != g.shape[1] or np.any((h.astype(int) @ g.T.astype(int)) % 2):
            raise ValueError(f"Parity-check matrix of {self.name or 'code'} is not orthogonal to the generator")
        object.__setattr__(self, "generator", g)
        object.__setattr__(self, "parity", h)

    @classmethod
    def from_parity_check(cls, parity: np.ndarray, name: str = "") -> "LinearCode":
        parity = np.array(parity, dtype=np.uint8)
        return cls(nullspace_gf2(parity), name, parity)

    @classmethod
    def from_text(cls, text: str, name: str = "", parity: bool = False) -> "LinearCode":
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].replace(",", " ").strip()
            if not line:
                continue
            digits = line.split() if " " in line else list(line)
            if any(d not in ("0", "1") for d in digits):
                raise ValueError(f"Invalid matrix row: {line!r}")
            rows.append([int(d) for d in digits])
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValueError("Matrix rows must be non-empty and of equal length")
        return cls.from_parity_check(np.array(rows), name) if parity else cls(np.array(rows), name)

    @property
    def n(self) -> int:
        return self.generator.shape[1]

    @property
    def k(self) -> int:
        return self.generator.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def codewords(self) -> np.ndarray:
        messages = (np.arange(1 << self.k)[:, None] >> np.arange(self.k)[None, :]) & 1
        return (messages @ self.generator.astype(int)) % 2

    @cached_property
    def tanner(self) -> TannerGraph:
        return TannerGraph(self.parity)

    @cached_property
    def _bec_unrecoverable(self) -> np.ndarray:
        """Per bit, the number of erasure patterns of each weight on the other bits that hide the bit."""
        n = self.n
        if (1 << (n - 1)) * len(self.codewords) > MAX_ENUMERATION:
            raise EnumerationError(f"Erasure enumeration of {self.name} is too large")
        masks = self.codewords @ (1 << np.arange(n))
        patterns = np.arange(1 << n)
        weights = np.array([bin(p).count("1") for p in patterns])
        counts = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            bit = 1 << i
            others = patterns[(patterns & bit) == 0]
            witnesses = masks[(masks & bit) != 0] & ~bit
            hidden = np.any((witnesses[None, :] & ~others[:, None]) == 0, axis=1)
            counts[i] = np.bincount(weights[others[hidden]], minlength=n)[:n]
        return counts


def builtin_code(spec: str) -> LinearCode:
    """Built-in codes: "rep:n", "spc:n", "hamming74", "simplex73", "code:5_4_2"."""
    spec = spec.strip().lower()
    kind, _, arg = spec.partition(":")
    match kind:
        case "rep" | "spc":
            try:
                n = int(arg)
            except ValueError as e:
                raise ValueError(f"Invalid code length in {spec!r}") from e
            if n < 2:
                raise ValueError(f"Code length must be at least 2, got {n}")
            if kind == "rep":
                return LinearCode(np.ones((1, n), dtype=np.uint8), f"rep:{n}")
            return LinearCode(np.hstack([np.eye(n - 1, dtype=np.uint8), np.ones((n - 1, 1), dtype=np.uint8)]), f"spc:{n}")
        case "hamming74":
            return LinearCode.from_parity_check(HAMMING_74_H, "hamming74")
        case "simplex73":
            return LinearCode(HAMMING_74_H, "simplex73")
        case "code" if arg == "5_4_2":
            return LinearCode(builtin_code("spc:5").generator, "code:5_4_2")
        case _:
            raise ValueError(f"Unknown code: {spec!r}")


def parse_code(spec: str) -> LinearCode:
    """A built-in name, or "generator:PATH" / "parity:PATH" for plain-text 0/1 matrices."""
    kind, _, path = spec.partition(":")
    if kind in ("generator", "parity"):
        text = Path(path).read_text()
        return LinearCode.from_text(text, Path(path).stem, parity=kind == "parity")
    return builtin_code(spec)


# extrinsic MAP


def map_extrinsic(code: LinearCode, llrs: np.ndarray) -> np.ndarray:
    """Exact extrinsic LLR of every bit given full channel LLR vectors (one per row)."""
    llrs = np.clip(np.atleast_2d(np.asarray(llrs, dtype=float)), -MAP_LLR_CLIP, MAP_LLR_CLIP)
    signs = 1.0 - 2.0 * code.codewords
    out = np.empty_like(llrs)
    for i in range(code.n):
        masked = llrs.copy()
        masked[:, i] = 0.0
        corr = masked @ signs.T / 2
        zero = code.codewords[:, i] == 0
        out[:, i] = logsumexp(corr[:, zero], axis=1) - logsumexp(corr[:, ~zero], axis=1)
    return out


def _bsc_patterns(n: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    errors = (np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1
    weight = errors.sum(axis=1)
    probs = eps**weight * (1 - eps) ** (n - weight)
    return errors, probs


def extrinsic_atoms(code: LinearCode, i: int, family: ChannelFamily, h: float) -> Atoms:
    """Exact extrinsic density of bit i under the all-one codeword, for BEC and BSC."""
    if not 0 <= i < code.n:
        raise ValueError(f"Bit index {i} out of range for n={code.n}")
    n = code.n
    match family.kind:
        case ChannelFamily.Kind.BEC:
            counts = code._bec_unrecoverable[i]
            w = np.arange(n)
            p = float(np.sum(counts * h**w * (1 - h) ** (n - 1 - w)))
            return Atoms.bec(min(max(p, 0.0), 1.0))
        case ChannelFamily.Kind.BSC:
            eps = family.parameter(h)
            if eps == 0.0:
                unit = np.zeros(n, dtype=int)
                unit[i] = 1
                known = not np.any(np.all(code.codewords == unit, axis=1))
                return Atoms(np.array([np.inf if known else 0.0]), np.array([1.0]))
            if (1 << (n - 1)) * len(code.codewords) > MAX_ENUMERATION:
                raise EnumerationError(f"Output enumeration of {code.name} is too large")
            errors, probs = _bsc_patterns(n - 1, eps)
            llrs = np.zeros((len(probs), n))
            others = [j for j in range(n) if j != i]
            llrs[:, others] = (1 - 2 * errors) * math.log((1 - eps) / eps) if eps < 0.5 else 0.0
            phi = map_extrinsic(code, llrs)[:, i]
            return Atoms(phi, probs)
        case _:
            raise ValueError(f"Exact extrinsic densities need a discrete channel, got {family.name}")


def sample_llrs(family: ChannelFamily, h: float, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Channel LLRs under the all-one codeword."""
    match family.kind:
        case ChannelFamily.Kind.BEC:
            return np.where(rng.random(shape) < h, 0.0, np.inf)
        case ChannelFamily.Kind.BSC:
            eps = family.parameter(h)
            y = math.log((1 - eps) / eps) if 0 < eps < 0.5 else (np.inf if eps == 0 else 0.0)
            return np.where(rng.random(shape) < eps, -y, y)
        case ChannelFamily.Kind.BAWGN:
            m = m_from_entropy(h)
            if math.isinf(m):
                return np.full(shape, np.inf)
            return rng.normal(m, math.sqrt(2 * m), size=shape)


def _montecarlo_extrinsic(code: LinearCode, family: ChannelFamily, h: float, samples: int, seed: int) -> np.ndarray:
    if samples <= 0:
        raise ValueError(f"Sample budget must be positive, got {samples}")
    rng = np.random.default_rng(seed)
    chunks = []
    for start in range(0, samples, 100_000):
        size = min(100_000, samples - start)
        chunks.append(map_extrinsic(code, sample_llrs(family, h, (size, code.n), rng)))
    return np.vstack(chunks)


def _density_from_samples(family: ChannelFamily, phi: np.ndarray) -> LDensity:
    grid = family.grid
    weights = np.full(len(phi), 1.0 / len(phi))
    mass, atom = quantize_magnitudes(grid, np.abs(phi), weights)
    return lift_magnitudes(grid, mass, atom)


def _default_mode(family: ChannelFamily) -> Mode:
    return Mode.MONTECARLO if family.kind == ChannelFamily.Kind.BAWGN else Mode.EXACT


def extrinsic_map_density(code: LinearCode, i: int, family: ChannelFamily, h: float, mode: Mode | None = None, samples: int = MONTECARLO_SAMPLES, seed: int = 0) -> LDensity:
    mode = mode or _default_mode(family)
    if mode == Mode.EXACT:
        return extrinsic_atoms(code, i, family, h).to_density(family.grid)
    phi = _montecarlo_extrinsic(code, family, h, samples, seed)[:, i]
    return _density_from_samples(family, phi)


def _exact_gexit(atoms: Atoms, family: ChannelFamily, h: float) -> float:
    if family.kind == ChannelFamily.Kind.BEC:
        return atoms.entropy()
    finite = np.isfinite(atoms.values)
    return float(atoms.probs[finite] @ np.atleast_1d(kernel_l(family, h, atoms.values[finite])))


def _code_curve(code: LinearCode, family: ChannelFamily, hs: Sequence[float], gexit: bool, mode: Mode | None, samples: int, seed: int) -> Curve:
    mode = mode or _default_mode(family)
    values, errors = [], []
    for h in hs:
        if mode == Mode.EXACT:
            per_bit = []
            for i in range(code.n):
                atoms = extrinsic_atoms(code, i, family, h)
                per_bit.append(_exact_gexit(atoms, family, h) if gexit else atoms.entropy())
            values.append(float(np.mean(per_bit)))
            errors.append(0.0)
            continue
        phi = _montecarlo_extrinsic(code, family, h, samples, seed)
        per_bit = []
        for i in range(code.n):
            d = _density_from_samples(family, phi[:, i])
            per_bit.append(gexit_functional(family, h, d) if gexit else entropy(d))
        exit_samples = abs_entropy(np.abs(phi))
        errors.append(float(exit_samples.mean(axis=1).std() / math.sqrt(len(phi))))
        values.append(float(np.mean(per_bit)))
        logger.debug(f"{code.name} {family.name} {h=}: {values[-1]=:.6f}, stderr {errors[-1]:.2e}")
    role = Curve.Role.GEXIT if gexit else Curve.Role.EXIT
    return Curve(role, np.asarray(hs, dtype=float), np.array(values), f"{code.name} {family.name}", {"stderr": np.array(errors)})


def exit_curve(code: LinearCode, family: ChannelFamily, hs: Sequence[float], mode: Mode | None = None, samples: int = MONTECARLO_SAMPLES, seed: int = 0) -> Curve:
    return _code_curve(code, family, hs, False, mode, samples, seed)


def gexit_curve(code: LinearCode, family: ChannelFamily, hs: Sequence[float], mode: Mode | None = None, samples: int = MONTECARLO_SAMPLES, seed: int = 0) -> Curve:
    return _code_curve(code, family, hs, True, mode, samples, seed)


def bec_exit_polynomial(code: LinearCode) -> np.ndarray:
    """Coefficients (increasing powers of h) of the bit-averaged BEC EXIT function."""
    n = code.n
    poly = np.zeros(n)
    for counts in code._bec_unrecoverable:
        for w, a in enumerate(counts):
            if a == 0:
                continue
            # a * h^w * (1-h)^(n-1-w)
            for j in range(n - w):
                poly[w + j] += a * comb(n - 1 - w, j, exact=True) * (-1) ** j
    return poly / n


def analytic_gexit_bsc(kind: str, n: int, eps: float) -> tuple[float, float]:
    """Parametric BSC GEXIT point (h2(eps), g) of the [n,1,n] repetition or [n,n-1,2] parity-check code."""
    if n < 2:
        raise ValueError(f"Code length must be at least 2, got {n}")
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"Crossover probability must lie in [0, 1/2], got {eps}")
    if eps == 0.0:
        return 0.0, 0.0
    if eps == 0.5:
        return 1.0, 1.0
    log_q = math.log((1 - eps) / eps)
    match kind:
        case "repetition" | "rep":
            i = np.arange(n)
            weights = comb(n - 1, i) * eps**i * (1 - eps) ** (n - 1 - i)
            total = sum(j * weights @ np.logaddexp(0.0, -(n - 1 - 2 * i - j) * log_q) for j in (1, -1))
            return h2(eps), float(total / log_q)
        case "spc" | "parity":
            t = (1 - 2 * eps) ** n
            return h2(eps), 1.0 - (1 - 2 * eps) ** (n - 1) * math.log((1 + t) / (1 - t)) / log_q
        case _:
            raise ValueError(f"Unknown code kind: {kind!r}")


def dual_gexit_curve(code: LinearCode, family: ChannelFamily, hs: Sequence[float], step: float = 1e-5) -> Curve:
    """Points (G(a_h, c_h), H(a_h)) with the kernel of the extrinsic family a_h, plus the (0,0) and (1,1) ends."""
    xs, ys = [0.0], [0.0]
    for h in hs:
        if not step < h < 1 - step:
            continue
        c = family.atoms(h)
        gs, hs_bit = [], []
        for i in range(code.n):
            lo, hi = extrinsic_atoms(code, i, family, h - step), extrinsic_atoms(code, i, family, h + step)
            dh = hi.entropy() - lo.entropy()
            if abs(dh) < 1e-13:
                gs = []
                break
            gs.append((hi.convolve(c).entropy() - lo.convolve(c).entropy()) / dh)
            hs_bit.append(extrinsic_atoms(code, i, family, h).entropy())
        if gs:
            xs.append(float(np.mean(gs)))
            ys.append(float(np.mean(hs_bit)))
    xs.append(1.0)
    ys.append(1.0)
    return Curve(Curve.Role.DUAL, np.array(xs), np.array(ys), f"{code.name} {family.name} dual")


# BP versus MAP


def _outputs(code: LinearCode, family: ChannelFamily, h: float, samples: int | None, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if samples is None and family.kind != ChannelFamily.Kind.BAWGN:
        if (1 << code.n) > MAX_ENUMERATION:
            raise EnumerationError(f"Output enumeration of {code.name} is too large")
        p = h if family.kind == ChannelFamily.Kind.BEC else family.parameter(h)
        flips, probs = _bsc_patterns(code.n, p)
        if family.kind == ChannelFamily.Kind.BEC:
            return np.where(flips == 1, 0.0, np.inf), probs
        y = math.log((1 - p) / p) if 0 < p < 0.5 else (np.inf if p == 0 else 0.0)
        return np.where(flips == 1, -y, y), probs
    if samples is None or samples <= 0:
        raise ValueError(f"Sample budget must be positive, got {samples}")
    rng = np.random.default_rng(seed)
    return sample_llrs(family, h, (samples, code.n), rng), np.full(samples, 1.0 / samples)


def delta_ell(code: LinearCode, family: ChannelFamily, h: float, ell: int, samples: int | None = None, seed: int = 0) -> float:
    """Mean square difference of extrinsic soft bits between ell-iteration BP and MAP."""
    llrs, weights = _outputs(code, family, h, samples, seed)
    mu_bp = np.tanh(code.tanner.bp_extrinsic(llrs, ell) / 2)
    mu_map = np.tanh(map_extrinsic(code, llrs) / 2)
    return float(weights @ np.mean((mu_bp - mu_map) ** 2, axis=1))


def distortion_constant(family: ChannelFamily, h: float) -> float:
    """C = E[e^{2|L|}] of the channel density."""
    if family.kind == ChannelFamily.Kind.BAWGN:
        m = m_from_entropy(h)
        if math.isinf(m):
            return math.inf
        return 1.0 if m == 0.0 else _folded_exp(m)
    with np.errstate(over="ignore"):
        return family.expect(h, lambda t: np.exp(2 * np.abs(t)), f_inf=math.inf)


def _folded_exp(m: float) -> float:
    sd = math.sqrt(2 * m)
    # E[e^{2L}; L>0] + E[e^{-2L}; L<0] for L ~ N(m, sd^2)
    with np.errstate(over="ignore"):
        up = np.exp(2 * m + 2 * sd**2) * norm.sf(-(m + 2 * sd**2) / sd)
        down = np.exp(-2 * m + 2 * sd**2) * norm.cdf(-(m - 2 * sd**2) / sd)
    return float(up + down)


@dataclass(frozen=True)
class BpCorrectnessReport:
    ell: int
    delta: float
    delta_full: float
    distortion_constant: float
    concavity: float
    g_bp: float
    g_map: float
    g_bp_bits: tuple[float, ...]
    g_map_bits: tuple[float, ...]
    tree_like: tuple[bool, ...]
    nontree_fraction: float
    girth_fraction: float

    @property
    def bound(self) -> float:
        return 2 / self.concavity * (self.g_bp - self.g_map) + 4 * self.nontree_fraction

    @property
    def holds(self) -> bool:
        return self.delta <= self.bound + 1e-12

    @property
    def distortion_holds(self) -> bool:
        return self.delta_full <= self.distortion_constant * self.delta + 1e-12


def bp_correctness_bound_check(code: LinearCode, family: ChannelFamily, h: float, ell: int, samples: int | None = None, seed: int = 0) -> BpCorrectnessReport:
    """Measure E[Delta^(ell)] against (2/K)(g_bp - g) + 4 delta for the code's Tanner graph."""
    if ell < 0:
        raise ValueError(f"Iteration count must be non-negative, got {ell}")
    llrs, weights = _outputs(code, family, h, samples, seed)
    phi_bp = code.tanner.bp_extrinsic(llrs, ell)
    phi_map = map_extrinsic(code, llrs)
    mu_bp, mu_map = np.tanh(phi_bp / 2), np.tanh(phi_map / 2)
    own = np.clip(llrs, -LLR_CLIP, LLR_CLIP)
    full_bp, full_map = np.tanh((own + phi_bp) / 2), np.tanh((own + np.clip(phi_map, -LLR_CLIP, LLR_CLIP)) / 2)

    kappa_bp = kernel_absD(family, h, np.abs(mu_bp).ravel()).reshape(mu_bp.shape)
    kappa_map = kernel_absD(family, h, np.abs(mu_map).ravel()).reshape(mu_map.shape)
    g_bp_bits = weights @ kappa_bp
    g_map_bits = weights @ kappa_map

    tree_like = tuple(code.tanner.is_tree_like(v, 2 * ell) for v in range(code.n))
    girths = code.tanner.girths
    report = BpCorrectnessReport(
        ell=ell,
        delta=float(weights @ np.mean((mu_bp - mu_map) ** 2, axis=1)),
        delta_full=float(weights @ np.mean((full_bp - full_map) ** 2, axis=1)),
        distortion_constant=distortion_constant(family, h),
        concavity=gexit_kernel(family, h).concavity_constant,
        g_bp=float(g_bp_bits.mean()),
        g_map=float(g_map_bits.mean()),
        g_bp_bits=tuple(float(v) for v in g_bp_bits),
        g_map_bits=tuple(float(v) for v in g_map_bits),
        tree_like=tree_like,
        nontree_fraction=1.0 - sum(tree_like) / code.n,
        girth_fraction=sum(g <= 2 * ell for g in girths) / code.n,
    )
    logger.info(f"{code.name} {family.name} {h=} {ell=}: delta {report.delta:.3e} <= bound {report.bound:.3e}: {report.holds}")
    return report
