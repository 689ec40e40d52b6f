import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import expit

from lib.channels import ChannelFamily, gauss_nodes, m_from_entropy, h2_inv
from lib.density import LN2, LDensity, abs_entropy, entropy, to_absD, var_convolve

logger = logging.getLogger(__name__)

ABSD_POINTS = 1025


class BawgnForm(Enum):
    COSH = "i"
    MSE = "ii"
    MAGNETIZATION = "iii"


def exit_kernel(z: np.ndarray | float) -> np.ndarray:
    return np.logaddexp(0.0, -np.asarray(z, dtype=float)) / LN2


def kernel_bec(h: float, z: np.ndarray | float) -> np.ndarray:
    return exit_kernel(z)


def _limit_kernel(h: float, z: np.ndarray) -> np.ndarray | None:
    # h -> 0 and h -> 1 limits shared by the BSC and BAWGN families
    if h <= 0.0:
        return np.ones_like(z)
    if h >= 1.0:
        return 2 * expit(-z)
    return None


def kernel_bsc(h: float, z: np.ndarray | float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if (limit := _limit_kernel(h, z)) is not None:
        return limit
    eps = h2_inv(h)
    log_q = math.log((1 - eps) / eps)
    return (np.logaddexp(0.0, log_q - z) - np.logaddexp(0.0, -log_q - z)) / log_q


def _log_sech2(u: np.ndarray) -> np.ndarray:
    u = np.abs(u)
    return -2 * (u + np.log1p(np.exp(-2 * u)) - LN2)


def kernel_bawgn(h: float, z: np.ndarray | float, form: BawgnForm = BawgnForm.MAGNETIZATION) -> np.ndarray:
    """BAWGN GEXIT kernel in one of three equivalent forms; they agree as functionals on symmetric densities."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if (limit := _limit_kernel(h, z)) is not None:
        return limit
    t, w = gauss_nodes(m_from_entropy(h))
    tt, zz = t[None, :], z[:, None]
    match form:
        case BawgnForm.MAGNETIZATION:
            return (expit(-tt - zz) @ w) / (expit(-t) @ w)
        case BawgnForm.MSE:
            return (np.exp(_log_sech2((tt + zz) / 2)) @ w) / (np.exp(_log_sech2(t / 2)) @ w)
        case BawgnForm.COSH:
            return (np.exp(-zz + _log_sech2((tt - zz) / 2)) @ w) / (np.exp(_log_sech2(t / 2)) @ w)


def kernel_l(family: ChannelFamily, h: float, z: np.ndarray | float) -> np.ndarray:
    match family.kind:
        case ChannelFamily.Kind.BEC:
            return kernel_bec(h, z)
        case ChannelFamily.Kind.BSC:
            return kernel_bsc(h, z)
        case ChannelFamily.Kind.BAWGN:
            return kernel_bawgn(h, z)


def kernel_generic(family: ChannelFamily, h: float, z: np.ndarray | float, from_grid: bool = False) -> np.ndarray:
    """Kernel from the family derivative: d/dh E[log2(1+e^{-z-L})] over the same quantity at z=0.

    By default the derivative is taken analytically on the exact channel law; from_grid
    uses the quantized derivative measure of the family instead.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if from_grid:
        d = family.d_density_dh(h)
        x = family.grid.points
        values = exit_kernel(z[:, None] + x[None, :]) @ d.bins
        return values / d.integrate(exit_kernel(x))

    def progress(shift: float) -> float:
        return family.d_expect_dh(
            h,
            lambda t: np.logaddexp(0.0, -shift - t) / LN2,
            lambda t: -expit(-shift - t) / LN2,
            lambda t: expit(shift + t) * expit(-shift - t) / LN2,
        )

    return np.array([progress(v) for v in z]) / progress(0.0)


def _absD_from_magnitude(family: ChannelFamily, h: float, x: np.ndarray) -> np.ndarray:
    """|D| kernel at s = tanh(x/2), computed from the L kernel at +-x."""
    x = np.asarray(x, dtype=float)
    if family.kind == ChannelFamily.Kind.BEC:
        return abs_entropy(x)
    finite = np.isfinite(x)
    out = np.zeros_like(x)
    xf = x[finite]
    out[finite] = expit(-xf) * kernel_l(family, h, -xf) + expit(xf) * kernel_l(family, h, xf)
    return out


def kernel_absD(family: ChannelFamily, h: float, s: np.ndarray | float) -> np.ndarray:
    s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        x = 2 * np.arctanh(s)
    return _absD_from_magnitude(family, h, x)


@lru_cache(maxsize=256)
def _absD_on_grid(family: ChannelFamily, h: float) -> np.ndarray:
    values = np.append(_absD_from_magnitude(family, h, family.grid.magnitudes), 0.0)
    values.setflags(write=False)
    return values


def gexit_functional(family: ChannelFamily, h: float, a: LDensity) -> float:
    """G(c_h, a): the GEXIT kernel of c_h integrated against a, in the |D| domain."""
    if a.grid != family.grid:
        raise ValueError(f"Grid mismatch: {family.grid} vs {a.grid}")
    return float(to_absD(a).mass @ _absD_on_grid(family, h))


def finite_difference_gexit(a_lo: LDensity, a_hi: LDensity, b: LDensity) -> float:
    """GEXIT of b with respect to the family through a_lo and a_hi: dH(a*b) / dH(a)."""
    dh = entropy(a_hi) - entropy(a_lo)
    if abs(dh) < 1e-14:
        raise ValueError(f"Family step too small for a finite difference: {dh=}")
    return (entropy(var_convolve(a_hi, b)) - entropy(var_convolve(a_lo, b))) / dh


@dataclass(frozen=True, eq=False)
class GexitKernel:
    family: ChannelFamily
    h: float
    s: np.ndarray
    absD: np.ndarray
    l_values: np.ndarray

    @property
    def concavity_constant(self) -> float:
        """K = -sup kappa''(s) on the |D| table, by second differences."""
        ds = self.s[1] - self.s[0]
        return float(-np.max(np.diff(self.absD, 2)) / ds**2)


def gexit_kernel(family: ChannelFamily, h: float) -> GexitKernel:
    s = np.linspace(0.0, 1.0, ABSD_POINTS)
    absD = kernel_absD(family, h, s)
    absD[-1] = 0.0
    l_values = kernel_l(family, h, family.grid.points)
    logger.debug(f"Built {family.name} kernel table at {h=}")
    return GexitKernel(family, h, s, absD, np.broadcast_to(l_values, family.grid.points.shape).copy())
