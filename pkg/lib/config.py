import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from lib.channels import ChannelFamily, parse_channel
from lib.density import L_MAX, N_BINS, Grid
from lib.parallel import default_threads

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    command: str = ""
    channel: str = "bec"
    ensemble: str = "l=x^2,r=x^5"
    code: str = "hamming74"
    h: float | None = None
    h_points: int = 101
    x_points: int = 101
    alpha_resolution: float = 0.1
    n_bins: int = N_BINS
    l_max: float = L_MAX
    tol: float = 1e-7
    max_iter: int = 5000
    ell: int = 1
    mode: str | None = None
    samples: int = 100_000
    seed: int = 0
    threads: int = 0
    output: str = ""
    format: str = "csv"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"Tolerance must be positive, got {self.tol}")
        if self.h_points < 2 or self.x_points < 2:
            raise ValueError(f"Grids need at least 2 points, got h_points={self.h_points}, x_points={self.x_points}")
        if not 0 < self.alpha_resolution <= 1:
            raise ValueError(f"Alpha resolution must lie in (0, 1], got {self.alpha_resolution}")
        if self.max_iter < 1 or self.samples < 1 or self.ell < 0:
            raise ValueError(f"Invalid iteration or sample budget: {self.max_iter=}, {self.samples=}, {self.ell=}")
        if self.format not in FORMATS:
            raise ValueError(f"Invalid output format: {self.format}")
        if self.mode not in (None, "exact", "montecarlo"):
            raise ValueError(f"Invalid mode: {self.mode}")
        if self.threads < 0:
            raise ValueError(f"Thread count must not be negative, got {self.threads}")
        # 0 means one worker per CPU, resolved here but echoed as given
        self._workers = self.threads or default_threads()
        # grid and channel spec must parse
        self.family()

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def grid(self) -> Grid:
        return Grid(self.l_max, self.n_bins)

    def family(self) -> tuple[ChannelFamily, float | None]:
        """Channel family and the h given either in the spec or by --h (the flag wins)."""
        family, h = parse_channel(self.channel, self.grid)
        if self.h is not None:
            family._check(self.h)
            h = self.h
        return family, h

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_TYPES: dict[str, type] = {
    "h": float,
    "h_points": int,
    "x_points": int,
    "alpha_resolution": float,
    "n_bins": int,
    "l_max": float,
    "tol": float,
    "max_iter": int,
    "ell": int,
    "samples": int,
    "seed": int,
    "threads": int,
}


def read_config_file(path: str | Path) -> dict[str, Any]:
    """key = value lines, '#' comments; keys may use dashes or underscores."""
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{number}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"{path}:{number}: unknown key {key!r}")
        try:
            values[key] = _TYPES.get(key, str)(value)
        except ValueError as e:
            raise ValueError(f"{path}:{number}: invalid value for {key}: {value!r}") from e
    logger.debug(f"Read {len(values)} settings from {path}")
    return values


def resolve_config(flags: dict[str, Any], config_file: str | None = None) -> RunConfig:
    """Defaults, overridden by the config file, overridden by explicit flags (None means not given)."""
    values = read_config_file(config_file) if config_file else {}
    values.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig(**values)
