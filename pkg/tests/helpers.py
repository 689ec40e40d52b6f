import numpy as np

from lib.density import Grid, LDensity, lift_magnitudes

# coarse grid for tests that only need qualitative accuracy
SMALL_GRID = Grid(20.0, 513)


def symmetric_density(grid: Grid, seed: int, atoms: int = 8, atom_inf: float | None = None) -> LDensity:
    """Random symmetric density on a handful of magnitudes, kept in the inner half of the grid."""
    rng = np.random.default_rng(seed)
    mass = np.zeros(grid.half + 1)
    idx = rng.choice(grid.half // 2, size=atoms, replace=False)
    mass[idx] = rng.random(atoms)
    inf = rng.uniform(0.0, 0.2) if atom_inf is None else atom_inf
    mass *= (1.0 - inf) / mass.sum()
    return lift_magnitudes(grid, mass, inf)
