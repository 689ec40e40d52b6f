from dataclasses import dataclass, field
from enum import Enum

import numpy as np


@dataclass
class Curve:
    class Role(Enum):
        EXIT = "exit"
        GEXIT = "gexit"
        EBP = "ebp"
        BP = "bp"
        MAP = "map"
        DUAL = "dual"
        CHECK = "check"
        VARIABLE = "variable"
        BOUND = "bound"
        KERNEL = "kernel"

    role: Role
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError(f"Curve abscissa and ordinate must be 1-d of equal length, got {self.x.shape} and {self.y.shape}")
        for name, values in self.columns.items():
            if len(values) != len(self.x):
                raise ValueError(f"Column {name} has {len(values)} entries, expected {len(self.x)}")

    def __len__(self) -> int:
        return len(self.x)

    def area(self) -> float:
        """Signed trapezoid integral of y dx along the stored point order."""
        if len(self) < 2:
            return 0.0
        return float(np.trapezoid(self.y, self.x))

    def left_area(self) -> float:
        """Area to the left of the curve, integral of x dy with y taken increasing."""
        order = np.argsort(self.y, kind="stable")
        x, y = self.x[order], self.y[order]
        return float(np.trapezoid(x, y))

    def sorted_by_x(self) -> "Curve":
        order = np.argsort(self.x, kind="stable")
        return Curve(self.role, self.x[order], self.y[order], self.label, {k: np.asarray(v)[order] for k, v in self.columns.items()})

    def rows(self) -> list[list[float]]:
        extra = [np.asarray(v) for v in self.columns.values()]
        return [[float(self.x[i]), float(self.y[i]), *(float(v[i]) for v in extra)] for i in range(len(self))]

    def header(self, x_name: str = "x", y_name: str = "y") -> list[str]:
        return [x_name, y_name, *self.columns]
