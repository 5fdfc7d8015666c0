"""Uniform 2D grids and sparse sensor observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SensorError, ShapeError


@dataclass(frozen=True)
class GridSpec:
    """Cell-centered uniform discretization of a rectangular domain.

    Row index i runs along y, column index j along x; cell (i, j) has its
    center at (x_min + (j+0.5)dx, y_min + (i+0.5)dy).
    """

    n_x: int
    n_y: int
    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        if self.n_x < 2 or self.n_y < 2:
            raise ShapeError(f"grid must be at least 2x2, got {self.n_y}x{self.n_x}")
        x0, x1, y0, y1 = self.extent
        if not (x1 > x0 and y1 > y0):
            raise ShapeError(f"degenerate extent {self.extent}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def dx(self) -> float:
        x0, x1, _, _ = self.extent
        return (x1 - x0) / self.n_x

    @property
    def dy(self) -> float:
        _, _, y0, y1 = self.extent
        return (y1 - y0) / self.n_y

    def cell_xs(self) -> np.ndarray:
        x0 = self.extent[0]
        return x0 + (np.arange(self.n_x) + 0.5) * self.dx

    def cell_ys(self) -> np.ndarray:
        y0 = self.extent[2]
        return y0 + (np.arange(self.n_y) + 0.5) * self.dy

    def coord_channels(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates normalized to [0,1] by the physical extent."""
        x0, x1, y0, y1 = self.extent
        cx = (self.cell_xs() - x0) / (x1 - x0)
        cy = (self.cell_ys() - y0) / (y1 - y0)
        dxc = np.broadcast_to(cx[None, :], (self.n_y, self.n_x)).copy()
        dyc = np.broadcast_to(cy[:, None], (self.n_y, self.n_x)).copy()
        return dxc, dyc

    def scaled(self, scale: int) -> "GridSpec":
        return GridSpec(self.n_x * scale, self.n_y * scale, self.extent)


def snap_sensors(positions: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Map physical positions to nearest cell centers.

    Ties at the midpoint between two cells resolve to the lower index.
    Returns integer (i, j) pairs; collisions and out-of-extent points raise.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    x0, x1, y0, y1 = grid.extent
    if np.any(pos[:, 0] < x0) or np.any(pos[:, 0] > x1) or np.any(pos[:, 1] < y0) or np.any(pos[:, 1] > y1):
        raise SensorError("sensor position outside the grid extent")
    tx = (pos[:, 0] - x0) / grid.dx - 0.5
    ty = (pos[:, 1] - y0) / grid.dy - 0.5
    jx = np.clip(np.ceil(tx - 0.5).astype(np.int64), 0, grid.n_x - 1)
    iy = np.clip(np.ceil(ty - 0.5).astype(np.int64), 0, grid.n_y - 1)
    idx = np.stack([iy, jx], axis=1)
    flat = iy * grid.n_x + jx
    if len(np.unique(flat)) != len(flat):
        raise SensorError("two sensors snapped to the same cell")
    return idx


@dataclass
class ObservationSet:
    """n sensor positions with measured values, snapped onto a grid."""

    positions: np.ndarray  # [n, 2] physical (x, y)
    values: np.ndarray  # [n]
    grid_indices: np.ndarray = field(default=None)  # [n, 2] integer (i, j)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.positions.shape[0] != self.values.shape[0]:
            raise SensorError("positions/values length mismatch")
        if self.positions.shape[0] < 1:
            raise SensorError("at least one sensor is required")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def snapped(self, grid: GridSpec) -> "ObservationSet":
        """Same observations with indices snapped on (possibly another) grid."""
        return ObservationSet(self.positions, self.values, snap_sensors(self.positions, grid))

    def with_values(self, values: np.ndarray) -> "ObservationSet":
        return ObservationSet(self.positions, values, self.grid_indices)
