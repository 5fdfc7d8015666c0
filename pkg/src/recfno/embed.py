"""Observation embeddings: sparse sensor readings -> dense multi-channel maps.

All three variants emit an [n_y, n_x, n_e] feature map so the downstream
Fourier layers are agnostic to how observations were encoded.  The output
shape is a call-time argument, which is what makes zero-shot super-resolution
possible: mask/Voronoi re-snap the sensors on the finer grid, the MLP variant
resizes its final map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ConfigError
from .grid import GridSpec, ObservationSet, snap_sensors
from .rng import Rng
from .tensor import Tensor

EMBEDDING_KINDS = ("mask", "voronoi", "mlp")


@dataclass
class EmbeddingConfig:
    kind: str
    n_e: int
    n_sensors: int
    output_shape: tuple[int, int]  # (n_y, n_x)
    mlp_hidden: int = 128
    mlp_map_shape: tuple[int, int] | None = None  # (h', w'); default output/4

    def __post_init__(self):
        if self.kind not in EMBEDDING_KINDS:
            raise ConfigError(f"unknown embedding kind {self.kind!r}")
        if self.n_e < 1:
            raise ConfigError("n_e must be >= 1")
        if self.mlp_map_shape is None:
            self.mlp_map_shape = (max(1, self.output_shape[0] // 4), max(1, self.output_shape[1] // 4))


_LAYOUT_CACHE: dict = {}


def _layout_parts(positions: np.ndarray, grid: GridSpec) -> dict:
    """Per-(sensor layout, grid) constants: snapped cells, 0-1 mask,
    coordinate channels, nearest-sensor assignment (computed lazily)."""
    key = (grid.n_y, grid.n_x, grid.extent, positions.tobytes())
    parts = _LAYOUT_CACHE.get(key)
    if parts is None:
        idx = snap_sensors(positions, grid)
        mask01 = np.zeros(grid.shape, dtype=np.float64)
        mask01[idx[:, 0], idx[:, 1]] = 1.0
        dxc, dyc = grid.coord_channels()
        parts = {"idx": idx, "mask01": mask01, "dxc": dxc, "dyc": dyc, "assign": None}
        _LAYOUT_CACHE[key] = parts
    return parts


def _assignment(positions: np.ndarray, grid: GridSpec) -> np.ndarray:
    parts = _layout_parts(positions, grid)
    if parts["assign"] is None:
        parts["assign"] = kernels.voronoi_assign(
            grid.cell_xs(), grid.cell_ys(),
            np.ascontiguousarray(positions[:, 0]), np.ascontiguousarray(positions[:, 1]),
        )
    return parts["assign"]


def mask_representation(obs: ObservationSet, grid: GridSpec) -> np.ndarray:
    """Channels: measured values at sensor cells (zeros elsewhere), then the
    normalized coordinate maps."""
    parts = _layout_parts(obs.positions, grid)
    idx = parts["idx"]
    m = np.zeros(grid.shape, dtype=np.float64)
    m[idx[:, 0], idx[:, 1]] = obs.values
    return np.stack([m, parts["dxc"], parts["dyc"]], axis=2)


def voronoi_representation(obs: ObservationSet, grid: GridSpec) -> np.ndarray:
    """Channels: nearest-sensor value per cell, 0-1 sensor mask, coordinates.

    Distances are Euclidean in physical coordinates; ties go to the lowest
    sensor index.
    """
    parts = _layout_parts(obs.positions, grid)
    v = obs.values[_assignment(obs.positions, grid)]
    return np.stack([v, parts["mask01"], parts["dxc"], parts["dyc"]], axis=2)


def _uniform_init(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(shape, -bound, bound)


class MaskEmbedding:
    """Mask representation lifted to n_e channels by a learnable 1x1 conv."""

    kind = "mask"
    rep_channels = 3

    def __init__(self, cfg: EmbeddingConfig, rng: Rng):
        self.cfg = cfg
        self.weight = Tensor(_uniform_init(rng, (self.rep_channels, cfg.n_e), self.rep_channels), requires_grad=True)
        self.bias = Tensor(np.zeros(cfg.n_e), requires_grad=True)

    def parameters(self):
        return [("embed.conv.w", self.weight), ("embed.conv.b", self.bias)]

    def _representation(self, obs, grid):
        return mask_representation(obs, grid)

    def __call__(self, obs: ObservationSet, grid: GridSpec, output_shape=None) -> Tensor:
        shape = tuple(output_shape or self.cfg.output_shape)
        if shape != grid.shape:
            # super-resolution path: sensors re-snap on the refined grid
            grid = GridSpec(shape[1], shape[0], grid.extent)
        rep = Tensor._wrap(self._representation(obs, grid))
        return T.conv1x1(rep, self.weight, self.bias)


class VoronoiEmbedding(MaskEmbedding):
    kind = "voronoi"
    rep_channels = 4

    def _representation(self, obs, grid):
        return voronoi_representation(obs, grid)


class MlpEmbedding:
    """Two dense layers expand the raw readings into a coarse map, which is
    lifted, upsampled to double size, smoothed by a 3x3 conv, and resized to
    the requested output shape."""

    kind = "mlp"

    def __init__(self, cfg: EmbeddingConfig, rng: Rng):
        hp, wp = cfg.mlp_map_shape
        n_flat = hp * wp
        self.cfg = cfg
        n = cfg.n_sensors
        self.w1 = Tensor(_uniform_init(rng, (n, cfg.mlp_hidden), n), requires_grad=True)
        self.b1 = Tensor(np.zeros(cfg.mlp_hidden), requires_grad=True)
        self.w2 = Tensor(_uniform_init(rng, (cfg.mlp_hidden, n_flat), cfg.mlp_hidden), requires_grad=True)
        self.b2 = Tensor(np.zeros(n_flat), requires_grad=True)
        self.lift_w = Tensor(_uniform_init(rng, (1, cfg.n_e), 1), requires_grad=True)
        self.lift_b = Tensor(np.zeros(cfg.n_e), requires_grad=True)
        self.conv_w = Tensor(_uniform_init(rng, (3, 3, cfg.n_e, cfg.n_e), 9 * cfg.n_e), requires_grad=True)
        self.conv_b = Tensor(np.zeros(cfg.n_e), requires_grad=True)

    def parameters(self):
        return [
            ("embed.lin1.w", self.w1), ("embed.lin1.b", self.b1),
            ("embed.lin2.w", self.w2), ("embed.lin2.b", self.b2),
            ("embed.lift.w", self.lift_w), ("embed.lift.b", self.lift_b),
            ("embed.conv.w", self.conv_w), ("embed.conv.b", self.conv_b),
        ]

    def embed_values(self, values: Tensor, output_shape=None) -> Tensor:
        """Differentiable pipeline from the raw reading vector to the map."""
        if values.shape[0] != self.w1.shape[0]:
            raise ConfigError(f"MLP embedding expects {self.w1.shape[0]} sensors, got {values.shape[0]}")
        hp, wp = self.cfg.mlp_map_shape
        if self.w2.shape[1] != hp * wp:
            raise ConfigError("mlp_map_shape inconsistent with the dense layer width")
        shape = tuple(output_shape or self.cfg.output_shape)
        g = T.linear(values, self.w1, self.b1)
        g = T.linear(T.gelu(g), self.w2, self.b2)
        fmap = T.reshape(g, (hp, wp, 1))
        fmap = T.conv1x1(fmap, self.lift_w, self.lift_b)
        fmap = T.nearest_resize(fmap, (2 * hp, 2 * wp))
        fmap = T.conv3x3(fmap, self.conv_w, self.conv_b)
        return T.nearest_resize(fmap, shape)

    def __call__(self, obs: ObservationSet, grid: GridSpec, output_shape=None) -> Tensor:
        return self.embed_values(Tensor._wrap(obs.values), output_shape)


def make_embedding(cfg: EmbeddingConfig, rng: Rng):
    cls = {"mask": MaskEmbedding, "voronoi": VoronoiEmbedding, "mlp": MlpEmbedding}[cfg.kind]
    return cls(cfg, rng)
