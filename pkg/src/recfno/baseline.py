"""POD + MLP baseline: orthonormal modes from training snapshots and a dense
regressor from observations to modal coefficients.

The decomposition runs on the small Gram matrix (samples << cells at desk
scale).  The basis is resolution-bound: asking it for another output shape is
an error, unlike the Fourier model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ResolutionError
from .rng import Rng
from .tensor import Tensor

_ZERO_SV = 1e-12


@dataclass
class PODBasis:
    mean: np.ndarray  # [n_y, n_x]
    modes: np.ndarray  # [r, n_y, n_x], orthonormal rows (zero rows for null modes)
    singular_values: np.ndarray  # [r], nonincreasing

    @property
    def rank(self) -> int:
        return self.modes.shape[0]

    @property
    def field_shape(self) -> tuple[int, int]:
        return self.mean.shape


def pod_fit(snapshots: np.ndarray, r: int | None = None, energy: float = 0.99) -> PODBasis:
    """Top-r modes of the mean-centered snapshot stack [m, n_y, n_x].

    With r=None, picks the smallest rank capturing `energy` of the squared
    singular values, capped at min(64, sample count).  Modes whose singular
    value is numerically zero are stored as zero fields.
    """
    m = snapshots.shape[0]
    cells = snapshots.shape[1] * snapshots.shape[2]
    mean = snapshots.mean(axis=0)
    a = (snapshots - mean).reshape(m, cells)
    gram = a @ a.T
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    sv = np.sqrt(eigvals)

    if r is None:
        total = float(eigvals.sum())
        if total <= 0.0:
            r = 1
        else:
            cum = np.cumsum(eigvals) / total
            r = int(np.searchsorted(cum, energy) + 1)
        r = min(r, 64, m)
    if not (1 <= r <= min(m, cells)):
        raise ConfigError(f"rank {r} out of range for {m} snapshots of {cells} cells")

    modes = np.zeros((r, cells))
    for i in range(r):
        if sv[i] > _ZERO_SV * max(sv[0], 1.0):
            modes[i] = (a.T @ eigvecs[:, i]) / sv[i]
    return PODBasis(mean, modes.reshape(r, *snapshots.shape[1:]), sv[:r])


def pod_project(basis: PODBasis, field: np.ndarray) -> np.ndarray:
    if field.shape != basis.field_shape:
        raise ResolutionError(f"field {field.shape} does not match basis {basis.field_shape}")
    centered = (field - basis.mean).reshape(-1)
    return basis.modes.reshape(basis.rank, -1) @ centered


def pod_reconstruct(basis: PODBasis, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (basis.rank,):
        raise ConfigError(f"expected {basis.rank} coefficients, got {coeffs.shape}")
    flat = coeffs @ basis.modes.reshape(basis.rank, -1)
    return basis.mean + flat.reshape(basis.field_shape)


class PodMlp:
    """MLP from n observations to the r modal coefficients.

    Works in normalized field units; reconstruction happens on the basis the
    model was fitted with, so only that resolution is available.
    """

    def __init__(self, basis: PODBasis, n_sensors: int, rng: Rng, hidden: tuple[int, int] = (256, 256)):
        self.basis = basis
        self.hidden = hidden
        h1, h2 = hidden
        r = basis.rank

        def init(shape, fan_in):
            return Tensor(rng.uniform(shape, -1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in)), requires_grad=True)

        self.w1 = init((n_sensors, h1), n_sensors)
        self.b1 = Tensor(np.zeros(h1), requires_grad=True)
        self.w2 = init((h1, h2), h1)
        self.b2 = Tensor(np.zeros(h2), requires_grad=True)
        self.w3 = init((h2, r), h2)
        self.b3 = Tensor(np.zeros(r), requires_grad=True)

    def parameters(self):
        return [
            ("mlp.w1", self.w1), ("mlp.b1", self.b1),
            ("mlp.w2", self.w2), ("mlp.b2", self.b2),
            ("mlp.w3", self.w3), ("mlp.b3", self.b3),
        ]

    def coeff_forward(self, obs_values: np.ndarray) -> Tensor:
        h = T.gelu(T.linear(Tensor(obs_values), self.w1, self.b1))
        h = T.gelu(T.linear(h, self.w2, self.b2))
        return T.linear(h, self.w3, self.b3)

    def predict(self, obs_values: np.ndarray, output_shape: tuple[int, int] | None = None) -> np.ndarray:
        """Reconstructed (normalized) field; refuses other resolutions."""
        if output_shape is not None and tuple(output_shape) != self.basis.field_shape:
            raise ResolutionError(
                f"POD basis is bound to {self.basis.field_shape}; cannot emit {tuple(output_shape)}"
            )
        with T.no_grad():
            coeffs = self.coeff_forward(obs_values).data
        return pod_reconstruct(self.basis, coeffs)
