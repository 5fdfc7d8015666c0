"""Reconstruction error metrics, computed in physical units."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


def mae(u: np.ndarray, u_p: np.ndarray) -> float:
    """Sum of absolute errors divided by the number of points."""
    u, u_p = np.asarray(u), np.asarray(u_p)
    if u.shape != u_p.shape:
        raise ShapeError(f"mae: shapes {u.shape} and {u_p.shape} differ")
    return float(np.abs(u - u_p).sum() / u.size)


def max_ae(u: np.ndarray, u_p: np.ndarray) -> float:
    """Largest pointwise absolute error."""
    u, u_p = np.asarray(u), np.asarray(u_p)
    if u.shape != u_p.shape:
        raise ShapeError(f"max_ae: shapes {u.shape} and {u_p.shape} differ")
    return float(np.abs(u - u_p).max())


@dataclass
class MetricReport:
    """Dataset-level metrics: MAE averages per-sample values, Max-AE takes
    the worst sample."""

    mae: float
    max_ae: float
    per_sample: list[tuple[float, float]]  # (mae_i, max_ae_i)
    fingerprint: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, pairs, fingerprint=None) -> "MetricReport":
        pairs = [(float(a), float(b)) for a, b in pairs]
        return cls(
            mae=float(np.mean([a for a, _ in pairs])),
            max_ae=float(np.max([b for _, b in pairs])),
            per_sample=pairs,
            fingerprint=dict(fingerprint or {}),
        )

    def to_csv(self) -> str:
        lines = ["sample,mae,max_ae"]
        for i, (a, b) in enumerate(self.per_sample):
            lines.append(f"{i},{a!r},{b!r}")
        lines.append(f"all,{self.mae!r},{self.max_ae!r}")
        return "\n".join(lines) + "\n"
