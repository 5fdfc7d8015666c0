"""End-to-end wiring: datasets -> samples -> models -> training -> metrics.

Everything the CLI and the experiment drivers share lives here, including
checkpoint persistence for both model families.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .baseline import PODBasis, PodMlp, pod_fit, pod_project
from .checkpoint import read_checkpoint, write_checkpoint
from .data import FieldDataset, add_noise, place_sensors
from .embed import EmbeddingConfig
from .errors import ConfigError, DataFormatError
from .grid import GridSpec, ObservationSet, snap_sensors
from .metrics import MetricReport, mae, max_ae
from .rng import Rng
from .spectral import ModelConfig, RecFNO
from .train import Normalization, TrainConfig, TrainResult, l1_loss, train_loop, _round_f32
from .tensor import Tensor

NOISE_REGIMES = ("both", "inputs-only")


@dataclass
class RunSpec:
    """Everything needed to reproduce one training run."""

    embedding: str = "voronoi"
    sensors: int = 25
    placement: str = "uniform"
    layers: int = 4
    width: int = 32
    modes: tuple[int, int] = (12, 12)
    mlp_hidden: int = 128
    epochs: int = 100
    batch_size: int = 8
    lr0: float = 1e-3
    decay: float = 0.97
    seed: int = 0
    pod_rank: int | None = None
    noise_snr: float | None = None  # training-side noise ("both" regime)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            lr0=self.lr0, decay=self.decay, seed=self.seed,
        )

    def flat(self) -> dict[str, str]:
        out = {}
        for key, value in asdict(self).items():
            if key == "modes":
                out["modes.k1"], out["modes.k2"] = str(value[0]), str(value[1])
            else:
                out[key] = repr(value) if isinstance(value, float) else str(value)
        return out


@dataclass
class Sample:
    obs_norm: np.ndarray  # [n] normalized sensor readings
    target_norm: np.ndarray  # [h, w]
    target_phys: np.ndarray  # [h, w] reference for metrics


def dataset_normalization(dataset: FieldDataset) -> Normalization:
    return Normalization(dataset.norm_mean, dataset.norm_std)


def sensor_layout(dataset: FieldDataset, spec: RunSpec) -> np.ndarray:
    rng = Rng(spec.seed).derive("sensors")
    return place_sensors(spec.sensors, spec.placement, rng, dataset.grid)


def make_samples(
    fields: np.ndarray,
    positions: np.ndarray,
    grid: GridSpec,
    norm: Normalization,
    noise_snr: float | None = None,
    noise_rng: Rng | None = None,
    noisy_labels: bool = False,
    obs_noise: bool = False,
) -> list[Sample]:
    """Samples with observations read off each (optionally noisy) field.

    noisy_labels: perturb the field itself and sample observations from it
    (noise present in inputs and labels together).  obs_noise: perturb only
    the extracted observation vector.  Metric references stay clean.
    """
    idx = snap_sensors(positions, grid)
    samples = []
    for i in range(fields.shape[0]):
        clean = fields[i]
        work = clean
        if noisy_labels:
            work = add_noise(clean, noise_snr, noise_rng.derive("field", i))
        obs = work[idx[:, 0], idx[:, 1]]
        if obs_noise:
            obs = add_noise(obs, noise_snr, noise_rng.derive("obs", i))
        target = work if noisy_labels else clean
        samples.append(Sample(norm.normalize(obs), norm.normalize(target), clean))
    return samples


def split_samples(dataset: FieldDataset, positions: np.ndarray, spec: RunSpec,
                  regime: str | None = None) -> dict[str, list[Sample]]:
    """train/val/test sample lists under the requested noise regime."""
    norm = dataset_normalization(dataset)
    grid = dataset.grid
    snr = spec.noise_snr
    if snr is not None and regime not in NOISE_REGIMES:
        raise ConfigError(f"noise regime must be one of {NOISE_REGIMES}, got {regime!r}")
    out = {}
    for name in ("train", "val", "test"):
        rng = Rng(spec.seed).derive("noise", name)
        if snr is None:
            out[name] = make_samples(dataset.split(name), positions, grid, norm)
        elif regime == "both":
            # noisy snapshots for training; at test time only the inputs carry noise
            if name == "test":
                out[name] = make_samples(dataset.split(name), positions, grid, norm,
                                         snr, rng, obs_noise=True)
            else:
                out[name] = make_samples(dataset.split(name), positions, grid, norm,
                                         snr, rng, noisy_labels=True)
        else:  # inputs-only: clean training, noisy test inputs
            out[name] = make_samples(dataset.split(name), positions, grid, norm,
                                     snr, rng, obs_noise=(name == "test"))
    return out


# ---------------------------------------------------------------------------
# adapters


class RecfnoAdapter:
    def __init__(self, model: RecFNO, positions: np.ndarray, grid: GridSpec, norm: Normalization):
        self.model = model
        self.grid = grid
        self.norm = norm
        self.positions = positions
        self._template = ObservationSet(positions, np.zeros(len(positions))).snapped(grid)

    def parameters(self):
        return self.model.parameters()

    def _forward(self, sample: Sample, scale: int = 1) -> Tensor:
        obs = self._template.with_values(sample.obs_norm)
        return self.model.forward(obs, self.grid, scale=scale)

    def loss(self, sample: Sample) -> Tensor:
        return l1_loss(self._forward(sample), Tensor(sample.target_norm))

    def predict_physical(self, sample: Sample, scale: int = 1) -> np.ndarray:
        with T.no_grad():
            pred = self._forward(sample, scale)
        return self.norm.denormalize(pred.data)


class PodMlpAdapter:
    def __init__(self, model: PodMlp, norm: Normalization):
        self.model = model
        self.norm = norm
        self._coeffs: dict[int, np.ndarray] = {}

    def parameters(self):
        return self.model.parameters()

    def _target_coeffs(self, sample: Sample) -> np.ndarray:
        got = self._coeffs.get(id(sample))
        if got is None:
            got = pod_project(self.model.basis, sample.target_norm)
            self._coeffs[id(sample)] = got
        return got

    def loss(self, sample: Sample) -> Tensor:
        pred = self.model.coeff_forward(sample.obs_norm)
        return l1_loss(pred, Tensor(self._target_coeffs(sample)))

    def predict_physical(self, sample: Sample) -> np.ndarray:
        return self.norm.denormalize(self.model.predict(sample.obs_norm))


# ---------------------------------------------------------------------------
# model construction / persistence


def build_recfno(dataset: FieldDataset, spec: RunSpec) -> tuple[RecFNO, np.ndarray]:
    grid = dataset.grid
    positions = sensor_layout(dataset, spec)
    emb = EmbeddingConfig(
        kind=spec.embedding, n_e=spec.width, n_sensors=spec.sensors,
        output_shape=grid.shape, mlp_hidden=spec.mlp_hidden,
    )
    cfg = ModelConfig(embedding=emb, layers=spec.layers, width=spec.width, modes=spec.modes)
    model = RecFNO(cfg, Rng(spec.seed).derive("init"))
    return model, positions


def _apply_state(model, state: list[tuple[str, np.ndarray]]) -> None:
    params = dict(model.parameters())
    for name, value in state:
        params[name].data[...] = value


def recfno_meta(dataset: FieldDataset, spec: RunSpec, positions: np.ndarray) -> dict[str, str]:
    grid = dataset.grid
    x0, x1, y0, y1 = grid.extent
    meta = {
        "model": "recfno",
        "dataset.kind": dataset.manifest["kind"],
        "dataset.seed": dataset.manifest["seed"],
        "grid.nx": str(grid.n_x), "grid.ny": str(grid.n_y),
        "grid.x0": repr(x0), "grid.x1": repr(x1), "grid.y0": repr(y0), "grid.y1": repr(y1),
        "norm.mean": repr(dataset.norm_mean), "norm.std": repr(dataset.norm_std),
        "sensors.count": str(len(positions)),
    }
    for i, (x, y) in enumerate(positions):
        meta[f"sensors.{i}.x"] = repr(float(x))
        meta[f"sensors.{i}.y"] = repr(float(y))
    meta.update({f"spec.{k}": v for k, v in spec.flat().items()})
    return meta


def save_recfno(path, state, meta) -> None:
    write_checkpoint(path, meta, state)


def load_recfno(path) -> tuple[RecFNO, np.ndarray, GridSpec, Normalization, dict[str, str]]:
    meta, tensors = read_checkpoint(path)
    if meta.get("model") != "recfno":
        raise DataFormatError(f"{path}: not a recfno checkpoint")
    spec = spec_from_meta(meta)
    grid = GridSpec(
        int(meta["grid.nx"]), int(meta["grid.ny"]),
        (float(meta["grid.x0"]), float(meta["grid.x1"]), float(meta["grid.y0"]), float(meta["grid.y1"])),
    )
    n = int(meta["sensors.count"])
    positions = np.array([[float(meta[f"sensors.{i}.x"]), float(meta[f"sensors.{i}.y"])] for i in range(n)])
    emb = EmbeddingConfig(
        kind=spec.embedding, n_e=spec.width, n_sensors=spec.sensors,
        output_shape=grid.shape, mlp_hidden=spec.mlp_hidden,
    )
    cfg = ModelConfig(embedding=emb, layers=spec.layers, width=spec.width, modes=spec.modes)
    model = RecFNO(cfg, Rng(spec.seed).derive("init"))
    _apply_state(model, list(tensors.items()))
    norm = Normalization(float(meta["norm.mean"]), float(meta["norm.std"]))
    return model, positions, grid, norm, meta


def spec_from_meta(meta: dict[str, str]) -> RunSpec:
    def get(key, cast, default):
        return cast(meta[f"spec.{key}"]) if f"spec.{key}" in meta else default

    return RunSpec(
        embedding=get("embedding", str, "voronoi"),
        sensors=get("sensors", int, 25),
        placement=get("placement", str, "uniform"),
        layers=get("layers", int, 3),
        width=get("width", int, 12),
        modes=(get("modes.k1", int, 8), get("modes.k2", int, 8)),
        mlp_hidden=get("mlp_hidden", int, 128),
        epochs=get("epochs", int, 100),
        batch_size=get("batch_size", int, 8),
        lr0=get("lr0", float, 1e-3),
        decay=get("decay", float, 0.97),
        seed=get("seed", int, 0),
        pod_rank=None if meta.get("spec.pod_rank", "None") == "None" else int(meta["spec.pod_rank"]),
        noise_snr=None if meta.get("spec.noise_snr", "None") == "None" else float(meta["spec.noise_snr"]),
    )


def save_podmlp(path, model: PodMlp, state, meta) -> None:
    basis = model.basis
    tensors = [
        ("basis.mean", basis.mean),
        ("basis.modes", basis.modes),
        ("basis.sv", basis.singular_values),
    ] + list(state)
    meta = dict(meta)
    meta["model"] = "podmlp"
    meta["basis.rank"] = str(basis.rank)
    meta["mlp.h1"], meta["mlp.h2"] = str(model.hidden[0]), str(model.hidden[1])
    write_checkpoint(path, meta, tensors)


def load_podmlp(path) -> tuple[PodMlp, np.ndarray, GridSpec, Normalization, dict[str, str]]:
    meta, tensors = read_checkpoint(path)
    if meta.get("model") != "podmlp":
        raise DataFormatError(f"{path}: not a podmlp checkpoint")
    basis = PODBasis(tensors["basis.mean"], tensors["basis.modes"], tensors["basis.sv"])
    n = int(meta["sensors.count"])
    positions = np.array([[float(meta[f"sensors.{i}.x"]), float(meta[f"sensors.{i}.y"])] for i in range(n)])
    hidden = (int(meta["mlp.h1"]), int(meta["mlp.h2"]))
    model = PodMlp(basis, n, Rng(int(meta.get("spec.seed", "0"))).derive("init"), hidden)
    _apply_state(model, [(k, v) for k, v in tensors.items() if k.startswith("mlp.")])
    grid = GridSpec(
        int(meta["grid.nx"]), int(meta["grid.ny"]),
        (float(meta["grid.x0"]), float(meta["grid.x1"]), float(meta["grid.y0"]), float(meta["grid.y1"])),
    )
    norm = Normalization(float(meta["norm.mean"]), float(meta["norm.std"]))
    return model, positions, grid, norm, meta


# ---------------------------------------------------------------------------
# training entry points


def _initial_result(adapter) -> TrainResult:
    state = [(n, _round_f32(p.data)) for n, p in adapter.parameters()]
    return TrainResult([], -1, float("inf"), state, False)


def train_recfno_run(dataset: FieldDataset, spec: RunSpec, regime: str | None = None):
    """Train a RecFNO on the dataset; returns (adapter, samples, result, meta).

    epochs == 0 skips optimization and yields the initialized parameters.
    """
    model, positions = build_recfno(dataset, spec)
    samples = split_samples(dataset, positions, spec, regime)
    adapter = RecfnoAdapter(model, positions, dataset.grid, dataset_normalization(dataset))
    if spec.epochs == 0:
        result = _initial_result(adapter)
    else:
        result = train_loop(adapter, samples["train"], samples["val"], spec.train_config())
    _apply_state(model, result.best_state)
    meta = recfno_meta(dataset, spec, positions)
    return adapter, samples, result, meta


def train_podmlp_run(dataset: FieldDataset, spec: RunSpec, regime: str | None = None):
    """Fit POD on the training split and train the coefficient regressor."""
    positions = sensor_layout(dataset, spec)
    samples = split_samples(dataset, positions, spec, regime)
    norm = dataset_normalization(dataset)
    train_fields = np.stack([s.target_norm for s in samples["train"]])
    basis = pod_fit(train_fields, spec.pod_rank)
    # keep the basis at checkpoint precision so saved models evaluate identically
    basis = PODBasis(_round_f32(basis.mean), _round_f32(basis.modes), _round_f32(basis.singular_values))
    model = PodMlp(basis, spec.sensors, Rng(spec.seed).derive("init"))
    adapter = PodMlpAdapter(model, norm)
    if spec.epochs == 0:
        result = _initial_result(adapter)
    else:
        result = train_loop(adapter, samples["train"], samples["val"], spec.train_config())
    _apply_state(model, result.best_state)
    meta = recfno_meta(dataset, spec, positions)
    meta["model"] = "podmlp"
    return adapter, samples, result, meta


def evaluate_adapter(adapter, samples: list[Sample], fingerprint=None, scale: int = 1) -> MetricReport:
    pairs = []
    for sample in samples:
        if scale == 1:
            pred = adapter.predict_physical(sample)
        else:
            pred = adapter.predict_physical(sample, scale=scale)
        pairs.append((mae(sample.target_phys, pred), max_ae(sample.target_phys, pred)))
    return MetricReport.from_pairs(pairs, fingerprint)
