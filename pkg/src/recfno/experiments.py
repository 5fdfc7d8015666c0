"""Experiment drivers: sensor-count sweeps, noise regimes, zero-shot
super-resolution, mode ablation, and raster/CSV export of fields.

Every driver writes a fingerprint file with the resolved configuration and
seeds, sufficient to rerun bit-identically.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .data import FieldDataset, dataset_read, generate_fields
from .errors import ConfigError, DataFormatError, ModeError
from .grid import GridSpec, ObservationSet, snap_sensors
from .metrics import MetricReport, mae, max_ae
from .pipeline import (
    NOISE_REGIMES,
    RecfnoAdapter,
    RunSpec,
    dataset_normalization,
    evaluate_adapter,
    make_samples,
    split_samples,
    train_podmlp_run,
    train_recfno_run,
)
from .train import Normalization

MODEL_KINDS = ("recfno-mask", "recfno-voronoi", "recfno-mlp", "podmlp")


def write_fingerprint(out_dir: Path, entries: dict[str, str]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "fingerprint.txt", "w", encoding="utf-8") as fh:
        fh.write(f"backend = {kernels.BACKEND}\n")
        for key, value in sorted(entries.items()):
            fh.write(f"{key} = {value}\n")


def _run_point(dataset_path: str, spec: RunSpec, kind: str, regime: str | None = None,
               eval_snr: float | None = None):
    """Train one model kind and evaluate it on the test split.

    Returns (test_mae, test_max_ae).  Used directly and via process pools.
    """
    dataset = dataset_read(dataset_path)
    if kind == "podmlp":
        adapter, samples, result, _ = train_podmlp_run(dataset, spec, regime)
    else:
        emb = kind.split("-", 1)[1]
        adapter, samples, result, _ = train_recfno_run(dataset, replace(spec, embedding=emb), regime)
    report = evaluate_adapter(adapter, samples["test"])
    return report.mae, report.max_ae


def sensor_sweep(dataset_path, counts, kinds, spec: RunSpec, out_dir, jobs: int = 1) -> list[dict]:
    """MAE/Max-AE per (sensor count, model kind); fresh training per point."""
    counts = list(counts)
    if len(set(counts)) != len(counts):
        raise ConfigError(f"duplicate sensor counts in {counts}")
    for kind in kinds:
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; expected {MODEL_KINDS}")
    points = [(count, kind) for count in counts for kind in kinds]
    specs = [replace(spec, sensors=count, seed=spec.seed) for count, _ in points]
    args = [(str(dataset_path), s, kind) for s, (_, kind) in zip(specs, points)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point_star, args))
    else:
        results = [_run_point_star(a) for a in args]
    rows = [
        {"sensors": count, "kind": kind, "mae": m, "max_ae": x}
        for (count, kind), (m, x) in zip(points, results)
    ]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(out_dir / "sensor_sweep.csv", ("sensors", "kind", "mae", "max_ae"), rows)
    write_fingerprint(out_dir, {"driver": "sensor_sweep", "counts": repr(counts),
                                "kinds": ",".join(kinds), **{f"spec.{k}": v for k, v in spec.flat().items()}})
    return rows


def _run_point_star(args):
    return _run_point(*args)


def noise_experiment(dataset_path, snrs, regime: str, spec: RunSpec, kinds, out_dir,
                     jobs: int = 1) -> list[dict]:
    """MAE vs SNR under one of the two noise regimes.

    both: each SNR retrains with noisy snapshots and tests on noisy inputs.
    inputs-only: trains once on clean data, tests with noisy inputs per SNR.
    """
    if regime not in NOISE_REGIMES:
        raise ConfigError(f"regime must be one of {NOISE_REGIMES}, got {regime!r}")
    snrs = list(snrs)
    if len(set(snrs)) != len(snrs):
        raise ConfigError(f"duplicate SNR values in {snrs}")
    rows = []
    for kind in kinds:
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}")
        if regime == "both":
            args = [(str(dataset_path), replace(spec, noise_snr=snr), kind, "both") for snr in snrs]
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(_run_point_star, args))
            else:
                results = [_run_point_star(a) for a in args]
            for snr, (m, x) in zip(snrs, results):
                rows.append({"kind": kind, "snr_db": snr, "mae": m, "max_ae": x})
        else:
            dataset = dataset_read(dataset_path)
            if kind == "podmlp":
                adapter, _, _, _ = train_podmlp_run(dataset, spec)
            else:
                emb = kind.split("-", 1)[1]
                adapter, _, _, _ = train_recfno_run(dataset, replace(spec, embedding=emb))
            for snr in snrs:
                noisy = split_samples(dataset, adapter_positions(adapter, dataset, spec),
                                      replace(spec, noise_snr=snr), "inputs-only")
                report = evaluate_adapter(adapter, noisy["test"])
                rows.append({"kind": kind, "snr_db": snr, "mae": report.mae, "max_ae": report.max_ae})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(out_dir / "noise.csv", ("kind", "snr_db", "mae", "max_ae"), rows)
    write_fingerprint(out_dir, {"driver": "noise_experiment", "regime": regime,
                                "snrs": repr(snrs), "kinds": ",".join(kinds),
                                **{f"spec.{k}": v for k, v in spec.flat().items()}})
    return rows


def adapter_positions(adapter, dataset, spec) -> np.ndarray:
    if isinstance(adapter, RecfnoAdapter):
        return adapter.positions
    from .pipeline import sensor_layout

    return sensor_layout(dataset, spec)


def superres_eval(adapter: RecfnoAdapter, fine_dataset: FieldDataset, scale: int,
                  out_dir, meta: dict[str, str] | None = None) -> MetricReport:
    """Evaluate a trained model on a finer grid against regenerated PDE truth."""
    ny, nx = adapter.grid.shape
    if fine_dataset.grid.shape != (ny * scale, nx * scale):
        raise DataFormatError(
            f"fine dataset grid {fine_dataset.grid.shape} != scale {scale} x {(ny, nx)}"
        )
    if meta:
        if fine_dataset.manifest["kind"] != meta.get("dataset.kind") or \
                fine_dataset.manifest["seed"] != meta.get("dataset.seed"):
            raise DataFormatError("fine dataset kind/seed do not match the checkpoint")
    norm = adapter.norm
    samples = make_samples(fine_dataset.split("test"), adapter.positions, fine_dataset.grid, norm)
    pairs = []
    for sample in samples:
        pred = adapter.predict_physical(sample, scale=scale)
        pairs.append((mae(sample.target_phys, pred), max_ae(sample.target_phys, pred)))
    report = MetricReport.from_pairs(pairs, {"scale": str(scale)})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "superres_metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    sample = samples[0]
    pred = adapter.predict_physical(sample, scale=scale)
    idx = snap_sensors(adapter.positions, fine_dataset.grid)
    export_fields(pred, np.abs(pred - sample.target_phys), out_dir / "sample0", sensor_cells=idx)
    write_fingerprint(out_dir, {"driver": "superres_eval", "scale": str(scale)})
    return report


def mode_ablation(dataset_path, mode_counts, spec: RunSpec, seeds, kinds, out_dir,
                  jobs: int = 1) -> list[dict]:
    """Retrain per retained-mode count; reports MAE/Max-AE per (k, seed, kind)."""
    dataset = dataset_read(dataset_path)
    ny, nx = dataset.grid.shape
    mode_counts = list(mode_counts)
    for k in mode_counts:
        if k < 1 or 2 * k > ny or 2 * k > nx:
            raise ModeError(f"mode count {k} exceeds the grid Nyquist limit on {ny}x{nx}")
    points = [(k, seed, kind) for k in mode_counts for seed in seeds for kind in kinds]
    args = []
    for k, seed, kind in points:
        args.append((str(dataset_path), replace(spec, modes=(k, k), seed=seed), kind))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point_star, args))
    else:
        results = [_run_point_star(a) for a in args]
    rows = [
        {"modes": k, "seed": seed, "kind": kind, "mae": m, "max_ae": x}
        for (k, seed, kind), (m, x) in zip(points, results)
    ]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(out_dir / "mode_ablation.csv", ("modes", "seed", "kind", "mae", "max_ae"), rows)
    write_fingerprint(out_dir, {"driver": "mode_ablation", "modes": repr(mode_counts),
                                "seeds": repr(list(seeds)), "kinds": ",".join(kinds),
                                **{f"spec.{k}": v for k, v in spec.flat().items()}})
    return rows


def _write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in columns) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# raster and CSV export


def _to_gray(field: np.ndarray) -> np.ndarray:
    lo, hi = float(field.min()), float(field.max())
    if hi <= lo:
        return np.zeros(field.shape, dtype=np.uint8)
    return np.round(255.0 * (field - lo) / (hi - lo)).astype(np.uint8)


_COLOR_ANCHORS = np.array(
    [(48, 18, 59), (62, 156, 254), (34, 224, 177), (245, 227, 68), (122, 4, 3)],
    dtype=np.float64,
)


def _colormap(gray: np.ndarray) -> np.ndarray:
    """Piecewise-linear 5-anchor colormap over a 0-255 grayscale image."""
    t = gray.astype(np.float64) / 255.0 * (len(_COLOR_ANCHORS) - 1)
    lo = np.clip(t.astype(int), 0, len(_COLOR_ANCHORS) - 2)
    frac = (t - lo)[..., None]
    rgb = _COLOR_ANCHORS[lo] * (1.0 - frac) + _COLOR_ANCHORS[lo + 1] * frac
    return np.round(rgb).astype(np.uint8)


def write_pgm(path, field: np.ndarray) -> None:
    gray = _to_gray(field)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def write_ppm(path, field: np.ndarray, sensor_cells: np.ndarray | None = None) -> None:
    rgb = _colormap(_to_gray(field))
    if sensor_cells is not None:
        rgb[sensor_cells[:, 0], sensor_cells[:, 1]] = (255, 255, 255)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_field_csv(path, field: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in field:
            fh.write(",".join(repr(v) for v in row.tolist()) + "\n")


def read_field_csv(path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            rows.append([float(v) for v in line.split(",")])
    return np.array(rows, dtype=np.float64)


def export_fields(field: np.ndarray, error: np.ndarray, out_prefix,
                  sensor_cells: np.ndarray | None = None) -> None:
    """Grayscale + colormapped rasters and exact CSV grids for a field and
    its absolute-error map; sensor cells are marked in the color raster."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(f"{out_prefix}_field.pgm", field)
    write_pgm(f"{out_prefix}_error.pgm", error)
    write_ppm(f"{out_prefix}_field.ppm", field, sensor_cells)
    write_ppm(f"{out_prefix}_error.ppm", error, sensor_cells)
    write_field_csv(f"{out_prefix}_field.csv", field)
    write_field_csv(f"{out_prefix}_error.csv", error)
