"""Command-line entry point binding generation, training, and evaluation.

Every command resolves its configuration (config file < flags), writes it to
<out>/run.cfg, and is deterministic given that file.  Outputs of a failed
run are marked with a FAILED file and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .checkpoint import parse_config
from .data import dataset_read, generate_dataset, import_dataset
from .errors import RecfnoError
from .experiments import (
    export_fields,
    mode_ablation,
    noise_experiment,
    sensor_sweep,
    superres_eval,
    write_fingerprint,
)
from .grid import GridSpec, snap_sensors
from .metrics import MetricReport, mae, max_ae
from .pipeline import (
    RecfnoAdapter,
    PodMlpAdapter,
    RunSpec,
    dataset_normalization,
    evaluate_adapter,
    load_podmlp,
    load_recfno,
    make_samples,
    save_podmlp,
    save_recfno,
    split_samples,
    train_podmlp_run,
    train_recfno_run,
)
from .train import history_to_csv


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from exc


def _parse_modes(text: str) -> tuple[int, int]:
    return _parse_grid(text)


def _parse_list(cast):
    def parse(text: str):
        return [cast(part) for part in text.split(",") if part]

    return parse


def _env_seed() -> int:
    return int(os.environ.get("RECFNO_SEED", "0"))


def _write_runcfg(out: Path, args: argparse.Namespace) -> None:
    out.mkdir(parents=True, exist_ok=True)
    skip = {"func", "config"}
    with open(out / "run.cfg", "w", encoding="utf-8") as fh:
        fh.write(f"command = {args.command}\n")
        for key in sorted(vars(args)):
            if key in skip or key == "command":
                continue
            value = getattr(args, key)
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")


def _spec_from_args(args) -> RunSpec:
    return RunSpec(
        embedding=args.embedding,
        sensors=args.sensors,
        placement=args.placement,
        layers=args.layers,
        width=args.width,
        modes=tuple(args.modes),
        mlp_hidden=args.mlp_hidden,
        epochs=args.epochs,
        batch_size=args.batch,
        lr0=args.lr,
        decay=args.decay,
        seed=args.seed,
        pod_rank=getattr(args, "rank", None),
    )


def _add_train_flags(p, defaults=True):
    p.add_argument("--embedding", choices=("mask", "voronoi", "mlp"), default="voronoi")
    p.add_argument("--sensors", type=int, default=25)
    p.add_argument("--placement", choices=("uniform", "random"), default="uniform")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--modes", type=_parse_modes, default=(12, 12))
    p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int, default=128)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--decay", type=float, default=0.97)
    p.add_argument("--jobs", type=int, default=1)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    ny, nx = args.grid
    if args.task == "import":
        if not args.source:
            raise RecfnoError("--task import requires --source")
        extent = (0.0, 1.0, 0.0, 1.0)
        ds = import_dataset(args.source, GridSpec(nx, ny, extent), args.count, out)
    else:
        from .data import HEAT_EXTENT, WAKE_EXTENT

        extent = {"heat": HEAT_EXTENT, "wake": WAKE_EXTENT}.get(args.task, (0.0, 1.0, 0.0, 1.0))
        ds = generate_dataset(args.task, GridSpec(nx, ny, extent), args.count, args.seed, out)
    print(f"wrote {ds.count} snapshots of {ds.grid.shape} to {out}")
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    dataset = dataset_read(args.data)
    spec = _spec_from_args(args)
    adapter, samples, result, meta = train_recfno_run(dataset, spec)
    (out / "history.csv").write_text(history_to_csv(result.history), encoding="utf-8")
    meta["best.epoch"] = str(result.best_epoch)
    meta["best.val_mae"] = repr(result.best_val_mae)
    save_recfno(out / "checkpoint.rfck", result.best_state, meta)
    write_fingerprint(out, {"driver": "train", **meta})
    if result.diverged:
        print("training diverged; best checkpoint preserved", file=sys.stderr)
        return 3
    print(f"best epoch {result.best_epoch}: val MAE {result.best_val_mae:.6g}")
    return 0


def cmd_baseline(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    dataset = dataset_read(args.data)
    spec = _spec_from_args(args)
    adapter, samples, result, meta = train_podmlp_run(dataset, spec)
    (out / "history.csv").write_text(history_to_csv(result.history), encoding="utf-8")
    meta["best.epoch"] = str(result.best_epoch)
    meta["best.val_mae"] = repr(result.best_val_mae)
    save_podmlp(out / "checkpoint.rfck", adapter.model, result.best_state, meta)
    report = evaluate_adapter(adapter, samples["test"], {"split": "test"})
    (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    write_fingerprint(out, {"driver": "baseline", **meta})
    print(f"pod-mlp rank {adapter.model.basis.rank}: test MAE {report.mae:.6g}")
    return 0 if not result.diverged else 3


def _load_any(path):
    from .checkpoint import read_checkpoint

    cfg, _ = read_checkpoint(path)
    if cfg.get("model") == "podmlp":
        model, positions, grid, norm, meta = load_podmlp(path)
        return PodMlpAdapter(model, norm), positions, grid, norm, meta
    model, positions, grid, norm, meta = load_recfno(path)
    return RecfnoAdapter(model, positions, grid, norm), positions, grid, norm, meta


def cmd_eval(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    adapter, positions, grid, norm, meta = _load_any(args.ckpt)
    dataset = dataset_read(args.data)
    samples = make_samples(dataset.split(args.split), positions, dataset.grid, norm)
    report = evaluate_adapter(adapter, samples, {"split": args.split, "ckpt": str(args.ckpt)})
    (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    sample = samples[0]
    pred = adapter.predict_physical(sample)
    export_fields(pred, np.abs(pred - sample.target_phys), out / "sample0",
                  sensor_cells=snap_sensors(positions, dataset.grid))
    write_fingerprint(out, {"driver": "eval", "split": args.split})
    print(f"{args.split} MAE {report.mae!r} Max-AE {report.max_ae!r}")
    return 0


def cmd_superres(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    adapter, positions, grid, norm, meta = _load_any(args.ckpt)
    fine = dataset_read(args.fine_data)
    if not isinstance(adapter, RecfnoAdapter):
        # the POD basis is bound to its training resolution
        from .errors import ResolutionError

        raise ResolutionError("POD-based checkpoints cannot change resolution")
    report = superres_eval(adapter, fine, args.scale, out, meta)
    print(f"scale {args.scale}: MAE {report.mae!r} Max-AE {report.max_ae!r}")
    return 0


def cmd_noise(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    spec = _spec_from_args(args)
    rows = noise_experiment(args.data, args.snrs, args.regime, spec, args.kinds, out, args.jobs)
    for row in rows:
        print(f"{row['kind']} snr={row['snr_db']} mae={row['mae']!r}")
    return 0


def cmd_ablate(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    spec = _spec_from_args(args)
    rows = mode_ablation(args.data, args.mode_list, spec, args.seeds, args.kinds, out, args.jobs)
    for row in rows:
        print(f"{row['kind']} k={row['modes']} seed={row['seed']} mae={row['mae']!r}")
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out)
    _write_runcfg(out, args)
    spec = _spec_from_args(args)
    rows = sensor_sweep(args.data, args.counts, args.kinds, spec, out, args.jobs)
    for row in rows:
        print(f"{row['kind']} sensors={row['sensors']} mae={row['mae']!r}")
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out) if args.out else None
    if out:
        _write_runcfg(out, args)
    rows = run_benchmark(repeats=args.repeats)
    header = f"{'kernel':<24}{'size':<16}{'python ms':>12}{'native ms':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    lines = ["kernel,size,python_ms,native_ms,speedup"]
    for row in rows:
        native = f"{row['native_ms']:.3f}" if row["native_ms"] is not None else "n/a"
        speed = f"{row['speedup']:.2f}x" if row["speedup"] is not None else "n/a"
        print(f"{row['kernel']:<24}{row['size']:<16}{row['python_ms']:>12.3f}{native:>12}{speed:>10}")
        lines.append(f"{row['kernel']},{row['size']},{row['python_ms']!r},{row['native_ms']!r},{row['speedup']!r}")
    if out:
        (out / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def run_benchmark(repeats: int = 5) -> list[dict]:
    """Time each hot kernel under both backends."""
    from .kernels import get_impl
    from .rng import Rng

    py = get_impl("python")
    try:
        native = get_impl("native")
    except ImportError:
        native = None
    rng = Rng(0)

    def time_call(fn, *args):
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(*args)
            best = min(best, time.perf_counter() - t0)
        return best * 1e3

    cases = []
    x64 = rng.normal((64, 64, 16))
    cases.append(("fft2", "64x64x16", lambda impl: kernels.fft2_raw(x64, backend=impl)))
    x128 = rng.normal((128, 128, 8))
    cases.append(("fft2", "128x128x8", lambda impl: kernels.fft2_raw(x128, backend=impl)))
    xc = np.ascontiguousarray(rng.normal((64, 64, 16)))
    wt = np.ascontiguousarray(rng.normal((3, 3, 16, 16)))
    bias = np.zeros(16)
    cases.append(("conv3x3", "64x64x16", lambda impl: impl.conv3x3_fwd(xc, wt, bias)))
    gx, gy = np.linspace(0, 1, 128), np.linspace(0, 1, 128)
    sx, sy = rng.uniform(64), rng.uniform(64)
    cases.append(("voronoi_assign", "128x128 n=64", lambda impl: impl.voronoi_assign(gx, gy, sx, sy)))
    gyv = np.ascontiguousarray(rng.normal((128, 128, 8)))
    si = (np.arange(128, dtype=np.intp) * 64) // 128
    cases.append(("scatter_add", "128->64 c=8", lambda impl: impl.scatter_add(gyv, si, si, 64, 64)))
    flat = np.ascontiguousarray(rng.normal(65536))
    cases.append(("gelu", "65536", lambda impl: impl.gelu_fwd(flat)))

    rows = []
    for name, size, fn in cases:
        p = time_call(fn, py)
        n = time_call(fn, native) if native is not None else None
        rows.append({
            "kernel": name, "size": size, "python_ms": p, "native_ms": n,
            "speedup": (p / n) if n else None,
        })
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="recfno", description=__doc__)
    parser.add_argument("--config", type=Path, help="key=value file; flags override its entries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate or import a dataset")
    p.add_argument("--task", choices=("darcy", "heat", "wake", "import"), required=True)
    p.add_argument("--grid", type=_parse_grid, default=(64, 64), help="HxW")
    p.add_argument("--count", type=int, default=700)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--source", type=Path, help="raw float32 stack for --task import")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a reconstruction model")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="train and evaluate the POD-MLP baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("superres", help="zero-shot super-resolution evaluation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--fine-data", dest="fine_data", required=True)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("noise", help="MAE vs SNR experiment")
    p.add_argument("--data", required=True)
    p.add_argument("--snrs", type=_parse_list(float), default=[5.0, 10.0, 20.0, 40.0])
    p.add_argument("--regime", choices=("both", "inputs-only"), required=True)
    p.add_argument("--kinds", type=_parse_list(str), default=["recfno-voronoi"])
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("ablate", help="Fourier-mode-count ablation")
    p.add_argument("--data", required=True)
    p.add_argument("--mode-list", dest="mode_list", type=_parse_list(int), default=[4, 8, 16])
    p.add_argument("--seeds", type=_parse_list(int), default=[0, 1, 2])
    p.add_argument("--kinds", type=_parse_list(str), default=["recfno-voronoi"])
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sensor-count sweep across model kinds")
    p.add_argument("--data", required=True)
    p.add_argument("--counts", type=_parse_list(int), required=True)
    p.add_argument("--kinds", type=_parse_list(str), default=["recfno-voronoi", "podmlp"])
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="compare python and native kernel backends")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    if args.config:
        # config file provides defaults; explicit flags win
        file_values = parse_config(args.config.read_text(encoding="utf-8"))
        argv_list = list(argv) if argv is not None else sys.argv[1:]
        for key, value in file_values.items():
            if key == "command" or not hasattr(args, key):
                continue
            flag = "--" + key.replace("_", "-")
            if any(a == flag or a.startswith(flag + "=") for a in argv_list):
                continue
            setattr(args, key, _coerce_like(getattr(args, key), value))

    try:
        return args.func(args)
    except RecfnoError as exc:
        out = getattr(args, "out", None)
        if out:
            out = Path(out)
            if out.exists():
                (out / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _coerce_like(current, text: str):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, (list, tuple)):
        parts = text.split("x") if "x" in text and "," not in text else text.split(",")
        if current and isinstance(current[0], int):
            return [int(v) for v in parts if v]
        if current and isinstance(current[0], float):
            return [float(v) for v in parts if v]
        return [v for v in parts if v]
    return text


if __name__ == "__main__":
    sys.exit(main())
