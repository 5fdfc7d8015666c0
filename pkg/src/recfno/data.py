"""Dataset generation: Darcy flow, nonlinear heat conduction, an analytic
vortex-street surrogate, sensor placement, observation extraction, SNR noise,
and the on-disk dataset format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataFormatError, NoiseScaleError, SensorError, SolverError
from .grid import GridSpec, ObservationSet, snap_sensors
from .rng import Rng

DATASET_MAGIC = b"RFNO"
DATASET_VERSION = 1

DARCY_HIGH, DARCY_LOW = 12.0, 3.0
GRF_TAU2 = 81.0

HEAT_EXTENT = (0.0, 0.1, 0.0, 0.1)
HEAT_REF_TEMP = 298.0
HEAT_LAMBDA_SLOPE = 0.05
HEAT_LAMBDA_FLOOR = 1e-3
HEAT_SINK_FRACTION = 0.2
HEAT_UD_RANGE = (280.0, 320.0)
HEAT_AMP_RANGE = (2.0e3, 1.0e4)
HEAT_WIDTH_RANGE = (0.005, 0.02)
HEAT_SOURCES_RANGE = (2, 6)

WAKE_EXTENT = (0.0, 1.5, 0.0, 1.0)
WAKE_PERIOD = 32.417  # non-integer so integer frame indices sweep the phase
# (vortices per row, width/height, amplitude, row offset/height)
WAKE_TRAINS = ((3, 0.08, 1.0, 0.15), (5, 0.035, 0.8, 0.06))


# ---------------------------------------------------------------------------
# field snapshots


@dataclass
class FieldSnapshot:
    field: np.ndarray  # [n_y, n_x]
    grid: GridSpec
    meta: dict = field(default_factory=dict)


@dataclass
class HeatInstance:
    sources: list[tuple[float, float, float, float]]  # (cx, cy, amplitude, width)
    u_d: float
    sink_span: tuple[float, float]  # physical x-range on the bottom boundary


# ---------------------------------------------------------------------------
# Darcy flow


def sample_darcy_coeff(rng: Rng, grid: GridSpec) -> np.ndarray:
    """Two-valued diffusion coefficient from a thresholded Gaussian random field.

    Spectral synthesis with a squared-inverse-Laplacian covariance; the field
    is split at its median into {12, 3}.
    """
    ny, nx = grid.shape
    white = rng.normal((ny, nx))
    spec = kernels.fft2_raw(white[:, :, None])
    k1 = np.minimum(np.arange(ny), ny - np.arange(ny))
    k2 = np.minimum(np.arange(nx), nx - np.arange(nx))
    eig = (2.0 * np.pi) ** 2 * (k1[:, None] ** 2 + k2[None, :] ** 2) + GRF_TAU2
    smooth = (kernels.fft2_raw(spec / eig[:, :, None], inverse=True).real[:, :, 0]) / (ny * nx)
    return np.where(smooth > np.median(smooth), DARCY_HIGH, DARCY_LOW)


def _cg(apply_a, b: np.ndarray, x0: np.ndarray, tol: float, maxiter: int) -> np.ndarray:
    """Conjugate gradients to relative residual tol; raises on non-convergence."""
    x = x0.copy()
    r = b - apply_a(x)
    bnorm = float(np.sqrt(np.sum(b * b)))
    if bnorm == 0.0:
        return np.zeros_like(b)
    if np.sqrt(np.sum(r * r)) <= tol * bnorm:
        return x
    p = r.copy()
    rs = float(np.sum(r * r))
    for _ in range(maxiter):
        ap = apply_a(p)
        alpha = rs / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= tol * bnorm:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverError(f"CG did not reach {tol:g} in {maxiter} iterations")


def _face_transmissibilities(coef: np.ndarray, grid: GridSpec):
    """Harmonic-mean face coefficients divided by the cell spacing squared."""
    hx = 2.0 * coef[:, :-1] * coef[:, 1:] / (coef[:, :-1] + coef[:, 1:]) / grid.dx**2
    hy = 2.0 * coef[:-1, :] * coef[1:, :] / (coef[:-1, :] + coef[1:, :]) / grid.dy**2
    return hx, hy


def _darcy_apply(coef: np.ndarray, grid: GridSpec):
    """Operator for -div(a grad u) with homogeneous Dirichlet boundary faces."""
    hx, hy = _face_transmissibilities(coef, grid)
    # boundary faces sit half a cell from the center: transmissibility 2a/dx^2
    bw = 2.0 * coef[:, 0] / grid.dx**2
    be = 2.0 * coef[:, -1] / grid.dx**2
    bs = 2.0 * coef[0, :] / grid.dy**2
    bn = 2.0 * coef[-1, :] / grid.dy**2

    def apply_a(u):
        r = np.zeros_like(u)
        fx = hx * (u[:, 1:] - u[:, :-1])
        r[:, :-1] -= fx
        r[:, 1:] += fx
        fy = hy * (u[1:, :] - u[:-1, :])
        r[:-1, :] -= fy
        r[1:, :] += fy
        r[:, 0] += bw * u[:, 0]
        r[:, -1] += be * u[:, -1]
        r[0, :] += bs * u[0, :]
        r[-1, :] += bn * u[-1, :]
        return r

    return apply_a


def solve_darcy(coef: np.ndarray, grid: GridSpec, tol: float = 1e-8) -> np.ndarray:
    """Pressure field of -div(a grad u) = 1, u = 0 on the boundary."""
    if np.any(coef <= 0):
        raise SolverError("diffusion coefficient must be positive")
    apply_a = _darcy_apply(coef, grid)
    b = np.ones(grid.shape, dtype=np.float64)
    return _cg(apply_a, b, np.zeros_like(b), tol, maxiter=20 * max(grid.shape) ** 2)


def darcy_residual(coef: np.ndarray, u: np.ndarray, grid: GridSpec) -> float:
    """Relative discrete residual |A u - f| / |f|."""
    apply_a = _darcy_apply(coef, grid)
    b = np.ones(grid.shape, dtype=np.float64)
    r = b - apply_a(u)
    return float(np.sqrt(np.sum(r * r) / np.sum(b * b)))


def darcy_center_value(u: np.ndarray) -> float:
    """Field value at the domain center (mean of the four center cells)."""
    ny, nx = u.shape
    i, j = ny // 2, nx // 2
    return float(u[i - 1 : i + 1, j - 1 : j + 1].mean())


# ---------------------------------------------------------------------------
# heat conduction


def sample_heat_instance(rng: Rng) -> HeatInstance:
    """Random Gaussian sources, sink temperature, and the fixed sink span."""
    lo, hi = HEAT_SOURCES_RANGE
    count = lo + rng.integers(hi - lo + 1)
    x0, x1, y0, y1 = HEAT_EXTENT
    sources = []
    for _ in range(count):
        cx = rng.uniform(None, x0, x1)
        cy = rng.uniform(None, y0, y1)
        amp = rng.uniform(None, *HEAT_AMP_RANGE)
        width = rng.uniform(None, *HEAT_WIDTH_RANGE)
        sources.append((cx, cy, amp, width))
    u_d = rng.uniform(None, *HEAT_UD_RANGE)
    mid = 0.5 * (x0 + x1)
    half = 0.5 * HEAT_SINK_FRACTION * (x1 - x0)
    return HeatInstance(sources, u_d, (mid - half, mid + half))


def heat_source_field(inst: HeatInstance, grid: GridSpec) -> np.ndarray:
    xs = grid.cell_xs()[None, :]
    ys = grid.cell_ys()[:, None]
    f = np.zeros(grid.shape, dtype=np.float64)
    for cx, cy, amp, width in inst.sources:
        f += amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * width**2))
    return f


def heat_sink_mask(inst: HeatInstance, grid: GridSpec) -> np.ndarray:
    """True on bottom-row cells whose centers fall inside the sink span."""
    xs = grid.cell_xs()
    mask = np.zeros(grid.shape, dtype=bool)
    lo, hi = inst.sink_span
    mask[0, :] = (xs >= lo) & (xs <= hi)
    if not mask.any():
        raise SolverError("sink span contains no cells at this resolution")
    return mask


def _heat_apply(lam: np.ndarray, sink: np.ndarray, grid: GridSpec):
    """Operator for -div(lambda grad u) with zero-flux outer boundary and the
    sink cells pinned (their rows/columns removed from the free system)."""
    hx, hy = _face_transmissibilities(lam, grid)

    def apply_a(u):
        u = np.where(sink, 0.0, u)
        r = np.zeros_like(u)
        fx = hx * (u[:, 1:] - u[:, :-1])
        r[:, :-1] -= fx
        r[:, 1:] += fx
        fy = hy * (u[1:, :] - u[:-1, :])
        r[:-1, :] -= fy
        r[1:, :] += fy
        return np.where(sink, 0.0, r)

    return apply_a


def heat_conductivity(u: np.ndarray) -> np.ndarray:
    """Temperature-dependent conductivity, clamped away from zero."""
    return np.maximum(1.0 + HEAT_LAMBDA_SLOPE * (u - HEAT_REF_TEMP), HEAT_LAMBDA_FLOOR)


def solve_heat(
    inst: HeatInstance,
    grid: GridSpec,
    picard_tol: float = 1e-6,
    max_picard: int = 100,
    cg_tol: float = 1e-10,
) -> np.ndarray:
    """Steady state via Picard iteration on the frozen-coefficient problem."""
    sink = heat_sink_mask(inst, grid)
    f = heat_source_field(inst, grid)
    u = np.full(grid.shape, inst.u_d, dtype=np.float64)
    for _ in range(max_picard):
        lam = heat_conductivity(u)
        apply_a = _heat_apply(lam, sink, grid)
        dirichlet = np.where(sink, inst.u_d, 0.0)
        hx, hy = _face_transmissibilities(lam, grid)
        b = np.where(sink, 0.0, f)
        # contributions of pinned cells move to the right-hand side
        fx = hx * (dirichlet[:, 1:] - dirichlet[:, :-1])
        b[:, :-1] += fx
        b[:, 1:] -= fx
        fy = hy * (dirichlet[1:, :] - dirichlet[:-1, :])
        b[:-1, :] += fy
        b[1:, :] -= fy
        b = np.where(sink, 0.0, b)
        free = _cg(apply_a, b, np.where(sink, 0.0, u), cg_tol, maxiter=20 * max(grid.shape) ** 2)
        u_new = np.where(sink, inst.u_d, free)
        delta = float(np.max(np.abs(u_new - u)))
        u = u_new
        if delta < picard_tol:
            return u
    raise SolverError(f"Picard iteration did not converge in {max_picard} steps")


def heat_residual(inst: HeatInstance, u: np.ndarray, grid: GridSpec) -> float:
    """Scaled residual of the discrete nonlinear system, lambda taken at u."""
    sink = heat_sink_mask(inst, grid)
    lam = heat_conductivity(u)
    apply_a = _heat_apply(lam, sink, grid)
    dirichlet = np.where(sink, inst.u_d, 0.0)
    hx, hy = _face_transmissibilities(lam, grid)
    b = np.where(sink, 0.0, heat_source_field(inst, grid))
    fx = hx * (dirichlet[:, 1:] - dirichlet[:, :-1])
    b[:, :-1] += fx
    b[:, 1:] -= fx
    fy = hy * (dirichlet[1:, :] - dirichlet[:-1, :])
    b[:-1, :] += fy
    b[1:, :] -= fy
    b = np.where(sink, 0.0, b)
    r = b - apply_a(np.where(sink, 0.0, u))
    scale = float(np.sqrt(np.sum(b * b)))
    return float(np.sqrt(np.sum(r * r))) / max(scale, 1e-300)


# ---------------------------------------------------------------------------
# analytic vortex street


def synth_wake(t: float, grid: GridSpec, period: float = WAKE_PERIOD) -> np.ndarray:
    """Vorticity of staggered trains of alternating Gaussian vortices
    advected downstream; exactly periodic in t with the given period.

    Two superimposed trains: a broad one whose overlapping cores keep point
    sensors informative at every phase, and a sharper short-wavelength one
    (phase-locked to the first) that defeats low-rank linear bases.  Each
    row is tiled with period equal to the domain length (one wrap image per
    side covers the tails), so the field is x-periodic and the positive and
    negative rows cancel exactly in the domain sum.
    """
    x0, x1, y0, y1 = grid.extent
    lx, ly = x1 - x0, y1 - y0
    xs = grid.cell_xs()[None, :]
    ys = grid.cell_ys()[:, None]
    omega = np.zeros(grid.shape, dtype=np.float64)
    for per_row, sigma_frac, amp, offset_frac in WAKE_TRAINS:
        spacing = lx / per_row
        sigma = sigma_frac * ly
        offset = offset_frac * ly
        shift = (t / period) * spacing
        for row_sign, y_c, stagger in ((amp, y0 + 0.5 * ly + offset, 0.0), (-amp, y0 + 0.5 * ly - offset, 0.5)):
            for m in range(per_row):
                base = x0 + ((m + stagger) * spacing + shift) % lx
                for image in (-lx, 0.0, lx):
                    xc = base + image
                    omega += row_sign * np.exp(-((xs - xc) ** 2 + (ys - y_c) ** 2) / (2.0 * sigma**2))
    return omega


# ---------------------------------------------------------------------------
# sensors, observations, noise


def _lattice_factors(n: int, aspect: float) -> tuple[int, int]:
    """Factor pair (rows, cols) of n closest to the grid aspect ratio."""
    best = (1, n)
    best_cost = abs(np.log(1.0 / n) - np.log(aspect))
    for r in range(1, n + 1):
        if n % r:
            continue
        c = n // r
        cost = abs(np.log(r / c) - np.log(aspect))
        if cost < best_cost:
            best, best_cost = (r, c), cost
    return best


def place_sensors(n: int, strategy: str, rng: Rng, grid: GridSpec) -> np.ndarray:
    """Sensor positions in physical coordinates (distinct cells guaranteed)."""
    if n < 1:
        raise SensorError("need at least one sensor")
    if n > grid.n_x * grid.n_y:
        raise SensorError(f"{n} sensors exceed {grid.n_x * grid.n_y} cells")
    x0, x1, y0, y1 = grid.extent
    if strategy == "uniform":
        rows, cols = _lattice_factors(n, (y1 - y0) / (x1 - x0))
        xs = x0 + (np.arange(cols) + 0.5) / cols * (x1 - x0)
        ys = y0 + (np.arange(rows) + 0.5) / rows * (y1 - y0)
        pos = np.array([(x, y) for y in ys for x in xs])
        snap_sensors(pos, grid)  # collision check at this resolution
        return pos
    if strategy == "random":
        taken: set[tuple[int, int]] = set()
        cells = []
        guard = 0
        while len(cells) < n:
            i = rng.integers(grid.n_y)
            j = rng.integers(grid.n_x)
            if (i, j) not in taken:
                taken.add((i, j))
                cells.append((i, j))
            guard += 1
            if guard > 1000 * n:
                raise SensorError("rejection sampling stalled")
        cxs, cys = grid.cell_xs(), grid.cell_ys()
        return np.array([(cxs[j], cys[i]) for i, j in cells])
    raise SensorError(f"unknown placement strategy {strategy!r}")


def observe(snap: FieldSnapshot, positions: np.ndarray) -> ObservationSet:
    """Point measurements: the field value at each snapped sensor cell."""
    idx = snap_sensors(positions, snap.grid)
    values = snap.field[idx[:, 0], idx[:, 1]]
    return ObservationSet(positions, values, idx)


def noise_scale(x: np.ndarray, snr_db: float) -> float:
    power = float(np.sum(np.asarray(x, dtype=np.float64) ** 2)) / x.size
    if power == 0.0:
        raise NoiseScaleError("noise scale undefined for an all-zero signal")
    return float(np.sqrt(power / (2.0 * 10.0 ** (snr_db / 10.0))))


def add_noise(x: np.ndarray, snr_db: float, rng: Rng) -> np.ndarray:
    """White Gaussian noise at the given SNR (dB) relative to signal power."""
    x = np.asarray(x, dtype=np.float64)
    return x + noise_scale(x, snr_db) * rng.normal(x.shape)


# ---------------------------------------------------------------------------
# dataset files


@dataclass
class FieldDataset:
    fields: np.ndarray  # [count, n_y, n_x] float64 (file stores float32)
    grid: GridSpec
    manifest: dict[str, str]

    @property
    def count(self) -> int:
        return self.fields.shape[0]

    def split(self, name: str) -> np.ndarray:
        start = int(self.manifest[f"split.{name}.start"])
        count = int(self.manifest[f"split.{name}.count"])
        return self.fields[start : start + count]

    @property
    def norm_mean(self) -> float:
        return float(self.manifest["norm.mean"])

    @property
    def norm_std(self) -> float:
        return float(self.manifest["norm.std"])

    def snapshot(self, index: int) -> FieldSnapshot:
        return FieldSnapshot(self.fields[index], self.grid)


def default_splits(count: int) -> dict[str, tuple[int, int]]:
    """Contiguous train/val/test ranges; val and test take count//7 each."""
    holdout = max(1, count // 7) if count >= 3 else 0
    train = count - 2 * holdout
    return {"train": (0, train), "val": (train, holdout), "test": (train + holdout, holdout)}


def manifest_dump(manifest: dict[str, str], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in manifest.items():
            fh.write(f"{key} = {value}\n")


def manifest_load(path: Path) -> dict[str, str]:
    from .checkpoint import parse_config

    return parse_config(Path(path).read_text(encoding="utf-8"))


def dataset_write(out_dir, fields: np.ndarray, grid: GridSpec, manifest: dict[str, str]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count, ny, nx = fields.shape
    if (ny, nx) != grid.shape:
        raise DataFormatError("field stack shape does not match the grid")
    header = DATASET_MAGIC + np.array([DATASET_VERSION, ny, nx, count], dtype="<u4").tobytes()
    with open(out_dir / "fields.rfno", "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(fields, dtype="<f4").tobytes())
    x0, x1, y0, y1 = grid.extent
    full = {
        "format": "rfno-dataset-1",
        "grid.nx": str(grid.n_x),
        "grid.ny": str(grid.n_y),
        "grid.x0": repr(x0),
        "grid.x1": repr(x1),
        "grid.y0": repr(y0),
        "grid.y1": repr(y1),
        "count": str(count),
    }
    full.update(manifest)
    manifest_dump(full, out_dir / "manifest.txt")


def dataset_read(path) -> FieldDataset:
    path = Path(path)
    manifest = manifest_load(path / "manifest.txt")
    raw = (path / "fields.rfno").read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise DataFormatError(f"{path}: bad dataset magic")
    version, ny, nx, count = np.frombuffer(raw, dtype="<u4", count=4, offset=4)
    if version != DATASET_VERSION:
        raise DataFormatError(f"{path}: unsupported dataset version {version}")
    if int(ny) != int(manifest["grid.ny"]) or int(nx) != int(manifest["grid.nx"]):
        raise DataFormatError(f"{path}: manifest grid disagrees with the binary header")
    expected = 20 + 4 * int(count) * int(ny) * int(nx)
    if len(raw) != expected:
        raise DataFormatError(f"{path}: file size {len(raw)} != expected {expected}")
    fields = np.frombuffer(raw, dtype="<f4", offset=20).astype(np.float64)
    fields = fields.reshape(int(count), int(ny), int(nx))
    grid = GridSpec(
        int(nx), int(ny),
        (
            float(manifest["grid.x0"]), float(manifest["grid.x1"]),
            float(manifest["grid.y0"]), float(manifest["grid.y1"]),
        ),
    )
    return FieldDataset(fields, grid, manifest)


# ---------------------------------------------------------------------------
# generation drivers


def generate_fields(task: str, grid: GridSpec, count: int, seed: int) -> np.ndarray:
    """Stack of solved/synthesized snapshots; per-sample parameters depend
    only on (seed, index), not on the resolution."""
    root = Rng(seed)
    fields = np.empty((count, grid.n_y, grid.n_x), dtype=np.float64)
    if task == "darcy":
        for i in range(count):
            coef = sample_darcy_coeff(root.derive("darcy", i), grid)
            fields[i] = solve_darcy(coef, grid)
    elif task == "heat":
        for i in range(count):
            inst = sample_heat_instance(root.derive("heat", i))
            fields[i] = solve_heat(inst, grid)
    elif task == "wake":
        for i in range(count):
            fields[i] = synth_wake(float(i), grid)
    else:
        raise DataFormatError(f"unknown generation task {task!r}")
    return fields


def build_manifest(task: str, seed: int, count: int, fields: np.ndarray) -> dict[str, str]:
    splits = default_splits(count)
    manifest = {"kind": task, "seed": str(seed)}
    for name, (start, num) in splits.items():
        manifest[f"split.{name}.start"] = str(start)
        manifest[f"split.{name}.count"] = str(num)
    train = fields[: splits["train"][1]]
    mean = float(train.astype("<f4").astype(np.float64).mean())
    std = float(train.astype("<f4").astype(np.float64).std())
    manifest["norm.mean"] = repr(mean)
    manifest["norm.std"] = repr(max(std, 1e-12))
    return manifest


def generate_dataset(task: str, grid: GridSpec, count: int, seed: int, out_dir) -> FieldDataset:
    fields = generate_fields(task, grid, count, seed)
    manifest = build_manifest(task, seed, count, fields)
    dataset_write(out_dir, fields, grid, manifest)
    return dataset_read(out_dir)


def import_dataset(source, grid: GridSpec, count: int, out_dir) -> FieldDataset:
    """Import a raw little-endian float32 stack of count row-major grids."""
    raw = Path(source).read_bytes()
    expected = 4 * count * grid.n_y * grid.n_x
    if len(raw) != expected:
        raise DataFormatError(f"{source}: size {len(raw)} != expected {expected}")
    fields = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(count, grid.n_y, grid.n_x)
    manifest = build_manifest("import", 0, count, fields)
    dataset_write(out_dir, fields, grid, manifest)
    return dataset_read(out_dir)
