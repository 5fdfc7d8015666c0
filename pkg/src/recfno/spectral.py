"""Fourier layers: spectral convolution with truncated modes plus a pointwise
linear path, and the assembled reconstruction model.

The spectral kernel keeps two corner blocks of the spectrum (low positive and
low negative row frequencies, left half of the columns); the mirrored half is
derived by conjugation so the inverse transform is real by construction.  All
transforms here are partial DFTs evaluated as dense matrix contractions: at
the retained mode counts that is far cheaper than full FFTs, and it reuses
the same machinery for the adjoint pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .embed import EmbeddingConfig, make_embedding
from .errors import ConfigError, ModeError, ShapeError
from .grid import GridSpec, ObservationSet
from .rng import Rng
from .tensor import ComplexTensor, Tensor, record, _acc


def retained_rows(h: int, k1max: int) -> np.ndarray:
    """Spectrum rows kept by truncation: {0..k1max-1} u {h-k1max..h-1}, clipped."""
    n1 = min(k1max, h)
    start = max(h - k1max, n1)
    return np.concatenate([np.arange(n1), np.arange(start, h)])


def truncate_modes(X: ComplexTensor, k1max: int, k2max: int) -> ComplexTensor:
    """Gather the retained low-frequency block [rows, k2max, c] of a spectrum."""
    if X.data.ndim != 3:
        raise ShapeError(f"truncate_modes: expected [h,w,c], got {X.data.shape}")
    h, w, c = X.data.shape
    if not (1 <= k1max <= h and 1 <= k2max <= w):
        raise ModeError(f"mode counts ({k1max},{k2max}) exceed grid {h}x{w}")
    rows = retained_rows(h, k1max)
    cols = np.arange(min(k2max, w))
    out = ComplexTensor._wrap(np.ascontiguousarray(X.data[np.ix_(rows, cols)]))

    def bwd(g):
        gx = np.zeros_like(X.data)
        gx[np.ix_(rows, cols)] = g
        _acc(X, gx)

    record(out, (X,), bwd)
    return out


class _SpectralPlan:
    """Index tables and partial-DFT matrices for one (h, w, k1max, k2max)."""

    def __init__(self, h: int, w: int, m1: int, m2: int, n1: int, n2: int):
        self.h, self.w = h, w
        rows = np.concatenate([np.arange(n1), np.arange(h - n2, h)]).astype(np.intp)
        cols = np.arange(m2, dtype=np.intp)
        self.rows, self.cols = rows, cols
        nr, nc = len(rows), len(cols)
        self.nr, self.nc = nr, nc

        stored = np.zeros((h, w), dtype=bool)
        stored[np.ix_(rows, cols)] = True
        pos = -np.ones((h, w), dtype=np.int64)
        pos[np.ix_(rows, cols)] = np.arange(nr * nc).reshape(nr, nc)

        lam = np.empty(nr * nc, dtype=np.float64)
        pair_a, pair_b, selfs = [], [], []
        for a, (r, c) in enumerate((int(r), int(c)) for r in rows for c in cols):
            mr, mc = (h - r) % h, (w - c) % w
            if not stored[mr, mc]:
                lam[a] = 2.0  # mirror cell is implicit: z*e + conj(z)*e~ = 2 Re(...)
            else:
                lam[a] = 1.0
                b = int(pos[mr, mc])
                if b == a:
                    selfs.append(a)
                elif a < b:
                    pair_a.append(a)
                    pair_b.append(b)
        self.lam = lam.reshape(nr, nc, 1)
        self.pair_a = np.asarray(pair_a, dtype=np.int64)
        self.pair_b = np.asarray(pair_b, dtype=np.int64)
        self.selfs = np.asarray(selfs, dtype=np.int64)
        unpaired = np.flatnonzero(lam == 2.0)
        rr = rows[unpaired // nc]
        cc = cols[unpaired % nc]
        self.unpaired = unpaired
        self.unpaired_mirror = ((h - rr) % h, (w - cc) % w)

        ang_r = 2.0 * np.pi * np.outer(rows, np.arange(h)) / h
        self.ar_re = np.ascontiguousarray(np.cos(ang_r))
        self.ar_im = np.ascontiguousarray(-np.sin(ang_r))
        self.ac = np.exp(-2j * np.pi * np.outer(np.arange(w), cols) / w)
        self.sr = np.exp(2j * np.pi * np.outer(np.arange(h), rows) / h)
        self.sc = np.exp(2j * np.pi * np.outer(cols, np.arange(w)) / w)
        self._scratch: dict[int, dict[str, np.ndarray]] = {}

    def _bufs(self, c: int) -> dict[str, np.ndarray]:
        # reusing these avoids allocator churn, which dominates at these sizes
        bufs = self._scratch.get(c)
        if bufs is None:
            h, w, nr, nc = self.h, self.w, self.nr, self.nc
            bufs = {
                "t_re": np.empty((nr, w * c)),
                "t_im": np.empty((nr, w * c)),
                "a": np.empty((nr, w, c), dtype=np.complex128),
                "a2": np.empty((nr * c, w), dtype=np.complex128),
                "x2": np.empty((nr * c, nc), dtype=np.complex128),
                "z": np.empty((h, nc * c), dtype=np.complex128),
                "z2": np.empty((h * c, nc), dtype=np.complex128),
                "z3": np.empty((h * c, w), dtype=np.complex128),
                "yc": np.empty((h, w, c), dtype=np.complex128),
            }
            self._scratch[c] = bufs
        return bufs

    def analyze(self, v: np.ndarray) -> np.ndarray:
        """Real [h,w,c] -> retained spectrum block [nr,nc,c] (forward DFT).

        The result is freshly allocated and safe to keep.
        """
        h, w, c = v.shape
        nr, nc = self.nr, self.nc
        b = self._bufs(c)
        vf = np.ascontiguousarray(v).reshape(h, w * c)
        np.matmul(self.ar_re, vf, out=b["t_re"])
        np.matmul(self.ar_im, vf, out=b["t_im"])
        a = b["a"]
        a.real[...] = b["t_re"].reshape(nr, w, c)
        a.imag[...] = b["t_im"].reshape(nr, w, c)
        np.copyto(b["a2"].reshape(nr, c, w), a.transpose(0, 2, 1))
        np.matmul(b["a2"], self.ac, out=b["x2"])
        out = np.empty((nr, nc, c), dtype=np.complex128)
        np.copyto(out, b["x2"].reshape(nr, c, nc).transpose(0, 2, 1))
        return out

    def synthesize(self, blk: np.ndarray) -> np.ndarray:
        """Retained block [nr,nc,c] -> complex field [h,w,c] (inverse DFT, no 1/hw).

        Returns a scratch buffer owned by the plan: the next synthesize call
        on this plan overwrites it, so callers must copy what they keep.
        """
        nr, nc, c = blk.shape
        h, w = self.h, self.w
        b = self._bufs(c)
        np.matmul(self.sr, blk.reshape(nr, nc * c), out=b["z"])
        np.copyto(b["z2"].reshape(h, c, nc), b["z"].reshape(h, nc, c).transpose(0, 2, 1))
        np.matmul(b["z2"], self.sc, out=b["z3"])
        np.copyto(b["yc"], b["z3"].reshape(h, c, w).transpose(0, 2, 1))
        return b["yc"]


_PLANS: dict[tuple[int, int, int, int, int, int], _SpectralPlan] = {}


def _plan(h: int, w: int, m1: int, m2: int, n2_rows: int) -> _SpectralPlan:
    n1 = min(m1, h)
    key = (h, w, m1, m2, n1, n2_rows)
    plan = _PLANS.get(key)
    if plan is None:
        plan = _SpectralPlan(h, w, m1, m2, n1, n2_rows)
        _PLANS[key] = plan
    return plan


def spectral_conv(v: Tensor, r1: ComplexTensor, r2: ComplexTensor) -> Tensor:
    """Mode-truncated convolution in Fourier space with per-mode channel mixing.

    r1 covers spectrum rows 0..k1max-1, r2 rows h-k1max..h-1, both over
    columns 0..k2max-1; the conjugate-mirror coefficients are derived, so the
    output is real for any weights.
    """
    if v.data.ndim != 3:
        raise ShapeError(f"spectral_conv: expected [h,w,c], got {v.data.shape}")
    h, w, c = v.data.shape
    m1, m2, dout, din = r1.data.shape
    b = r2.data.shape[0]
    if r2.data.size and r2.data.shape[1:] != (m2, dout, din):
        raise ShapeError("spectral_conv: r1/r2 block shapes differ")
    if din != c or dout != c:
        raise ShapeError(f"spectral_conv: weight channels {din}->{dout} vs field {c}")
    if b not in (0, m1) or m1 + b > h:
        raise ModeError(f"row modes k1max={m1} do not fit grid rows h={h}")
    if not (m2 == w or 2 * m2 - 1 <= w):
        raise ModeError(f"column modes k2max={m2} do not fit grid columns w={w}")

    plan = _plan(h, w, m1, m2, b)
    rb = np.concatenate([r1.data, r2.data], axis=0) if b else r1.data
    nr, nc = plan.nr, plan.nc

    x_blk = plan.analyze(v.data)
    y = np.matmul(rb.reshape(nr * nc, c, c), x_blk.reshape(nr * nc, c, 1)).reshape(nr * nc, c)
    # derive/enforce Hermitian structure so the inverse transform is real
    if plan.pair_a.size:
        ya = 0.5 * (y[plan.pair_a] + np.conj(y[plan.pair_b]))
        y[plan.pair_a] = ya
        y[plan.pair_b] = np.conj(ya)
    if plan.selfs.size:
        y[plan.selfs] = y[plan.selfs].real
    yc = plan.synthesize(plan.lam * y.reshape(nr, nc, c))
    out = Tensor._wrap(yc.real * (1.0 / (h * w)))

    def bwd(g):
        gz = plan.analyze(g) / (h * w)
        gy = (plan.lam * gz).reshape(nr * nc, c)
        if plan.selfs.size:
            gy[plan.selfs] = gy[plan.selfs].real
        if plan.pair_a.size:
            ga = 0.5 * (gy[plan.pair_a] + np.conj(gy[plan.pair_b]))
            gb_ = 0.5 * (gy[plan.pair_b] + np.conj(gy[plan.pair_a]))
            gy[plan.pair_a] = ga
            gy[plan.pair_b] = gb_
        gyb = gy.reshape(nr * nc, c, 1)
        if r1.requires_grad or r2.requires_grad:
            gr = np.matmul(gyb, np.conj(x_blk.reshape(nr * nc, 1, c))).reshape(nr, nc, c, c)
            _acc(r1, gr[:m1])
            if b:
                _acc(r2, gr[m1:])
        if v.requires_grad:
            gx = np.matmul(np.conj(rb.reshape(nr * nc, c, c).transpose(0, 2, 1)), gyb)
            gv = plan.synthesize(gx.reshape(nr, nc, c)).real
            _acc(v, np.ascontiguousarray(gv))

    record(out, (v, r1, r2), bwd)
    return out


def spectral_full_spectrum(v: np.ndarray, r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """The processed full [h,w,c] spectrum (stored block plus derived mirrors).

    Feeding this through a dense inverse transform reproduces spectral_conv;
    its imaginary residue is the realness diagnostic.
    """
    h, w, c = v.shape
    m1, m2 = r1.shape[:2]
    b = r2.shape[0]
    plan = _plan(h, w, m1, m2, b)
    rb = np.concatenate([r1, r2], axis=0) if b else r1
    x_blk = plan.analyze(v)
    nr, nc = plan.nr, plan.nc
    y = np.matmul(rb.reshape(nr * nc, c, c), x_blk.reshape(nr * nc, c, 1)).reshape(nr * nc, c)
    if plan.pair_a.size:
        ya = 0.5 * (y[plan.pair_a] + np.conj(y[plan.pair_b]))
        y[plan.pair_a] = ya
        y[plan.pair_b] = np.conj(ya)
    if plan.selfs.size:
        y[plan.selfs] = y[plan.selfs].real
    full = np.zeros((h, w, c), dtype=np.complex128)
    full[np.ix_(plan.rows, plan.cols)] = y.reshape(nr, nc, c)
    if plan.unpaired.size:
        mr, mc = plan.unpaired_mirror
        full[mr, mc] = np.conj(y[plan.unpaired])
    return full


def spectral_imag_residue(v: np.ndarray, r1: np.ndarray, r2: np.ndarray) -> float:
    """Max |imag| / max |real| of the inverse transform of the processed
    spectrum, i.e. the residue discarded by spectral_conv."""
    from . import kernels

    h, w, _ = v.shape
    full = spectral_full_spectrum(v, r1, r2)
    yc = kernels.fft2_raw(full, inverse=True) / (h * w)
    return float(np.max(np.abs(yc.imag)) / max(np.max(np.abs(yc.real)), 1e-300))


@dataclass
class FourierLayerParams:
    """One layer: complex spectral blocks plus the pointwise linear path."""

    r1: ComplexTensor
    r2: ComplexTensor
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, d_v: int, k1max: int, k2max: int, rng: Rng) -> "FourierLayerParams":
        def disc(shape):
            # uniform in a disc of radius 1/d_v per component
            r = np.sqrt(rng.uniform(shape)) / d_v
            th = rng.uniform(shape, 0.0, 2.0 * np.pi)
            return r * np.exp(1j * th)

        shape = (k1max, k2max, d_v, d_v)
        bound = 1.0 / np.sqrt(d_v)
        return cls(
            r1=ComplexTensor(disc(shape), requires_grad=True),
            r2=ComplexTensor(disc(shape), requires_grad=True),
            w=Tensor(rng.uniform((d_v, d_v), -bound, bound), requires_grad=True),
            b=Tensor(np.zeros(d_v), requires_grad=True),
        )


def fourier_layer(v: Tensor, params: FourierLayerParams) -> Tensor:
    """sigma(W v + spectral(v)); shape-preserving."""
    if v.data.shape[2] != params.w.data.shape[0]:
        raise ShapeError(f"fourier_layer: {v.data.shape[2]} channels vs W {params.w.data.shape}")
    return T.gelu(T.add(T.conv1x1(v, params.w, params.b), spectral_conv(v, params.r1, params.r2)))


@dataclass
class ModelConfig:
    embedding: EmbeddingConfig
    layers: int = 4
    width: int = 32
    modes: tuple[int, int] = (12, 12)
    proj_hidden: int | None = None  # default 4 * width

    def __post_init__(self):
        if self.layers < 1 or self.width < 1:
            raise ConfigError("need layers >= 1 and width >= 1")
        if self.modes[0] < 1 or self.modes[1] < 1:
            raise ConfigError("mode counts must be >= 1")
        if self.embedding.n_e != self.width:
            raise ConfigError(f"embedding n_e={self.embedding.n_e} must equal width={self.width}")
        if self.proj_hidden is None:
            self.proj_hidden = 4 * self.width


class RecFNO:
    """Embedding -> stacked Fourier layers -> pointwise projection head."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        self.cfg = cfg
        self.embedding = make_embedding(cfg.embedding, rng.derive("embed"))
        k1, k2 = cfg.modes
        self.layers = [
            FourierLayerParams.init(cfg.width, k1, k2, rng.derive("layer", i))
            for i in range(cfg.layers)
        ]
        ph = cfg.proj_hidden
        prng = rng.derive("proj")
        bw = 1.0 / np.sqrt(cfg.width)
        bh = 1.0 / np.sqrt(ph)
        self.proj_w1 = Tensor(prng.uniform((cfg.width, ph), -bw, bw), requires_grad=True)
        self.proj_b1 = Tensor(np.zeros(ph), requires_grad=True)
        self.proj_w2 = Tensor(prng.uniform((ph, 1), -bh, bh), requires_grad=True)
        self.proj_b2 = Tensor(np.zeros(1), requires_grad=True)

    def parameters(self):
        params = list(self.embedding.parameters())
        for i, lay in enumerate(self.layers):
            params += [
                (f"layer{i}.r1", lay.r1), (f"layer{i}.r2", lay.r2),
                (f"layer{i}.w", lay.w), (f"layer{i}.b", lay.b),
            ]
        params += [
            ("proj.w1", self.proj_w1), ("proj.b1", self.proj_b1),
            ("proj.w2", self.proj_w2), ("proj.b2", self.proj_b2),
        ]
        return params

    def forward(self, obs: ObservationSet, grid: GridSpec, scale: int = 1) -> Tensor:
        """Reconstructed field at scale x the configured resolution.

        scale > 1 rebuilds the embedding on the refined grid and runs the
        identical layers: zero-shot super-resolution.
        """
        if scale < 1 or int(scale) != scale:
            raise ConfigError(f"scale must be a positive integer, got {scale}")
        ny, nx = self.cfg.embedding.output_shape
        out_shape = (ny * int(scale), nx * int(scale))
        v = self.embedding(obs, grid, out_shape)
        for lay in self.layers:
            v = fourier_layer(v, lay)
        u = T.gelu(T.conv1x1(v, self.proj_w1, self.proj_b1))
        u = T.conv1x1(u, self.proj_w2, self.proj_b2)
        return T.reshape(u, out_shape)

    __call__ = forward
