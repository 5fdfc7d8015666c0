"""Dense real/complex tensors with reverse-mode automatic differentiation.

Values are float64 (complex128 for spectra).  Operations append entries to a
module-level tape in execution order, which is already a topological order;
``backward`` replays it once in reverse and is consumed by the pass.  Complex
gradients follow the pair-of-reals convention: grad = dL/dRe + i*dL/dIm.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels
from .errors import ContractError, ShapeError, SymmetryError

_DEBUG = False


def set_debug(flag: bool) -> None:
    """Enable NaN/Inf screening after every operation (slow; for tests)."""
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    """Dense real tensor; ``grad`` is populated by ``backward``."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ContractError("tensor values must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))


class ComplexTensor:
    """Dense complex tensor; used for spectra and spectral weights."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.complex128)
        if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
            raise ContractError("tensor values must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "ComplexTensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"ComplexTensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of executed operations (execution order = topological)."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        self.nodes.clear()


_TAPE = Tape()
_GRAD_ENABLED = True


def active_tape() -> Tape:
    return _TAPE


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(out) -> None:
    arr = out.data
    if arr.dtype == np.complex128:
        ok = np.all(np.isfinite(arr.real)) and np.all(np.isfinite(arr.imag))
    else:
        ok = np.all(np.isfinite(arr))
    if not ok:
        raise ContractError("non-finite values produced by an operation")


def record(out, parents, backward) -> None:
    """Register a custom differentiable op on the tape."""
    if _DEBUG:
        _check_finite(out)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _TAPE.nodes.append(_Node(out, tuple(parents), backward))


def _acc(t, g) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Populate gradient buffers of everything the scalar loss depends on.

    The tape is consumed: a second call needs a fresh forward pass.
    """
    if loss.size != 1:
        raise ContractError("loss must have a single element")
    if not _TAPE.nodes:
        raise ContractError("tape is empty; nothing to differentiate")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_TAPE.nodes):
        g = node.out.grad
        if g is None:
            continue
        node.backward(g)
    _TAPE.clear()


# ---------------------------------------------------------------------------
# pointwise and linear ops


def _same_shape(a, b, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        out = Tensor._wrap(a.data + float(b))
        record(out, (a,), lambda g: _acc(a, g))
        return out
    _same_shape(a, b, "add")
    out = Tensor._wrap(a.data + b.data)

    def bwd(g):
        _acc(a, g)
        _acc(b, g)

    record(out, (a, b), bwd)
    return out


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    _same_shape(a, b, "sub")
    out = Tensor._wrap(a.data - b.data)

    def bwd(g):
        _acc(a, g)
        _acc(b, -g)

    record(out, (a, b), bwd)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor._wrap(-a.data)
    record(out, (a,), lambda g: _acc(a, -g))
    return out


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        out = Tensor._wrap(a.data * s)
        record(out, (a,), lambda g: _acc(a, g * s))
        return out
    _same_shape(a, b, "mul")
    out = Tensor._wrap(a.data * b.data)

    def bwd(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    record(out, (a, b), bwd)
    return out


def sum_(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.asarray(a.data.sum()))
    record(out, (a,), lambda g: _acc(a, np.broadcast_to(g, a.data.shape).copy()))
    return out


def mean_(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor._wrap(np.asarray(a.data.mean()))
    record(out, (a,), lambda g: _acc(a, np.broadcast_to(g / n, a.data.shape).copy()))
    return out


def abs_(a: Tensor) -> Tensor:
    """|x| with subgradient 0 at 0."""
    out = Tensor._wrap(np.abs(a.data))
    record(out, (a,), lambda g: _acc(a, g * np.sign(a.data)))
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor._wrap(a.data.reshape(shape))
    record(out, (a,), lambda g: _acc(a, g.reshape(a.data.shape)))
    return out


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    out = Tensor._wrap(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _acc(p, piece)

    record(out, tuple(parts), bwd)
    return out


def gelu(a: Tensor) -> Tensor:
    """Gaussian-error linear unit, exact erf form."""
    flat = np.ascontiguousarray(a.data.reshape(-1))
    y, cdf = kernels.gelu_fwd(flat)
    out = Tensor._wrap(y.reshape(a.data.shape))

    def bwd(g):
        gx = kernels.gelu_bwd(flat, cdf, np.ascontiguousarray(g.reshape(-1)))
        _acc(a, gx.reshape(a.data.shape))

    record(out, (a,), bwd)
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of a vector: x[n_in] @ W[n_in,n_out] + b[n_out]."""
    if x.data.ndim != 1 or weight.data.ndim != 2 or x.data.shape[0] != weight.data.shape[0]:
        raise ShapeError(f"linear: x{x.data.shape} incompatible with W{weight.data.shape}")
    if bias.data.shape != (weight.data.shape[1],):
        raise ShapeError("linear: bias shape mismatch")
    out = Tensor._wrap(x.data @ weight.data + bias.data)

    def bwd(g):
        _acc(x, weight.data @ g)
        _acc(weight, np.outer(x.data, g))
        _acc(bias, g)

    record(out, (x, weight, bias), bwd)
    return out


def conv1x1(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Per-pixel affine map: [h,w,cin] -> [h,w,cout]."""
    if x.data.ndim != 3:
        raise ShapeError(f"conv1x1: expected 3D input, got {x.data.shape}")
    h, w, ci = x.data.shape
    if weight.data.shape[0] != ci:
        raise ShapeError(f"conv1x1: {ci} channels vs weight {weight.data.shape}")
    co = weight.data.shape[1]
    if bias.data.shape != (co,):
        raise ShapeError("conv1x1: bias shape mismatch")
    flat = x.data.reshape(h * w, ci)
    y = flat @ weight.data
    y += bias.data
    out = Tensor._wrap(y.reshape(h, w, co))

    def bwd(g):
        gf = g.reshape(h * w, co)
        _acc(x, (gf @ weight.data.T).reshape(h, w, ci))
        _acc(weight, flat.T @ gf)
        _acc(bias, gf.sum(axis=0))

    record(out, (x, weight, bias), bwd)
    return out


def conv3x3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-size 3x3 convolution, one ring of zero padding."""
    if x.data.ndim != 3:
        raise ShapeError(f"conv3x3: expected 3D input, got {x.data.shape}")
    if weight.data.shape[:3] != (3, 3, x.data.shape[2]):
        raise ShapeError(f"conv3x3: weight {weight.data.shape} vs input {x.data.shape}")
    co = weight.data.shape[3]
    if bias.data.shape != (co,):
        raise ShapeError("conv3x3: bias shape mismatch")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(weight.data)
    out = Tensor._wrap(kernels.conv3x3_fwd(xd, wd, np.ascontiguousarray(bias.data)))

    def bwd(g):
        g = np.ascontiguousarray(g)
        _acc(x, kernels.conv3x3_grad_x(g, wd))
        gw, gb = kernels.conv3x3_grad_w(xd, g)
        _acc(weight, gw)
        _acc(bias, gb)

    record(out, (x, weight, bias), bwd)
    return out


def nearest_resize(x: Tensor, target) -> Tensor:
    """Nearest-neighbour resampling with source index floor(i*h/h2)."""
    h2, w2 = int(target[0]), int(target[1])
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"nearest_resize: bad target {(h2, w2)}")
    if x.data.ndim != 3:
        raise ShapeError(f"nearest_resize: expected 3D input, got {x.data.shape}")
    h, w, _ = x.data.shape
    si = (np.arange(h2, dtype=np.intp) * h) // h2
    sj = (np.arange(w2, dtype=np.intp) * w) // w2
    out = Tensor._wrap(np.ascontiguousarray(x.data[si][:, sj]))

    def bwd(g):
        _acc(x, kernels.scatter_add(np.ascontiguousarray(g), si, sj, h, w))

    record(out, (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# Fourier transforms


def fft2(x: Tensor) -> ComplexTensor:
    """Unnormalized 2D DFT per channel of [h,w,c] (radix-2; naive for non-pow2)."""
    if x.data.ndim != 3:
        raise ShapeError(f"fft2: expected [h,w,c], got {x.data.shape}")
    out = ComplexTensor._wrap(kernels.fft2_raw(x.data))

    def bwd(g):
        # adjoint of the forward transform is the unnormalized inverse
        _acc(x, np.ascontiguousarray(kernels.fft2_raw(g, inverse=True).real))

    record(out, (x,), bwd)
    return out


def hermitian_defect(arr: np.ndarray) -> float:
    """max |X[k] - conj(X[-k])| over the first two axes."""
    h, w = arr.shape[:2]
    mirror = arr[np.ix_((h - np.arange(h)) % h, (w - np.arange(w)) % w)]
    return float(np.max(np.abs(arr - np.conj(mirror))))


def ifft2(X: ComplexTensor, sym_tol: float = 1e-5, imag_tol: float = 1e-6) -> Tensor:
    """Inverse 2D DFT with 1/(hw) normalization; input must be Hermitian."""
    if X.data.ndim != 3:
        raise ShapeError(f"ifft2: expected [h,w,c], got {X.data.shape}")
    h, w, _ = X.data.shape
    scale = np.max(np.abs(X.data))
    if scale > 0 and hermitian_defect(X.data) > sym_tol * scale:
        raise SymmetryError("ifft2: spectrum violates Hermitian symmetry")
    yc = kernels.fft2_raw(X.data, inverse=True) / (h * w)
    ymax = np.max(np.abs(yc.real))
    if ymax > 0 and np.max(np.abs(yc.imag)) > imag_tol * ymax:
        raise SymmetryError("ifft2: imaginary residue exceeds tolerance")
    out = Tensor._wrap(np.ascontiguousarray(yc.real))

    def bwd(g):
        _acc(X, kernels.fft2_raw(g.astype(np.complex128)) / (h * w))

    record(out, (X,), bwd)
    return out


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, x: Tensor, step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients."""
    _TAPE.clear()
    x.zero_grad()
    x.requires_grad = True
    loss = f(x)
    backward(loss)
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    x.requires_grad = False

    worst = 0.0
    flat = x.data.reshape(-1)
    ana = analytic.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(x).item()
            flat[i] = orig - step
            lo = f(x).item()
            flat[i] = orig
            num = (hi - lo) / (2.0 * step)
            err = abs(ana[i] - num) / (abs(ana[i]) + abs(num) + 1e-8)
            worst = max(worst, err)
    return worst
