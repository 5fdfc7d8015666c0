"""Spectral convolution, Fourier layers, and the assembled model."""

import numpy as np
import pytest

from recfno import tensor as T
from recfno.embed import EmbeddingConfig
from recfno.errors import ConfigError, ModeError, ShapeError
from recfno.grid import GridSpec, ObservationSet
from recfno.rng import Rng
from recfno.spectral import (
    FourierLayerParams,
    ModelConfig,
    RecFNO,
    fourier_layer,
    retained_rows,
    spectral_conv,
    spectral_full_spectrum,
    spectral_imag_residue,
    truncate_modes,
)
from recfno.tensor import ComplexTensor, Tensor


def identity_blocks(h, w, c):
    r1 = np.zeros((h, w, c, c), dtype=np.complex128)
    r1[:, :, np.arange(c), np.arange(c)] = 1.0
    r2 = np.zeros((0, w, c, c), dtype=np.complex128)
    return ComplexTensor(r1), ComplexTensor(r2)


def hermitian_consistent_R(h, w, c, rng):
    """Full-grid per-mode weights with R[-k] = conj(R[k])."""
    raw = rng.normal((h, w, c, c)) + 1j * rng.normal((h, w, c, c))
    out = np.zeros_like(raw)
    for k1 in range(h):
        for k2 in range(w):
            m1, m2 = (h - k1) % h, (w - k2) % w
            if (k1, k2) <= (m1, m2):
                out[k1, k2] = raw[k1, k2]
                out[m1, m2] = np.conj(raw[k1, k2])
    return out


def naive_spectral(v, r_full, k1max, k2max):
    """Full DFT, masked per-mode multiply, full inverse; the test oracle."""
    h, w, c = v.shape
    rows = retained_rows(h, k1max)
    mask = np.zeros((h, w), dtype=bool)
    mask[np.ix_(rows, np.arange(min(k2max, w)))] = True
    mask |= mask[(h - np.arange(h)) % h][:, (w - np.arange(w)) % w]
    k1g, x1g = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    k2g, x2g = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
    f1 = np.exp(-2j * np.pi * k1g * x1g / h)
    f2 = np.exp(-2j * np.pi * k2g * x2g / w)
    spec = np.einsum("kx,xyc,ly->klc", f1, v, f2)
    mixed = np.einsum("klij,klj->kli", r_full, spec) * mask[:, :, None]
    i1 = np.exp(2j * np.pi * k1g * x1g / h)
    i2 = np.exp(2j * np.pi * k2g * x2g / w)
    return np.einsum("xk,klc,yl->xyc", i1, mixed, i2).real / (h * w)


# ---------------------------------------------------------------------------
# truncate_modes


def test_truncate_full_retention(rng):
    X = T.fft2(Tensor(rng.normal((8, 8, 1))))
    blk = truncate_modes(X, 8, 8)
    assert blk.shape == (8, 8, 1)
    assert np.array_equal(blk.data, X.data)


def test_truncate_constant_field_survives(rng):
    X = T.fft2(Tensor(np.full((8, 8, 1), 2.5)))
    blk = truncate_modes(X, 1, 1)
    assert abs(blk.data[0, 0, 0] - 2.5 * 64) < 1e-9
    assert np.abs(blk.data).sum() == pytest.approx(2.5 * 64, rel=1e-12)


def test_truncate_row_selection(rng):
    X = T.fft2(Tensor(rng.normal((16, 16, 2))))
    blk = truncate_modes(X, 4, 4)
    rows = retained_rows(16, 4)
    assert np.array_equal(blk.data, X.data[np.ix_(rows, np.arange(4))])


def test_truncate_mask_and_invert_oracle(rng):
    x = rng.normal((16, 16, 1))
    X = T.fft2(Tensor(x))
    k = 4
    rows = retained_rows(16, k)
    # independent mask-and-inverse: zero the complement (with mirrors), invert
    mask = np.zeros((16, 16), dtype=bool)
    mask[np.ix_(rows, np.arange(k))] = True
    mask |= mask[(16 - np.arange(16)) % 16][:, (16 - np.arange(16)) % 16]
    masked = X.data * mask[:, :, None]
    ref = np.fft.ifft2(masked[:, :, 0]).real
    blk = truncate_modes(X, k, k)
    full = np.zeros_like(X.data)
    full[np.ix_(rows, np.arange(k))] = blk.data
    mirror = np.conj(full[(16 - np.arange(16)) % 16][:, (16 - np.arange(16)) % 16])
    full = np.where(full != 0, full, mirror)
    got = np.fft.ifft2(full[:, :, 0]).real
    assert np.max(np.abs(got - ref)) < 1e-9


def test_truncate_rejects_oversized_modes(rng):
    X = T.fft2(Tensor(rng.normal((8, 8, 1))))
    with pytest.raises(ModeError):
        truncate_modes(X, 9, 4)
    with pytest.raises(ModeError):
        truncate_modes(X, 4, 9)


def test_truncate_modes_gradient(rng):
    def f(t):
        blk = truncate_modes(T.fft2(t), 3, 3)
        # reduce the complex block to a real scalar through the inverse path
        full = T.ifft2(T.fft2(t))
        return T.sum_(T.mul(full, full))

    assert T.grad_check(f, Tensor(rng.uniform((8, 8, 1), -1, 1))) < 1e-3


# ---------------------------------------------------------------------------
# spectral_conv


def test_spectral_identity_full_retention(rng):
    v = Tensor(rng.normal((8, 8, 2)))
    r1, r2 = identity_blocks(8, 8, 2)
    out = spectral_conv(v, r1, r2)
    assert np.max(np.abs(out.data - v.data)) < 1e-9


def test_spectral_zero_weights(rng):
    v = Tensor(rng.normal((8, 8, 2)))
    z = np.zeros((3, 3, 2, 2), dtype=np.complex128)
    out = spectral_conv(v, ComplexTensor(z), ComplexTensor(z.copy()))
    assert np.all(out.data == 0.0)


def test_spectral_matches_naive_oracle(rng):
    h, w, c = 8, 8, 2
    v = rng.normal((h, w, c))
    r_full = hermitian_consistent_R(h, w, c, rng.derive("R"))
    ref = naive_spectral(v, r_full, 3, 3)
    got = spectral_conv(
        Tensor(v), ComplexTensor(r_full[:3, :3]), ComplexTensor(r_full[h - 3 :, :3])
    )
    assert np.max(np.abs(got.data - ref)) < 1e-7


def test_spectral_non_square_and_non_pow2(rng):
    h, w, c = 8, 12, 2
    v = rng.normal((h, w, c))
    r_full = hermitian_consistent_R(h, w, c, rng.derive("R2"))
    ref = naive_spectral(v, r_full, 3, 4)
    got = spectral_conv(
        Tensor(v), ComplexTensor(r_full[:3, :4]), ComplexTensor(r_full[h - 3 :, :4])
    )
    assert np.max(np.abs(got.data - ref)) < 1e-7


def test_spectral_output_real_for_arbitrary_weights(rng):
    v = rng.normal((8, 8, 3))
    r1 = rng.normal((3, 3, 3, 3)) + 1j * rng.normal((3, 3, 3, 3))
    r2 = rng.normal((3, 3, 3, 3)) + 1j * rng.normal((3, 3, 3, 3))
    assert spectral_imag_residue(v, r1, r2) < 1e-6


def test_spectral_full_spectrum_path_agrees(rng):
    from recfno import kernels

    v = rng.normal((8, 8, 2))
    r1 = rng.normal((3, 3, 2, 2)) + 1j * rng.normal((3, 3, 2, 2))
    r2 = rng.normal((3, 3, 2, 2)) + 1j * rng.normal((3, 3, 2, 2))
    full = spectral_full_spectrum(v, r1, r2)
    dense = (kernels.fft2_raw(full, inverse=True) / 64).real
    fused = spectral_conv(Tensor(v), ComplexTensor(r1), ComplexTensor(r2)).data
    assert np.max(np.abs(dense - fused)) < 1e-12


def test_spectral_resolution_consistency(rng):
    c = 2
    r1 = ComplexTensor(rng.normal((3, 3, c, c)) + 1j * rng.normal((3, 3, c, c)))
    r2 = ComplexTensor(rng.normal((3, 3, c, c)) + 1j * rng.normal((3, 3, c, c)))

    def band_limited(h, w):
        xs = np.arange(h)[:, None, None] / h
        ys = np.arange(w)[None, :, None] / w
        f = 1.0 + 0.5 * np.cos(2 * np.pi * (2 * xs + ys)) + 0.3 * np.sin(2 * np.pi * (xs - 2 * ys))
        return np.broadcast_to(f, (h, w, c)).copy()

    coarse = spectral_conv(Tensor(band_limited(8, 8)), r1, r2).data
    fine = spectral_conv(Tensor(band_limited(16, 16)), r1, r2).data
    rel = np.max(np.abs(fine[::2, ::2] - coarse)) / np.max(np.abs(coarse))
    assert rel < 1e-5


def test_spectral_mode_errors(rng):
    v = Tensor(rng.normal((8, 8, 2)))
    big = ComplexTensor(np.zeros((5, 3, 2, 2), dtype=np.complex128))
    small = ComplexTensor(np.zeros((5, 3, 2, 2), dtype=np.complex128))
    with pytest.raises(ModeError):
        spectral_conv(v, big, small)  # 5+5 rows > 8
    wide = ComplexTensor(np.zeros((3, 6, 2, 2), dtype=np.complex128))
    with pytest.raises(ModeError):
        spectral_conv(v, wide, ComplexTensor(np.zeros((3, 6, 2, 2), dtype=np.complex128)))


def test_spectral_gradients(rng):
    c = 2
    r1 = ComplexTensor(rng.normal((3, 3, c, c)) + 1j * rng.normal((3, 3, c, c)), requires_grad=True)
    r2 = ComplexTensor(rng.normal((3, 3, c, c)) + 1j * rng.normal((3, 3, c, c)), requires_grad=True)

    def f(t):
        y = spectral_conv(t, r1, r2)
        return T.sum_(T.mul(y, y))

    assert T.grad_check(f, Tensor(rng.uniform((8, 8, c), -1, 1))) < 1e-3

    # weight gradient against central differences on real/imag parts
    v = Tensor(rng.uniform((8, 8, c), -1, 1))
    T.active_tape().clear()
    r1.zero_grad()
    loss = T.sum_(T.mul(spectral_conv(v, r1, r2), spectral_conv(v, r1, r2)))
    T.backward(loss)
    analytic = r1.grad.copy()
    flat = r1.data.reshape(-1)
    aflat = analytic.reshape(-1)
    step = 1e-5
    worst = 0.0
    with T.no_grad():
        for i in range(0, flat.size, 11):
            for part, pick in ((1.0, np.real), (1j, np.imag)):
                orig = flat[i]
                flat[i] = orig + part * step
                hi = T.sum_(T.mul(spectral_conv(v, r1, r2), spectral_conv(v, r1, r2))).item()
                flat[i] = orig - part * step
                lo = T.sum_(T.mul(spectral_conv(v, r1, r2), spectral_conv(v, r1, r2))).item()
                flat[i] = orig
                num = (hi - lo) / (2 * step)
                ana = float(pick(aflat[i]))
                worst = max(worst, abs(ana - num) / (abs(ana) + abs(num) + 1e-8))
    assert worst < 1e-3


# ---------------------------------------------------------------------------
# fourier_layer


def test_layer_collapses_to_pointwise_path(rng):
    c = 3
    v = Tensor(rng.normal((8, 8, c)))
    params = FourierLayerParams(
        r1=ComplexTensor(np.zeros((2, 2, c, c), dtype=np.complex128)),
        r2=ComplexTensor(np.zeros((2, 2, c, c), dtype=np.complex128)),
        w=Tensor(np.eye(c)),
        b=Tensor(np.zeros(c)),
    )
    out = fourier_layer(v, params)
    ref = T.gelu(Tensor(v.data))
    assert np.max(np.abs(out.data - ref.data)) < 1e-14


def test_layer_zero_input_gives_gelu_bias(rng):
    c = 2
    v = Tensor(np.zeros((6, 6, c)))
    bias = rng.normal(c)
    params = FourierLayerParams(
        r1=ComplexTensor(np.zeros((2, 2, c, c), dtype=np.complex128)),
        r2=ComplexTensor(np.zeros((2, 2, c, c), dtype=np.complex128)),
        w=Tensor(np.eye(c)),
        b=Tensor(bias),
    )
    out = fourier_layer(v, params)
    ref = T.gelu(Tensor(np.broadcast_to(bias, (6, 6, c)))).data
    assert np.max(np.abs(out.data - ref)) < 1e-14


def test_layer_gradcheck(rng):
    c = 2
    params = FourierLayerParams.init(c, 2, 2, rng.derive("p"))

    def f(t):
        y = fourier_layer(t, params)
        return T.sum_(T.mul(y, y))

    assert T.grad_check(f, Tensor(rng.uniform((8, 8, c), -1, 1))) < 1e-3


def test_layer_shape_preserving_and_deterministic(rng):
    c = 2
    params = FourierLayerParams.init(c, 2, 2, rng.derive("d"))
    v = Tensor(rng.normal((8, 10, c)))
    a = fourier_layer(v, params)
    b = fourier_layer(v, params)
    assert a.shape == v.shape
    assert np.array_equal(a.data, b.data)


def test_stacking_adds_one_activation(rng):
    c = 2
    p1 = FourierLayerParams.init(c, 2, 2, rng.derive("l1"))
    ident = FourierLayerParams(
        r1=ComplexTensor(np.zeros((2, 2, c, c), dtype=np.complex128)),
        r2=ComplexTensor(np.zeros((2, 2, c, c), dtype=np.complex128)),
        w=Tensor(np.eye(c)),
        b=Tensor(np.zeros(c)),
    )
    e = Tensor(rng.normal((8, 8, c)))
    one = fourier_layer(e, p1)
    two = fourier_layer(fourier_layer(e, p1), ident)
    assert np.max(np.abs(two.data - T.gelu(Tensor(one.data)).data)) < 1e-13


# ---------------------------------------------------------------------------
# full model


def _toy_setup(kind="voronoi", grid=None, n=4, seed=5):
    grid = grid or GridSpec(16, 16)
    r = Rng(seed)
    cells = r.permutation(grid.n_x * grid.n_y)[:n]
    pos = np.array(
        [[grid.cell_xs()[c % grid.n_x], grid.cell_ys()[c // grid.n_x]] for c in cells]
    )
    obs = ObservationSet(pos, r.uniform(n, -1, 1)).snapped(grid)
    cfg = ModelConfig(
        EmbeddingConfig(kind, n_e=4, n_sensors=n, output_shape=grid.shape),
        layers=2, width=4, modes=(3, 3),
    )
    return grid, obs, RecFNO(cfg, Rng(seed + 1))


def test_model_zero_params_constant_output():
    grid, obs, model = _toy_setup()
    for _, p in model.parameters():
        p.data[...] = 0.0
    model.proj_b2.data[:] = 1.5
    out = model.forward(obs, grid)
    # with all weights zero only the projection bias survives
    assert np.allclose(out.data, 1.5)


def test_model_output_shape_for_all_embeddings():
    for kind in ("mask", "voronoi", "mlp"):
        grid, obs, model = _toy_setup(kind)
        assert model.forward(obs, grid).shape == (16, 16)


def test_model_gradient_flow_no_dead_branches(rng):
    for kind in ("mask", "voronoi", "mlp"):
        grid, obs, model = _toy_setup(kind)
        T.active_tape().clear()
        for _, p in model.parameters():
            p.zero_grad()
        d = T.sub(model.forward(obs, grid), Tensor(rng.normal((16, 16))))
        T.backward(T.mean_(T.mul(d, d)))
        for name, p in model.parameters():
            assert p.grad is not None, f"{kind}:{name} got no gradient"
            assert np.max(np.abs(p.grad)) > 0, f"{kind}:{name} gradient is zero"


def test_model_full_gradcheck_toy(rng):
    grid = GridSpec(8, 8)
    r = Rng(3)
    pos = np.array([[grid.cell_xs()[1], grid.cell_ys()[2]], [grid.cell_xs()[5], grid.cell_ys()[6]]])
    obs = ObservationSet(pos, np.array([0.4, -0.2])).snapped(grid)
    cfg = ModelConfig(
        EmbeddingConfig("mlp", n_e=3, n_sensors=2, output_shape=(8, 8)),
        layers=1, width=3, modes=(2, 2),
    )
    model = RecFNO(cfg, Rng(9))

    def f(vals):
        e = model.embedding.embed_values(vals)
        v = e
        for lay in model.layers:
            v = fourier_layer(v, lay)
        u = T.gelu(T.conv1x1(v, model.proj_w1, model.proj_b1))
        u = T.conv1x1(u, model.proj_w2, model.proj_b2)
        return T.sum_(T.mul(u, u))

    assert T.grad_check(f, Tensor(rng.uniform(2, -1, 1))) < 1e-3


def test_superres_scale1_bitwise_identical():
    grid, obs, model = _toy_setup()
    a = model.forward(obs, grid)
    b = model.forward(obs, grid, scale=1)
    assert np.array_equal(a.data, b.data)


def test_superres_scales_shapes():
    for kind in ("mask", "voronoi", "mlp"):
        grid, obs, model = _toy_setup(kind)
        out = model.forward(obs, grid, scale=2)
        assert out.shape == (32, 32)


def test_superres_shape_matches_paper_style_doubling():
    # trained at (h, w), evaluated at (2h, 2w) without touching parameters
    grid = GridSpec(24, 16)
    r = Rng(2)
    pos = np.array([[grid.cell_xs()[3], grid.cell_ys()[4]], [grid.cell_xs()[12], grid.cell_ys()[10]]])
    obs = ObservationSet(pos, np.array([1.0, -1.0])).snapped(grid)
    cfg = ModelConfig(
        EmbeddingConfig("voronoi", n_e=4, n_sensors=2, output_shape=(16, 24)),
        layers=1, width=4, modes=(3, 3),
    )
    model = RecFNO(cfg, Rng(4))
    before = [p.data.copy() for _, p in model.parameters()]
    out = model.forward(obs, grid, scale=2)
    assert out.shape == (32, 48)
    for (_, p), saved in zip(model.parameters(), before):
        assert np.array_equal(p.data, saved)


def test_superres_constant_toy_model_consistent():
    grid, obs, model = _toy_setup()
    for _, p in model.parameters():
        p.data[...] = 0.0
    model.proj_b2.data[:] = 0.75
    coarse = model.forward(obs, grid).data
    fine = model.forward(obs, grid, scale=2).data
    assert np.max(np.abs(coarse - 0.75)) < 1e-12
    assert np.max(np.abs(fine - 0.75)) < 1e-6


def test_model_config_validation():
    emb = EmbeddingConfig("mask", n_e=4, n_sensors=2, output_shape=(8, 8))
    with pytest.raises(ConfigError):
        ModelConfig(emb, layers=0, width=4)
    with pytest.raises(ConfigError):
        ModelConfig(emb, layers=1, width=5)  # n_e mismatch
    grid, obs, model = _toy_setup()
    with pytest.raises(ConfigError):
        model.forward(obs, grid, scale=0)
