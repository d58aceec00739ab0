import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipolar_lab.errors import UsageError
from dipolar_lab.kernel import KernelSpec, full_multiplier
from dipolar_lab.spectral import (Field, Grid3, MultiplierTable, Space, convolve_multiplier,
                                  dealias_mask, fft_forward, fft_inverse, l2_norm, laplacian,
                                  read_field, read_multiplier, write_field, write_multiplier)


def random_field(grid, seed):
    r = np.random.default_rng(seed)
    return Field(grid, r.normal(size=grid.shape) + 1j * r.normal(size=grid.shape))


@pytest.mark.parametrize("n", [4, 6, 16])
def test_wavenumbers_cover_centered_range(n):
    g = Grid3(n, 3.0)
    m = np.sort(g.mode_index)
    assert np.array_equal(m, np.arange(-n // 2, n // 2))
    assert np.count_nonzero(g.k1d == 0) == 1
    assert np.allclose(g.k1d, g.dk * g.mode_index)


@pytest.mark.parametrize("n,L", [(3, 1.0), (7, 1.0), (2, 1.0), (8, 0.0), (8, -1.0)])
def test_invalid_grid(n, L):
    with pytest.raises(UsageError):
        Grid3(n, L)


def test_constant_maps_to_delta(small_grid):
    g = small_grid
    f = fft_forward(Field(g, np.full(g.shape, 2.5)))
    expected = np.zeros(g.shape)
    expected[0, 0, 0] = 2.5 * g.L**3
    assert np.allclose(f.values, expected, atol=1e-10)


def test_plane_wave_single_coefficient(small_grid):
    g = small_grid
    x, _, _ = g.positions()
    f = fft_forward(Field(g, np.broadcast_to(np.exp(1j * g.dk * x), g.shape)))
    nz = np.argwhere(np.abs(f.values) > 1e-9)
    assert nz.tolist() == [[1, 0, 0]]
    assert f.values[1, 0, 0] == pytest.approx(g.L**3)


@settings(max_examples=10, deadline=None)
@given(n=st.sampled_from([8, 16, 32]), seed=st.integers(0, 2**31 - 1))
def test_round_trip_and_parseval(n, seed):
    g = Grid3(n, 5.0)
    f = random_field(g, seed)
    back = fft_inverse(fft_forward(f))
    assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))
    fh = fft_forward(f)
    lhs = np.sqrt(np.sum(np.abs(f.values) ** 2)) * g.dx**1.5
    rhs = np.sqrt(np.sum(np.abs(fh.values) ** 2)) * (g.dk / (2 * np.pi)) ** 1.5
    assert abs(lhs - rhs) <= 1e-12 * lhs
    assert l2_norm(f) == pytest.approx(l2_norm(fh), rel=1e-12)


def test_wrong_space_rejected(small_grid):
    f = random_field(small_grid, 1)
    with pytest.raises(UsageError):
        fft_inverse(f)
    with pytest.raises(UsageError):
        fft_forward(fft_forward(f))


def test_laplacian_eigenfunctions(small_grid):
    g = small_grid
    x, y, _ = g.positions()
    q = g.dk
    e = Field(g, np.broadcast_to(np.exp(1j * q * x), g.shape))
    assert np.allclose(laplacian(e).values, -q**2 * e.values, atol=1e-12)
    s = Field(g, np.broadcast_to(np.sin(q * y), g.shape))
    assert np.allclose(laplacian(s).values, -q**2 * s.values, atol=1e-12)
    c = Field(g, np.full(g.shape, 3.0))
    assert np.allclose(laplacian(c).values, 0, atol=1e-12)


def test_laplacian_frequency_space_and_reality(small_grid):
    g = small_grid
    r = np.random.default_rng(3)
    f = Field(g, r.normal(size=g.shape))
    lap = laplacian(f)
    assert np.max(np.abs(lap.values.imag)) < 1e-12 * np.max(np.abs(lap.values.real))
    via_freq = fft_inverse(laplacian(fft_forward(f)))
    assert np.allclose(via_freq.values, lap.values, atol=1e-10)


def test_convolve_identity_and_linearity(small_grid):
    g = small_grid
    f, h = random_field(g, 4), random_field(g, 5)
    one = MultiplierTable.constant(g, 1.0)
    assert np.allclose(convolve_multiplier(f, one).values, f.values, atol=1e-12)
    m = MultiplierTable(g, np.random.default_rng(6).normal(size=g.shape))
    alpha, beta = 0.3 - 1.2j, 2.0
    lhs = convolve_multiplier(alpha * f + beta * h, m).values
    rhs = alpha * convolve_multiplier(f, m).values + beta * convolve_multiplier(h, m).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))


def test_gaussian_convolution_closed_form():
    g = Grid3(64, 24.0)
    s, sigma = 0.7, 1.1
    k2 = g.k2
    w_hat = MultiplierTable(g, np.exp(-0.5 * s**2 * k2))
    f = Field(g, np.exp(-g.r2() / (2 * sigma**2)))
    v2 = sigma**2 + s**2
    expected = (sigma**2 / v2) ** 1.5 * np.exp(-g.r2() / (2 * v2))
    assert np.max(np.abs(convolve_multiplier(f, w_hat).values - expected)) < 1e-8


def test_dipolar_multiplier_kills_constants(small_grid):
    g = small_grid
    K = full_multiplier(KernelSpec.dipolar(), g)
    out = convolve_multiplier(Field(g, np.full(g.shape, 1.7)), K)
    assert np.max(np.abs(out.values)) < 1e-12


def test_grid_mismatch_rejected(small_grid):
    f = random_field(small_grid, 7)
    with pytest.raises(UsageError):
        convolve_multiplier(f, MultiplierTable.constant(Grid3(8, 12.0), 1.0))
    with pytest.raises(UsageError):
        f + random_field(Grid3(16, 11.0), 8)


def test_dealias_mask(small_grid):
    mask = dealias_mask(small_grid)
    keep = np.abs(small_grid.mode_index) < small_grid.n / 3
    assert mask.sum() == keep.sum() ** 3
    assert mask[0, 0, 0]


def test_field_binary_round_trip_and_layout(tmp_path):
    g = Grid3(4, 2.5)
    f = random_field(g, 9)
    path = tmp_path / "f.bin"
    write_field(path, f)
    raw = path.read_bytes()
    magic, version, payload, space = struct.unpack_from("<8sIBB2x", raw, 0)
    assert (magic, version, payload, space) == (b"DIPGPFLD", 1, 0, 0)
    n, L = struct.unpack_from("<Qd", raw, 16)
    assert (n, L) == (4, 2.5)
    # x-fastest: the second complex value is index (1, 0, 0)
    re1, im1 = struct.unpack_from("<dd", raw, 32 + 16)
    assert complex(re1, im1) == f.values[1, 0, 0]
    assert len(raw) == 32 + 16 * 64
    back = read_field(path)
    assert back.grid == g and back.space is Space.POSITION
    assert np.array_equal(back.values, f.values)


def test_multiplier_binary_round_trip(tmp_path):
    g = Grid3(8, 4.0)
    m = full_multiplier(KernelSpec.dipolar((1, 1, 0)), g)
    path = tmp_path / "m.bin"
    write_multiplier(path, m)
    assert np.array_equal(read_multiplier(path).values, m.values)
    with pytest.raises(UsageError):
        read_field(path)


def test_corrupt_file_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTAFILE" + bytes(40))
    with pytest.raises(UsageError):
        read_field(path)
