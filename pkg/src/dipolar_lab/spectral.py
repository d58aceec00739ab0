"""Periodic grids, continuum-normalized Fourier transforms and multipliers.

The forward transform approximates the continuum transform

    f_hat(k) = int f(x) exp(-i k.x) dx

on the box [-L/2, L/2)^3, so a multiplier table sampled from a continuum
Fourier transform can be applied without extra conversion factors.  The
inverse carries the matching (2 pi / L)^3 / (2 pi)^3 = 1 / L^3 weight.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import UsageError

__all__ = [
    "Grid3",
    "Space",
    "Field",
    "MultiplierTable",
    "fft_forward",
    "fft_inverse",
    "laplacian",
    "convolve_multiplier",
    "dealias_mask",
    "l2_norm",
    "write_field",
    "read_field",
    "write_multiplier",
    "read_multiplier",
    "set_fft_workers",
]

_FFT_WORKERS = None


def set_fft_workers(workers):
    """Cap the number of threads used by every transform (None = scipy default)."""
    global _FFT_WORKERS
    _FFT_WORKERS = workers


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic box with ``n`` points per axis and edge length ``L``.

    Arrays on the grid are indexed ``[ix, iy, iz]``.  Position nodes are
    ``-L/2 + j*dx``; wavenumbers follow the FFT ordering, which as a set is
    ``(2 pi / L) * {-n/2, ..., n/2 - 1}``.
    """

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise UsageError(f"grid size n must be an even integer >= 4, got {self.n!r}")
        if not self.L > 0:
            raise UsageError(f"box length L must be positive, got {self.L!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self):
        return self.L / self.n

    @property
    def dk(self):
        return 2 * np.pi / self.L

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @cached_property
    def x1d(self):
        return -self.L / 2 + self.dx * np.arange(self.n)

    @cached_property
    def k1d(self):
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def mode_index(self):
        """Integer mode numbers m with k = (2 pi / L) m, FFT ordered."""
        return np.rint(self.k1d / self.dk).astype(np.int64)

    def positions(self):
        return np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij", sparse=True)

    def wavevectors(self):
        return np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij", sparse=True)

    @cached_property
    def k2(self):
        kx, ky, kz = self.wavevectors()
        return kx**2 + ky**2 + kz**2

    @cached_property
    def _shift_sign(self):
        # exp(i k L/2) = (-1)^m accounts for the box starting at -L/2
        s = np.where(self.mode_index % 2 == 0, 1.0, -1.0)
        return s[:, None, None] * s[None, :, None] * s[None, None, :]

    def r2(self):
        x, y, z = self.positions()
        return x**2 + y**2 + z**2


class Space(enum.Enum):
    POSITION = "position"
    FREQUENCY = "frequency"


@dataclass(frozen=True, eq=False)
class Field:
    """Complex scalar field on a :class:`Grid3` in position or frequency space."""

    grid: Grid3
    values: np.ndarray
    space: Space = Space.POSITION

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            raise UsageError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values.astype(np.complex128, copy=False))

    def with_values(self, values, space=None):
        return Field(self.grid, values, self.space if space is None else space)

    def density(self):
        return np.abs(self.values) ** 2

    def __add__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


def _check_compatible(f, g):
    if f.grid != g.grid:
        raise UsageError("fields live on different grids")
    if f.space is not g.space:
        raise UsageError("fields live in different spaces")


@dataclass(frozen=True, eq=False)
class MultiplierTable:
    """Real Fourier multiplier sampled at the wavevectors of a grid (FFT order)."""

    grid: Grid3
    values: np.ndarray
    label: str = field(default="")

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise UsageError(f"multiplier shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def __add__(self, other):
        if other.grid != self.grid:
            raise UsageError("multipliers tabulated on different grids")
        return MultiplierTable(self.grid, self.values + other.values)

    def __sub__(self, other):
        if other.grid != self.grid:
            raise UsageError("multipliers tabulated on different grids")
        return MultiplierTable(self.grid, self.values - other.values)

    def scaled(self, factor):
        return MultiplierTable(self.grid, factor * self.values, self.label)

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))


def _fftn(a):
    return scipy.fft.fftn(a, workers=_FFT_WORKERS)


def _ifftn(a):
    return scipy.fft.ifftn(a, workers=_FFT_WORKERS)


def forward_array(grid, values):
    return _fftn(values) * (grid._shift_sign * grid.dx**3)


def inverse_array(grid, values):
    return _ifftn(values * grid._shift_sign) * (grid.n**3 / grid.L**3)


def fft_forward(f):
    if f.space is not Space.POSITION:
        raise UsageError("fft_forward expects a position-space field")
    return Field(f.grid, forward_array(f.grid, f.values), Space.FREQUENCY)


def fft_inverse(f):
    if f.space is not Space.FREQUENCY:
        raise UsageError("fft_inverse expects a frequency-space field")
    return Field(f.grid, inverse_array(f.grid, f.values), Space.POSITION)


def laplacian(f):
    """Spectral Laplacian (multiplier -|k|^2); the result stays in ``f``'s space."""
    if f.space is Space.FREQUENCY:
        return f.with_values(-f.grid.k2 * f.values)
    g = f.grid
    return f.with_values(inverse_array(g, -g.k2 * forward_array(g, f.values)))


def convolve_multiplier(f, m):
    """Apply the multiplier ``m``: inverse transform of ``m * f_hat``."""
    if m.grid != f.grid:
        raise UsageError("multiplier tabulated on a different grid than the field")
    if f.space is Space.FREQUENCY:
        return f.with_values(m.values * f.values)
    g = f.grid
    return f.with_values(inverse_array(g, m.values * forward_array(g, f.values)))


def dealias_mask(grid):
    """Boolean 2/3-rule mask keeping |m_j| < n/3 on every axis."""
    keep = np.abs(grid.mode_index) < grid.n / 3
    return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


def l2_norm(f):
    """Continuum L^2 norm; uses Plancherel weights in frequency space."""
    if f.space is Space.POSITION:
        return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.dx**3))
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) / f.grid.L**3))


# --- binary format ---------------------------------------------------------
#
# 16-byte header: 8-byte magic, u32 version, u8 payload (0 complex, 1 real),
# u8 space (0 position, 1 frequency), 2 reserved bytes.  Then n as u64 and L
# as f64 (little endian), then the payload in x-fastest order, complex values
# as interleaved re/im f64.

MAGIC = b"DIPGPFLD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIBB2x")
_DIMS = struct.Struct("<Qd")


def _write(path, grid, payload, real, space):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 1 if real else 0,
                              0 if space is Space.POSITION else 1))
        fh.write(_DIMS.pack(grid.n, grid.L))
        flat = np.ravel(payload, order="F")
        if real:
            fh.write(flat.astype("<f8").tobytes())
        else:
            inter = np.empty(2 * flat.size, dtype="<f8")
            inter[0::2] = flat.real
            inter[1::2] = flat.imag
            fh.write(inter.tobytes())


def _read(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + _DIMS.size:
        raise UsageError(f"{path}: truncated header")
    magic, version, real, space = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise UsageError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UsageError(f"{path}: unsupported format version {version}")
    n, L = _DIMS.unpack_from(data, _HEADER.size)
    grid = Grid3(int(n), L)
    raw = np.frombuffer(data, dtype="<f8", offset=_HEADER.size + _DIMS.size)
    count = n**3 * (1 if real else 2)
    if raw.size != count:
        raise UsageError(f"{path}: payload has {raw.size} values, expected {count}")
    vals = raw if real else raw[0::2] + 1j * raw[1::2]
    vals = vals.reshape(grid.shape, order="F")
    return grid, vals, bool(real), Space.POSITION if space == 0 else Space.FREQUENCY


def write_field(path, f):
    _write(path, f.grid, f.values, False, f.space)


def read_field(path):
    grid, vals, real, space = _read(path)
    if real:
        raise UsageError(f"{path}: file holds a real multiplier, not a field")
    return Field(grid, vals, space)


def write_multiplier(path, m):
    _write(path, m.grid, m.values, True, Space.FREQUENCY)


def read_multiplier(path):
    grid, vals, real, _ = _read(path)
    if not real:
        raise UsageError(f"{path}: file holds a complex field, not a multiplier")
    return MultiplierTable(grid, vals)
