"""Singular kernels K(x) = Omega(x/|x|) / |x|^3 and their Fourier multipliers.

The transform of the inner truncation 1_{|x|<=R} K is evaluated from

    int_{S^2} int_0^R (cos(r k.w) - 1) / r * Omega(w) dr dsigma(w)

with composite Gauss-Legendre quadrature in r and a spherical product rule
aligned with k.  The full multiplier is its R -> infinity limit and the
exterior multiplier 1_{|x|>R} K is the difference of the two.  For the
dipolar angular function closed forms are available and are checked against
the quadrature before use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy import special

from .errors import KernelValidationError, NumericalAccuracyError, ValidationError
from .spectral import Grid3, MultiplierTable

__all__ = [
    "SphereRule",
    "KernelSpec",
    "inner_truncated_transform",
    "large_radius_limit",
    "full_multiplier",
    "exterior_multiplier",
    "dipolar_full",
    "dipolar_inner",
    "dipolar_exterior",
    "truncation_bound_scan",
    "fibonacci_directions",
    "DIPOLAR_SUP",
    "DIPOLAR_INF",
]

DIPOLAR_SUP = 8 * np.pi / 3
DIPOLAR_INF = -4 * np.pi / 3


@dataclass(frozen=True)
class SphereRule:
    """Gauss-Legendre (in cos theta) x trapezoid (in phi) product rule.

    Integrates spherical polynomials of total degree <= ``degree`` exactly.
    """

    degree: int = 23

    @cached_property
    def _nodes(self):
        n_theta = self.degree // 2 + 1
        n_phi = self.degree + 1
        c, wc = np.polynomial.legendre.leggauss(n_theta)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        C, PHI = np.meshgrid(c, phi, indexing="ij")
        S = np.sqrt(1 - C**2)
        pts = np.stack([S * np.cos(PHI), S * np.sin(PHI), C], axis=-1).reshape(-1, 3)
        w = (wc[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]).ravel()
        return pts, w, C.ravel(), PHI.ravel()

    @property
    def points(self):
        return self._nodes[0]

    @property
    def weights(self):
        return self._nodes[1]

    @property
    def size(self):
        return self.weights.size

    def integrate(self, values):
        return float(np.dot(self.weights, values))


def _harmonic_basis(lmax, theta, phi):
    cols = []
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            cols.append(special.sph_harm_y(l, m, theta, phi))
    return np.stack(cols, axis=-1)


@lru_cache(maxsize=32)
def _table_coefficients(table, degree):
    rule = SphereRule(degree)
    pts = rule.points
    theta = np.arccos(np.clip(pts[:, 2], -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    lmax = degree // 2
    Y = _harmonic_basis(lmax, theta, phi)
    vals = np.asarray(table, dtype=float)
    return lmax, (Y.conj() * (rule.weights * vals)[:, None]).sum(axis=0)


@dataclass(frozen=True)
class KernelSpec:
    """Angular function Omega and inner truncation radius R.

    ``kind`` is ``"dipolar"`` (Omega = 1 - 3 (n.w)^2 with unit ``axis`` n) or
    ``"table"`` (values of Omega at the nodes of ``SphereRule(table_degree)``,
    in rule order).  Tables are resolved through their spherical-harmonic
    expansion up to degree ``table_degree // 2``.
    """

    kind: str = "dipolar"
    axis: tuple = (0.0, 0.0, 1.0)
    R: float = 1.0
    table: tuple | None = None
    table_degree: int = 23

    def __post_init__(self):
        if self.kind not in ("dipolar", "table"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if not (np.isfinite(self.R) and self.R > 0):
            raise ValidationError(f"truncation radius R must be positive, got {self.R!r}")
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or not np.linalg.norm(axis) > 0:
            raise ValidationError(f"axis must be a nonzero 3-vector, got {self.axis!r}")
        object.__setattr__(self, "axis", tuple(float(a) for a in axis / np.linalg.norm(axis)))
        object.__setattr__(self, "R", float(self.R))
        if self.kind == "table":
            if self.table is None:
                raise ValidationError("table kernel needs Omega values")
            table = tuple(float(v) for v in self.table)
            if len(table) != SphereRule(self.table_degree).size:
                raise ValidationError(
                    f"table has {len(table)} values, rule of degree {self.table_degree} "
                    f"has {SphereRule(self.table_degree).size} nodes")
            object.__setattr__(self, "table", table)

    @classmethod
    def dipolar(cls, axis=(0.0, 0.0, 1.0), R=1.0):
        return cls("dipolar", tuple(axis), R)

    @classmethod
    def from_function(cls, omega, R=1.0, degree=23):
        """Tabulate a callable Omega(points[..., 3]) on the product rule."""
        rule = SphereRule(degree)
        return cls("table", R=R, table=tuple(np.asarray(omega(rule.points), float)),
                   table_degree=degree)

    def with_R(self, R):
        return replace(self, R=R)

    @property
    def is_dipolar(self):
        return self.kind == "dipolar"

    def omega(self, points):
        pts = np.asarray(points, dtype=float)
        if self.kind == "dipolar":
            c = pts @ np.asarray(self.axis)
            return 1.0 - 3.0 * c**2
        lmax, coef = _table_coefficients(self.table, self.table_degree)
        r = np.linalg.norm(pts, axis=-1)
        theta = np.arccos(np.clip(pts[..., 2] / r, -1, 1))
        phi = np.arctan2(pts[..., 1], pts[..., 0])
        return (_harmonic_basis(lmax, theta, phi) @ coef).real

    def circle_average(self, axis, c, n_psi=24, chunk=4096):
        """Mean of Omega over the circles {w : w.axis = c} for each entry of ``c``.

        Tables use the addition theorem (the mean of Y_lm is P_l(c) Y_lm(axis));
        the dipolar function is averaged on ``n_psi`` equispaced nodes.
        """
        c = np.asarray(c, dtype=float)
        axis = np.asarray(axis, dtype=float)
        if self.kind == "table":
            lmax, coef = _table_coefficients(self.table, self.table_degree)
            theta = np.arccos(np.clip(axis[2] / np.linalg.norm(axis), -1, 1))
            phi = np.arctan2(axis[1], axis[0])
            Y = _harmonic_basis(lmax, np.array([theta]), np.array([phi]))[0]
            per_l = np.zeros(lmax + 1)
            i = 0
            for l in range(lmax + 1):
                per_l[l] = (Y[i:i + 2 * l + 1] @ coef[i:i + 2 * l + 1]).real
                i += 2 * l + 1
            return np.polynomial.legendre.legval(c, per_l)
        e1, e2 = _frame(axis)
        psi = 2 * np.pi * np.arange(n_psi) / n_psi
        ring = np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2
        out = np.empty(c.size)
        for lo in range(0, c.size, chunk):
            cc = c[lo:lo + chunk]
            s = np.sqrt(np.clip(1 - cc**2, 0, None))
            pts = cc[:, None, None] * axis + s[:, None, None] * ring[None]
            out[lo:lo + chunk] = self.omega(pts.reshape(-1, 3)).reshape(cc.size, n_psi).mean(axis=1)
        return out

    def cancellation_residual(self, rule=None):
        rule = rule or SphereRule(max(23, self.table_degree))
        return rule.integrate(self.omega(rule.points))

    def parity_residual(self, rule=None):
        rule = rule or SphereRule(max(23, self.table_degree))
        p = rule.points
        return float(np.max(np.abs(self.omega(p) - self.omega(-p))))

    def validate(self, tol=1e-10):
        """Raise :class:`KernelValidationError` unless Omega is even with zero mean."""
        parity = self.parity_residual()
        if parity > tol:
            raise KernelValidationError(
                f"Omega is not even: max |Omega(w) - Omega(-w)| = {parity:.3e}", parity)
        res = self.cancellation_residual()
        if abs(res) > tol:
            raise KernelValidationError(
                f"Omega violates the cancellation property: int Omega dsigma = {res:.6g}", res)
        return self


# --- closed forms for the dipolar angular function ---------------------------

def _cos_axis(k, axis):
    k = np.asarray(k, dtype=float)
    kn = np.linalg.norm(k, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = (k @ np.asarray(axis, dtype=float)) / kn
    return kn, np.where(kn > 0, c, 0.0)


def _j1_over_x(x):
    x = np.asarray(x, dtype=float)
    small = x < 1e-3
    xs = np.where(small, 1.0, x)
    out = special.spherical_jn(1, xs) / xs
    return np.where(small, 1 / 3 - x**2 / 30 + x**4 / 840, out)


def dipolar_full(k, axis=(0, 0, 1)):
    """(4 pi / 3)(3 cos^2 theta_k - 1), with the value 0 at k = 0."""
    kn, c = _cos_axis(k, axis)
    return np.where(kn > 0, 4 * np.pi / 3 * (3 * c**2 - 1), 0.0)


def dipolar_exterior(k, axis=(0, 0, 1), R=1.0):
    """Transform of 1_{|x|>R} K_dip: 8 pi P2(cos theta_k) j1(R|k|) / (R|k|)."""
    kn, c = _cos_axis(k, axis)
    p2 = 0.5 * (3 * c**2 - 1)
    return np.where(kn > 0, 8 * np.pi * p2 * _j1_over_x(R * kn), 0.0)


def dipolar_inner(k, axis=(0, 0, 1), R=1.0):
    """Transform of 1_{|x|<=R} K_dip: 8 pi P2(cos theta_k) (1/3 - j1(R|k|)/(R|k|))."""
    kn, c = _cos_axis(k, axis)
    p2 = 0.5 * (3 * c**2 - 1)
    x = R * kn
    small = x < 1e-3
    val = np.where(small, x**2 / 30 - x**4 / 840, 1 / 3 - _j1_over_x(x))
    return np.where(kn > 0, 8 * np.pi * p2 * val, 0.0)


# --- quadrature --------------------------------------------------------------

def _frame(khat):
    a = np.array([1.0, 0, 0]) if abs(khat[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(khat, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(khat, e1)


@lru_cache(maxsize=16)
def _gauss(p):
    return np.polynomial.legendre.leggauss(p)


def _composite(edges, p):
    x, w = _gauss(p)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return ((a + b) / 2 + half * x).ravel(), (half * w).ravel()


def _radial_integrand(t):
    # (cos t - 1)/t without cancellation near t = 0
    out = np.empty_like(t)
    nz = t != 0
    out[nz] = -2.0 * np.sin(0.5 * t[nz]) ** 2 / t[nz]
    out[~nz] = 0.0
    return out


def _radial_table(xmax, p):
    """Gauss-Legendre panels of width pi/2 on [0, xmax]; returns panel edges and cumulative sums."""
    h = np.pi / 2
    npan = max(1, int(math.ceil(xmax / h)))
    edges = h * np.arange(npan + 1)
    t, w = _composite(edges, p)
    per_panel = (w * _radial_integrand(t)).reshape(npan, p).sum(axis=1)
    return h, np.concatenate([[0.0], np.cumsum(per_panel)])


def _radial_integral(x, p):
    """int_0^x (cos t - 1)/t dt for each x >= 0 (t = r |k.w| rescales the r-integral)."""
    x = np.asarray(x, dtype=float)
    h, cum = _radial_table(float(x.max()) if x.size else 0.0, p)
    j = np.minimum((x // h).astype(np.int64), cum.size - 1)
    start = j * h
    gx, gw = _gauss(p)
    half = 0.5 * (x - start)
    t = (x + start)[:, None] / 2 + half[:, None] * gx[None, :]
    part = (half[:, None] * gw[None, :] * _radial_integrand(t)).sum(axis=1)
    return cum[j] + part


def _inner_once(spec, kvec, R, p, n_psi, p_r):
    kn = float(np.linalg.norm(kvec))
    khat = kvec / kn
    X = R * kn
    npan = max(1, int(math.ceil(X / np.pi)))
    edges = np.linspace(-1.0, 1.0, 2 * npan + 1)
    c, wc = _composite(edges, p)
    azimuthal = 2 * np.pi * spec.circle_average(khat, c, n_psi)
    radial = _radial_integral(X * np.abs(c), p_r)
    return float(np.dot(wc, azimuthal * radial))


def inner_truncated_transform(spec, k, R=None, tol=1e-8, max_doublings=4):
    """Fourier transform of 1_{|x|<=R} K at wavevector ``k``.

    Quadrature orders start at 12 Gauss points per angular panel (exact for
    spherical polynomials of degree 23), 24 azimuthal nodes and 16 radial
    points per panel, and are doubled until two successive results differ by
    less than ``tol``.
    """
    R = spec.R if R is None else float(R)
    if not R > 0:
        raise ValidationError(f"truncation radius must be positive, got {R!r}")
    kvec = np.asarray(k, dtype=float)
    if not np.any(kvec):
        return 0.0
    p, n_psi, p_r = 12, 24, 16
    prev = _inner_once(spec, kvec, R, p, n_psi, p_r)
    for _ in range(max_doublings):
        p, n_psi, p_r = 2 * p, 2 * n_psi, 2 * p_r
        cur = _inner_once(spec, kvec, R, p, n_psi, p_r)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise NumericalAccuracyError(
        f"truncated-kernel quadrature did not converge at k={kvec.tolist()}, R={R}: "
        f"last change {abs(cur - prev):.3e}")


def large_radius_limit(spec, k, radii_kR=(2000.0, 4000.0, 8000.0), tol=1e-5):
    """K_hat(k) as the R -> infinity limit of the truncated transform.

    Evaluated at R |k| in ``radii_kR`` and Richardson-extrapolated in 1/R;
    the last two extrapolants must agree to ``tol``.
    """
    kvec = np.asarray(k, dtype=float)
    kn = float(np.linalg.norm(kvec))
    if kn == 0:
        return 0.0
    vals = [inner_truncated_transform(spec, kvec, X / kn) for X in radii_kR]
    extrap = []
    for (x0, v0), (x1, v1) in zip(zip(radii_kR, vals), zip(radii_kR[1:], vals[1:])):
        # v(X) = v_inf + c / X
        extrap.append((x1 * v1 - x0 * v0) / (x1 - x0))
    if len(extrap) >= 2 and abs(extrap[-1] - extrap[-2]) > tol:
        raise NumericalAccuracyError(
            f"large-R extrapolation disagrees by {abs(extrap[-1] - extrap[-2]):.3e} at k={kvec.tolist()}")
    return extrap[-1]


def _unique_directions(grid):
    """Map each nonzero grid wavevector to a representative direction (k ~ 2k ~ -k)."""
    m = grid.mode_index
    M = np.stack(np.meshgrid(m, m, m, indexing="ij"), axis=-1).reshape(-1, 3)
    g = np.gcd.reduce(np.abs(M), axis=1)
    keys = np.zeros_like(M)
    nz = g > 0
    keys[nz] = M[nz] // g[nz, None]
    # fold parity: first nonzero component positive
    first = np.array([row[np.flatnonzero(row)[0]] if np.any(row) else 1 for row in keys])
    keys = keys * np.sign(first)[:, None]
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1), nz


_VALIDATED_DIPOLAR = set()


def _check_dipolar_fast_path(spec):
    key = spec.axis
    if key in _VALIDATED_DIPOLAR:
        return
    n = np.asarray(spec.axis)
    e1, e2 = _frame(n)
    probes = [n, e1, (n + e1) / np.sqrt(2), np.sqrt(1 / 3) * n + np.sqrt(2 / 3) * e2]
    for kvec in probes:
        quad = large_radius_limit(spec, kvec)
        exact = float(dipolar_full(kvec, spec.axis))
        if abs(quad - exact) > 1e-5:
            raise NumericalAccuracyError(
                f"closed-form dipolar multiplier disagrees with quadrature by {abs(quad - exact):.3e}")
        inner = inner_truncated_transform(spec, kvec, 0.7)
        if abs(inner - float(dipolar_inner(kvec, spec.axis, 0.7))) > 1e-7:
            raise NumericalAccuracyError("closed-form truncated dipolar transform disagrees with quadrature")
    _VALIDATED_DIPOLAR.add(key)


def full_multiplier(spec, grid):
    """Tabulate K_hat on ``grid`` with K_hat(0) = 0."""
    spec.validate()
    if spec.is_dipolar:
        _check_dipolar_fast_path(spec)
        kx, ky, kz = grid.wavevectors()
        K = np.stack(np.broadcast_arrays(kx, ky, kz), axis=-1)
        return MultiplierTable(grid, dipolar_full(K, spec.axis), "K_hat")
    # homogeneous of degree zero: one evaluation per direction
    uniq, inverse, nz = _unique_directions(grid)
    per_dir = np.array([large_radius_limit(spec, d.astype(float)) if np.any(d) else 0.0 for d in uniq])
    vals = np.where(nz, per_dir[inverse], 0.0)
    return MultiplierTable(grid, vals.reshape(grid.shape), "K_hat")


def exterior_multiplier(spec, grid, R=None):
    """Tabulate the transform of 1_{|x|>R} K (full minus inner truncation)."""
    spec.validate()
    R = spec.R if R is None else float(R)
    kx, ky, kz = grid.wavevectors()
    K = np.stack(np.broadcast_arrays(kx, ky, kz), axis=-1)
    if spec.is_dipolar:
        _check_dipolar_fast_path(spec)
        return MultiplierTable(grid, dipolar_exterior(K, spec.axis, R), "K_hat_exterior")
    full = full_multiplier(spec, grid).values.reshape(-1)
    flat = K.reshape(-1, 3)
    out = np.zeros(flat.shape[0])
    for i in range(flat.shape[0]):
        if np.any(flat[i]):
            out[i] = full[i] - inner_truncated_transform(spec, flat[i], R)
    return MultiplierTable(grid, out.reshape(grid.shape), "K_hat_exterior")


def fibonacci_directions(count):
    """Quasi-uniform unit vectors on the sphere (deterministic)."""
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z**2)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def truncation_bound_scan(spec, directions, kR_values, R=None):
    """Largest observed |K_hat_{<=R}(k)| / (R^2 |k|^2) over the sampled k."""
    R = spec.R if R is None else float(R)
    worst = 0.0
    for d in directions:
        for x in kR_values:
            k = np.asarray(d, float) * (x / R)
            val = inner_truncated_transform(spec, k, R)
            worst = max(worst, abs(val) / x**2)
    return worst
