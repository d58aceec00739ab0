"""Plane-wave mode basis on a 1D torus and its pair-interaction tensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

__all__ = ["ModeBasis"]


@dataclass(eq=False)
class ModeBasis:
    """``m`` plane waves exp(i k_p x)/sqrt(ell) with k_p = 2 pi (p - (m-1)//2) / ell.

    ``V[p, q, r, s]`` = <e_p (x) e_q, w_N e_r (x) e_s>, ``eps[p]`` = k_p^2.
    """

    k: np.ndarray
    eps: np.ndarray
    V: np.ndarray
    ell: float = 2 * math.pi
    label: str = field(default="")

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)
        self.V = np.asarray(self.V, dtype=np.complex128)
        m = self.k.size
        if self.eps.shape != (m,) or self.V.shape != (m, m, m, m):
            raise ValidationError("mode arrays have inconsistent shapes")

    @property
    def m(self):
        return self.k.size

    @classmethod
    def plane_waves(cls, m, ell=2 * math.pi, coupling=1.0, width=0.5, beta=0.25, N=2.0):
        """Modes with w_hat(k) = coupling * exp(-width^2 k^2 / 2), scaled to w_N_hat(k) = w_hat(k / N^beta)."""
        if m < 1 or ell <= 0 or width <= 0 or beta < 0 or N < 1:
            raise ValidationError("invalid plane-wave basis parameters")
        n = np.arange(m) - (m - 1) // 2
        k = 2 * math.pi * n / ell
        scale = 1.0 if math.isinf(N) else N ** (-beta)

        def w_hat(q):
            return coupling * np.exp(-0.5 * (width * q * scale) ** 2)

        p, q, r, s = np.meshgrid(*(np.arange(m),) * 4, indexing="ij")
        conserve = (n[p] + n[q]) == (n[r] + n[s])
        V = np.where(conserve, w_hat(k[p] - k[r]) / ell, 0.0)
        return cls(k, k**2, V, ell, f"plane_waves(m={m}, g={coupling}, N={N})")

    @classmethod
    def from_tensor(cls, eps, V, k=None, ell=2 * math.pi):
        eps = np.asarray(eps, float)
        k = np.arange(eps.size, dtype=float) if k is None else k
        basis = cls(k, eps, V, ell, "custom")
        basis.check()
        return basis

    def symmetry_errors(self):
        V = self.V
        herm = float(np.max(np.abs(V - V.transpose(2, 3, 0, 1).conj())))
        boson = float(np.max(np.abs(V - V.transpose(1, 0, 3, 2))))
        return herm, boson

    def check(self, tol=1e-12):
        herm, boson = self.symmetry_errors()
        if herm > tol:
            raise ValidationError(f"interaction tensor is not Hermitian (error {herm:.3e})")
        if boson > tol:
            raise ValidationError(f"interaction tensor is not boson symmetric (error {boson:.3e})")
        return self

    def with_interaction(self, V):
        return ModeBasis(self.k, self.eps, V, self.ell, self.label)

    def free(self):
        return self.with_interaction(np.zeros_like(self.V))
