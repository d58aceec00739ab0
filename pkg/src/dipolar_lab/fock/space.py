"""Occupation-number basis, vectors and sparse second-quantized operators.

Normal-ordered polynomials in the ladder operators are assembled from two
stacked matrices, A = [a_0; ...; a_{m-1}] and B = [a_p a_q]_{(p,q)}, so that

    sum h_pq a*_p a_q                 = A^T (h (x) 1) A
    sum T_pqrs a*_p a*_q a_s a_r      = B^T (T (x) 1) B
    sum C_cde a*_c a_d a_e            = A^T (C (x) 1) B

with the coefficient arrays reshaped row-major.  Because every product is
normal ordered, truncation at ``cap`` gives exactly the compression of the
untruncated operator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..errors import UsageError, ValidationError

__all__ = [
    "FockSpace",
    "FockVector",
    "OperatorMatrix",
    "build_creation",
    "build_annihilation",
    "number_operator",
    "write_coo",
    "read_coo",
]


class FockSpace:
    """Bosonic Fock space of ``m`` modes truncated at ``cap`` particles.

    Basis vectors are ordered by total particle number, so every sector is a
    contiguous slice.
    """

    def __init__(self, m, cap):
        if int(m) != m or m < 1:
            raise ValidationError(f"number of modes must be a positive integer, got {m!r}")
        if int(cap) != cap or cap < 0:
            raise ValidationError(f"particle cap must be a non-negative integer, got {cap!r}")
        self.m = int(m)
        self.cap = int(cap)
        rows, starts = [], [0]
        for n in range(self.cap + 1):
            for combo in itertools.combinations_with_replacement(range(self.m), n):
                rows.append(np.bincount(combo, minlength=self.m))
            starts.append(len(rows))
        self.occupations = np.array(rows, dtype=np.int64).reshape(-1, self.m)
        self._starts = starts
        self._radix = (self.cap + 1) ** np.arange(self.m)
        codes = self.occupations @ self._radix
        self._order = np.argsort(codes)
        self._sorted_codes = codes[self._order]

    def __repr__(self):
        return f"FockSpace(m={self.m}, cap={self.cap}, dim={self.dim})"

    def __eq__(self, other):
        return isinstance(other, FockSpace) and (self.m, self.cap) == (other.m, other.cap)

    def __hash__(self):
        return hash((self.m, self.cap))

    @property
    def dim(self):
        return self.occupations.shape[0]

    @staticmethod
    def expected_dim(m, cap):
        return sum(math.comb(k + m - 1, m - 1) for k in range(cap + 1))

    @cached_property
    def number(self):
        return self.occupations.sum(axis=1)

    def sector(self, n):
        if not 0 <= n <= self.cap:
            raise UsageError(f"sector {n} outside 0..{self.cap}")
        return slice(self._starts[n], self._starts[n + 1])

    def sector_dim(self, n):
        s = self.sector(n)
        return s.stop - s.start

    def index(self, occ):
        """Basis index of the occupation vector ``occ``."""
        occ = np.asarray(occ, dtype=np.int64)
        if occ.shape != (self.m,) or occ.min() < 0 or occ.sum() > self.cap:
            raise UsageError(f"occupation {occ.tolist()} not in {self!r}")
        return int(self.lookup(occ[None, :])[0])

    def lookup(self, occs):
        """Vectorized basis indices for rows of ``occs`` (all assumed valid)."""
        pos = np.searchsorted(self._sorted_codes, occs @ self._radix)
        return self._order[pos]

    def state(self, i):
        return tuple(int(v) for v in self.occupations[i])

    # --- stacked ladder matrices -------------------------------------------

    @cached_property
    def _annihilators(self):
        out = []
        occ = self.occupations
        for p in range(self.m):
            src = np.flatnonzero(occ[:, p] > 0)
            lowered = occ[src].copy()
            lowered[:, p] -= 1
            dst = self.lookup(lowered)
            out.append(sp.csr_matrix((np.sqrt(occ[src, p]).astype(float), (dst, src)),
                                     shape=(self.dim, self.dim)))
        return out

    @cached_property
    def stacked_single(self):
        return sp.vstack(self._annihilators, format="csr")

    @cached_property
    def stacked_pair(self):
        a = self._annihilators
        return sp.vstack([a[p] @ a[q] for p in range(self.m) for q in range(self.m)], format="csr")

    @cached_property
    def identity(self):
        return sp.identity(self.dim, dtype=float, format="csr")

    def _kron(self, coef):
        return sp.kron(sp.csr_matrix(coef), self.identity, format="csr")

    def one_body(self, h):
        """dGamma(h) = sum_pq h_pq a*_p a_q."""
        h = np.asarray(h)
        A = self.stacked_single
        return (A.T @ self._kron(h) @ A).tocsr()

    def pair_creation(self, K):
        """sum_pq K_pq a*_p a*_q."""
        K = np.asarray(K).reshape(-1, 1)
        return (self.stacked_pair.T @ self._kron(K)).tocsr()

    def cubic(self, C):
        """sum_cde C_cde a*_c a_d a_e."""
        C = np.asarray(C).reshape(self.m, self.m**2)
        return (self.stacked_single.T @ self._kron(C) @ self.stacked_pair).tocsr()

    def quartic(self, T):
        """sum_pqrs T_pqrs a*_p a*_q a_s a_r."""
        T = np.asarray(T).reshape(self.m**2, self.m**2)
        B = self.stacked_pair
        return (B.T @ self._kron(T) @ B).tocsr()

    def annihilate(self, f):
        """a(f) = sum_p conj(f_p) a_p (antilinear in f)."""
        f = np.asarray(f)
        return (self._kron(np.conj(f)[None, :]) @ self.stacked_single).tocsr()

    def create(self, f):
        return self.annihilate(f).conj().T.tocsr()

    def diagonal(self, func):
        """Function of the number operator, func(n) evaluated per basis vector."""
        vals = np.array([func(int(n)) for n in range(self.cap + 1)], dtype=float)
        return sp.diags(vals[self.number], format="csr")

    def projector(self, M):
        """1(N_op <= M)."""
        return self.diagonal(lambda n: 1.0 if n <= M else 0.0)

    def vacuum(self):
        c = np.zeros(self.dim, complex)
        c[0] = 1.0
        return FockVector(self, c)


@dataclass(eq=False)
class FockVector:
    space: FockSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (self.space.dim,):
            raise UsageError(f"vector of length {self.coeffs.shape} on {self.space!r}")
        if not np.all(np.isfinite(self.coeffs)):
            raise UsageError("vector has non-finite coefficients")

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def sector_norms(self):
        return np.array([np.linalg.norm(self.coeffs[self.space.sector(n)])
                         for n in range(self.space.cap + 1)])

    def project(self, n):
        c = np.zeros_like(self.coeffs)
        s = self.space.sector(n)
        c[s] = self.coeffs[s]
        return FockVector(self.space, c)

    def weight_above(self, M):
        """Squared norm carried by sectors with more than M particles."""
        return float(np.sum(np.abs(self.coeffs[self.space.number > M]) ** 2))

    def support_sectors(self, tol=0.0):
        return [n for n, w in enumerate(self.sector_norms()) if w > tol]

    def inner(self, other):
        return complex(np.vdot(self.coeffs, other.coeffs))

    def __add__(self, other):
        return FockVector(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FockVector(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return FockVector(self.space, self.coeffs * scalar)

    __rmul__ = __mul__


class OperatorMatrix:
    """Sparse operator on a :class:`FockSpace`.

    With ``hermitian=True`` the matrix is checked against its adjoint and a
    :class:`ValidationError` is raised beyond ``tol`` (relative to its size).
    """

    def __init__(self, space, matrix, hermitian=False, tol=1e-12, label=""):
        self.space = space
        self.matrix = sp.csr_matrix(matrix, dtype=np.complex128)
        if self.matrix.shape != (space.dim, space.dim):
            raise UsageError(f"matrix shape {self.matrix.shape} on {space!r}")
        self.label = label
        self.hermitian = False
        if hermitian:
            err = self.hermiticity_error()
            if err > tol * max(1.0, self.max_norm()):
                raise ValidationError(f"{label or 'operator'} is not Hermitian: |A - A*| = {err:.3e}")
            self.hermitian = True

    def __repr__(self):
        return f"OperatorMatrix({self.label or 'unnamed'}, dim={self.space.dim}, nnz={self.matrix.nnz})"

    def max_norm(self):
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def hermiticity_error(self):
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def adjoint(self):
        return OperatorMatrix(self.space, self.matrix.conj().T, label=f"{self.label}*")

    def dense(self):
        return self.matrix.toarray()

    def apply(self, vec):
        if vec.space != self.space:
            raise UsageError("vector and operator live on different Fock spaces")
        return FockVector(self.space, self.matrix @ vec.coeffs)

    def __matmul__(self, other):
        if isinstance(other, FockVector):
            return self.apply(other)
        return OperatorMatrix(self.space, self.matrix @ _mat(other))

    def __add__(self, other):
        return OperatorMatrix(self.space, self.matrix + _mat(other))

    def __sub__(self, other):
        return OperatorMatrix(self.space, self.matrix - _mat(other))

    def __mul__(self, scalar):
        return OperatorMatrix(self.space, self.matrix * scalar, label=self.label)

    __rmul__ = __mul__

    def commutator(self, other):
        B = _mat(other)
        return OperatorMatrix(self.space, self.matrix @ B - B @ self.matrix)

    def sector_block(self, n, n_in=None):
        rows = self.space.sector(n)
        cols = self.space.sector(n if n_in is None else n_in)
        return self.matrix[rows, cols]


def _mat(x):
    return x.matrix if isinstance(x, OperatorMatrix) else x


def build_annihilation(space, mode):
    if not 0 <= mode < space.m:
        raise UsageError(f"mode {mode} outside 0..{space.m - 1}")
    return OperatorMatrix(space, space._annihilators[mode], label=f"a_{mode}")


def build_creation(space, mode):
    if not 0 <= mode < space.m:
        raise UsageError(f"mode {mode} outside 0..{space.m - 1}")
    return OperatorMatrix(space, space._annihilators[mode].T, label=f"a*_{mode}")


def number_operator(space):
    return OperatorMatrix(space, sp.diags(space.number.astype(float)), hermitian=True, label="N")


# --- coordinate-list dump ----------------------------------------------------
#
#   # fock-operator coo v1
#   # m <m> cap <cap> dim <D> nnz <k> label <label>
#   # state <i> <n_0> ... <n_{m-1}>        (one line per basis vector)
#   <row> <col> <re> <im>                  (sorted by row, then column)

def write_coo(path, op):
    space = op.space
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write("# fock-operator coo v1\n")
        fh.write(f"# m {space.m} cap {space.cap} dim {space.dim} nnz {coo.nnz} "
                 f"label {op.label or '-'}\n")
        for i, occ in enumerate(space.occupations):
            fh.write(f"# state {i} " + " ".join(str(int(v)) for v in occ) + "\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def read_coo(path):
    rows, cols, vals = [], [], []
    header = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# m "):
                parts = line.split()
                header = dict(zip(parts[1::2], parts[2::2]))
            elif line.startswith("#") or not line.strip():
                continue
            else:
                r, c, re_, im_ = line.split()
                rows.append(int(r))
                cols.append(int(c))
                vals.append(float(re_) + 1j * float(im_))
    if header is None:
        raise UsageError(f"{path}: missing coo header")
    space = FockSpace(int(header["m"]), int(header["cap"]))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(space.dim, space.dim))
    label = header.get("label", "-")
    return OperatorMatrix(space, mat, label="" if label == "-" else label)
