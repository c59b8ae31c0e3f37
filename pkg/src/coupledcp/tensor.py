"""Dense 3-way tensor kernels: unfoldings, Khatri-Rao products, CP arithmetic,
column normalization and SVD utilities.

Tensors are plain numpy arrays of shape (I, J, K) in C order, so ``T.ravel()``
stores element (i, j, k) at flat offset ``(i*J + j)*K + k`` with the third
index running fastest. Unfolding column orderings are fixed so that::

    unfold(cp_to_tensor(A, B, C), 1) == A @ khatri_rao(C, B).T
    unfold(cp_to_tensor(A, B, C), 2) == B @ khatri_rao(C, A).T
    unfold(cp_to_tensor(A, B, C), 3) == C @ khatri_rao(B, A).T

which is the shape every alternating least-squares update expects.
"""

from dataclasses import dataclass

import numpy as np


class DegenerateColumnError(ValueError):
    """A factor column is numerically zero and cannot be normalized."""


# axis order that realizes each unfolding: mode axis first, remaining axes in
# decreasing order (so the lowest remaining axis runs fastest along columns)
_UNFOLD_AXES = {1: (0, 2, 1), 2: (1, 2, 0), 3: (2, 1, 0)}


def unfold(T, mode: int):
    """Matricize a 3-way tensor along ``mode`` (1, 2 or 3).

    Mode 1 returns an I x JK matrix with entry (i, k*J + j) = T[i, j, k],
    mode 2 a J x IK matrix with entry (j, k*I + i), and mode 3 a K x IJ
    matrix with entry (k, j*I + i), all indices 0-based.
    """
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError(f"expected a 3-way array, got ndim={T.ndim}")
    if mode not in _UNFOLD_AXES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    return np.transpose(T, _UNFOLD_AXES[mode]).reshape(T.shape[mode - 1], -1)


def refold(M, mode: int, dims):
    """Inverse of :func:`unfold`: rebuild the (I, J, K) tensor from its
    mode-``mode`` unfolding."""
    I, J, K = dims
    M = np.asarray(M)
    if mode not in _UNFOLD_AXES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    axes = _UNFOLD_AXES[mode]
    shape = tuple((I, J, K)[a] for a in axes)
    if M.shape != (shape[0], shape[1] * shape[2]):
        raise ValueError(f"matrix shape {M.shape} inconsistent with mode {mode} of dims {dims}")
    return np.transpose(M.reshape(shape), np.argsort(axes))


def khatri_rao(X, Y):
    """Column-wise Kronecker product.

    ``X`` (p x R) and ``Y`` (q x R) give a pq x R matrix whose column r is
    ``kron(X[:, r], Y[:, r])``; row p*q_rows + q holds ``X[p, r] * Y[q, r]``.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError(f"column counts must match, got {X.shape} and {Y.shape}")
    return (X[:, None, :] * Y[None, :, :]).reshape(X.shape[0] * Y.shape[0], X.shape[1])


def cp_to_tensor(A, B, C):
    """Evaluate the rank-R CP model: T[i, j, k] = sum_r A[i,r] B[j,r] C[k,r]."""
    A, B, C = np.asarray(A), np.asarray(B), np.asarray(C)
    if not (A.shape[1] == B.shape[1] == C.shape[1]):
        raise ValueError("factors must share the column count")
    return np.einsum("ir,jr,kr->ijk", A, B, C)


@dataclass
class CpModel:
    """CP factor triple. ``A`` is I x R, ``B`` is J x R, ``C`` is K x R."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        if not (self.A.shape[1] == self.B.shape[1] == self.C.shape[1]):
            raise ValueError("factors must share the column count")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def dims(self):
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    def to_tensor(self):
        return cp_to_tensor(self.A, self.B, self.C)

    def copy(self) -> "CpModel":
        return CpModel(self.A.copy(), self.B.copy(), self.C.copy())

    def permuted(self, perm) -> "CpModel":
        """Model with columns of all three factors reordered by ``perm``."""
        perm = np.asarray(perm)
        return CpModel(self.A[:, perm], self.B[:, perm], self.C[:, perm])

    def factor(self, name: str):
        return {"A": self.A, "B": self.B, "C": self.C}[name]


def normalize_columns(M, norm: str = "l2"):
    """Rescale each column of ``M`` to unit l1 or l2 norm.

    Returns ``(N, scales)`` with ``M = N @ diag(scales)``. Raises
    :class:`DegenerateColumnError` if a column is numerically zero; callers
    (the solvers) decide how to recover.
    """
    M = np.asarray(M, dtype=float)
    if norm == "l2":
        scales = np.linalg.norm(M, axis=0)
    elif norm == "l1":
        scales = np.abs(M).sum(axis=0)
    else:
        raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")
    bad = scales <= np.finfo(float).tiny
    if np.any(bad):
        raise DegenerateColumnError(f"zero column(s) at {np.flatnonzero(bad).tolist()}")
    return M / scales, scales


def randomized_svd(M, rank: int, oversample: int = 2, power_iters: int = 1, rng=None):
    """Randomized truncated SVD (range finder with power iterations).

    Returns ``(U, s, V)`` with ``U`` (m x rank) and ``V`` (n x rank) having
    orthonormal columns and ``M ~ U @ diag(s) @ V.T``. Deterministic for a
    seeded ``rng``. Defaults ``oversample=2``, ``power_iters=1``.
    """
    M = np.asarray(M, dtype=float)
    m, n = M.shape
    if rank > min(m, n):
        raise ValueError(f"rank {rank} exceeds min(M.shape) = {min(m, n)}")
    rng = np.random.default_rng(rng)
    k = min(rank + oversample, min(m, n))
    Omega = rng.standard_normal((n, k))
    Q = np.linalg.qr(M @ Omega)[0]
    for _ in range(power_iters):
        Q = np.linalg.qr(M.T @ Q)[0]
        Q = np.linalg.qr(M @ Q)[0]
    B = Q.T @ M
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    return Q @ Ub[:, :rank], s[:rank], Vt[:rank].T


def dense_svd(M, rank=None):
    """Deterministic truncated SVD via LAPACK, same return layout as
    :func:`randomized_svd`."""
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    if rank is not None:
        U, s, Vt = U[:, :rank], s[:rank], Vt[:rank]
    return U, s, Vt.T
