"""Truncated HOSVD compression, a joint third-mode basis for directly coupled
tensor pairs, compressed coupled problems, and model decompression.
"""

from dataclasses import dataclass

import numpy as np

from .coupling import CoupledProblem, HybridGaussian
from .tensor import CpModel, dense_svd, randomized_svd, unfold

DENSE_SVD_LIMIT = 512  # any unfolding dimension above this -> randomized SVD


@dataclass
class CompressionBases:
    """Orthonormal mode bases U (I x R1), V (J x R2), W (K x R3) and the core
    tensor of a truncated HOSVD."""

    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    core: np.ndarray


def _left_basis(M, rank: int, svd_mode: str, rng):
    if svd_mode == "auto":
        svd_mode = "randomized" if max(M.shape) > DENSE_SVD_LIMIT else "dense"
    if svd_mode == "dense":
        return dense_svd(M, rank)[0]
    if svd_mode == "randomized":
        return randomized_svd(M, rank, rng=rng)[0]
    raise ValueError(f"svd_mode must be 'auto', 'dense' or 'randomized', got {svd_mode!r}")


def _core(Y, U, V, W):
    return np.einsum("ijk,ir,js,kt->rst", Y, U, V, W)


def truncated_hosvd(Y, ranks, svd_mode: str = "auto", rng=None):
    """Rank-(R1, R2, R3) HOSVD truncation: mode bases from the leading left
    singular vectors of the three unfoldings, core from the orthogonal
    projection of the data."""
    Y = np.asarray(Y, dtype=float)
    if any(r > d for r, d in zip(ranks, Y.shape)):
        raise ValueError(f"ranks {tuple(ranks)} exceed dims {Y.shape}")
    rng = np.random.default_rng(rng)
    U = _left_basis(unfold(Y, 1), ranks[0], svd_mode, rng)
    V = _left_basis(unfold(Y, 2), ranks[1], svd_mode, rng)
    W = _left_basis(unfold(Y, 3), ranks[2], svd_mode, rng)
    return CompressionBases(U, V, W, _core(Y, U, V, W))


def joint_mode3_basis(Y, Yp, sigma_n: float, sigma_np: float, rank: int,
                      svd_mode: str = "auto", rng=None):
    """Shared third-mode basis: leading left singular vectors of the stacked
    noise-weighted mode-3 unfoldings [Y_(3)/sigma_n, Y'_(3)/sigma_n']."""
    if Y.shape[2] != Yp.shape[2]:
        raise ValueError("joint basis requires a shared third dimension")
    stacked = np.hstack([unfold(Y, 3) / sigma_n, unfold(Yp, 3) / sigma_np])
    return _left_basis(stacked, rank, svd_mode, np.random.default_rng(rng))


def _is_identity(M):
    return M.shape[0] == M.shape[1] and np.array_equal(M, np.eye(M.shape[0]))


def compress_coupled_problem(problem: CoupledProblem, ranks, svd_mode: str = "auto", rng=None):
    """Compress a directly coupled problem (HybridGaussian with H = H' = I).

    Modes 1 and 2 are compressed per tensor; the third mode uses the joint
    basis, so the coupling C_c = C'_c + Gamma_c carries over with the same
    sigma_c (orthonormal projection of white noise stays white). Returns
    ``(compressed_problem, bases, bases_primed)`` with the shared W in both.
    """
    spec = problem.coupling
    if not isinstance(spec, HybridGaussian):
        raise ValueError("joint compression supports HybridGaussian couplings only")
    if not (_is_identity(spec.H) and _is_identity(spec.Hp)):
        raise ValueError("joint compression requires direct coupling (H = H' = I)")
    if problem.Y.shape[2] != problem.Yp.shape[2]:
        raise ValueError("joint compression requires K == K'")
    r1, r2, r3 = ranks
    for Y in (problem.Y, problem.Yp):
        if any(r > d for r, d in zip((r1, r2, r3), Y.shape)):
            raise ValueError(f"ranks {tuple(ranks)} exceed dims {Y.shape}")
    rng = np.random.default_rng(rng)
    sn, snp = problem.noise.sigma_n, problem.noise_p.sigma_n
    U = _left_basis(unfold(problem.Y, 1), r1, svd_mode, rng)
    V = _left_basis(unfold(problem.Y, 2), r2, svd_mode, rng)
    Up = _left_basis(unfold(problem.Yp, 1), r1, svd_mode, rng)
    Vp = _left_basis(unfold(problem.Yp, 2), r2, svd_mode, rng)
    W = joint_mode3_basis(problem.Y, problem.Yp, sn, snp, r3, svd_mode, rng)
    bases = CompressionBases(U, V, W, _core(problem.Y, U, V, W))
    bases_p = CompressionBases(Up, Vp, W, _core(problem.Yp, Up, Vp, W))
    spec_c = HybridGaussian(np.eye(r3), np.eye(r3), spec.sigma_c, spec.coupled_cols)
    problem_c = CoupledProblem(bases.core, bases_p.core, problem.noise, problem.noise_p,
                               spec_c, problem.R, problem.Rp)
    return problem_c, bases, bases_p


def decompress_model(core_model: CpModel, bases: CompressionBases) -> CpModel:
    """Map a CP model of the core back to the original space by the basis
    multiplications A = U A_c, B = V B_c, C = W C_c."""
    if (bases.U.shape[1], bases.V.shape[1], bases.W.shape[1]) != core_model.dims:
        raise ValueError("basis ranks do not match the core model dims")
    return CpModel(bases.U @ core_model.A, bases.V @ core_model.B, bases.W @ core_model.C)
