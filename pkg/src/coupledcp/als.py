"""Coupled alternating least squares for hybrid Gaussian couplings.

Implements plain (uncoupled) ALS, Hungarian component alignment, a symmetric
Sylvester solver, joint and sequential updates of the coupled pair (C, C'),
hard-coupling updates, and the full warm-started coupled ALS loop with
restarts.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .coupling import (
    CoupledProblem,
    GaussianNoise,
    HardCoupling,
    HybridGaussian,
    LaplaceCoupling,
    CauchyCoupling,
    TweedieCoupling,
    beta_divergence,
    coupling_cost,
)
from .tensor import CpModel, khatri_rao, unfold

logger = logging.getLogger(__name__)

_SV_CUTOFF = 1e-12  # relative singular-value cutoff for pseudo-inverses


@dataclass
class AlsConfig:
    k_max: int = 500
    delta_min: float = 1e-8
    restarts: int = 5
    warm_start: bool = True
    warm_iters: int = 1000
    update_mode: str = "joint"  # "joint" | "sequential"
    hard_threshold: float = 1e-3  # sigma_c / min(sigma_n, sigma_n') below this -> hard
    normalization: str = "l2"  # "l2" | "first_row" (gauge kept during sweeps)

    def __post_init__(self):
        if self.k_max < 1 or self.restarts < 1 or self.delta_min < 0:
            raise ValueError("k_max, restarts must be >= 1 and delta_min >= 0")
        if self.update_mode not in ("joint", "sequential"):
            raise ValueError("update_mode must be 'joint' or 'sequential'")
        if self.normalization not in ("l2", "first_row"):
            raise ValueError("normalization must be 'l2' or 'first_row'")


@dataclass
class SolveTrace:
    objective_per_iter: np.ndarray
    iterations: int
    termination: str  # "converged" | "max_iters"
    restart_index: int = 0


# ---------------------------------------------------------------------------
# least-squares building blocks


def _ls_factor_update(unfolding, kr):
    """Least-squares factor update ``unfolding @ pinv(kr.T)`` via the economy
    SVD of the Khatri-Rao design, with a relative singular-value cutoff."""
    U, s, Vt = np.linalg.svd(kr, full_matrices=False)
    if s[0] <= 0:
        return np.zeros((unfolding.shape[0], kr.shape[1]))
    keep = s > _SV_CUTOFF * s[0]
    return (unfolding @ U[:, keep]) / s[keep] @ Vt[keep]


def _pinv_psd(G):
    """Pseudo-inverse of a small symmetric PSD matrix."""
    lam, Q = np.linalg.eigh(G)
    inv = np.where(lam > _SV_CUTOFF * max(lam[-1], np.finfo(float).tiny), 1.0 / lam, 0.0)
    return (Q * inv) @ Q.T


def _fit_sq(norm_sq, C, M, D):
    """||Y - (A,B,C)||_F^2 from cached norm, MTTKRP M = Y_(3)(B kr A) and
    Gram D = (A^T A) * (B^T B)."""
    return norm_sq - 2.0 * float(np.sum(C * M)) + float(np.sum((C.T @ C) * D))


def uncoupled_als(Y, R: int, cfg: AlsConfig | None = None, rng=None, init: CpModel | None = None):
    """Plain ALS for one tensor. Each mode update is the exact least-squares
    solution against the current Khatri-Rao design, so the squared-residual
    sequence is non-increasing. Returns ``(CpModel, SolveTrace)``."""
    cfg = cfg or AlsConfig()
    rng = np.random.default_rng(rng)
    Y = np.asarray(Y, dtype=float)
    I, J, K = Y.shape
    Y1, Y2, Y3 = unfold(Y, 1), unfold(Y, 2), unfold(Y, 3)
    norm_sq = float(np.sum(Y * Y))
    if init is not None:
        A, B, C = init.A.copy(), init.B.copy(), init.C.copy()
    else:
        A = rng.standard_normal((I, R))
        B = rng.standard_normal((J, R))
        C = rng.standard_normal((K, R))
    obj = [_fit_sq(norm_sq, C, Y3 @ khatri_rao(B, A), (A.T @ A) * (B.T @ B))]
    termination = "max_iters"
    k = 0
    for k in range(1, cfg.k_max + 1):
        A = _ls_factor_update(Y1, khatri_rao(C, B))
        B = _ls_factor_update(Y2, khatri_rao(C, A))
        M = Y3 @ khatri_rao(B, A)
        D = (A.T @ A) * (B.T @ B)
        C = M @ _pinv_psd(D)
        obj.append(_fit_sq(norm_sq, C, M, D))
        denom = max(obj[0], np.finfo(float).tiny)
        if abs(obj[-1] - obj[-2]) / denom <= cfg.delta_min:
            termination = "converged"
            break
    return CpModel(A, B, C), SolveTrace(np.asarray(obj), k, termination)


# ---------------------------------------------------------------------------
# component alignment


def align_components(reference: CpModel, candidate: CpModel, spec) -> CpModel:
    """Permute (and, for Gaussian couplings, sign-flip) the columns of
    ``candidate`` so the coupling cost against ``reference`` is minimal.

    The reference model holds the C side of the coupling, the candidate the
    C' side. The returned model has all three factors consistently permuted;
    sign flips on C' are compensated in A' so the candidate's tensor is
    unchanged. The permutation solves the R x R assignment problem exactly.
    """
    R = reference.rank
    if candidate.rank != R:
        raise ValueError("models must have equal rank")
    Cr, Cc = reference.C, candidate.C
    signs = None
    if isinstance(spec, (HybridGaussian, HardCoupling)):
        L = spec.H @ Cr
        Lp = spec.Hp @ Cc
        # cost of pairing reference col r with candidate col s, best sign
        plus = ((L[:, :, None] - Lp[:, None, :]) ** 2).sum(axis=0)
        minus = ((L[:, :, None] + Lp[:, None, :]) ** 2).sum(axis=0)
        cost = np.minimum(plus, minus)
        signs = np.where(plus <= minus, 1.0, -1.0)
    elif isinstance(spec, TweedieCoupling):
        cost = np.empty((R, R))
        for s in range(R):
            cost[:, s] = beta_divergence(Cr, Cc[:, s : s + 1], spec.beta_c).sum(axis=0)
    elif isinstance(spec, LaplaceCoupling):
        cost = np.abs(Cr[:, :, None] - Cc[:, None, :]).sum(axis=0)
    elif isinstance(spec, CauchyCoupling):
        cost = np.log1p(((Cr[:, :, None] - Cc[:, None, :]) / spec.delta_c) ** 2).sum(axis=0)
    else:
        raise TypeError(f"unsupported coupling spec {type(spec).__name__}")
    rows, cols = linear_sum_assignment(cost)
    out = candidate.permuted(cols)
    if signs is not None:
        flip = signs[rows, cols]
        out.C *= flip
        out.A *= flip
    return out


# ---------------------------------------------------------------------------
# Sylvester solver


def sylvester_solve(P, Q, Rhs):
    """Solve ``P X + X Q = Rhs`` for symmetric PSD P (n x n) and Q (R x R)
    via eigendecompositions of both operands. Raises LinAlgError when some
    eigenvalue sum lambda_i(P) + lambda_j(Q) vanishes (singular pencil)."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Rhs = np.asarray(Rhs, dtype=float)
    lp, Up = np.linalg.eigh(P)
    lq, Uq = np.linalg.eigh(Q)
    denom = lp[:, None] + lq[None, :]
    scale = max(np.abs(lp).max(), np.abs(lq).max(), np.finfo(float).tiny)
    if np.min(np.abs(denom)) <= 1e-14 * scale:
        raise np.linalg.LinAlgError("singular Sylvester pencil: lambda_i(P) + lambda_j(Q) ~ 0")
    return Up @ ((Up.T @ Rhs @ Uq) / denom) @ Uq.T


# ---------------------------------------------------------------------------
# coupled (C, C') updates


def _coupling_mats(spec):
    H, Hp = spec.H, spec.Hp
    return H.T @ H, Hp.T @ Hp, H.T @ Hp


def update_coupled_factors_joint(M, Mp, D, Dp, spec: HybridGaussian, sigma_n, sigma_np):
    """Jointly minimize the C-dependent terms of the hybrid Gaussian objective.

    ``M = Y_(3) @ khatri_rao(B, A)`` and ``D = (A^T A) * (B^T B)`` are the
    mode-3 MTTKRP and Gram of the first model (primed likewise). Assembles the
    symmetric block system over vec([C; C']) (coupling blocks restricted to
    the coupled columns) and solves it; falls back to least squares with a
    warning if the system is numerically singular.
    """
    K, R = M.shape
    Kp = Mp.shape[0]
    wc = 1.0 / spec.sigma_c**2
    wn, wnp = 1.0 / sigma_n**2, 1.0 / sigma_np**2
    S = np.diag(spec.column_mask(R).astype(float))
    HtH, HptHp, HtHp = _coupling_mats(spec)
    G11 = wc * np.kron(S, HtH) + wn * np.kron(D, np.eye(K))
    G22 = wc * np.kron(S, HptHp) + wnp * np.kron(Dp, np.eye(Kp))
    G12 = -wc * np.kron(S, HtHp)
    G = np.block([[G11, G12], [G12.T, G22]])
    b = np.concatenate([wn * M.ravel(order="F"), wnp * Mp.ravel(order="F")])
    try:
        x = scipy.linalg.solve(G, b, assume_a="pos")
    except np.linalg.LinAlgError:
        logger.warning("coupled system singular or indefinite; using least-squares fallback")
        x = np.linalg.lstsq(G, b, rcond=None)[0]
    C = x[: K * R].reshape((K, R), order="F")
    Cp = x[K * R :].reshape((Kp, R), order="F")
    return C, Cp


def update_coupled_factors_sequential(M, Mp, D, Dp, spec: HybridGaussian, sigma_n, sigma_np, Cp_prev):
    """Sequentially minimize over C (with C' at its previous value) and then
    over C'. Each solve exactly minimizes its own block; with full-column
    coupling both are Sylvester equations, with subset coupling the
    vectorized normal equations of the block are solved directly."""
    K, R = M.shape
    Kp = Mp.shape[0]
    wc = 1.0 / spec.sigma_c**2
    wn, wnp = 1.0 / sigma_n**2, 1.0 / sigma_np**2
    HtH, HptHp, HtHp = _coupling_mats(spec)
    mask = spec.column_mask(R)
    if mask.all():
        C = sylvester_solve(wc * HtH, wn * D, wc * HtHp @ Cp_prev + wn * M)
        Cp = sylvester_solve(wc * HptHp, wnp * Dp, wc * HtHp.T @ C + wnp * Mp)
        return C, Cp
    S = np.diag(mask.astype(float))
    rhs = wc * (HtHp @ Cp_prev) @ S + wn * M
    A1 = wc * np.kron(S, HtH) + wn * np.kron(D, np.eye(K))
    C = scipy.linalg.solve(A1, rhs.ravel(order="F"), assume_a="pos").reshape((K, R), order="F")
    rhsp = wc * (HtHp.T @ C) @ S + wnp * Mp
    A2 = wc * np.kron(S, HptHp) + wnp * np.kron(Dp, np.eye(Kp))
    Cp = scipy.linalg.solve(A2, rhsp.ravel(order="F"), assume_a="pos").reshape((Kp, R), order="F")
    return C, Cp


def _update_hard(M, Mp, D, Dp, H, Hp, sigma_n, sigma_np):
    """Exact-equality coupled update. With H = H' = I a single shared C solves
    the stacked, noise-weighted normal equations; general transformations go
    through a null-space parameterization of the constraint H C = H' C'."""
    wn, wnp = 1.0 / sigma_n**2, 1.0 / sigma_np**2
    K, R = M.shape
    Kp = Mp.shape[0]
    eye_like = K == Kp and H.shape == (K, K) and Hp.shape == (K, K)
    if eye_like and np.array_equal(H, np.eye(K)) and np.array_equal(Hp, np.eye(K)):
        C = (wn * M + wnp * Mp) @ _pinv_psd(wn * D + wnp * Dp)
        return C, C.copy()
    N = scipy.linalg.null_space(np.hstack([H, -Hp]))
    if N.shape[1] == 0:
        raise np.linalg.LinAlgError("hard coupling constraint admits only the zero solution")
    N1, N2 = N[:K], N[K:]
    P1 = wn * (N1.T @ N1)
    P2 = wnp * (N2.T @ N2)
    # stationarity of the constrained quadratic in Z (where [C; C'] = N Z):
    # P1 Z D + P2 Z D' = N1' M wn + N2' M' wnp, solved in vectorized form
    G = np.kron(D, P1) + np.kron(Dp, P2)
    rhs = (wn * N1.T @ M + wnp * N2.T @ Mp).ravel(order="F")
    Z = scipy.linalg.solve(G, rhs, assume_a="pos").reshape((N.shape[1], R), order="F")
    W = N @ Z
    return W[:K], W[K:]


# ---------------------------------------------------------------------------
# gauge handling


def _reinit_degenerate(F, bad, rng):
    F = F.copy()
    F[:, bad] = rng.standard_normal((F.shape[0], int(bad.sum())))
    logger.warning("reinitialized %d degenerate column(s)", int(bad.sum()))
    return F


def _gauge(F, policy: str, rng):
    """Return (normalized F, scales) under the chosen gauge. Degenerate
    columns are re-seeded from ``rng`` before normalizing."""
    norms = np.linalg.norm(F, axis=0)
    bad = norms <= 1e-300
    if bad.any():
        F = _reinit_degenerate(F, bad, rng)
        norms = np.linalg.norm(F, axis=0)
    if policy == "first_row":
        scales = F[0, :].copy()
        bad = np.abs(scales) <= 1e-12 * norms
        if bad.any():
            F = _reinit_degenerate(F, bad, rng)
            scales = F[0, :].copy()
        return F / scales, scales
    if policy == "l1":
        scales = np.abs(F).sum(axis=0)
    else:
        scales = norms
    return F / scales, scales


def _full_gauge(model: CpModel, policy: str, rng) -> CpModel:
    """Push the scales of A and B (both models' conventions) into C so the
    coupling term compares factors in a common gauge."""
    A, sa = _gauge(model.A, policy, rng)
    B, sb = _gauge(model.B, policy, rng)
    return CpModel(A, B, model.C * (sa * sb))


# ---------------------------------------------------------------------------
# main solver


def coupled_als(problem: CoupledProblem, cfg: AlsConfig | None = None, rng=None, init=None):
    """Warm-started coupled ALS for the hybrid Gaussian model.

    Runs ``cfg.restarts`` independent starts (each: two uncoupled ALS fits,
    Hungarian alignment of the primed model, then alternating sweeps with the
    joint or sequential coupled update of (C, C')) and returns the run with
    the best final objective as ``(model, model_primed, SolveTrace)``.

    When ``sigma_c`` is far below the measurement noise (ratio under
    ``cfg.hard_threshold``), or the coupling is :class:`HardCoupling`, the
    equality-constrained update replaces the flexible one.

    ``init``, a ``(model, model_primed)`` pair, replaces the start strategy
    (a single run from those models, e.g. externally computed uncoupled fits).
    """
    cfg = cfg or AlsConfig()
    if not isinstance(problem.noise, GaussianNoise) or not isinstance(problem.noise_p, GaussianNoise):
        raise ValueError("coupled_als requires Gaussian noise models")
    spec = problem.coupling
    if not isinstance(spec, (HybridGaussian, HardCoupling)):
        raise ValueError("coupled_als requires a HybridGaussian or HardCoupling spec")
    sigma_n, sigma_np = problem.noise.sigma_n, problem.noise_p.sigma_n
    hard = isinstance(spec, HardCoupling)
    if isinstance(spec, HybridGaussian) and spec.sigma_c / min(sigma_n, sigma_np) < cfg.hard_threshold:
        hard = True
    if hard and problem.R != problem.Rp:
        raise ValueError("hard coupling requires equal component counts")

    Y, Yp = problem.Y, problem.Yp
    R = problem.R
    Y1, Y2, Y3 = unfold(Y, 1), unfold(Y, 2), unfold(Y, 3)
    Yp1, Yp2, Yp3 = unfold(Yp, 1), unfold(Yp, 2), unfold(Yp, 3)
    nsq, npsq = float(np.sum(Y * Y)), float(np.sum(Yp * Yp))
    wn, wnp = 1.0 / sigma_n**2, 1.0 / sigma_np**2

    rng = np.random.default_rng(rng)
    restarts = 1 if init is not None else cfg.restarts
    streams = rng.spawn(restarts)
    warm_cfg = replace(cfg, k_max=cfg.warm_iters, restarts=1)

    def flexible_cost(C, Cp):
        if hard:
            return 0.0
        return coupling_cost(C, Cp, spec)

    best = None
    for ridx in range(restarts):
        r = streams[ridx]
        if init is not None:
            m, mp = init[0].copy(), init[1].copy()
        elif cfg.warm_start:
            m, _ = uncoupled_als(Y, R, warm_cfg, r.spawn(1)[0])
            mp, _ = uncoupled_als(Yp, problem.Rp, warm_cfg, r.spawn(1)[0])
        else:
            m = CpModel(*(r.standard_normal((d, R)) for d in Y.shape))
            mp = CpModel(*(r.standard_normal((d, problem.Rp)) for d in Yp.shape))
        m = _full_gauge(m, cfg.normalization, r)
        mp = _full_gauge(mp, cfg.normalization, r)
        mp = align_components(m, mp, spec)
        A, B, C = m.A, m.B, m.C
        Ap, Bp, Cp = mp.A, mp.B, mp.C

        M = Y3 @ khatri_rao(B, A)
        D = (A.T @ A) * (B.T @ B)
        Mp_ = Yp3 @ khatri_rao(Bp, Ap)
        Dp = (Ap.T @ Ap) * (Bp.T @ Bp)
        obj = [wn * _fit_sq(nsq, C, M, D) + wnp * _fit_sq(npsq, Cp, Mp_, Dp) + flexible_cost(C, Cp)]
        denom0 = max(obj[0], np.finfo(float).tiny)
        termination = "max_iters"
        k = 0
        for k in range(1, cfg.k_max + 1):
            A = _ls_factor_update(Y1, khatri_rao(C, B))
            A, sa = _gauge(A, cfg.normalization, r)
            C = C * sa
            Ap = _ls_factor_update(Yp1, khatri_rao(Cp, Bp))
            Ap, sap = _gauge(Ap, cfg.normalization, r)
            Bp = Bp * sap
            B = _ls_factor_update(Y2, khatri_rao(C, A))
            B, sb = _gauge(B, cfg.normalization, r)
            C = C * sb
            Bp = _ls_factor_update(Yp2, khatri_rao(Cp, Ap))

            M = Y3 @ khatri_rao(B, A)
            D = (A.T @ A) * (B.T @ B)
            Mp_ = Yp3 @ khatri_rao(Bp, Ap)
            Dp = (Ap.T @ Ap) * (Bp.T @ Bp)
            if hard:
                C, Cp = _update_hard(M, Mp_, D, Dp, spec.H, spec.Hp, sigma_n, sigma_np)
            elif cfg.update_mode == "joint":
                C, Cp = update_coupled_factors_joint(M, Mp_, D, Dp, spec, sigma_n, sigma_np)
            else:
                C, Cp = update_coupled_factors_sequential(M, Mp_, D, Dp, spec, sigma_n, sigma_np, Cp)

            obj.append(wn * _fit_sq(nsq, C, M, D) + wnp * _fit_sq(npsq, Cp, Mp_, Dp) + flexible_cost(C, Cp))
            if abs(obj[-1] - obj[-2]) / denom0 <= cfg.delta_min:
                termination = "converged"
                break

        trace = SolveTrace(np.asarray(obj), k, termination, ridx)
        if best is None or obj[-1] < best[2].objective_per_iter[-1]:
            best = (CpModel(A, B, C), CpModel(Ap, Bp, Cp), trace)
    return best
