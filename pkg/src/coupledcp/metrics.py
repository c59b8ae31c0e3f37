"""Scoring utilities for the experiment harness: factor MSE, alignment of
estimates to ground truth, SNR formulas, and continuous-component
reconstruction error through the interpolation kernel.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .coupling import dirichlet_interpolation_matrix
from .tensor import CpModel

# sign triples (sA, sB, sC) with product +1: the tensor-preserving flips
_SIGN_COMBOS = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


def squared_factor_error(estimate: CpModel, truth: CpModel, factor: str) -> float:
    d = estimate.factor(factor) - truth.factor(factor)
    return float(np.sum(d * d))


def total_mse(estimates, truth: CpModel, factor: str) -> float:
    """Monte-Carlo total MSE of one factor: the mean over trials of the summed
    squared entry errors. Estimates must already be aligned to the truth."""
    if not estimates:
        raise ValueError("need at least one estimate")
    return float(np.mean([squared_factor_error(e, truth, factor) for e in estimates]))


def gauge_fix(model: CpModel, policy: str = "l2") -> CpModel:
    """Push the scale freedom of A and B into C so the model matches the
    generative gauge: unit-norm columns ("l2"/"l1") or unit first rows
    ("first_row"). Degenerate columns are left unscaled."""
    A, B, C = model.A.copy(), model.B.copy(), model.C.copy()
    for F in (A, B):
        norms = np.linalg.norm(F, axis=0)
        if policy == "first_row":
            scales = F[0, :].copy()
            ok = np.abs(scales) > 1e-9 * np.maximum(norms, np.finfo(float).tiny)
        elif policy == "l1":
            scales = np.abs(F).sum(axis=0)
            ok = scales > 0
        elif policy == "l2":
            scales = norms
            ok = scales > 0
        else:
            raise ValueError(f"unknown gauge policy {policy!r}")
        scales = np.where(ok, scales, 1.0)
        F /= scales
        C *= scales
    return CpModel(A, B, C)


def align_to_truth(truth: CpModel, estimate: CpModel, positive: bool = False) -> CpModel:
    """Permute (and sign-flip, unless ``positive``) the estimate's components
    to best match the truth, using a Hungarian assignment on the summed
    squared distances over all three factors. Sign flips are restricted to
    the tensor-preserving pairs, so the returned model represents the same
    tensor as the input."""
    R = truth.rank
    if estimate.rank != R:
        raise ValueError("rank mismatch between truth and estimate")
    cost = np.zeros((R, R))
    combo = np.zeros((R, R), dtype=int)
    for r in range(R):
        for s in range(R):
            if positive:
                cost[r, s] = (
                    np.sum((truth.A[:, r] - estimate.A[:, s]) ** 2)
                    + np.sum((truth.B[:, r] - estimate.B[:, s]) ** 2)
                    + np.sum((truth.C[:, r] - estimate.C[:, s]) ** 2)
                )
            else:
                totals = [
                    np.sum((truth.A[:, r] - sa * estimate.A[:, s]) ** 2)
                    + np.sum((truth.B[:, r] - sb * estimate.B[:, s]) ** 2)
                    + np.sum((truth.C[:, r] - sc * estimate.C[:, s]) ** 2)
                    for sa, sb, sc in _SIGN_COMBOS
                ]
                combo[r, s] = int(np.argmin(totals))
                cost[r, s] = totals[combo[r, s]]
    rows, cols = linear_sum_assignment(cost)
    out = estimate.permuted(cols)
    if not positive:
        for r in range(R):
            sa, sb, sc = _SIGN_COMBOS[combo[r, cols[r]]]
            out.A[:, r] *= sa
            out.B[:, r] *= sb
            out.C[:, r] *= sc
    return out


# ---------------------------------------------------------------------------
# SNR formulas


def sines_energy(freqs, K: int, T: float) -> float:
    """sum_i sum_{k=1..K} sin^2(2 pi f_i k T)."""
    k = np.arange(1, K + 1)
    return float(sum(np.sum(np.sin(2 * np.pi * f * k * T) ** 2) for f in freqs))


def snr_db(formula: str, **p) -> float:
    """Closed-form SNR (dB) of the synthetic tensors.

    formulas and their parameters:
      unnormalized_Y: R, sigma_c, sigma_n        -> 10 log10(R (1+sigma_c^2) / sigma_n^2)
      unnormalized_Yp: R, sigma_n                -> 10 log10(R / sigma_n^2)
      normalized_Y: R, sigma_c, I, J, sigma_n    -> 10 log10(R (1+sigma_c^2) / (I J sigma_n^2))
      normalized_Yp: R, I, J, sigma_n            -> 10 log10(R / (I J sigma_n^2))
      shared_component_Y: R, r, sigma_c, I, J, sigma_n
                                                 -> 10 log10((r sigma_c^2 + R) / (I J sigma_n^2))
      sum_of_sines: R, freqs, K, T, I, J, sigma_n
                                                 -> 10 log10(R E / (I J K sigma_n^2)),
                                                    E = sines_energy(freqs, K, T)
    """
    s2 = p["sigma_n"] ** 2
    if formula == "unnormalized_Y":
        ratio = p["R"] * (1 + p["sigma_c"] ** 2) / s2
    elif formula == "unnormalized_Yp":
        ratio = p["R"] / s2
    elif formula == "normalized_Y":
        ratio = p["R"] * (1 + p["sigma_c"] ** 2) / (p["I"] * p["J"] * s2)
    elif formula == "normalized_Yp":
        ratio = p["R"] / (p["I"] * p["J"] * s2)
    elif formula == "shared_component_Y":
        ratio = (p["r"] * p["sigma_c"] ** 2 + p["R"]) / (p["I"] * p["J"] * s2)
    elif formula == "sum_of_sines":
        E = sines_energy(p["freqs"], p["K"], p["T"])
        ratio = p["R"] * E / (p["I"] * p["J"] * p["K"] * s2)
    else:
        raise ValueError(f"unknown SNR formula {formula!r}")
    return float(10.0 * np.log10(ratio))


def sigma_for_snr(formula: str, snr: float, **p) -> float:
    """Noise standard deviation that realizes a target SNR (dB) under one of
    the :func:`snr_db` formulas."""
    p = dict(p, sigma_n=1.0)
    base = snr_db(formula, **p)  # SNR at unit sigma; SNR(sigma) = base - 20 log10 sigma
    return float(10.0 ** ((base - snr) / 20.0))


# ---------------------------------------------------------------------------
# continuous reconstruction


def reconstruct_continuous_error(C_hat, sample_times, period: float, truth_fn,
                                 fine_grid_size: int = 5000) -> float:
    """Trapezoid-integrated squared error of the kernel-interpolated factor
    columns against the true continuous components over one period.

    ``truth_fn(t)`` must return the len(t) x R matrix of true component
    values. The estimated columns are interpolated from their samples with
    the periodic kernel built on ``sample_times``.
    """
    if fine_grid_size < 2:
        raise ValueError("fine_grid_size must be at least 2")
    C_hat = np.asarray(C_hat, dtype=float)
    t = np.linspace(0.0, period, fine_grid_size)
    Hf = dirichlet_interpolation_matrix(t, sample_times, len(sample_times), period)
    est = Hf @ C_hat
    err = (est - truth_fn(t)) ** 2
    return float(np.trapezoid(err, t, axis=0).sum())
