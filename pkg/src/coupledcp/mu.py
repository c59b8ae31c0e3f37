"""Coupled multiplicative updates for positive CP models with Tweedie
likelihoods and a Tweedie coupling between the third-mode factors.

Each factor F is updated as ``F * grad_minus / max(grad_plus, eps)`` where
``grad_plus - grad_minus`` is the gradient of the MAP objective, split into
its nonnegative parts. All iterates stay positive when initialized positive.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .coupling import CoupledProblem, TweedieCoupling, TweedieNoise, beta_divergence, total_objective
from .als import SolveTrace, align_components
from .tensor import CpModel, khatri_rao, unfold

logger = logging.getLogger(__name__)


@dataclass
class MuConfig:
    k_max: int = 500
    delta_min: float = 1e-8
    restarts: int = 5
    epsilon: float = 1e-12  # denominator floor
    warm_iters: int = 1000

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k_max < 1 or self.restarts < 1 or self.delta_min < 0:
            raise ValueError("k_max, restarts must be >= 1 and delta_min >= 0")


def _check_beta_c(beta_c: float):
    # the coupling gradient split divides by beta_c - 1
    if not (1.0 < beta_c <= 3.0):
        raise ValueError("MU coupling requires beta_c in (1, 3]")


def _data_parts(unfolding, kr, F, beta, phi):
    """Split gradient of (1/phi) sum d_beta(Y | X) w.r.t. the factor whose
    unfolding representation is X = F @ kr.T."""
    X = F @ kr.T
    gm = (unfolding * X ** (-beta)) @ kr / phi
    gp = X ** (1.0 - beta) @ kr / phi
    return gm, gp


def mu_gradient_parts(which: str, problem: CoupledProblem, m: CpModel, mp: CpModel):
    """Return ``(grad_minus, grad_plus)`` of the Tweedie MAP objective w.r.t.
    one factor, ``which`` in {"A", "B", "C", "Ap", "Bp", "Cp"}.

    The C and Cp parts include the coupling contributions; the coupling's
    negative part for Cp is ``(1/phi_c) C * Cp^(-beta_c)`` (the derivative of
    the divergence in its second argument).
    """
    if not isinstance(problem.coupling, TweedieCoupling):
        raise ValueError("mu_gradient_parts requires a Tweedie coupling")
    beta_c, phi_c = problem.coupling.beta_c, problem.coupling.phi_c
    for F in (m.A, m.B, m.C, mp.A, mp.B, mp.C):
        if np.any(F <= 0):
            raise ValueError("all factors must be strictly positive")
    if which in ("A", "B", "C"):
        Y, mod, noise = problem.Y, m, problem.noise
    else:
        Y, mod, noise = problem.Yp, mp, problem.noise_p
    if np.any(Y <= 0):
        raise ValueError("data tensors must be strictly positive")
    beta, phi = noise.beta, noise.phi
    if which in ("A", "Ap"):
        return _data_parts(unfold(Y, 1), khatri_rao(mod.C, mod.B), mod.A, beta, phi)
    if which in ("B", "Bp"):
        return _data_parts(unfold(Y, 2), khatri_rao(mod.C, mod.A), mod.B, beta, phi)
    gm, gp = _data_parts(unfold(Y, 3), khatri_rao(mod.B, mod.A), mod.C, beta, phi)
    _check_beta_c(beta_c)
    C, Cp = m.C, mp.C
    if which == "C":
        gm = gm + C ** (1.0 - beta_c) / (phi_c * (beta_c - 1.0))
        gp = gp + (beta_c / 2.0) / C + Cp ** (1.0 - beta_c) / (phi_c * (beta_c - 1.0))
    else:
        gm = gm + C * Cp ** (-beta_c) / phi_c
        gp = gp + Cp ** (1.0 - beta_c) / phi_c
    return gm, gp


def mu_step(F, grad_plus, grad_minus, epsilon: float):
    """One multiplicative update: ``F * grad_minus / max(grad_plus, eps)``."""
    return F * (grad_minus / np.maximum(grad_plus, epsilon))


_POS_FLOOR = 1e-300  # keeps iterates strictly positive against underflow


def _l1_rescue(F, rng):
    """l1-normalize columns, re-seeding columns that collapsed to zero."""
    F = np.maximum(F, _POS_FLOOR)
    scales = F.sum(axis=0)
    bad = scales <= np.finfo(float).tiny
    if bad.any():
        logger.warning("reinitialized %d collapsed column(s)", int(bad.sum()))
        F = F.copy()
        F[:, bad] = np.abs(rng.standard_normal((F.shape[0], int(bad.sum())))) + 1e-3
        scales = F.sum(axis=0)
    return F / scales, scales


def uncoupled_mu(Y, R: int, beta: float, phi: float, cfg: MuConfig | None = None, rng=None,
                 init: CpModel | None = None):
    """Plain multiplicative-update fit of a positive CP model under a Tweedie
    likelihood. Returns ``(CpModel, SolveTrace)``."""
    cfg = cfg or MuConfig()
    rng = np.random.default_rng(rng)
    Y = np.asarray(Y, dtype=float)
    if np.any(Y <= 0):
        raise ValueError("data tensor must be strictly positive")
    Y1, Y2, Y3 = unfold(Y, 1), unfold(Y, 2), unfold(Y, 3)
    if init is not None:
        A, B, C = init.A.copy(), init.B.copy(), init.C.copy()
    else:
        A, B, C = (rng.random((d, R)) + 0.1 for d in Y.shape)

    def objective():
        X = CpModel(A, B, C).to_tensor()
        return float(beta_divergence(Y, X, beta).sum()) / phi

    obj = [objective()]
    termination = "max_iters"
    k = 0
    for k in range(1, cfg.k_max + 1):
        kr = khatri_rao(C, B)
        gm, gp = _data_parts(Y1, kr, A, beta, phi)
        A = np.maximum(mu_step(A, gp, gm, cfg.epsilon), _POS_FLOOR)
        kr = khatri_rao(C, A)
        gm, gp = _data_parts(Y2, kr, B, beta, phi)
        B = np.maximum(mu_step(B, gp, gm, cfg.epsilon), _POS_FLOOR)
        kr = khatri_rao(B, A)
        gm, gp = _data_parts(Y3, kr, C, beta, phi)
        C = np.maximum(mu_step(C, gp, gm, cfg.epsilon), _POS_FLOOR)
        obj.append(objective())
        if abs(obj[-1] - obj[-2]) / max(obj[0], np.finfo(float).tiny) <= cfg.delta_min:
            termination = "converged"
            break
    return CpModel(A, B, C), SolveTrace(np.asarray(obj), k, termination)


def coupled_mu(problem: CoupledProblem, cfg: MuConfig | None = None, rng=None, init=None):
    """Warm-started coupled multiplicative updates.

    Per restart: two uncoupled MU fits, alignment minimizing the summed
    coupling divergence, then sweeps updating A, A', B, B', C, C' with l1
    normalization of A, B, A' (scales absorbed into C, C and B' as in the
    ALS solver). Returns the restart with the best final objective.
    ``init=(model, model_primed)`` replaces the start strategy with a single
    run from those models.
    """
    cfg = cfg or MuConfig()
    if not isinstance(problem.noise, TweedieNoise) or not isinstance(problem.noise_p, TweedieNoise):
        raise ValueError("coupled_mu requires Tweedie noise models")
    if not isinstance(problem.coupling, TweedieCoupling):
        raise ValueError("coupled_mu requires a Tweedie coupling")
    _check_beta_c(problem.coupling.beta_c)
    if np.any(problem.Y <= 0) or np.any(problem.Yp <= 0):
        raise ValueError("data tensors must be strictly positive")

    rng = np.random.default_rng(rng)
    restarts = 1 if init is not None else cfg.restarts
    streams = rng.spawn(restarts)
    warm_cfg = replace(cfg, k_max=cfg.warm_iters, restarts=1)
    eps = cfg.epsilon
    best = None
    for ridx in range(restarts):
        r = streams[ridx]
        if init is not None:
            m, mp = init[0].copy(), init[1].copy()
        else:
            m, _ = uncoupled_mu(problem.Y, problem.R, problem.noise.beta, problem.noise.phi,
                                warm_cfg, r.spawn(1)[0])
            mp, _ = uncoupled_mu(problem.Yp, problem.Rp, problem.noise_p.beta, problem.noise_p.phi,
                                 warm_cfg, r.spawn(1)[0])
        # bring both warm models into the l1 gauge before aligning
        for mod in (m, mp):
            Fa, sa = _l1_rescue(mod.A, r)
            Fb, sb = _l1_rescue(mod.B, r)
            mod.A, mod.B = Fa, Fb
            mod.C = mod.C * (sa * sb)
        mp = align_components(m, mp, problem.coupling)

        obj = [total_objective(problem, m, mp)]
        termination = "max_iters"
        k = 0
        for k in range(1, cfg.k_max + 1):
            gm, gp = mu_gradient_parts("A", problem, m, mp)
            A, sa = _l1_rescue(mu_step(m.A, gp, gm, eps), r)
            m.A, m.C = A, m.C * sa
            gm, gp = mu_gradient_parts("Ap", problem, m, mp)
            Ap, sap = _l1_rescue(mu_step(mp.A, gp, gm, eps), r)
            mp.A, mp.B = Ap, mp.B * sap
            gm, gp = mu_gradient_parts("B", problem, m, mp)
            B, sb = _l1_rescue(mu_step(m.B, gp, gm, eps), r)
            m.B, m.C = B, m.C * sb
            gm, gp = mu_gradient_parts("Bp", problem, m, mp)
            mp.B = np.maximum(mu_step(mp.B, gp, gm, eps), _POS_FLOOR)
            gm, gp = mu_gradient_parts("C", problem, m, mp)
            m.C = np.maximum(mu_step(m.C, gp, gm, eps), _POS_FLOOR)
            gm, gp = mu_gradient_parts("Cp", problem, m, mp)
            mp.C = np.maximum(mu_step(mp.C, gp, gm, eps), _POS_FLOOR)
            obj.append(total_objective(problem, m, mp))
            if abs(obj[-1] - obj[-2]) / max(abs(obj[0]), np.finfo(float).tiny) <= cfg.delta_min:
                termination = "converged"
                break
        trace = SolveTrace(np.asarray(obj), k, termination, ridx)
        if best is None or obj[-1] < best[2].objective_per_iter[-1]:
            best = (m.copy(), mp.copy(), trace)
    return best
