"""Monte-Carlo experiment scenarios and the runner.

Every scenario draws its ground-truth factors from a dedicated stream of the
master seed, then runs trials whose streams are derived from
(seed, scenario, sweep index, trial), so results are reproducible and
independent of worker scheduling. Rows come back ordered by (sweep, trial,
method).

CSV schema (fixed): scenario, method, sweep, trial, err_A, err_B, err_C,
err_Ap, err_Bp, err_Cp, shared_err, unshared_err, objective, iterations,
termination, runtime_s. The err_* columns hold per-trial summed squared
factor errors after alignment (for the reconstruction variant of
sampling_rates, err_C/err_Cp hold the integrated continuous errors);
shared_err/unshared_err are filled by shared_component only.
"""

import dataclasses
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy
import scipy.optimize

from . import __version__
from .als import AlsConfig, coupled_als, uncoupled_als
from .compress import compress_coupled_problem, decompress_model
from .config import ExperimentConfig, config_from_dict
from .coupling import (
    CoupledProblem,
    GaussianNoise,
    HardCoupling,
    HybridGaussian,
    TweedieCoupling,
    TweedieNoise,
    dirichlet_interpolation_matrix,
)
from .crb import CrbScenario, bound
from .metrics import align_to_truth, gauge_fix, sigma_for_snr, reconstruct_continuous_error
from .mu import MuConfig, coupled_mu, uncoupled_mu
from .tensor import CpModel

_FACTOR_TAG = 0xFAC70  # stream tag for the per-scenario ground-truth draw

CSV_HEADER = (
    "scenario,method,sweep,trial,err_A,err_B,err_C,err_Ap,err_Bp,err_Cp,"
    "shared_err,unshared_err,objective,iterations,termination,runtime_s"
)


@dataclass
class ResultRow:
    scenario: str
    method: str
    sweep: float
    trial: int
    err_A: float
    err_B: float
    err_C: float
    err_Ap: float
    err_Bp: float
    err_Cp: float
    shared_err: float
    unshared_err: float
    objective: float
    iterations: int
    termination: str
    runtime_s: float


def _stream(seed: int, scenario: str, *tags):
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(scenario.encode()), *tags)))


def _als_cfg(config: ExperimentConfig) -> AlsConfig:
    return AlsConfig(**config.solver)


def _score_pair(truth_m, truth_mp, est_m, est_mp, gauge: str, signs: bool):
    """Gauge-fix, align each estimated model to its truth, and return the six
    per-factor squared errors plus the aligned models."""
    am = align_to_truth(truth_m, gauge_fix(est_m, gauge), signs=signs)
    amp = align_to_truth(truth_mp, gauge_fix(est_mp, gauge), signs=signs)
    errs = [float(np.sum((am.factor(f) - truth_m.factor(f)) ** 2)) for f in ("A", "B", "C")]
    errs += [float(np.sum((amp.factor(f) - truth_mp.factor(f)) ** 2)) for f in ("A", "B", "C")]
    return errs, am, amp


def _row(config, method, sweep, trial, errs, shared=math.nan, unshared=math.nan,
         objective=math.nan, iterations=0, termination="", runtime=math.nan):
    return ResultRow(config.scenario, method, sweep, trial, *errs, shared, unshared,
                     float(objective), int(iterations), termination, float(runtime))


def _uncoupled_pair(Y, Yp, R, Rp, cfg: AlsConfig, rng):
    t0 = time.perf_counter()
    m, tr = uncoupled_als(Y, R, replace(cfg, k_max=cfg.warm_iters), rng.spawn(1)[0])
    mp, trp = uncoupled_als(Yp, Rp, replace(cfg, k_max=cfg.warm_iters), rng.spawn(1)[0])
    dt = time.perf_counter() - t0
    term = "converged" if (tr.termination == trp.termination == "converged") else "max_iters"
    return m, mp, tr.iterations + trp.iterations, term, dt


# ---------------------------------------------------------------------------
# similar_factors (direct coupling, first rows pinned to one)


def _first_row_truth(config: ExperimentConfig):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    rng = _stream(config.seed, config.scenario, _FACTOR_TAG)
    mats = []
    for d in (I, J, Ip, Jp):
        F = rng.standard_normal((d, R))
        F[0, :] = 1.0
        mats.append(F)
    Cp = rng.standard_normal((Kp, R))
    return (*mats, Cp)


def _similar_factors_trial(config: ExperimentConfig, sweep_idx: int, trial: int):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    A, B, Ap, Bp, Cp = _first_row_truth(config)
    sigma_c = config.sigma_c_grid[sweep_idx]
    rng = _stream(config.seed, config.scenario, sweep_idx, trial)
    C = Cp + sigma_c * rng.standard_normal((K, R))
    truth_m, truth_mp = CpModel(A, B, C), CpModel(Ap, Bp, Cp)
    Y = truth_m.to_tensor() + config.sigma_n * rng.standard_normal((I, J, K))
    Yp = truth_mp.to_tensor() + config.sigma_np * rng.standard_normal((Ip, Jp, Kp))
    cfg = _als_cfg(config)

    m_u, mp_u, iters_u, term_u, dt_u = _uncoupled_pair(Y, Yp, R, R, cfg, rng)
    rows = []

    def score(est_m, est_mp):
        return _score_pair(truth_m, truth_mp, est_m, est_mp, "first_row", signs=False)[0]

    if "uncoupled" in config.methods:
        rows.append(_row(config, "uncoupled", sigma_c, trial, score(m_u, mp_u),
                         iterations=iters_u, termination=term_u, runtime=dt_u))
    noise, noise_p = GaussianNoise(config.sigma_n), GaussianNoise(config.sigma_np)
    if "coupled" in config.methods:
        spec = HybridGaussian(np.eye(K), np.eye(Kp), sigma_c)
        prob = CoupledProblem(Y, Yp, noise, noise_p, spec, R)
        t0 = time.perf_counter()
        m, mp, tr = coupled_als(prob, cfg, rng.spawn(1)[0], init=(m_u, mp_u))
        rows.append(_row(config, "coupled", sigma_c, trial, score(m, mp),
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    if "hard" in config.methods:
        prob = CoupledProblem(Y, Yp, noise, noise_p, HardCoupling(np.eye(K), np.eye(Kp)), R)
        t0 = time.perf_counter()
        m, mp, tr = coupled_als(prob, cfg, rng.spawn(1)[0], init=(m_u, mp_u))
        rows.append(_row(config, "hard", sigma_c, trial, score(m, mp),
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    return rows


def compute_scenario_hcrb(config: ExperimentConfig) -> dict:
    """Hybrid bound C-block traces per sigma_c grid value, evaluated at the
    scenario's fixed ground-truth factors (similar_factors / warm_cold)."""
    if config.scenario not in ("similar_factors", "warm_cold"):
        raise ValueError("HCRB sweep applies to the direct-coupling scenarios")
    A, B, Ap, Bp, Cp = _first_row_truth(config)
    K = config.dims[2]
    out = {}
    for sigma_c in config.sigma_c_grid:
        scen = CrbScenario("hybrid", np.eye(K), sigma_c, config.sigma_n, config.sigma_np,
                           A, B, Ap, Bp, Cp)
        out[sigma_c] = bound(scen).factor_trace("C")
    return out


# ---------------------------------------------------------------------------
# shared_component


def _shared_truth(config: ExperimentConfig):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    rng = _stream(config.seed, config.scenario, _FACTOR_TAG)
    norm = lambda F: F / np.linalg.norm(F, axis=0)
    A, B = norm(rng.standard_normal((I, R))), norm(rng.standard_normal((J, R)))
    Ap, Bp = norm(rng.standard_normal((Ip, R))), norm(rng.standard_normal((Jp, R)))
    Cp = rng.standard_normal((Kp, R))
    C_unshared = rng.standard_normal((K, R))
    return A, B, Ap, Bp, Cp, C_unshared


def _shared_component_trial(config: ExperimentConfig, sweep_idx: int, trial: int):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    A, B, Ap, Bp, Cp, C_un = _shared_truth(config)
    shared = list(config.coupled_cols)
    rng = _stream(config.seed, config.scenario, sweep_idx, trial)
    C = C_un.copy()
    C[:, shared] = Cp[:, shared] + config.sigma_c * rng.standard_normal((K, len(shared)))
    truth_m, truth_mp = CpModel(A, B, C), CpModel(Ap, Bp, Cp)
    Y = truth_m.to_tensor() + config.sigma_n * rng.standard_normal((I, J, K))
    Yp = truth_mp.to_tensor() + config.sigma_np * rng.standard_normal((Ip, Jp, Kp))
    cfg = _als_cfg(config)
    unshared = [r for r in range(R) if r not in shared]

    m_u, mp_u, iters_u, term_u, dt_u = _uncoupled_pair(Y, Yp, R, R, cfg, rng)
    rows = []

    def score(est_m, est_mp):
        errs, am, amp = _score_pair(truth_m, truth_mp, est_m, est_mp, "l2", signs=True)
        sh = float(np.sum((am.C[:, shared] - C[:, shared]) ** 2)
                   + np.sum((amp.C[:, shared] - Cp[:, shared]) ** 2))
        un = float(np.sum((am.C[:, unshared] - C[:, unshared]) ** 2)
                   + np.sum((amp.C[:, unshared] - Cp[:, unshared]) ** 2))
        return errs, sh, un

    if "uncoupled" in config.methods:
        errs, sh, un = score(m_u, mp_u)
        rows.append(_row(config, "uncoupled", config.sigma_c, trial, errs, sh, un,
                         iterations=iters_u, termination=term_u, runtime=dt_u))
    if "coupled" in config.methods:
        spec = HybridGaussian(np.eye(K), np.eye(Kp), config.sigma_c, tuple(shared))
        prob = CoupledProblem(Y, Yp, GaussianNoise(config.sigma_n),
                              GaussianNoise(config.sigma_np), spec, R)
        t0 = time.perf_counter()
        m, mp, tr = coupled_als(prob, cfg, rng.spawn(1)[0], init=(m_u, mp_u))
        errs, sh, un = score(m, mp)
        rows.append(_row(config, "coupled", config.sigma_c, trial, errs, sh, un,
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    return rows


# ---------------------------------------------------------------------------
# compressed


def _compressed_truth(config: ExperimentConfig):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    rng = _stream(config.seed, config.scenario, _FACTOR_TAG)
    norm = lambda F: F / np.linalg.norm(F, axis=0)
    A, B = norm(rng.standard_normal((I, R))), norm(rng.standard_normal((J, R)))
    Ap, Bp = norm(rng.standard_normal((Ip, R))), norm(rng.standard_normal((Jp, R)))
    Cp = rng.standard_normal((Kp, R))
    return A, B, Ap, Bp, Cp


def _compressed_trial(config: ExperimentConfig, sweep_idx: int, trial: int):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    A, B, Ap, Bp, Cp = _compressed_truth(config)
    snr_y = config.snr_y_grid[sweep_idx]
    sigma_n = sigma_for_snr("normalized_Y", snr_y, R=R, sigma_c=config.sigma_c, I=I, J=J)
    sigma_np = sigma_for_snr("normalized_Yp", config.snr_yp, R=R, I=Ip, J=Jp)
    rng = _stream(config.seed, config.scenario, sweep_idx, trial)
    C = Cp + config.sigma_c * rng.standard_normal((K, R))
    truth_m, truth_mp = CpModel(A, B, C), CpModel(Ap, Bp, Cp)
    Y = truth_m.to_tensor() + sigma_n * rng.standard_normal((I, J, K))
    Yp = truth_mp.to_tensor() + sigma_np * rng.standard_normal((Ip, Jp, Kp))
    cfg = _als_cfg(config)
    run_cfg = replace(cfg, k_max=config.coupled_iters, delta_min=0.0)

    m_u, mp_u, iters_u, term_u, dt_u = _uncoupled_pair(Y, Yp, R, R, cfg, rng)
    rows = []

    def score(est_m, est_mp):
        return _score_pair(truth_m, truth_mp, est_m, est_mp, "l2", signs=True)[0]

    if "uncoupled" in config.methods:
        rows.append(_row(config, "uncoupled", snr_y, trial, score(m_u, mp_u),
                         iterations=iters_u, termination=term_u, runtime=dt_u))
    spec = HybridGaussian(np.eye(K), np.eye(Kp), config.sigma_c)
    prob = CoupledProblem(Y, Yp, GaussianNoise(sigma_n), GaussianNoise(sigma_np), spec, R)
    if "coupled" in config.methods:
        t0 = time.perf_counter()
        m, mp, tr = coupled_als(prob, run_cfg, rng.spawn(1)[0], init=(m_u, mp_u))
        rows.append(_row(config, "coupled", snr_y, trial, score(m, mp),
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    if "coupled_compressed" in config.methods:
        prob_c, bases, bases_p = compress_coupled_problem(prob, config.ranks, rng=rng.spawn(1)[0])
        m_c = CpModel(bases.U.T @ m_u.A, bases.V.T @ m_u.B, bases.W.T @ m_u.C)
        mp_c = CpModel(bases_p.U.T @ mp_u.A, bases_p.V.T @ mp_u.B, bases_p.W.T @ mp_u.C)
        t0 = time.perf_counter()
        mc, mpc, tr = coupled_als(prob_c, run_cfg, rng.spawn(1)[0], init=(m_c, mp_c))
        dt = time.perf_counter() - t0
        m, mp = decompress_model(mc, bases), decompress_model(mpc, bases_p)
        rows.append(_row(config, "coupled_compressed", snr_y, trial, score(m, mp),
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=dt))
    return rows


# ---------------------------------------------------------------------------
# gamma_coupling


def _collinear_positive_pair(rng, n: int, target: float):
    """Two positive vectors with Pearson correlation ~ target."""
    a = np.abs(rng.standard_normal(n)) + 1e-3
    for _ in range(50):
        u = np.abs(rng.standard_normal(n)) + 1e-3

        def corr_gap(t):
            return float(np.corrcoef(a, a + t * u)[0, 1]) - target

        hi = 1.0
        while corr_gap(hi) > 0 and hi < 1e6:
            hi *= 2.0
        if corr_gap(hi) <= 0 < corr_gap(1e-9):
            t = scipy.optimize.brentq(corr_gap, 1e-9, hi)
            return a, a + t * u
    raise RuntimeError("could not construct the collinear pair")


def _gamma_truth(config: ExperimentConfig):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    rng = _stream(config.seed, config.scenario, _FACTOR_TAG)
    a1, a2 = _collinear_positive_pair(rng, I, config.collinear_corr)
    cols = [a1, a2] + [np.abs(rng.standard_normal(I)) for _ in range(R - 2)]
    A = np.column_stack(cols)
    B = np.abs(rng.standard_normal((J, R)))
    Ap = np.abs(rng.standard_normal((Ip, R)))
    Bp = np.abs(rng.standard_normal((Jp, R)))
    l1 = lambda F: F / F.sum(axis=0)
    Cp = np.abs(rng.standard_normal((Kp, R)))
    return l1(A), l1(B), l1(Ap), l1(Bp), Cp


def _gamma_trial(config: ExperimentConfig, sweep_idx: int, trial: int):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    A, B, Ap, Bp, Cp = _gamma_truth(config)
    rng = _stream(config.seed, config.scenario, sweep_idx, trial)
    # Tweedie beta=2 is Gamma with mean mu and variance phi mu^2
    C = rng.gamma(1.0 / config.phi_c, config.phi_c * Cp)
    truth_m, truth_mp = CpModel(A, B, C), CpModel(Ap, Bp, Cp)
    Y = rng.gamma(1.0 / config.phi, config.phi * truth_m.to_tensor())
    Yp = rng.gamma(1.0 / config.phi_p, config.phi_p * truth_mp.to_tensor())
    cfg = MuConfig(**config.solver)
    rows = []

    def score(est_m, est_mp):
        return _score_pair(truth_m, truth_mp, est_m, est_mp, "l1", signs=False)[0]

    t0 = time.perf_counter()
    m_u, tr1 = uncoupled_mu(Y, R, config.beta, config.phi, replace(cfg, k_max=cfg.warm_iters),
                            rng.spawn(1)[0])
    mp_u, tr2 = uncoupled_mu(Yp, R, config.beta_p, config.phi_p, replace(cfg, k_max=cfg.warm_iters),
                             rng.spawn(1)[0])
    dt_u = time.perf_counter() - t0
    if "uncoupled" in config.methods:
        term = "converged" if (tr1.termination == tr2.termination == "converged") else "max_iters"
        rows.append(_row(config, "uncoupled", config.phi_c, trial, score(m_u, mp_u),
                         iterations=tr1.iterations + tr2.iterations, termination=term, runtime=dt_u))
    if "coupled" in config.methods:
        prob = CoupledProblem(Y, Yp, TweedieNoise(config.beta, config.phi),
                              TweedieNoise(config.beta_p, config.phi_p),
                              TweedieCoupling(config.beta_c, config.phi_c), R)
        t0 = time.perf_counter()
        m, mp, tr = coupled_mu(prob, cfg, rng.spawn(1)[0], init=(m_u, mp_u))
        rows.append(_row(config, "coupled", config.phi_c, trial, score(m, mp),
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    return rows


# ---------------------------------------------------------------------------
# sampling_rates (interpolation coupling)


def _sine_components(alpha, freqs, t):
    # columns c_r(t) = sum_i alpha[i, r] sin(2 pi f_i t)
    basis = np.sin(2 * np.pi * np.asarray(t)[:, None] * np.asarray(freqs)[None, :])
    return basis @ alpha


def _sampling_truth(config: ExperimentConfig):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    rng = _stream(config.seed, config.scenario, _FACTOR_TAG)
    norm = lambda F: F / np.linalg.norm(F, axis=0)
    A, B = norm(rng.standard_normal((I, R))), norm(rng.standard_normal((J, R)))
    Ap, Bp = norm(rng.standard_normal((Ip, R))), norm(rng.standard_normal((Jp, R)))
    alpha = rng.standard_normal((len(config.freqs), R))
    tK = np.arange(K) * (config.t_span / K)
    tKp = np.arange(Kp) * (config.t_span / Kp)
    C = _sine_components(alpha, config.freqs, tK)
    Cp = _sine_components(alpha, config.freqs, tKp)
    return A, B, Ap, Bp, C, Cp, alpha, tK, tKp


def _sampling_trial(config: ExperimentConfig, sweep_idx: int, trial: int):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    A, B, Ap, Bp, C, Cp, alpha, tK, tKp = _sampling_truth(config)
    recon = config.variant == "reconstruction"
    if recon:
        sigma_n = config.sigma_n
        sigma_np = sigma_for_snr("sum_of_sines", config.snr_yp, R=R, freqs=config.freqs,
                                 K=Kp, T=config.t_span / Kp, I=Ip, J=Jp)
        sweep_val = config.snr_yp
        # couple on the coarse grid of C: H' interpolates C' down to it
        H = np.eye(K)
        Hp = dirichlet_interpolation_matrix(tK, tKp, Kp, config.t_span)
    else:
        sigma_n = config.sigma_n_grid[sweep_idx]
        sigma_np = config.sigma_np
        sweep_val = sigma_n
        tL = np.arange(config.L) * (config.t_span / config.L)
        H = dirichlet_interpolation_matrix(tL, tK, K, config.t_span)
        Hp = dirichlet_interpolation_matrix(tL, tKp, Kp, config.t_span)
    truth_m, truth_mp = CpModel(A, B, C), CpModel(Ap, Bp, Cp)
    rng = _stream(config.seed, config.scenario, sweep_idx, trial)
    Y = truth_m.to_tensor() + sigma_n * rng.standard_normal((I, J, K))
    Yp = truth_mp.to_tensor() + sigma_np * rng.standard_normal((Ip, Jp, Kp))
    cfg = _als_cfg(config)

    def score(est_m, est_mp):
        errs, am, amp = _score_pair(truth_m, truth_mp, est_m, est_mp, "l2", signs=True)
        if recon:
            truth_fn = lambda t: _sine_components(alpha, config.freqs, t)
            errs[2] = reconstruct_continuous_error(am.C, tK, config.t_span, truth_fn,
                                                   config.fine_grid_size)
            errs[5] = reconstruct_continuous_error(amp.C, tKp, config.t_span, truth_fn,
                                                   config.fine_grid_size)
        return errs

    m_u, mp_u, iters_u, term_u, dt_u = _uncoupled_pair(Y, Yp, R, R, cfg, rng)
    rows = []
    if "uncoupled" in config.methods:
        rows.append(_row(config, "uncoupled", sweep_val, trial, score(m_u, mp_u),
                         iterations=iters_u, termination=term_u, runtime=dt_u))
    noise, noise_p = GaussianNoise(sigma_n), GaussianNoise(sigma_np)
    for method, sc in (("coupled", config.sigma_c), ("hard", config.hard_sigma_c)):
        if method not in config.methods:
            continue
        prob = CoupledProblem(Y, Yp, noise, noise_p, HybridGaussian(H, Hp, sc), R)
        t0 = time.perf_counter()
        m, mp, tr = coupled_als(prob, cfg, rng.spawn(1)[0], init=(m_u, mp_u))
        rows.append(_row(config, method, sweep_val, trial, score(m, mp),
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    return rows


# ---------------------------------------------------------------------------
# warm_cold


def _warm_cold_trial(config: ExperimentConfig, sweep_idx: int, trial: int):
    I, J, K, Ip, Jp, Kp = config.dims
    R = config.R
    A, B, Ap, Bp, Cp = _first_row_truth(config)
    sigma_c = config.sigma_c_grid[sweep_idx]
    rng = _stream(config.seed, config.scenario, sweep_idx, trial)
    C = Cp + sigma_c * rng.standard_normal((K, R))
    truth_m, truth_mp = CpModel(A, B, C), CpModel(Ap, Bp, Cp)
    Y = truth_m.to_tensor() + config.sigma_n * rng.standard_normal((I, J, K))
    Yp = truth_mp.to_tensor() + config.sigma_np * rng.standard_normal((Ip, Jp, Kp))
    cfg = _als_cfg(config)
    spec = HybridGaussian(np.eye(K), np.eye(Kp), sigma_c)
    prob = CoupledProblem(Y, Yp, GaussianNoise(config.sigma_n), GaussianNoise(config.sigma_np),
                          spec, R)
    rows = []
    for method in config.methods:
        run_cfg = replace(cfg, warm_start=(method == "warm"))
        t0 = time.perf_counter()
        m, mp, tr = coupled_als(prob, run_cfg, rng.spawn(1)[0])
        errs, _, _ = _score_pair(truth_m, truth_mp, m, mp, "first_row", signs=False)
        rows.append(_row(config, method, sigma_c, trial, errs,
                         objective=tr.objective_per_iter[-1], iterations=tr.iterations,
                         termination=tr.termination, runtime=time.perf_counter() - t0))
    return rows


# ---------------------------------------------------------------------------
# runner


_TRIALS = {
    "similar_factors": _similar_factors_trial,
    "shared_component": _shared_component_trial,
    "compressed": _compressed_trial,
    "gamma_coupling": _gamma_trial,
    "sampling_rates": _sampling_trial,
    "warm_cold": _warm_cold_trial,
}


def sweep_values(config: ExperimentConfig):
    if config.scenario in ("similar_factors", "warm_cold"):
        return list(config.sigma_c_grid)
    if config.scenario == "compressed":
        return list(config.snr_y_grid)
    if config.scenario == "sampling_rates":
        return [config.snr_yp] if config.variant == "reconstruction" else list(config.sigma_n_grid)
    return [config.sigma_c if config.scenario == "shared_component" else config.phi_c]


def _task(args):
    scenario, cfg_dict, sweep_idx, trial = args
    config = config_from_dict(cfg_dict)
    return _TRIALS[scenario](config, sweep_idx, trial)


def run_scenario(config: ExperimentConfig):
    """Run all trials of a scenario and return the result rows ordered by
    (sweep, trial, method). With ``config.workers > 1`` trials run in a
    process pool; results are identical to the serial run."""
    sweeps = sweep_values(config)
    tasks = [(config.scenario, config.to_dict(), si, t)
             for si in range(len(sweeps)) for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_task, tasks, chunksize=1))
    else:
        chunks = [_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


# ---------------------------------------------------------------------------
# output files


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, rows):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in dataclasses.astuple(r)) + "\n")


def summarize(rows):
    """Aggregate rows into per-(method, sweep) means with 95% normal-theory
    confidence half-widths."""
    keys = sorted({(r.method, r.sweep) for r in rows}, key=lambda k: (str(k[0]), k[1]))
    out = []
    fields = ("err_A", "err_B", "err_C", "err_Ap", "err_Bp", "err_Cp",
              "shared_err", "unshared_err")
    for method, sweep in keys:
        grp = [r for r in rows if r.method == method and r.sweep == sweep]
        entry = {"scenario": grp[0].scenario, "method": method, "sweep": sweep,
                 "trials": len(grp)}
        for f in fields:
            vals = np.array([getattr(r, f) for r in grp], dtype=float)
            if np.all(np.isnan(vals)):
                entry[f"mse_{f}"] = math.nan
                entry[f"ci_{f}"] = math.nan
            else:
                entry[f"mse_{f}"] = float(np.nanmean(vals))
                n = int(np.sum(~np.isnan(vals)))
                entry[f"ci_{f}"] = float(1.96 * np.nanstd(vals, ddof=1) / np.sqrt(n)) if n > 1 else math.nan
        entry["mean_runtime_s"] = float(np.nanmean([r.runtime_s for r in grp]))
        out.append(entry)
    return out


def write_summary(path, rows):
    summary = summarize(rows)
    if not summary:
        return
    cols = list(summary[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for entry in summary:
            fh.write(",".join(_fmt(entry[c]) for c in cols) + "\n")


def write_manifest(path, config: ExperimentConfig):
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "versions": {
            "coupledcp": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "generated": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def run_and_write(config: ExperimentConfig, out_prefix: str):
    """Run a scenario and write <prefix>.csv, <prefix>_summary.csv and
    <prefix>_manifest.json. Returns the rows."""
    rows = run_scenario(config)
    write_rows(f"{out_prefix}.csv", rows)
    write_summary(f"{out_prefix}_summary.csv", rows)
    write_manifest(f"{out_prefix}_manifest.json", config)
    return rows
