"""Bayesian and hybrid Cramer-Rao bounds for the coupled CP model.

The parameter vector is theta = vec([A~; B~; C; A'~; B'~; C']) where A~ is a
factor without its (known, all-ones) first row; within each factor the
components r = 1..R are concatenated, each in natural row order. The bound is
the inverse of the information matrix: the (expected) Fisher information of
the two likelihoods plus the prior information of the coupling
c_r = H c'_r + gamma_r (and, in the Bayesian model, the factor priors).
"""

from dataclasses import dataclass, field

import numpy as np

FACTORS = ("A", "B", "C", "Ap", "Bp", "Cp")


class SingularInformationError(np.linalg.LinAlgError):
    """Raised when the information matrix is numerically singular."""


@dataclass
class CrbScenario:
    """Inputs of a bound computation.

    ``A, B, Ap, Bp`` are full factor matrices with first rows equal to one;
    ``Cp`` is the full K' x R conditioning factor. In hybrid mode they are
    the deterministic values, in Bayesian mode the prior means (the prior
    standard deviations must then be positive).
    """

    mode: str  # "bayesian" | "hybrid"
    H: np.ndarray  # K x K' coupling transformation
    sigma_c: float
    sigma_n: float
    sigma_np: float
    A: np.ndarray
    B: np.ndarray
    Ap: np.ndarray
    Bp: np.ndarray
    Cp: np.ndarray
    sigma_A: float = 0.0
    sigma_B: float = 0.0
    sigma_Ap: float = 0.0
    sigma_Bp: float = 0.0
    sigma_Cp: float = 0.0

    def __post_init__(self):
        if self.mode not in ("bayesian", "hybrid"):
            raise ValueError("mode must be 'bayesian' or 'hybrid'")
        self.H = np.asarray(self.H, dtype=float)
        for name in ("A", "B", "Ap", "Bp", "Cp"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("A", "B", "Ap", "Bp"):
            first = getattr(self, name)[0]
            if not np.allclose(first, 1.0):
                raise ValueError(f"first row of {name} must be all ones")
        if self.H.shape[1] != self.Cp.shape[0]:
            raise ValueError("H column count must match rows of Cp")
        ranks = {getattr(self, n).shape[1] for n in ("A", "B", "Ap", "Bp", "Cp")}
        if len(ranks) != 1:
            raise ValueError("all factors must share the component count R")
        if self.mode == "bayesian":
            for name in ("sigma_A", "sigma_B", "sigma_Ap", "sigma_Bp", "sigma_Cp"):
                if getattr(self, name) <= 0:
                    raise ValueError(f"{name} must be positive in bayesian mode")

    @property
    def R(self) -> int:
        return self.A.shape[1]

    @property
    def dims(self):
        return (self.A.shape[0], self.B.shape[0], self.H.shape[0],
                self.Ap.shape[0], self.Bp.shape[0], self.Cp.shape[0])


@dataclass
class BoundResult:
    matrix: np.ndarray
    per_parameter: np.ndarray
    block_index: dict
    factor_slices: dict = field(default_factory=dict)

    def factor_trace(self, name: str) -> float:
        """Sum of the bound diagonal over one factor's parameters."""
        return float(self.per_parameter[self.factor_slices[name]].sum())


# ---------------------------------------------------------------------------
# Fisher assembly

# Moments drive the assembly: `aTa[r, s]` is (E of) a~_r^T a~_s, `a_mean` the
# (I-1) x R matrix of (E of) a~_r, likewise for b and the full c_r.


def _assemble_single(aTa, a_mean, bTb, b_mean, cTc, c_mean, sigma_n):
    Im1, R = a_mean.shape
    Jm1 = b_mean.shape[0]
    K = c_mean.shape[0]
    nA, nB, nC = Im1 * R, Jm1 * R, K * R
    n = nA + nB + nC
    F = np.zeros((n, n))
    w = 1.0 / sigma_n**2

    def blk(off, size, r):
        return slice(off + r * size, off + (r + 1) * size)

    for r in range(R):
        for s in range(R):
            F[blk(0, Im1, r), blk(0, Im1, s)] = w * (bTb[r, s] + 1) * cTc[r, s] * np.eye(Im1)
            F[blk(nA, Jm1, r), blk(nA, Jm1, s)] = w * (aTa[r, s] + 1) * cTc[r, s] * np.eye(Jm1)
            F[blk(nA + nB, K, r), blk(nA + nB, K, s)] = (
                w * (aTa[r, s] + 1) * (bTb[r, s] + 1) * np.eye(K)
            )
            ab = w * cTc[r, s] * np.outer(a_mean[:, s], b_mean[:, r])
            F[blk(0, Im1, r), blk(nA, Jm1, s)] = ab
            F[blk(nA, Jm1, s), blk(0, Im1, r)] = ab.T
            ac = w * (bTb[r, s] + 1) * np.outer(a_mean[:, s], c_mean[:, r])
            F[blk(0, Im1, r), blk(nA + nB, K, s)] = ac
            F[blk(nA + nB, K, s), blk(0, Im1, r)] = ac.T
            bc = w * (aTa[r, s] + 1) * np.outer(b_mean[:, s], c_mean[:, r])
            F[blk(nA, Jm1, r), blk(nA + nB, K, s)] = bc
            F[blk(nA + nB, K, s), blk(nA, Jm1, r)] = bc.T
    return F


def fisher_blocks(A, B, C, sigma_n: float):
    """Exact Fisher information of one CP likelihood over [A~; B~; C].

    ``A`` and ``B`` carry their all-ones first rows (checked); the blocks are
    the Gram of the model Jacobian divided by sigma_n^2, e.g. the (a~_r, a~_s)
    block is (b~_r^T b~_s + 1)(c_r^T c_s) I.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    if not (np.allclose(A[0], 1.0) and np.allclose(B[0], 1.0)):
        raise ValueError("first rows of A and B must be all ones")
    At, Bt = A[1:], B[1:]
    return _assemble_single(At.T @ At, At, Bt.T @ Bt, Bt, C.T @ C, C, sigma_n)


def _second_model_fisher(scenario, expected: bool):
    At, Bt = scenario.Ap[1:], scenario.Bp[1:]
    Cp = scenario.Cp
    Ipm1, Jpm1, Kp = At.shape[0], Bt.shape[0], Cp.shape[0]
    R = scenario.R
    if not expected:
        return _assemble_single(At.T @ At, At, Bt.T @ Bt, Bt, Cp.T @ Cp, Cp, scenario.sigma_np)
    aTa = At.T @ At + Ipm1 * scenario.sigma_Ap**2 * np.eye(R)
    bTb = Bt.T @ Bt + Jpm1 * scenario.sigma_Bp**2 * np.eye(R)
    cTc = Cp.T @ Cp + Kp * scenario.sigma_Cp**2 * np.eye(R)
    return _assemble_single(aTa, At, bTb, Bt, cTc, Cp, scenario.sigma_np)


def expected_fisher_hybrid(scenario: CrbScenario):
    """Average Fisher matrix for the hybrid model: the first model's blocks
    with C integrated over p(C | C') (E[c_r] = H c'_r and E[c_r^T c_s] =
    c'_r^T H^T H c'_s + K sigma_c^2 delta_rs), block-diagonal with the exact
    Fisher of the second model."""
    if scenario.mode != "hybrid":
        raise ValueError("scenario mode must be 'hybrid'")
    At, Bt = scenario.A[1:], scenario.B[1:]
    HC = scenario.H @ scenario.Cp
    K = scenario.H.shape[0]
    cTc = HC.T @ HC + K * scenario.sigma_c**2 * np.eye(scenario.R)
    F1 = _assemble_single(At.T @ At, At, Bt.T @ Bt, Bt, cTc, HC, scenario.sigma_n)
    F2 = _second_model_fisher(scenario, expected=False)
    n1, n2 = F1.shape[0], F2.shape[0]
    F = np.zeros((n1 + n2, n1 + n2))
    F[:n1, :n1] = F1
    F[n1:, n1:] = F2
    return F


def expected_fisher_bayesian(scenario: CrbScenario):
    """Average Fisher matrix with the expectation over all factor priors.

    Second moments pick up the prior variances on the diagonal (r = s), e.g.
    E[a~_r^T a~_s] = a-bar_r^T a-bar_s + (I-1) sigma_A^2 delta_rs and
    E[c_r^T c_s] = c-bar'_r^T H^T H c-bar'_s
                   + (K sigma_c^2 + tr(H^T H) sigma_C'^2) delta_rs.
    """
    if scenario.mode != "bayesian":
        raise ValueError("scenario mode must be 'bayesian'")
    R = scenario.R
    At, Bt = scenario.A[1:], scenario.B[1:]
    Im1, Jm1 = At.shape[0], Bt.shape[0]
    K = scenario.H.shape[0]
    aTa = At.T @ At + Im1 * scenario.sigma_A**2 * np.eye(R)
    bTb = Bt.T @ Bt + Jm1 * scenario.sigma_B**2 * np.eye(R)
    HC = scenario.H @ scenario.Cp
    HtH = scenario.H.T @ scenario.H
    cTc = HC.T @ HC + (K * scenario.sigma_c**2 + np.trace(HtH) * scenario.sigma_Cp**2) * np.eye(R)
    F1 = _assemble_single(aTa, At, bTb, Bt, cTc, HC, scenario.sigma_n)
    F2 = _second_model_fisher(scenario, expected=True)
    n1, n2 = F1.shape[0], F2.shape[0]
    F = np.zeros((n1 + n2, n1 + n2))
    F[:n1, :n1] = F1
    F[n1:, n1:] = F2
    return F


# ---------------------------------------------------------------------------
# prior information and the bound


def _block_layout(scenario):
    I, J, K, Ip, Jp, Kp = scenario.dims
    R = scenario.R
    sizes = [(I - 1) * R, (J - 1) * R, K * R, (Ip - 1) * R, (Jp - 1) * R, Kp * R]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return sizes, offsets


def prior_matrix(scenario: CrbScenario):
    """Prior information matrix.

    Bayesian mode fills every diagonal block (factor priors plus the coupling
    quadratic form on the C/C' pair); hybrid mode keeps only the C/C' blocks
    of the conditional prior p(C | C'), leaving the deterministic factors
    unregularized.
    """
    sizes, offsets = _block_layout(scenario)
    n = offsets[-1]
    R = scenario.R
    H = scenario.H
    K, Kp = H.shape
    wc = 1.0 / scenario.sigma_c**2
    P = np.zeros((n, n))
    sC = slice(offsets[2], offsets[3])
    sCp = slice(offsets[5], offsets[6])
    P[sC, sC] = wc * np.eye(K * R)
    P[sCp, sCp] = wc * np.kron(np.eye(R), H.T @ H)
    P[sC, sCp] = -wc * np.kron(np.eye(R), H)
    P[sCp, sC] = -wc * np.kron(np.eye(R), H.T)
    if scenario.mode == "bayesian":
        for idx, sig in ((0, scenario.sigma_A), (1, scenario.sigma_B),
                         (3, scenario.sigma_Ap), (4, scenario.sigma_Bp)):
            s = slice(offsets[idx], offsets[idx + 1])
            P[s, s] = np.eye(sizes[idx]) / sig**2
        P[sCp, sCp] += np.eye(Kp * R) / scenario.sigma_Cp**2
    return P


def _build_block_index(scenario):
    I, J, K, Ip, Jp, Kp = scenario.dims
    R = scenario.R
    rows = {"A": I - 1, "B": J - 1, "C": K, "Ap": Ip - 1, "Bp": Jp - 1, "Cp": Kp}
    index = {}
    slices = {}
    pos = 0
    for name in FACTORS:
        start = pos
        for r in range(R):
            for row in range(rows[name]):
                index[(name, r, row)] = pos
                pos += 1
        slices[name] = slice(start, pos)
    return index, slices


def bound(scenario: CrbScenario) -> BoundResult:
    """BCRB (bayesian mode) or HCRB (hybrid mode): the inverse of the average
    Fisher information plus the prior information, symmetrized. Raises
    :class:`SingularInformationError` naming the factor block that carries
    the near-null direction when the matrix is not invertible."""
    if scenario.mode == "bayesian":
        info = expected_fisher_bayesian(scenario) + prior_matrix(scenario)
    else:
        info = expected_fisher_hybrid(scenario) + prior_matrix(scenario)
    lam, Q = np.linalg.eigh(info)
    floor = 1e-12 * max(lam[-1], np.finfo(float).tiny)
    if lam[0] <= floor:
        _, slices = _build_block_index(scenario)
        v = np.abs(Q[:, 0])
        mass = {name: float(v[s].sum()) for name, s in slices.items()}
        worst = max(mass, key=mass.get)
        raise SingularInformationError(
            f"information matrix numerically singular (eig {lam[0]:.3e}); "
            f"the null direction loads mostly on block {worst!r} "
            "(typically a missing first-row constraint)"
        )
    inv = (Q / lam) @ Q.T
    inv = 0.5 * (inv + inv.T)
    index, slices = _build_block_index(scenario)
    return BoundResult(inv, np.diag(inv).copy(), index, slices)


def bound_to_csv(path, result: BoundResult):
    """Write ``parameter,bound`` lines; parameters labelled factor[row,component]
    with 1-based indices (rows of the reduced factors start at 2)."""
    inv_index = sorted(result.block_index.items(), key=lambda kv: kv[1])
    with open(path, "w") as fh:
        fh.write("parameter,bound\n")
        for (name, r, row), pos in inv_index:
            base = 2 if name in ("A", "B", "Ap", "Bp") else 1
            fh.write(f"{name}[{row + base},{r + 1}],{result.per_parameter[pos]!r}\n")
