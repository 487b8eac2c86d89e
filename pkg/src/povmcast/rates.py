"""Entropies and the achievable communication/randomness rate region.

All logarithms are base 2. Mutual informations involving the reference
system are Holevo quantities of classical-quantum ensembles; the one
conditioned jointly on the reference and Alice's outcome is evaluated on
explicitly assembled block-diagonal hybrid density operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotADistribution, NotPsd, SizeLimitExceeded
from .linalg import (
    TAU_PROB,
    TAU_PSD,
    DensityOperator,
    as_matrix,
    dimension_cap,
    hermitian_part,
)
from .measurement import (
    CqState,
    OutcomeFunction,
    Povm,
    cq_conditional,
    cq_marginal,
    joint_outcome_model,
)

FEASIBILITY_TOL = 1e-9


def shannon_entropy(p) -> float:
    """H(p) in bits, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise NotADistribution("empty probability vector")
    if float(p.min()) < -TAU_PROB:
        raise NotADistribution(f"negative probability {p.min():.3e}")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise NotADistribution(f"probabilities sum to {p.sum()!r}")
    p = p[p > 0.0]
    # adding +0.0 turns the -0.0 of deterministic laws into +0.0
    return float(-(p * np.log2(p)).sum() + 0.0)


def von_neumann_entropy(rho) -> float:
    """S(rho) in bits from the clipped eigenvalue spectrum."""
    m = rho.mat if isinstance(rho, DensityOperator) else as_matrix(rho)
    w = np.linalg.eigvalsh(hermitian_part(m))
    scale = max(1.0, float(np.abs(w).max())) if w.size else 1.0
    if w.size and float(w.min()) < -TAU_PSD * scale:
        raise NotPsd(f"operator has eigenvalue {w.min():.3e}")
    w = w[w > 0.0]
    return float(-(w * np.log2(w)).sum() + 0.0)


def _active(cq: CqState):
    return [i for i in range(len(cq.outcome_labels)) if cq.probs[i] > TAU_PROB]


def holevo_mutual_information(cq: CqState) -> float:
    """S(sum_x p_x rho_x) - sum_x p_x S(rho_x).

    Outcomes at or below the probability floor contribute nothing.
    """
    idxs = _active(cq)
    if not idxs:
        return 0.0
    avg = sum(cq.weighted_state(i) for i in idxs)
    cond = sum(float(cq.probs[i]) * von_neumann_entropy(cq.ref_states[i]) for i in idxs)
    return von_neumann_entropy(avg) - cond


def reference_entropy(cq: CqState) -> float:
    """Entropy of the average reference state."""
    idxs = _active(cq)
    if not idxs:
        return 0.0
    return von_neumann_entropy(sum(cq.weighted_state(i) for i in idxs))


def conditional_reference_entropy(joint: CqState) -> float:
    """sum_a p(a) S(rho_a) for a pair-labeled model, averaging over x_b first."""
    marg = cq_marginal(joint, 0)
    idxs = _active(marg)
    return float(
        sum(float(marg.probs[i]) * von_neumann_entropy(marg.ref_states[i]) for i in idxs)
    )


@dataclass(frozen=True)
class RateQuantities:
    """The seven entropic quantities the rate region is built from."""

    iXA_R: float
    iXAXB_R: float
    iXB_R_given_XA: float
    iXB_RXA: float
    hXA: float
    hXB: float
    hXB_given_XA: float


def _pair_marginals(joint: CqState):
    a_vals = sorted({lab[0] for lab in joint.outcome_labels})
    b_vals = sorted({lab[1] for lab in joint.outcome_labels})
    p_ab = {lab: float(joint.probs[i]) for i, lab in enumerate(joint.outcome_labels)}
    p_a = np.array([sum(p_ab.get((a, b), 0.0) for b in b_vals) for a in a_vals])
    p_b = np.array([sum(p_ab.get((a, b), 0.0) for a in a_vals) for b in b_vals])
    return a_vals, b_vals, p_a, p_b, p_ab


def _block_diag_entropy(blocks) -> float:
    """Entropy of a block-diagonal PSD operator given its weighted blocks."""
    total = 0.0
    for blk in blocks:
        w = np.linalg.eigvalsh(hermitian_part(blk))
        w = w[w > 0.0]
        if w.size:
            total += float(-(w * np.log2(w)).sum())
    return total


def joint_hybrid_operator(joint: CqState) -> np.ndarray:
    """Explicit block-diagonal density operator on X_B (x) X_A (x) R.

    Classical registers sit in the computational basis; block (b, a)
    carries p(a, b) rho_{a,b}. Guarded by the dimension cap.
    """
    a_vals, b_vals, _, _, _ = _pair_marginals(joint)
    d = joint.dim_ref
    total_dim = len(a_vals) * len(b_vals) * d
    if total_dim > dimension_cap():
        raise SizeLimitExceeded(
            f"hybrid operator dimension {total_dim} exceeds cap {dimension_cap()}"
        )
    out = np.zeros((total_dim, total_dim), dtype=np.complex128)
    for i, lab in enumerate(joint.outcome_labels):
        if joint.probs[i] <= TAU_PROB:
            continue
        a, b = lab
        k = (b_vals.index(b) * len(a_vals) + a_vals.index(a)) * d
        out[k : k + d, k : k + d] = joint.weighted_state(i)
    return out


def conditional_rate_quantities(joint: CqState) -> RateQuantities:
    """Entropic quantities of a pair-labeled broadcast outcome model.

    I(X_B; R | X_A) comes from the chain rule I(X_A X_B; R) - I(X_A; R);
    holevo_conditional_direct provides the independent route for
    cross-checking. I(X_B; R X_A) is S(X_B) + S(R X_A) - S(X_B R X_A)
    on explicit block-diagonal hybrid operators.
    """
    a_vals, b_vals, p_a, p_b, p_ab = _pair_marginals(joint)
    h_xa = shannon_entropy(p_a)
    h_xb = shannon_entropy(p_b)
    h_xab = shannon_entropy(np.array(list(p_ab.values())))
    h_xb_given_xa = h_xab - h_xa

    i_xaxb_r = holevo_mutual_information(joint)
    marg_a = cq_marginal(joint, 0)
    i_xa_r = holevo_mutual_information(marg_a)
    i_xb_r_given_xa = i_xaxb_r - i_xa_r

    d = joint.dim_ref
    if len(a_vals) * len(b_vals) * d > dimension_cap():
        raise SizeLimitExceeded("hybrid operator would exceed the dimension cap")
    s_xb = shannon_entropy(p_b)
    rxa_blocks = [
        marg_a.weighted_state(i)
        for i in range(len(marg_a.outcome_labels))
        if marg_a.probs[i] > TAU_PROB
    ]
    s_rxa = _block_diag_entropy(rxa_blocks)
    xbrxa_blocks = [
        joint.weighted_state(i)
        for i in range(len(joint.outcome_labels))
        if joint.probs[i] > TAU_PROB
    ]
    s_xbrxa = _block_diag_entropy(xbrxa_blocks)
    i_xb_rxa = s_xb + s_rxa - s_xbrxa

    return RateQuantities(
        iXA_R=i_xa_r,
        iXAXB_R=i_xaxb_r,
        iXB_R_given_XA=i_xb_r_given_xa,
        iXB_RXA=i_xb_rxa,
        hXA=h_xa,
        hXB=h_xb,
        hXB_given_XA=h_xb_given_xa,
    )


def holevo_conditional_direct(joint: CqState) -> float:
    """I(X_B; R | X_A) summed directly over conditional ensembles."""
    marg_a = cq_marginal(joint, 0)
    total = 0.0
    for i, a in enumerate(marg_a.outcome_labels):
        p = float(marg_a.probs[i])
        if p <= TAU_PROB:
            continue
        total += p * holevo_mutual_information(cq_conditional(joint, 0, a))
    return total


@dataclass(frozen=True)
class BobOptionOne:
    """Bob bounds when he shares Alice's common randomness."""

    iXAXB_R: float
    hXB_given_XA: float
    requires_alice_randomness: bool = True


@dataclass(frozen=True)
class BobOptionTwo:
    """Bob bounds with common randomness independent of Alice's."""

    iXB_RXA: float
    hXB: float
    requires_alice_randomness: bool = False


@dataclass(frozen=True)
class RateRegionReport:
    iXA_R: float
    hXA: float
    option1: BobOptionOne
    option2: BobOptionTwo
    quantities: RateQuantities


@dataclass(frozen=True)
class RatePoint:
    rA: float
    sA: float
    rB: float
    sB: float


def evaluate_rate_region(
    rho, povm: Povm, g_a: OutcomeFunction, g_b: OutcomeFunction
) -> RateRegionReport:
    """Rate floors for faithful simulation of the (g_a, g_b) broadcast."""
    joint = joint_outcome_model(rho, povm, g_a, g_b)
    q = conditional_rate_quantities(joint)
    return RateRegionReport(
        iXA_R=q.iXA_R,
        hXA=q.hXA,
        option1=BobOptionOne(iXAXB_R=q.iXAXB_R, hXB_given_XA=q.hXB_given_XA),
        option2=BobOptionTwo(iXB_RXA=q.iXB_RXA, hXB=q.hXB),
        quantities=q,
    )


def rate_point_feasible(
    point: RatePoint,
    report: RateRegionReport,
    option: int,
    tol: float = FEASIBILITY_TOL,
) -> bool:
    """Membership test against the achievable region corners."""
    if option not in (1, 2):
        raise ValueError(f"option must be 1 or 2, got {option!r}")
    ok = point.rA >= report.iXA_R - tol
    ok = ok and point.rA + point.sA >= report.hXA - tol
    if option == 1:
        ok = ok and point.rB >= report.option1.iXAXB_R - tol
        ok = ok and point.rB + point.sB >= report.option1.hXB_given_XA - tol
    else:
        ok = ok and point.rB >= report.option2.iXB_RXA - tol
        ok = ok and point.rB + point.sB >= report.option2.hXB - tol
    return ok


def report_to_json(report: RateRegionReport) -> dict:
    q = report.quantities
    return {
        "iXA_R": q.iXA_R,
        "iXAXB_R": q.iXAXB_R,
        "iXB_R_given_XA": q.iXB_R_given_XA,
        "iXB_RXA": q.iXB_RXA,
        "hXA": q.hXA,
        "hXB": q.hXB,
        "hXB_given_XA": q.hXB_given_XA,
        "option1": {
            "iXAXB_R": report.option1.iXAXB_R,
            "hXB_given_XA": report.option1.hXB_given_XA,
            "requires_alice_randomness": report.option1.requires_alice_randomness,
        },
        "option2": {
            "iXB_RXA": report.option2.iXB_RXA,
            "hXB": report.option2.hXB,
            "requires_alice_randomness": report.option2.requires_alice_randomness,
        },
    }


RATE_CSV_COLUMNS = (
    "iXA_R",
    "iXAXB_R",
    "iXB_R_given_XA",
    "iXB_RXA",
    "hXA",
    "hXB",
    "hXB_given_XA",
)


def report_csv_row(report: RateRegionReport) -> list:
    q = report.quantities
    return [getattr(q, name) for name in RATE_CSV_COLUMNS]
