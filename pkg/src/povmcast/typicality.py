"""Weak typicality for product distributions and product quantum states.

Sets are enumerated exactly (the alphabet-size-to-the-n blowup is capped),
membership is the entropy-deviation criterion |(-1/n) log2 p - H| <= delta,
and quantum projectors are assembled symbol-wise from eigenbranch products.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import (
    EmptySupport,
    NotADistribution,
    SizeLimitExceeded,
    SizeMismatch,
)
from .linalg import (
    DensityOperator,
    as_matrix,
    dimension_cap,
    hermitian_part,
    kron_all,
)

# float guard on the membership boundary
MEMBERSHIP_SLACK = 1e-12


@dataclass(frozen=True)
class TypicalSet:
    """Entropy-typical sequences of one product law, lexicographically sorted."""

    n: int
    delta: float
    alphabet_size: int
    members: tuple
    total_prob: float

    def __contains__(self, seq) -> bool:
        return tuple(seq) in set(self.members)

    @property
    def member_index(self) -> dict:
        return {m: i for i, m in enumerate(self.members)}


@dataclass(frozen=True, eq=False)
class PrunedDistribution:
    """Typical set with its renormalized (pruned) probabilities."""

    base: TypicalSet
    probs: dict

    def prob(self, seq) -> float:
        return self.probs.get(tuple(seq), 0.0)

    def support(self) -> tuple:
        return self.base.members

    def prob_vector(self) -> np.ndarray:
        return np.array([self.probs[m] for m in self.base.members])


@dataclass(frozen=True, eq=False)
class TypicalProjector:
    """Projector onto typical eigenvalue branches of a product state."""

    projector: np.ndarray
    kind: str
    rank: int
    conditioning: tuple | None = None


def _check_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise NotADistribution("empty probability vector")
    if float(p.min()) < -1e-12:
        raise NotADistribution(f"negative probability {p.min():.3e}")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise NotADistribution(f"probabilities sum to {p.sum()!r}")
    return np.clip(p, 0.0, None)


def _guard_enumeration(alphabet: int, n: int):
    if alphabet**n > dimension_cap():
        raise SizeLimitExceeded(
            f"enumeration size {alphabet}^{n} exceeds cap {dimension_cap()}"
        )


def _sequence_grid(per_position_logs) -> np.ndarray:
    """Sum of per-position log2 values over all sequences, in product order."""
    return reduce(np.add.outer, per_position_logs).ravel()


def _entropy_bits(p: np.ndarray) -> float:
    q = p[p > 0.0]
    return float(-(q * np.log2(q)).sum())


def build_typical_set(p, n: int, delta: float) -> TypicalSet:
    """All length-n sequences with sample entropy within delta of H(p)."""
    if n < 1:
        raise SizeMismatch(f"blocklength must be >= 1, got {n}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    p = _check_distribution(p)
    k = p.size
    _guard_enumeration(k, n)
    h = _entropy_bits(p)
    with np.errstate(divide="ignore"):
        logs = np.log2(p)
    total = _sequence_grid([logs] * n)
    dev = np.abs(-total / n - h)
    mask = np.isfinite(total) & (dev <= delta + MEMBERSHIP_SLACK)
    members = []
    total_prob = 0.0
    for flat, seq in enumerate(itertools.product(range(k), repeat=n)):
        if mask[flat]:
            members.append(seq)
            total_prob += float(np.exp2(total[flat]))
    return TypicalSet(
        n=n,
        delta=float(delta),
        alphabet_size=k,
        members=tuple(members),
        total_prob=total_prob,
    )


def prune(p, ts: TypicalSet) -> PrunedDistribution:
    """Restrict the product law to the typical set and renormalize."""
    if not ts.members:
        raise EmptySupport("typical set has no members to prune onto")
    p = _check_distribution(p)
    if p.size != ts.alphabet_size:
        raise SizeMismatch("distribution alphabet does not match the typical set")
    raw = np.array([float(np.prod(p[list(m)])) for m in ts.members])
    s = float(raw.sum())
    if s <= 0.0:
        raise EmptySupport("typical set carries zero probability mass")
    probs = {m: float(v / s) for m, v in zip(ts.members, raw)}
    return PrunedDistribution(base=ts, probs=probs)


def _check_conditional(p_cond, used_rows) -> np.ndarray:
    p_cond = np.asarray(p_cond, dtype=np.float64)
    if p_cond.ndim != 2:
        raise SizeMismatch("conditional law must be a (conditioning, output) matrix")
    for a in used_rows:
        if not 0 <= a < p_cond.shape[0]:
            raise SizeMismatch(f"conditioning symbol {a} outside row range")
        _check_distribution(p_cond[a])
    return np.clip(p_cond, 0.0, None)


def conditional_typical_set(p_cond, x_a_seq, n: int, delta: float) -> TypicalSet:
    """Output sequences conditionally typical along a fixed conditioning sequence.

    Membership compares the sample conditional entropy against the
    empirical-average conditional entropy (1/n) sum_i H(p(.|a_i)). Raises
    EmptySupport when nothing qualifies.
    """
    x_a_seq = tuple(int(a) for a in x_a_seq)
    if len(x_a_seq) != n:
        raise SizeMismatch(f"conditioning sequence length {len(x_a_seq)} != n = {n}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    p_cond = _check_conditional(p_cond, set(x_a_seq))
    k_b = p_cond.shape[1]
    _guard_enumeration(k_b, n)
    h_bar = float(np.mean([_entropy_bits(p_cond[a]) for a in x_a_seq]))
    with np.errstate(divide="ignore"):
        logs = [np.log2(p_cond[a]) for a in x_a_seq]
    total = _sequence_grid(logs)
    dev = np.abs(-total / n - h_bar)
    mask = np.isfinite(total) & (dev <= delta + MEMBERSHIP_SLACK)
    members = []
    total_prob = 0.0
    for flat, seq in enumerate(itertools.product(range(k_b), repeat=n)):
        if mask[flat]:
            members.append(seq)
            total_prob += float(np.exp2(total[flat]))
    if not members:
        raise EmptySupport(
            f"conditional typical set for {x_a_seq} is empty at delta={delta}"
        )
    return TypicalSet(
        n=n,
        delta=float(delta),
        alphabet_size=k_b,
        members=tuple(members),
        total_prob=total_prob,
    )


def prune_conditional(p_cond, x_a_seq, ts: TypicalSet) -> PrunedDistribution:
    """Pruned conditional law p(x_b^n | x_a^n) / S on the conditional set."""
    x_a_seq = tuple(int(a) for a in x_a_seq)
    if len(x_a_seq) != ts.n:
        raise SizeMismatch("conditioning sequence length does not match the set")
    p_cond = _check_conditional(p_cond, set(x_a_seq))
    raw = np.array(
        [float(np.prod([p_cond[a, b] for a, b in zip(x_a_seq, m)])) for m in ts.members]
    )
    s = float(raw.sum())
    if s <= 0.0:
        raise EmptySupport("conditional typical set carries zero mass")
    probs = {m: float(v / s) for m, v in zip(ts.members, raw)}
    return PrunedDistribution(base=ts, probs=probs)


def conditional_quantum_typical_projector(
    states, cond_seq, delta: float
) -> TypicalProjector:
    """Projector onto typical eigenbranches of the product state along cond_seq.

    states maps conditioning symbols to density operators; position i
    contributes the eigenbasis of states[cond_seq[i]]. A branch survives
    when its eigenvalue product lies within 2^{+-n delta} of
    2^{-n Hbar}, Hbar being the empirical-average entropy of the
    realized symbols.
    """
    cond_seq = tuple(cond_seq)
    n = len(cond_seq)
    if n < 1:
        raise SizeMismatch("conditioning sequence must be nonempty")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    decs = {}
    for sym in set(cond_seq):
        if sym not in states:
            raise SizeMismatch(f"no state supplied for conditioning symbol {sym!r}")
        m = states[sym]
        m = m.mat if isinstance(m, DensityOperator) else as_matrix(m)
        w, v = np.linalg.eigh(hermitian_part(m))
        decs[sym] = (np.clip(w, 0.0, None), v)
    dims = [decs[sym][0].size for sym in cond_seq]
    total_dim = int(np.prod(dims))
    if total_dim > dimension_cap():
        raise SizeLimitExceeded(
            f"projector dimension {total_dim} exceeds cap {dimension_cap()}"
        )
    h_bar = float(np.mean([_entropy_bits(decs[sym][0]) for sym in cond_seq]))
    with np.errstate(divide="ignore"):
        logs = [np.log2(decs[sym][0]) for sym in cond_seq]
    total = _sequence_grid(logs)
    dev = np.abs(-total / n - h_bar)
    mask = np.isfinite(total) & (dev <= delta + MEMBERSHIP_SLACK)
    v_total = kron_all([decs[sym][1] for sym in cond_seq])
    cols = v_total[:, mask]
    projector = cols @ cols.conj().T
    return TypicalProjector(
        projector=projector,
        kind="conditional",
        rank=int(mask.sum()),
        conditioning=cond_seq,
    )


def quantum_typical_projector(rho, n: int, delta: float) -> TypicalProjector:
    """Typical projector of rho^(x n), the unconditioned special case."""
    rho = DensityOperator.coerce(rho)
    tp = conditional_quantum_typical_projector({0: rho}, (0,) * n, delta)
    return TypicalProjector(
        projector=tp.projector, kind="marginal", rank=tp.rank, conditioning=None
    )


def sample_sequence(pd: PrunedDistribution, rng: np.random.Generator) -> tuple:
    """One exact draw by cumulative inversion over the sorted member list."""
    cum = np.cumsum(pd.prob_vector())
    u = rng.random()
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, len(pd.base.members) - 1)
    return pd.base.members[idx]


def sample_sequences(
    pd: PrunedDistribution, rng: np.random.Generator, count: int
) -> list:
    """count draws consuming the same uniform stream as repeated single draws."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    cum = np.cumsum(pd.prob_vector())
    u = rng.random(count)
    idxs = np.minimum(
        np.searchsorted(cum, u, side="right"), len(pd.base.members) - 1
    )
    return [pd.base.members[int(i)] for i in idxs]


def typical_set_to_json(ts: TypicalSet, pruned: PrunedDistribution | None = None) -> dict:
    out = {
        "n": ts.n,
        "delta": ts.delta,
        "alphabet_size": ts.alphabet_size,
        "total_prob": ts.total_prob,
        "members": [list(m) for m in ts.members],
    }
    if pruned is not None:
        out["pruned_probs"] = [pruned.probs[m] for m in ts.members]
    return out
