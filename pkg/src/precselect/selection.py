"""Choosing a preconditioner of approximately minimal stability.

:func:`select_preconditioner` estimates every candidate once at a fixed
sketch size and returns the argmin. :func:`adaptive_select` works in rounds of
geometrically increasing accuracy, dropping candidates as soon as their
estimate is provably worse than the current leader.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .sparse import CountingOperator, as_generator, operator_dim
from .stability import draw_sketch, sketch_residual_norm

__all__ = [
    "SelectionRound",
    "SelectionReport",
    "select_preconditioner",
    "adaptive_select",
    "adaptive_round_sizes",
    "selection_guarantee_check",
]


@dataclass
class SelectionRound:
    eps_cur: float | None
    k: int
    candidates: list          # indices estimated this round
    estimates: list           # aligned with ``candidates``
    leader: int
    survivors: list


@dataclass
class SelectionReport:
    candidate_labels: list
    estimates: list               # None marks a candidate filtered out before the last round
    chosen_index: int
    algorithm: str
    k_used: int | None = None
    epsilon: float | None = None
    delta: float | None = None
    round_ks: list = field(default_factory=list)
    total_spmv: int = 0
    total_solves: int = 0
    gaussian_draws: int = 0
    reuse_sketch: bool = True
    rounds: list = field(default_factory=list)

    @property
    def chosen_label(self):
        return self.candidate_labels[self.chosen_index]

    def to_dict(self):
        return asdict(self)


def _labels(candidates, labels):
    if labels is None:
        return [getattr(M, "label", f"M{j}") for j, M in enumerate(candidates)]
    labels = list(labels)
    if len(labels) != len(candidates):
        raise ValueError("labels and candidates differ in length")
    return labels


def _validate(A, candidates):
    if len(candidates) == 0:
        raise ValueError("candidate list is empty")
    d = operator_dim(A)
    for j, M in enumerate(candidates):
        if M.dim != d:
            raise DimensionMismatchError(f"candidate {j} has dimension {M.dim}, operator has {d}")
    return d


def _map(fn, items, max_workers):
    if max_workers is None or max_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def _argmin(values):
    # lowest index among ties
    return int(np.argmin(np.asarray(values, dtype=np.float64)))


def select_preconditioner(A, candidates, k, rng=None, reuse_sketch=True, *, labels=None,
                          estimator=sketch_residual_norm, max_workers=None) -> SelectionReport:
    """Estimate every candidate's stability with ``k`` probes and return the argmin.

    With ``reuse_sketch`` one sketch ``Q`` and its image ``AQ`` are shared by
    all candidates, so the run costs ``k`` products with ``A``, ``n k``
    preconditioner solves and ``d k`` Gaussian draws. Without reuse each
    candidate gets an independent sketch (``n k`` products, ``n d k`` draws).

    ``estimator(Q, AQ, M)`` computes one candidate's value; it is replaceable
    for testing.
    """
    d = _validate(A, candidates)
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    g = as_generator(rng)
    op = CountingOperator(A)
    n = len(candidates)
    draws = 0

    if reuse_sketch:
        Q = draw_sketch(d, k, g)
        draws += Q.size
        AQ = op @ Q
        estimates = _map(lambda M: estimator(Q, AQ, M), candidates, max_workers)
    else:
        sketches = []
        for _ in range(n):
            Q = draw_sketch(d, k, g)
            draws += Q.size
            sketches.append((Q, op @ Q))
        estimates = _map(lambda item: estimator(item[1][0], item[1][1], item[0]),
                         list(zip(candidates, sketches)), max_workers)

    estimates = [float(s) for s in estimates]
    chosen = _argmin(estimates)
    rnd = SelectionRound(eps_cur=None, k=k, candidates=list(range(n)), estimates=list(estimates),
                         leader=chosen, survivors=list(range(n)))
    return SelectionReport(
        candidate_labels=_labels(candidates, labels),
        estimates=estimates,
        chosen_index=chosen,
        algorithm="alg2",
        k_used=k,
        round_ks=[k],
        total_spmv=op.count,
        total_solves=n * k,
        gaussian_draws=draws,
        reuse_sketch=reuse_sketch,
        rounds=[rnd],
    )


def adaptive_round_sizes(eps, delta, n_active):
    """``(T, [(eps_cur, k) ...])`` for rounds run with the given survivor counts.

    Mostly useful for cost comparisons; ``n_active[t]`` is ``|P|`` entering
    round ``t + 1``.
    """
    T = math.ceil(math.log2(1.0 / eps))
    out = []
    eps_cur = 1.0
    for t in range(T):
        eps_cur /= 2.0
        out.append((eps_cur, math.ceil(6.0 / eps_cur ** 2 * math.log(2.0 * T * n_active[t] / delta))))
    return T, out


def adaptive_select(A, candidates, eps, delta, rng=None, *, labels=None,
                    estimator=sketch_residual_norm, max_workers=None) -> SelectionReport:
    """Select with successive filtering at accuracies ``1/2, 1/4, ...`` down to ``eps``.

    Runs ``T = ceil(log2(1/eps))`` rounds. Round ``t`` uses
    ``eps_cur = 2**-t`` and ``k = ceil(6 / eps_cur**2 * ln(2 T |P| / delta))``
    fresh probes, shared by the surviving set ``P``, then keeps only
    candidates with ``S_i <= S_leader * sqrt((1 + eps_cur) / (1 - eps_cur))``.
    The leader of the final round is returned.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {eps}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    d = _validate(A, candidates)
    g = as_generator(rng)
    op = CountingOperator(A)
    n = len(candidates)

    T = math.ceil(math.log2(1.0 / eps))
    eps_cur = 1.0
    active = list(range(n))
    rounds, ks = [], []
    solves = draws = 0
    leader = 0
    last = {}
    for _ in range(T):
        eps_cur /= 2.0
        k = math.ceil(6.0 / eps_cur ** 2 * math.log(2.0 * T * len(active) / delta))
        Q = draw_sketch(d, k, g)
        draws += Q.size
        AQ = op @ Q
        values = [float(v) for v in _map(lambda i: estimator(Q, AQ, candidates[i]), active, max_workers)]
        solves += k * len(active)
        leader = active[_argmin(values)]
        cutoff = values[active.index(leader)] * math.sqrt((1.0 + eps_cur) / (1.0 - eps_cur))
        survivors = [i for i, s in zip(active, values) if s <= cutoff]
        rounds.append(SelectionRound(eps_cur=eps_cur, k=k, candidates=list(active), estimates=values,
                                     leader=leader, survivors=survivors))
        ks.append(k)
        last = dict(zip(active, values))
        active = survivors

    estimates = [last[i] if i in active else None for i in range(n)]
    return SelectionReport(
        candidate_labels=_labels(candidates, labels),
        estimates=estimates,
        chosen_index=leader,
        algorithm="alg3",
        epsilon=eps,
        delta=delta,
        round_ks=ks,
        total_spmv=op.count,
        total_solves=solves,
        gaussian_draws=draws,
        reuse_sketch=True,
        rounds=rounds,
    )


def selection_guarantee_check(report, exact_values, eps) -> bool:
    """True iff the chosen candidate is within ``sqrt((1+eps)/(1-eps))`` of the best.

    ``report`` is a :class:`SelectionReport` or a bare chosen index.
    """
    exact_values = np.asarray(exact_values, dtype=np.float64)
    if isinstance(report, SelectionReport):
        if len(report.candidate_labels) != exact_values.shape[0]:
            raise DimensionMismatchError(
                f"{exact_values.shape[0]} exact values for {len(report.candidate_labels)} candidates")
        chosen = report.chosen_index
    else:
        chosen = int(report)
        if not 0 <= chosen < exact_values.shape[0]:
            raise DimensionMismatchError(f"chosen index {chosen} outside {exact_values.shape[0]} values")
    return bool(exact_values[chosen] <= math.sqrt((1.0 + eps) / (1.0 - eps)) * exact_values.min())
