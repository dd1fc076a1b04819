"""Exact expected values on finite-support instances.

Two engines live here:

* :func:`exact_policy_value` integrates a policy's accepted value over the
  full joint support of the realization, the policy's sample set, the
  policy's internal randomization, and every tie ordering (uniform over
  the relative orders of equal-valued draws).  Probabilities accumulate
  with compensated summation.
* :func:`optimal_value_fi` computes the optimal full-information gambler
  value by backward induction over information sets keyed by the entire
  observed (index, value) prefix, with Nature's removal tie randomization
  enumerated as a uniform choice over valid removed sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, permutations, product

from ._kahan import KahanSum
from .distributions import (
    EnumerationCapError,
    Instance,
    NotFiniteSupportError,
    order_statistic_expectation_exact,
)
from .engine import InfoModel, _require_compatible
from .policies import ArrivalEvent, BoundPolicy, PolicySpec, SampleSet, bind

POLICY_ENUM_CAP = 2**26
OPTIMAL_DP_CAP = 2**16


@dataclass(frozen=True)
class ExactPolicyResult:
    value: float
    benchmark: float

    @property
    def ratio(self) -> float:
        return self.value / self.benchmark if self.benchmark else math.nan


def _supports(instance: Instance) -> list[list[tuple[float, float]]]:
    supports = []
    for d in instance.dists:
        sup = d.support()
        if sup is None:
            raise NotFiniteSupportError(f"{type(d).__name__} has no finite support")
        supports.append(sup)
    return supports


def _tie_orderings(draws: list[tuple[float, int]]):
    """Yield (probability, tiebreak array) over relative orders of equal values.

    ``draws`` is a list of (value, slot).  Each group of equal values gets a
    uniformly random relative order; the tiebreak of a draw is its rank
    inside its group, which is the only comparison the policies ever make
    between equal values.
    """
    groups: dict[float, list[int]] = {}
    for value, slot in draws:
        groups.setdefault(value, []).append(slot)
    multi = [slots for slots in groups.values() if len(slots) > 1]
    base = [0.0] * len(draws)
    if not multi:
        yield 1.0, base
        return
    weight = 1.0
    for slots in multi:
        weight /= math.factorial(len(slots))
    perm_sets = [list(permutations(range(len(slots)))) for slots in multi]
    for combo in product(*perm_sets):
        tb = list(base)
        for slots, perm in zip(multi, combo):
            for rank, member in zip(perm, slots):
                tb[member] = float(rank)
        yield weight, tb


def _play(
    values: list[float],
    value_tb: list[float],
    samples: SampleSet | None,
    component,
    k: int,
    model: str,
) -> float:
    n = len(values)
    order = sorted(range(n), key=lambda i: (values[i], value_tb[i]), reverse=True)
    removed = set(order[:k])
    trial = component.new_trial(samples)
    for i in range(n):
        if i in removed:
            continue
        event = ArrivalEvent(
            value=values[i],
            tiebreak=value_tb[i],
            index=i if model == InfoModel.FI else None,
        )
        if trial.observe(event):
            return values[i]
    return 0.0


def exact_policy_value(
    instance: Instance,
    policy: PolicySpec | BoundPolicy,
    model: str = InfoModel.NI,
    *,
    cap: int = POLICY_ENUM_CAP,
) -> ExactPolicyResult:
    """Exact E[accepted value], integrating over all randomness.

    Arrivals are streamed in index order.  The enumeration covers joint
    values, joint samples (when the policy requests them), the policy's
    randomization branches, and all tie orders among equal-valued draws.
    """
    bound = policy if isinstance(policy, BoundPolicy) else bind(policy, instance)
    _require_compatible(bound, model)
    n, k = instance.n, instance.k
    supports = _supports(instance)

    size = 1
    for sup in supports:
        size *= len(sup)
    size_sq = size * size if bound.needs_samples else size
    if size_sq * len(bound.components) > cap:
        raise EnumerationCapError(
            f"exact enumeration needs more than cap={cap} outcomes before tie orders"
        )

    acc = KahanSum()
    ticks = 0
    sample_space = list(product(*supports)) if bound.needs_samples else [None]
    for value_combo in product(*supports):
        pv = 1.0
        for _, ap in value_combo:
            pv *= ap
        values = [v for v, _ in value_combo]
        for sample_combo in sample_space:
            if sample_combo is None:
                ps = 1.0
                sample_values: list[float] = []
            else:
                ps = 1.0
                for _, ap in sample_combo:
                    ps *= ap
                sample_values = [v for v, _ in sample_combo]
            draws = [(v, i) for i, v in enumerate(values)]
            draws += [(v, n + i) for i, v in enumerate(sample_values)]
            for pt, tb in _tie_orderings(draws):
                ticks += 1
                if ticks > cap:
                    raise EnumerationCapError(
                        f"exact enumeration exceeded cap={cap} tie-ordered outcomes"
                    )
                samples = None
                if sample_combo is not None:
                    samples = SampleSet(
                        values=tuple(sample_values), tiebreaks=tuple(tb[n:])
                    )
                base_p = pv * ps * pt
                for pc, comp in bound.components:
                    got = _play(values, tb[:n], samples, comp, k, model)
                    if got:
                        acc.add(base_p * pc * got)
    benchmark = order_statistic_expectation_exact(instance, k + 1)
    return ExactPolicyResult(value=acc.value, benchmark=benchmark)


# --- optimal FI gambler by backward induction --------------------------------


def _removal_outcomes(values: tuple[float, ...], k: int):
    """Yield (probability, removed frozenset) uniform over valid removed sets."""
    n = len(values)
    if k == 0:
        yield 1.0, frozenset()
        return
    order = sorted(range(n), key=lambda i: values[i], reverse=True)
    boundary = values[order[k - 1]]
    sure = [i for i in range(n) if values[i] > boundary]
    tied = [i for i in range(n) if values[i] == boundary]
    need = k - len(sure)
    total = math.comb(len(tied), need)
    p = 1.0 / total
    for chosen in combinations(tied, need):
        yield p, frozenset(sure + list(chosen))


def optimal_value_fi(instance: Instance, *, cap: int = OPTIMAL_DP_CAP) -> float:
    """Value of the optimal FI online policy on a finite-support instance.

    Enumerates the joint realization-and-removal distribution, then runs
    backward induction on the prefix tree of observed (index, value)
    arrival sequences; no information-set merging beyond identical
    prefixes.
    """
    supports = _supports(instance)
    size = 1
    for sup in supports:
        size *= len(sup)
        if size > cap:
            raise EnumerationCapError(f"joint realization count exceeds cap={cap}")
    k = instance.k
    outcomes: list[tuple[float, tuple[tuple[int, float], ...]]] = []
    for combo in product(*supports):
        pv = 1.0
        for _, ap in combo:
            pv *= ap
        values = tuple(v for v, _ in combo)
        for pr, removed in _removal_outcomes(values, k):
            seq = tuple((i, values[i]) for i in range(len(values)) if i not in removed)
            outcomes.append((pv * pr, seq))
    return _optimal_prefix_value(outcomes, 0)


def _optimal_prefix_value(outcomes, depth: int) -> float:
    """Expected optimal value over outcomes sharing a depth-long prefix."""
    total = math.fsum(p for p, _ in outcomes)
    groups: dict[tuple[int, float], list] = {}
    for p, seq in outcomes:
        groups.setdefault(seq[depth], []).append((p, seq))
    acc = KahanSum()
    horizon = len(outcomes[0][1])
    for (idx, value), group in groups.items():
        pg = math.fsum(p for p, _ in group)
        cont = _optimal_prefix_value(group, depth + 1) if depth + 1 < horizon else 0.0
        acc.add(pg * max(value, cont))
    return acc.value / total


def stop_at_closed_form(k: int, eps: float, i: int) -> float:
    """Expected value of the stop-at-stage-i strategy on the hard FI family.

    (1-eps)**(k-i+2) + sum_{j=i}^{k+1} C(k+1,j)/C(k+1,i-1) eps**(j-i+1) (1-eps)**(k+1-j)
    """
    if not (1 <= i <= k + 1):
        raise ValueError("i must lie in 1..k+1")
    head = (1.0 - eps) ** (k - i + 2)
    tail = sum(
        math.comb(k + 1, j) / math.comb(k + 1, i - 1) * eps ** (j - i + 1) * (1.0 - eps) ** (k + 1 - j)
        for j in range(i, k + 2)
    )
    return head + tail
