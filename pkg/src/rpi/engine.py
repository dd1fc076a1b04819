"""Game engine: realize values, remove the top k, stream arrivals, estimate.

Trial protocol
--------------
Each trial owns an independent random stream derived from
``SeedSequence((seed, trial_index))``.  A trial consumes uniforms in a
fixed layout so that the scalar reference path (:func:`run_trial`) and the
vectorized batch path (:func:`run_trials`) are bit-for-bit identical:

1. ``n`` uniforms  -> survival levels of the true values (``1 - u``),
2. ``n`` uniforms  -> per-index tiebreaks for the true values,
3. ``n`` uniforms  -> survival levels of the policy's samples (if requested),
4. ``n`` uniforms  -> tiebreaks for those samples,
5. ``n`` uniforms  -> arrival keys (only under UniformRandom order),
6. ``1`` uniform   -> the policy's mixture draw (only if randomized).

Nature removes the k largest values under the lexicographic
(value, tiebreak) order; arrivals are the remaining indices sorted by the
chosen arrival order; the benchmark is the largest remaining value, i.e.
the (k+1)-th order statistic of the full realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .distributions import Distribution, Instance
from .policies import (
    ArrivalEvent,
    BoundPolicy,
    Component,
    PolicyModelError,
    PolicySpec,
    SampleSet,
    bind,
)

Z_99 = 2.5758293035489004  # two-sided 99% normal quantile

_BLOCK_TARGET = 1 << 21  # max doubles per matrix in one batch block


class InfoModel:
    FI = "fi"
    NI = "ni"


@dataclass(frozen=True)
class IndexOrder:
    def arrival_ranks(self, n: int) -> np.ndarray:
        return np.arange(n, dtype=float)


@dataclass(frozen=True)
class FixedPermutation:
    """Arrivals sorted by each index's rank in ``perm`` (a bijection of 0..n-1)."""

    perm: tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError("perm must be a permutation of 0..n-1")

    def arrival_ranks(self, n: int) -> np.ndarray:
        if len(self.perm) != n:
            raise ValueError(f"permutation length {len(self.perm)} != n={n}")
        ranks = np.empty(n, dtype=float)
        for rank, idx in enumerate(self.perm):
            ranks[idx] = rank
        return ranks


@dataclass(frozen=True)
class UniformRandom:
    pass


ArrivalOrder = Union[IndexOrder, FixedPermutation, UniformRandom]


@dataclass(frozen=True)
class Realization:
    values: tuple[float, ...]


@dataclass(frozen=True)
class RemovalOutcome:
    remaining: tuple[tuple[int, float], ...]
    removed: frozenset[int]


@dataclass(frozen=True)
class TrialOutcome:
    accepted: float
    benchmark: float


@dataclass(frozen=True)
class RatioEstimate:
    """Paired Monte Carlo means with a delta-method 99% ratio CI."""

    mean_alg: float
    se_alg: float
    mean_benchmark: float
    se_benchmark: float
    ratio: float
    ratio_se: float
    ratio_ci_low: float
    ratio_ci_high: float
    trials: int
    seed: int


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """The independent stream owned by one trial."""
    return np.random.default_rng(np.random.SeedSequence((seed, trial_index)))


def remove_top_k(realization: Realization, k: int, rng: np.random.Generator) -> RemovalOutcome:
    """Remove the k largest values; ties resolved by per-index uniforms."""
    values = realization.values
    n = len(values)
    if not (0 <= k <= n - 1):
        raise ValueError(f"k must satisfy 0 <= k <= n-1, got k={k} n={n}")
    tiebreaks = rng.random(n)
    order = sorted(range(n), key=lambda i: (values[i], tiebreaks[i]), reverse=True)
    removed = frozenset(order[:k])
    remaining = tuple((i, values[i]) for i in range(n) if i not in removed)
    return RemovalOutcome(remaining=remaining, removed=removed)


def _require_compatible(policy: BoundPolicy, model: str) -> None:
    if model not in (InfoModel.FI, InfoModel.NI):
        raise ValueError(f"unknown information model {model!r}")
    if policy.needs_identity and model == InfoModel.NI:
        raise PolicyModelError(
            f"policy {policy.spec.spec_string()} needs arrival identities; use the FI model"
        )


def run_trial(
    instance: Instance,
    policy: PolicySpec | BoundPolicy,
    model: str,
    order: ArrivalOrder,
    rng: np.random.Generator,
) -> TrialOutcome:
    """Play one trial; the reference implementation of the trial protocol."""
    bound = policy if isinstance(policy, BoundPolicy) else bind(policy, instance)
    _require_compatible(bound, model)
    n, k = instance.n, instance.k

    u_val = rng.random(n)
    tb_val = rng.random(n)
    values = tuple(
        float(d.value_at_survival(1.0 - u_val[i])) for i, d in enumerate(instance.dists)
    )
    samples = None
    if bound.needs_samples:
        u_s = rng.random(n)
        tb_s = rng.random(n)
        samples = SampleSet(
            values=tuple(
                float(d.value_at_survival(1.0 - u_s[i])) for i, d in enumerate(instance.dists)
            ),
            tiebreaks=tuple(float(t) for t in tb_s),
        )
    if isinstance(order, UniformRandom):
        arrival_rank = rng.random(n)
    else:
        arrival_rank = order.arrival_ranks(n)

    desc = sorted(range(n), key=lambda i: (values[i], tb_val[i]), reverse=True)
    removed = set(desc[:k])
    benchmark = values[desc[k]]
    arrivals = sorted((i for i in range(n) if i not in removed), key=lambda i: arrival_rank[i])

    trial = bound.new_trial(samples, rng)
    accepted = 0.0
    for i in arrivals:
        event = ArrivalEvent(
            value=values[i],
            tiebreak=float(tb_val[i]),
            index=i if model == InfoModel.FI else None,
        )
        if trial.observe(event):
            accepted = values[i]
            break
    return TrialOutcome(accepted=accepted, benchmark=benchmark)


# --- vectorized batch path ---------------------------------------------------


@dataclass
class TrialArrays:
    """Paired per-trial outcomes for a batch of trials."""

    alg: np.ndarray
    benchmark: np.ndarray
    took_best: np.ndarray  # accepted value equals the benchmark value


def _row_layout(n: int, needs_samples: bool, random_order: bool, randomized: bool):
    m = 2 * n
    s_off = o_off = None
    if needs_samples:
        s_off = m
        m += 2 * n
    if random_order:
        o_off = m
        m += n
    mix_off = None
    if randomized:
        mix_off = m
        m += 1
    return m, s_off, o_off, mix_off


def _fill_rows(seed: int, start: int, count: int, m: int) -> np.ndarray:
    rows = np.empty((count, m), dtype=np.float64)
    for t in range(count):
        rows[t] = trial_rng(seed, start + t).random(m)
    return rows


def _column_values(dists: tuple[Distribution, ...], levels: np.ndarray) -> np.ndarray:
    """Map survival levels to values column by column, grouping equal dists."""
    out = np.empty_like(levels)
    done = [False] * len(dists)
    for i, d in enumerate(dists):
        if done[i]:
            continue
        cols = [j for j in range(i, len(dists)) if not done[j] and dists[j] == d]
        block = levels[:, cols]
        out[:, cols] = np.asarray(d.value_at_survival(block), dtype=np.float64).reshape(block.shape)
        for j in cols:
            done[j] = True
    return out


def _first_by_rank(cand: np.ndarray, rank: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row: index of the candidate with the smallest arrival rank."""
    masked = np.where(cand, rank, np.inf)
    idx = np.argmin(masked, axis=1)
    found = np.isfinite(np.take_along_axis(masked, idx[:, None], axis=1)[:, 0])
    return idx, found


def _component_accept(
    comp: Component,
    k: int,
    X: np.ndarray,
    XT: np.ndarray,
    keep: np.ndarray,
    rank: np.ndarray,
    SV: Optional[np.ndarray],
    ST: Optional[np.ndarray],
) -> np.ndarray:
    """Accepted value per trial for one deterministic policy branch."""
    B, n = X.shape
    rows = np.arange(B)
    if comp.kind == "sample_threshold":
        order_s = np.lexsort((ST, SV), axis=-1)
        j_star = order_s[:, n - comp.i]
        tau_v = SV[rows, j_star][:, None]
        tau_t = ST[rows, j_star][:, None]
        cand = (X > tau_v) | ((X == tau_v) & (XT > tau_t))
        if comp.exclude_source:
            cand &= np.arange(n)[None, :] != j_star[:, None]
        cand &= keep
        idx, found = _first_by_rank(cand, rank)
        return np.where(found, X[rows, idx], 0.0)
    if comp.kind == "plain":
        cand = (X >= comp.tau) & keep
        idx, found = _first_by_rank(cand, rank)
        return np.where(found, X[rows, idx], 0.0)
    if comp.kind == "secretary":
        m2 = n - k
        arr_order = np.argsort(np.where(keep, rank, np.inf), axis=1, kind="stable")[:, :m2]
        av = np.take_along_axis(X, arr_order, axis=1)
        at = np.take_along_axis(XT, arr_order, axis=1)
        lex = np.lexsort((at, av), axis=-1)
        ranks = np.empty((B, m2), dtype=np.int64)
        np.put_along_axis(ranks, lex, np.arange(m2)[None, :].repeat(B, axis=0), axis=1)
        cand = np.zeros((B, m2), dtype=bool)
        c = comp.cutoff
        if c == 0:
            cand[:, 0] = True
            c = 1
        if c < m2:
            runmax = np.maximum.accumulate(ranks, axis=1)
            cand[:, c:] = ranks[:, c:] > runmax[:, c - 1 : m2 - 1]
        pos = np.argmax(cand, axis=1)
        found = np.take_along_axis(cand, pos[:, None], axis=1)[:, 0]
        return np.where(found, av[rows, pos], 0.0)
    if comp.kind == "stop_at":
        alive = keep[:, comp.target]
        return np.where(alive, X[:, comp.target], 0.0)
    if comp.kind == "const" and comp.accept:
        idx, found = _first_by_rank(keep, rank)
        return np.where(found, X[rows, idx], 0.0)
    return np.zeros(B)


def run_trials(
    instance: Instance,
    policy: PolicySpec | BoundPolicy,
    model: str,
    order: ArrivalOrder,
    trials: int,
    seed: int,
) -> TrialArrays:
    """Run `trials` independent trials; identical outcomes to run_trial."""
    bound = policy if isinstance(policy, BoundPolicy) else bind(policy, instance)
    _require_compatible(bound, model)
    n, k = instance.n, instance.k
    random_order = isinstance(order, UniformRandom)
    m, s_off, o_off, mix_off = _row_layout(n, bound.needs_samples, random_order, bound.randomized)

    block = max(1, min(1 << 14, _BLOCK_TARGET // m))
    alg = np.empty(trials)
    bench = np.empty(trials)
    took_best = np.empty(trials, dtype=bool)
    static_rank = None if random_order else order.arrival_ranks(n)[None, :]

    for start in range(0, trials, block):
        count = min(block, trials - start)
        rows = _fill_rows(seed, start, count, m)
        X = _column_values(instance.dists, 1.0 - rows[:, :n])
        XT = rows[:, n : 2 * n]
        SV = ST = None
        if s_off is not None:
            SV = _column_values(instance.dists, 1.0 - rows[:, s_off : s_off + n])
            ST = rows[:, s_off + n : s_off + 2 * n]
        rank = rows[:, o_off : o_off + n] if o_off is not None else np.broadcast_to(
            static_rank, (count, n)
        )

        order_v = np.lexsort((XT, X), axis=-1)
        keep = np.ones((count, n), dtype=bool)
        if k:
            np.put_along_axis(keep, order_v[:, n - k :], False, axis=1)
        b = X[np.arange(count), order_v[:, n - k - 1]]

        if bound.randomized:
            mix_u = rows[:, mix_off]
            a = np.zeros(count)
            lo = 0.0
            last = len(bound.components) - 1
            for ci, (p, comp) in enumerate(bound.components):
                hi = lo + p
                sel = mix_u >= lo if ci == last else (mix_u >= lo) & (mix_u < hi)
                if sel.any():
                    a[sel] = _component_accept(
                        comp, k, X[sel], XT[sel], keep[sel], rank[sel],
                        None if SV is None else SV[sel],
                        None if ST is None else ST[sel],
                    )
                lo = hi
        else:
            a = _component_accept(bound.components[0][1], k, X, XT, keep, rank, SV, ST)

        alg[start : start + count] = a
        bench[start : start + count] = b
        took_best[start : start + count] = a == b
    return TrialArrays(alg=alg, benchmark=bench, took_best=took_best)


def estimate_from_arrays(arrays: TrialArrays, seed: int) -> RatioEstimate:
    a, b = arrays.alg, arrays.benchmark
    t = len(a)
    mean_a = float(np.sum(a) / t)
    mean_b = float(np.sum(b) / t)
    if t > 1:
        var_a = float(np.sum((a - mean_a) ** 2) / (t - 1))
        var_b = float(np.sum((b - mean_b) ** 2) / (t - 1))
        cov = float(np.sum((a - mean_a) * (b - mean_b)) / (t - 1))
    else:
        var_a = var_b = cov = 0.0
    se_a = math.sqrt(var_a / t)
    se_b = math.sqrt(var_b / t)
    ratio = mean_a / mean_b if mean_b else math.nan
    if mean_b:
        var_ratio = (var_a + ratio * ratio * var_b - 2.0 * ratio * cov) / (t * mean_b * mean_b)
        ratio_se = math.sqrt(max(var_ratio, 0.0))
    else:
        ratio_se = math.nan
    return RatioEstimate(
        mean_alg=mean_a,
        se_alg=se_a,
        mean_benchmark=mean_b,
        se_benchmark=se_b,
        ratio=ratio,
        ratio_se=ratio_se,
        ratio_ci_low=ratio - Z_99 * ratio_se,
        ratio_ci_high=ratio + Z_99 * ratio_se,
        trials=t,
        seed=seed,
    )


def estimate_ratio(
    instance: Instance,
    policy: PolicySpec | BoundPolicy,
    model: str,
    order: ArrivalOrder,
    trials: int,
    seed: int,
) -> RatioEstimate:
    """Paired Monte Carlo competitive-ratio estimate over seeded trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    arrays = run_trials(instance, policy, model, order, trials, seed)
    return estimate_from_arrays(arrays, seed)
