"""Deferred-decision combinatorics on sorted paired sequences.

Draw two values per distribution and sort all 2n of them decreasingly as
w_1 >= ... >= w_2n.  A fair coin per pair then decides which element is
the sample and which is the true value.  Everything a sample-threshold
policy does conditionally on the sorted multiset is a function of the
*pairing* alone, so configurations are built from perfect matchings on
the 2n sorted slots; values default to the distinct integers 2n..1.

The module evaluates the closed-form pmf of the benchmark position,
classifies positions (blocked / ill-paired) with their dyadic delta
coefficients, brute-forces the exact joint law of (threshold position,
selected position, benchmark position) over all 2^n coin assignments,
and machine-checks the inequality suite connecting them.  All
probabilities are exact dyadic rationals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterator, Optional

import numpy as np

from .policies import Msa, MsaBar

ENUM_MAX_N = 20
LEMMA_MAX_N = 14


@dataclass(frozen=True)
class PairedConfiguration:
    """A perfect matching on 2n sorted slots plus a removal count k.

    ``partner[l-1]`` is the 1-indexed slot paired with slot l.  ``values``
    are nonincreasing and distinct by default, matching the tie-free
    idealization of the analysis.  ``xi[j-1]`` is the slot at which the
    j-th pair completes.
    """

    n: int
    k: int
    partner: tuple[int, ...]
    values: tuple[float, ...] = ()

    xi: tuple[int, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        n, k = self.n, self.k
        two_n = 2 * n
        if not (0 <= k <= n - 1):
            raise ValueError(f"k must lie in 0..n-1, got k={k} n={n}")
        if len(self.partner) != two_n:
            raise ValueError("partner must list all 2n slots")
        for l in range(1, two_n + 1):
            p = self.partner[l - 1]
            if p == l or not (1 <= p <= two_n) or self.partner[p - 1] != l:
                raise ValueError("partner must be a fixed-point-free involution")
        if not self.values:
            object.__setattr__(
                self, "values", tuple(float(v) for v in range(two_n, 0, -1))
            )
        if len(self.values) != two_n:
            raise ValueError("values must list all 2n slots")
        if any(a < b for a, b in zip(self.values, self.values[1:])):
            raise ValueError("values must be nonincreasing")
        completions = sorted(max(l, self.partner[l - 1]) for l in range(1, two_n + 1))
        xi = tuple(completions[::2])
        object.__setattr__(self, "xi", xi)
        for j, x in enumerate(xi, start=1):
            if x < 2 * j:
                raise ValueError("pair completions violate xi_j >= 2j")

    @classmethod
    def from_pairs(
        cls,
        pairs: list[tuple[int, int]],
        k: int,
        values: Optional[tuple[float, ...]] = None,
    ) -> "PairedConfiguration":
        n = len(pairs)
        partner = [0] * (2 * n)
        for a, b in pairs:
            partner[a - 1] = b
            partner[b - 1] = a
        return cls(n=n, k=k, partner=tuple(partner), values=values or ())

    def pairs(self) -> list[tuple[int, int]]:
        return [
            (l, self.partner[l - 1])
            for l in range(1, 2 * self.n + 1)
            if l < self.partner[l - 1]
        ]


def all_pairings(n: int) -> Iterator[tuple[tuple[int, int], ...]]:
    """All perfect matchings on slots 1..2n ((2n-1)!! of them)."""

    def rec(slots: tuple[int, ...]):
        if not slots:
            yield ()
            return
        first, rest = slots[0], slots[1:]
        for i, other in enumerate(rest):
            head = (first, other)
            for tail in rec(rest[:i] + rest[i + 1 :]):
                yield (head,) + tail

    yield from rec(tuple(range(1, 2 * n + 1)))


def all_configurations(n: int, k: int) -> Iterator[PairedConfiguration]:
    for pairs in all_pairings(n):
        yield PairedConfiguration.from_pairs(list(pairs), k)


@dataclass(frozen=True)
class PositionClass:
    blocked: bool
    m_l: Optional[int]
    ill_paired: bool
    partner: int
    delta: Fraction


def classify(config: PairedConfiguration, l: int) -> PositionClass:
    """Blocked / ill-paired status and the dyadic delta coefficient of slot l.

    Slot l is blocked when a complete pair sits inside slots l+1..2k+1
    (m_l is the smallest completing slot of such a pair), and ill-paired
    when its own partner sits in that window.
    """
    k = config.k
    if not (1 <= l <= 2 * k + 1):
        raise ValueError(f"l must lie in 1..2k+1, got {l}")
    window_hi = 2 * k + 1
    p = config.partner[l - 1]
    ill = l + 1 <= p <= window_hi
    m_l: Optional[int] = None
    for r in range(l + 2, window_hi + 1):
        q = config.partner[r - 1]
        if l + 1 <= q < r:
            m_l = r
            break
    blocked = m_l is not None
    if blocked:
        delta = Fraction(0)
    elif ill:
        delta = Fraction(1, 2 ** (2 * k - l))
    else:
        delta = Fraction(1, 2 ** (2 * k - l + 1))
    return PositionClass(blocked=blocked, m_l=m_l, ill_paired=ill, partner=p, delta=delta)


def prophet_pmf_formula(config: PairedConfiguration) -> list[Fraction]:
    """Closed-form P(benchmark = w_l) for l = 1..xi_{k+1}.

    Two cases depending on whether l falls strictly between consecutive
    pair completions or exactly on one; binomials vanish outside their
    range, which also yields 0 for every l < k+1.
    """
    k = config.k
    xi = config.xi
    out: list[Fraction] = []
    for l in range(1, xi[k] + 1):
        out.append(_pmf_at(xi, k, l))
    return out


def _pmf_at(xi: tuple[int, ...], k: int, l: int) -> Fraction:
    # j = number of pairs completed strictly before or at l
    import bisect

    pos = bisect.bisect_left(xi, l)
    if pos < len(xi) and xi[pos] == l:
        j = pos + 1  # l == xi_j
        top = xi[pos] - 2 * j
        pick = k + 1 - j
        if pick < 0 or pick > top:
            return Fraction(0)
        return Fraction(math.comb(top, pick), 2 ** (top + 1))
    j = pos  # xi_j < l < xi_{j+1}
    if j > k:
        return Fraction(0)
    top = l - 1 - 2 * j
    pick = k - j
    if pick < 0 or pick > top:
        return Fraction(0)
    return Fraction(math.comb(top, pick), 2 ** (top + 1))


# --- exact enumeration over coin assignments ---------------------------------


@dataclass(frozen=True)
class ExactLaw:
    """Joint law of (threshold slot, selected slot, benchmark slot).

    Slots are 1-indexed; 0 stands for "no selection".  Probabilities are
    exact with denominator 2**n.
    """

    n: int
    k: int
    counts: dict[tuple[int, int, int], int]

    @property
    def denominator(self) -> int:
        return 2**self.n

    def probability(self, rho: int, sel: int, bpos: int) -> Fraction:
        return Fraction(self.counts.get((rho, sel, bpos), 0), self.denominator)

    def benchmark_marginal(self) -> list[Fraction]:
        two_n = 2 * self.n
        acc = [0] * (two_n + 1)
        for (_, _, bpos), c in self.counts.items():
            acc[bpos] += c
        return [Fraction(c, self.denominator) for c in acc]

    def event_count(self, pred) -> int:
        return sum(c for key, c in self.counts.items() if pred(*key))


def _assignment_stats(config: PairedConfiguration):
    """Per coin assignment: sorted sample slots, post-removal value slots.

    Slots sorted ascending (slot 1 carries the largest value); removal of
    the top k realizations deletes the k smallest value slots.
    """
    pairs = config.pairs()
    n, k = config.n, config.k
    for mask in range(2**n):
        xs = []
        ss = []
        for j, (a, b) in enumerate(pairs):
            if (mask >> j) & 1:
                xs.append(a)
                ss.append(b)
            else:
                xs.append(b)
                ss.append(a)
        xs.sort()
        ss.sort()
        yield ss, xs[k:]


def _select(remaining: list[int], rho: int, skip: int) -> int:
    for slot in remaining:
        if slot >= rho:
            return 0
        if slot != skip:
            return slot
    return 0


def enumerate_exact(config: PairedConfiguration, policy: Msa | MsaBar) -> ExactLaw:
    """Brute-force joint law of one sample-threshold policy over 2^n coins.

    Arrivals run in slot order restricted to the value set minus the
    removed top k; the policy accepts the first value slot above the
    threshold slot (and, for the source-excluding variant, not paired
    with it).
    """
    if config.n > ENUM_MAX_N:
        raise ValueError(f"n={config.n} exceeds enumeration bound {ENUM_MAX_N}")
    if isinstance(policy, MsaBar):
        i, exclude = policy.i, True
        if not (1 <= i <= config.k):
            raise ValueError(f"msa_bar rank must lie in 1..k, got {i}")
    elif isinstance(policy, Msa):
        i, exclude = policy.i, False
        if not (1 <= i <= config.n):
            raise ValueError(f"msa rank must lie in 1..n, got {i}")
    else:
        raise TypeError(f"policy must be Msa or MsaBar, got {type(policy).__name__}")
    counts: dict[tuple[int, int, int], int] = {}
    for ss, remaining in _assignment_stats(config):
        rho = ss[i - 1]
        skip = config.partner[rho - 1] if exclude else 0
        sel = _select(remaining, rho, skip)
        key = (rho, sel, remaining[0])
        counts[key] = counts.get(key, 0) + 1
    return ExactLaw(n=config.n, k=config.k, counts=counts)


def _all_laws(config: PairedConfiguration):
    """One enumeration pass building the laws of every policy the checks use."""
    n, k = config.n, config.k
    msa_counts = [dict() for _ in range(k + 2)]  # index 1..k+1
    bar_counts = [dict() for _ in range(k + 1)]  # index 1..k
    for ss, remaining in _assignment_stats(config):
        bpos = remaining[0]
        for i in range(1, k + 2):
            rho = ss[i - 1]
            sel = _select(remaining, rho, 0)
            key = (rho, sel, bpos)
            d = msa_counts[i]
            d[key] = d.get(key, 0) + 1
        for i in range(1, k + 1):
            rho = ss[i - 1]
            sel = _select(remaining, rho, config.partner[rho - 1])
            key = (rho, sel, bpos)
            d = bar_counts[i]
            d[key] = d.get(key, 0) + 1
    msa_laws = {i: ExactLaw(n=n, k=k, counts=msa_counts[i]) for i in range(1, k + 2)}
    bar_laws = {i: ExactLaw(n=n, k=k, counts=bar_counts[i]) for i in range(1, k + 1)}
    return msa_laws, bar_laws


# --- the inequality suite -----------------------------------------------------


@dataclass(frozen=True)
class CheckRecord:
    check: str
    l: int
    i: Optional[int]
    bound: Fraction
    actual: Fraction
    ok: bool


@dataclass(frozen=True)
class LemmaReport:
    config: PairedConfiguration
    checks: tuple[CheckRecord, ...]
    equality_records: tuple[tuple[int, bool], ...]  # (l, coefficient sum == 1-delta)

    @property
    def violations(self) -> list[CheckRecord]:
        return [c for c in self.checks if not c.ok]

    def to_json(self) -> dict:
        return {
            "n": self.config.n,
            "k": self.config.k,
            "pairs": self.config.pairs(),
            "checked": len(self.checks),
            "violations": [
                {
                    "check": c.check,
                    "l": c.l,
                    "i": c.i,
                    "bound": str(c.bound),
                    "actual": str(c.actual),
                }
                for c in self.violations
            ],
            "coefficient_equalities": [
                {"l": l, "equality": eq} for l, eq in self.equality_records
            ],
        }


def _cond(law: ExactLaw, num_count: int, den_count: int) -> Fraction:
    return Fraction(num_count, den_count)


def verify_lemmas(config: PairedConfiguration) -> LemmaReport:
    """Machine-check the conditional bounds, pmf ratios, and reward sums.

    Every inequality instance whose conditioning event has positive
    probability is evaluated exactly; a report of violations (expected to
    be empty) and equality records comes back.
    """
    if config.n > LEMMA_MAX_N:
        raise ValueError(f"n={config.n} exceeds lemma-suite bound {LEMMA_MAX_N}")
    n, k = config.n, config.k
    msa_laws, bar_laws = _all_laws(config)
    bench = msa_laws[k + 1].benchmark_marginal()
    checks: list[CheckRecord] = []
    equalities: list[tuple[int, bool]] = []
    denom = 2**n

    def bench_count(l: int) -> int:
        return int(bench[l] * denom) if l < len(bench) else 0

    # (i) conditional lower bounds for the source-excluding policies
    for l in range(1, 2 * k + 2):
        bc = bench_count(l)
        if bc == 0:
            continue
        cls = classify(config, l)
        cases: list[tuple[int, Fraction]] = []
        if not cls.blocked and not cls.ill_paired:
            for i in range(max(1, l - k), k + 1):
                cases.append((i, Fraction(1, 2 ** (k + i - l + 1))))
        elif cls.blocked and (not cls.ill_paired or cls.m_l < cls.partner):
            m = cls.m_l
            for i in range(max(1, l - k), m - k - 2):
                cases.append((i, Fraction(1, 2 ** (k + i - l + 1))))
            if max(1, l - k) <= m - k - 2 <= k:
                cases.append((m - k - 2, Fraction(1, 2 ** (m - l - 2))))
        elif not cls.blocked and cls.ill_paired:
            p = cls.partner
            for i in range(max(1, l - k), p - k - 1):
                cases.append((i, Fraction(1, 2 ** (k + i - l + 1))))
            for i in range(max(1, p - k), k + 1):
                cases.append((i, Fraction(1, 2 ** (k + i - l))))
        else:  # blocked, ill-paired, m_l > partner
            p, m = cls.partner, cls.m_l
            for i in range(max(1, l - k), p - k - 1):
                cases.append((i, Fraction(1, 2 ** (k + i - l + 1))))
            for i in range(max(1, p - k), m - k - 2):
                cases.append((i, Fraction(1, 2 ** (k + i - l))))
            if max(1, l - k) <= m - k - 2 <= k:
                cases.append((m - k - 2, Fraction(1, 2 ** (m - l - 3))))
        for i, bound in cases:
            got = bar_laws[i].event_count(lambda r, s, b: s == l and b == l)
            actual = Fraction(got, bc)
            checks.append(
                CheckRecord("excluding_conditional", l, i, bound, actual, actual >= bound)
            )

    # (ii) rank-(k+1) policy with threshold at slot 2k+2
    for l in range(k + 1, 2 * k + 2):
        bc = bench_count(l)
        if bc == 0:
            continue
        cls = classify(config, l)
        if cls.blocked:
            continue
        bound = Fraction(1, 2 ** (2 * k + 1 - l)) if cls.ill_paired else Fraction(
            1, 2 ** (2 * k + 2 - l)
        )
        got = msa_laws[k + 1].event_count(
            lambda r, s, b: s == l and b == l and r == 2 * k + 2
        )
        actual = Fraction(got, bc)
        checks.append(
            CheckRecord("rank_k1_with_next_slot_threshold", l, None, bound, actual, actual >= bound)
        )

    # (iii) pmf ratio cases between consecutive slots
    xi = config.xi
    for j in range(0, k + 1):
        lo = (xi[j - 1] if j >= 1 else 0) + 1
        hi = xi[j] - 1
        for l in range(lo, hi + 1):
            if l + 1 > xi[k]:
                break
            p_l, p_l1 = bench[l] if l < len(bench) else Fraction(0), bench[l + 1]
            bound = p_l if l + 1 == xi[j] else p_l / 2
            checks.append(
                CheckRecord("pmf_ratio", l, None, bound, p_l1, p_l1 >= bound)
            )
    if 2 * k + 2 in xi:
        j = xi.index(2 * k + 2) + 1
        if j <= k and 2 * k + 3 <= xi[k]:
            p22, p23 = bench[2 * k + 2], bench[2 * k + 3]
            bound = p22 if (j < len(xi) and xi[j] == 2 * k + 3) else p22 / 2
            checks.append(
                CheckRecord("pmf_ratio_after_completion", 2 * k + 2, None, bound, p23, p23 >= bound)
            )

    # (iv) expected-reward lower bounds
    w = [Fraction(v) for v in (0.0,) + config.values]  # 1-indexed
    ev_msa_k1 = _expected_reward(msa_laws[k + 1], w)
    rhs1 = sum(
        (bench[l] * w[l] * classify(config, l).delta for l in range(k + 1, 2 * k + 2)),
        Fraction(0),
    ) / 2 + sum(
        (bench[l] * w[l] for l in range(2 * k + 2, xi[k] + 1)), Fraction(0)
    ) / 2
    checks.append(
        CheckRecord("reward_rank_k1", 0, None, rhs1, ev_msa_k1, ev_msa_k1 >= rhs1)
    )
    ev_bar_sum = sum((_expected_reward(bar_laws[i], w) for i in range(1, k + 1)), Fraction(0))
    rhs2 = sum(
        (bench[l] * w[l] * (1 - classify(config, l).delta) for l in range(1, 2 * k + 2)),
        Fraction(0),
    )
    checks.append(
        CheckRecord("reward_excluding_sum", 0, None, rhs2, ev_bar_sum, ev_bar_sum >= rhs2)
    )

    # (v) rank-i policy takes slot k+i half the time it is the benchmark
    for i in range(1, k + 1):
        l = k + i
        bc = bench_count(l)
        if bc == 0:
            continue
        got = msa_laws[i].event_count(lambda r, s, b: s == l and b == l)
        actual = Fraction(got, bc)
        checks.append(
            CheckRecord("rank_i_takes_benchmark", l, i, Fraction(1, 2), actual, actual >= Fraction(1, 2))
        )

    # coefficient identity: sum_i P(excluding_i = w_l | bench = w_l) vs 1 - delta_l
    for l in range(1, 2 * k + 2):
        bc = bench_count(l)
        if bc == 0:
            continue
        total = sum(
            Fraction(bar_laws[i].event_count(lambda r, s, b: s == l and b == l), bc)
            for i in range(1, k + 1)
        )
        target = 1 - classify(config, l).delta
        checks.append(
            CheckRecord("coefficient_sum", l, None, target, total, total >= target)
        )
        equalities.append((l, total == target))

    return LemmaReport(config=config, checks=tuple(checks), equality_records=tuple(equalities))


def _expected_reward(law: ExactLaw, w: list[Fraction]) -> Fraction:
    acc = Fraction(0)
    for (_, sel, _), c in law.counts.items():
        if sel:
            acc += Fraction(c, law.denominator) * w[sel]
    return acc


def sweep_verify_lemmas(max_n: int = 6, max_k: int = 2):
    """Run the lemma suite over every pairing with n <= max_n, k <= max_k.

    Returns (configs checked, inequality instances checked, violations).
    """
    configs = 0
    checked = 0
    violations: list[CheckRecord] = []
    equal_all = 0
    equal_true = 0
    for n in range(1, max_n + 1):
        for k in range(0, min(max_k, n - 1) + 1):
            for config in all_configurations(n, k):
                report = verify_lemmas(config)
                configs += 1
                checked += len(report.checks)
                violations.extend(report.violations)
                for _, eq in report.equality_records:
                    equal_all += 1
                    equal_true += eq
    return {
        "configs": configs,
        "checks": checked,
        "violations": violations,
        "coefficient_equalities": {"total": equal_all, "held": equal_true},
    }


# --- fast whole-space pmf equivalence sweep ----------------------------------


def _order_pos_table(n: int) -> np.ndarray:
    """For every 2n-bit mask, the slot of its (k+1)-th lowest set bit, all k."""
    two_n = 2 * n
    masks = np.arange(1 << two_n, dtype=np.uint32)
    bits = (masks[:, None] >> np.arange(two_n)[None, :]) & 1
    csum = np.cumsum(bits, axis=1)
    table = np.zeros((1 << two_n, n), dtype=np.int8)
    for k in range(n):
        hit = csum == (k + 1)
        found = hit.any(axis=1)
        pos = np.argmax(hit, axis=1) + 1
        table[:, k] = np.where(found, pos, 0)
    return table


def lemma4_equivalence_sweep(max_n: int = 8) -> dict:
    """Exact pmf-formula vs 2^n-enumeration marginal over every pairing.

    For each pairing with n <= max_n and every k <= n-1, tabulates the
    benchmark-slot counts over all 2^n coin assignments with vectorized
    bit arithmetic and compares them to the closed-form pmf scaled to the
    common denominator 2^n.  Exact integer comparison throughout.
    """
    mismatches = []
    configs = 0
    expected_cache: dict = {}
    for n in range(1, max_n + 1):
        two_n = 2 * n
        table = _order_pos_table(n)
        coins = ((np.arange(1 << n, dtype=np.uint32)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
        pair_arr = np.array(list(all_pairings(n)), dtype=np.int64)  # (configs, n, 2)
        a = pair_arr[:, :, 0] - 1
        b = pair_arr[:, :, 1] - 1
        block = max(1, (1 << 22) // (1 << n) // n)
        for start in range(0, len(pair_arr), block):
            a_blk = a[start : start + block]
            b_blk = b[start : start + block]
            m = len(a_blk)
            # value-slot masks for every (config, coin assignment)
            xmask = np.where(
                coins[None, :, :], (1 << a_blk)[:, None, :], (1 << b_blk)[:, None, :]
            ).sum(axis=2, dtype=np.uint32)
            bpos = table[xmask]  # (m, 2^n, n): benchmark slot per k
            code = bpos.astype(np.int64) + (two_n + 1) * np.arange(n)[None, None, :]
            code += (two_n + 1) * n * np.arange(m)[:, None, None]
            counts = np.bincount(code.ravel(), minlength=m * n * (two_n + 1)).reshape(
                m, n, two_n + 1
            )
            for ci in range(m):
                configs += 1
                xi = tuple(sorted(np.maximum(a_blk[ci], b_blk[ci]) + 1))
                for k in range(n):
                    key = (n, k, xi)
                    expected = expected_cache.get(key)
                    if expected is None:
                        expected = _expected_counts(n, k, xi)
                        expected_cache[key] = expected
                    if not np.array_equal(counts[ci, k], expected):
                        mismatches.append((n, k, start + ci))
    return {"configs": configs, "mismatches": mismatches}


def _expected_counts(n: int, k: int, xi: tuple[int, ...]) -> np.ndarray:
    out = np.zeros(2 * n + 1, dtype=np.int64)
    denom = 2**n
    for l in range(1, xi[k] + 1):
        p = _pmf_at(xi, k, l)
        out[l] = p.numerator * (denom // p.denominator) if p else 0
    return out
