"""Generators for the named problem instances used throughout the toolkit."""

from __future__ import annotations

import math

import numpy as np

from .distributions import (
    FiniteDiscrete,
    Instance,
    InvalidDistributionError,
    PointMass,
    QuantileDefined,
    SurvivalMeasure,
    TwoPoint,
)


def example1(eps: float) -> Instance:
    """Three variables, k=1: a sure unit plus two rare-jackpot copies.

    The jackpot is 1/eps**2 with probability eps, so classic single
    thresholds (half the benchmark, its median) collapse as eps -> 0.
    """
    if not (0.0 < eps < 0.5):
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    jackpot = TwoPoint(low=0.0, high=eps**-2, p_high=eps)
    return Instance(dists=(PointMass(1.0), jackpot, jackpot), k=1)


def hard_fi(k: int, eps: float) -> Instance:
    """The 2(k+1)-variable family that pins the FI ratio at 1/(k+2).

    Deterministic values 1/(eps**(i-1) * C(k+1, i-1)) arrive first and
    strictly increase (guaranteed by eps < 1/(k+1)); then k+1 two-point
    variables that pay eps**-(k+1) with probability eps each.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not (0.0 < eps < 1.0 / (k + 1)):
        raise ValueError(f"eps must lie in (0, 1/(k+1)), got {eps}")
    det = [PointMass(1.0 / (eps ** (i - 1) * math.comb(k + 1, i - 1))) for i in range(1, k + 2)]
    tail = [TwoPoint(low=0.0, high=eps ** -(k + 1), p_high=eps) for _ in range(k + 1)]
    return Instance(dists=tuple(det + tail), k=k)


def hard_ni(k: int, eps: float) -> Instance:
    """The k+2-variable family showing sample-threshold NI limits."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    tail = [TwoPoint(low=0.0, high=eps ** -(k + 2), p_high=eps) for _ in range(k + 1)]
    return Instance(dists=tuple([PointMass(1.0)] + tail), k=k)


def iid_upper_cn(n: int) -> float:
    """Normalizer 1 / (n * (1 - (1 - 1/n**10)**(n-1))), computed stably."""
    s = float(n) ** -10
    return 1.0 / (-n * math.expm1((n - 1) * math.log1p(-s)))


def iid_upper(n: int, a: float, b: float, beta: float) -> Instance:
    """n i.i.d. copies of the single-threshold counterexample quantile, k=1.

    The quantile function has a 1/u spike carrying rare huge values on
    (0, 1/n**10) and a flat shelf of height b on [1/n**10, beta/n]; it is
    kept in exact piecewise-analytic form because the analysis needs the
    exact tail shape.  The serialized grid form is an approximation.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    if not (a > 0.0 and b > 0.0 and a + b <= 1.0 + 1e-12):
        raise ValueError("need a, b > 0 and a + b <= 1")
    if not (1.0 / n < beta and beta / n <= 1.0):
        raise ValueError("need 1/n < beta <= n")
    s = float(n) ** -10
    cn = iid_upper_cn(n)
    shelf_end = beta / n
    spike_floor = a * cn / s  # value as u -> 1/n**10 from the left
    if spike_floor < b:
        raise InvalidDistributionError(
            "quantile function not nonincreasing: a*c_n*n**10 < b"
        )

    def quantile_fn(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            spike = a * cn / u
        return np.where(u < s, spike, np.where(u <= shelf_end, b, 0.0))

    def survival_fn(x):
        if x <= 0.0:
            return 1.0
        if x <= b:
            return shelf_end
        return min(a * cn / x, s)

    def threshold_fn(q):
        if q > shelf_end:
            return 0.0
        if q > s:
            return b
        return a * cn / q

    measure = SurvivalMeasure(
        pieces=((0.0, s, lambda v: a * cn / np.asarray(v, dtype=float) ** 2),),
        atoms=((s, spike_floor - b), (shelf_end, b)),
    )
    us, values = _iid_upper_grid(a, b, cn, s, shelf_end)
    dist = QuantileDefined(
        us=us,
        values=values,
        quantile_fn=quantile_fn,
        survival_fn=survival_fn,
        threshold_fn=threshold_fn,
        measure=measure,
    )
    return Instance(dists=(dist,) * n, k=1)


def _iid_upper_grid(a, b, cn, s, shelf_end):
    """Log-spaced grid nodes approximating the analytic quantile function."""
    spike_us = np.geomspace(s * 1e-6, s, 33)
    us = list(spike_us[:-1]) + [s, shelf_end]
    values = [a * cn / u for u in us[:-2]] + [b, b]
    if shelf_end < 1.0:
        step = shelf_end * (1.0 + 1e-9)
        if step < 1.0:
            us.append(step)
            values.append(0.0)
        us.append(1.0)
        values.append(0.0)
    return tuple(us), tuple(values)


def random_finite_discrete(index: int, *, seed: int = 0) -> Instance:
    """Seeded random finite-discrete instance for acceptance-test corpora.

    Dimensions: n in 4..10, k in {1, 2, 3}; each variable carries 1..3
    atoms with values spread over several orders of magnitude and an
    occasional zero atom.
    """
    rng = np.random.default_rng(np.random.SeedSequence((0x5EED, seed, index)))
    n = int(rng.integers(4, 11))
    k = int(rng.integers(1, min(3, n - 1) + 1))
    dist_list = []
    for _ in range(n):
        m = int(rng.integers(1, 4))
        values: list[float] = []
        while len(values) < m:
            v = float(np.round(math.exp(rng.uniform(0.0, 6.0)), 6))
            if rng.random() < 0.25 and 0.0 not in values:
                v = 0.0
            if v not in values:
                values.append(v)
        if m == 1:
            dist_list.append(PointMass(values[0]) if values[0] > 0 else PointMass(0.0))
            continue
        raw = rng.random(m) + 0.05
        probs = raw / raw.sum()
        atoms = [(values[j], float(probs[j])) for j in range(m - 1)]
        atoms.append((values[m - 1], 1.0 - math.fsum(p for _, p in atoms)))
        dist_list.append(FiniteDiscrete(atoms=tuple(atoms)))
    return Instance(dists=tuple(dist_list), k=k)


def acceptance_corpus(count: int = 20, *, seed: int = 0) -> list[Instance]:
    return [random_finite_discrete(i, seed=seed) for i in range(count)]
