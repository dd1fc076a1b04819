"""Random-variable abstraction for the residual-prophet toolkit.

Four distribution kinds are supported: point masses, two-point
distributions, finite discrete distributions, and distributions defined
through their quantile-at-survival-level function.  Every kind answers
survival queries ``P(X >= x)``, quantile/threshold queries, and sampling
via a survival level ``U`` uniform on ``(0, 1]``.

Conventions
-----------
* Values are nonnegative finite-precision reals.  Discrete atoms are
  compared by exact bit equality: atoms are constructed, never computed,
  so tie detection is exact.
* ``threshold_for_quantile(dist, q)`` returns ``sup{x : P(X >= x) >= q}``,
  which makes two-point thresholds line up with survival probabilities.
* Exact order-statistic expectations enumerate the full joint support and
  are capped at ``2**24`` joint outcomes.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from itertools import product
from typing import Union

import numpy as np

from ._kahan import KahanSum

ENUMERATION_CAP = 2**24

PROB_TOL = 1e-12


class InvalidDistributionError(ValueError):
    """A distribution's parameters violate its invariants."""


class EnumerationCapError(RuntimeError):
    """An exact enumeration would exceed the configured outcome cap."""


class NotFiniteSupportError(TypeError):
    """An exact computation was requested on a non-finite-support distribution."""


def _check_prob(p: float, name: str) -> None:
    if not (0.0 <= p <= 1.0):
        raise InvalidDistributionError(f"{name} must lie in [0, 1], got {p!r}")


@dataclass(frozen=True)
class PointMass:
    """Degenerate distribution putting all mass on ``value``."""

    value: float

    def __post_init__(self) -> None:
        if not (self.value >= 0.0) or not math.isfinite(self.value):
            raise InvalidDistributionError(f"point mass needs a finite value >= 0, got {self.value!r}")

    def support(self) -> list[tuple[float, float]]:
        return [(self.value, 1.0)]

    def survival(self, x: float) -> float:
        return 1.0 if x <= self.value else 0.0

    def threshold_for_quantile(self, q: float) -> float:
        _require_quantile(q)
        return self.value

    def value_at_survival(self, u):
        if np.ndim(u):
            return np.full(np.shape(u), self.value)
        return self.value


@dataclass(frozen=True)
class TwoPoint:
    """Takes ``high`` with probability ``p_high`` and ``low`` otherwise."""

    low: float
    high: float
    p_high: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.low < self.high) or not math.isfinite(self.high):
            raise InvalidDistributionError(
                f"two-point needs 0 <= low < high < inf, got low={self.low!r} high={self.high!r}"
            )
        _check_prob(self.p_high, "p_high")

    def support(self) -> list[tuple[float, float]]:
        return [(self.high, self.p_high), (self.low, 1.0 - self.p_high)]

    def survival(self, x: float) -> float:
        if x <= self.low:
            return 1.0
        if x <= self.high:
            return self.p_high
        return 0.0

    def threshold_for_quantile(self, q: float) -> float:
        _require_quantile(q)
        return self.high if q <= self.p_high else self.low

    def value_at_survival(self, u):
        return np.where(np.asarray(u) <= self.p_high, self.high, self.low) if np.ndim(u) else (
            self.high if u <= self.p_high else self.low
        )


@dataclass(frozen=True)
class FiniteDiscrete:
    """Finitely many atoms ``(value, prob)`` with probabilities summing to one."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise InvalidDistributionError("finite discrete needs at least one atom")
        object.__setattr__(self, "atoms", tuple((float(v), float(p)) for v, p in self.atoms))
        total = math.fsum(p for _, p in self.atoms)
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidDistributionError(f"atom probabilities sum to {total!r}, not 1")
        for v, p in self.atoms:
            if not (v >= 0.0) or not math.isfinite(v):
                raise InvalidDistributionError(f"atom value must be finite and >= 0, got {v!r}")
            _check_prob(p, "atom probability")
        vals = [v for v, _ in self.atoms]
        if len(set(vals)) != len(vals):
            raise InvalidDistributionError("atom values must be distinct")
        desc = tuple(sorted(self.atoms, key=lambda a: -a[0]))
        object.__setattr__(self, "_desc", desc)
        object.__setattr__(self, "_desc_cum", tuple(_running_sums(p for _, p in desc)))

    _desc: tuple[tuple[float, float], ...] = field(init=False, repr=False, compare=False)
    _desc_cum: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def support(self) -> list[tuple[float, float]]:
        return list(self.atoms)

    def survival(self, x: float) -> float:
        s = math.fsum(p for v, p in self.atoms if v >= x)
        return min(s, 1.0)

    def threshold_for_quantile(self, q: float) -> float:
        _require_quantile(q)
        for (v, _), cum in zip(self._desc, self._desc_cum):
            if cum >= q - PROB_TOL:
                return v
        return self._desc[-1][0]

    def value_at_survival(self, u):
        cum = np.asarray(self._desc_cum)
        vals = np.asarray([v for v, _ in self._desc])
        idx = np.searchsorted(cum, np.asarray(u) - PROB_TOL, side="left")
        idx = np.minimum(idx, len(vals) - 1)
        out = vals[idx]
        return out if np.ndim(u) else float(out)


@dataclass(frozen=True)
class SurvivalMeasure:
    """Decomposition of a quantile function as density pieces plus jumps.

    ``quantile_fn(u) = sum of atom weights at levels >= u + integral of the
    density over (u, 1)``.  ``pieces`` are ``(lo, hi, r)`` with ``r`` a
    vectorized density on ``(lo, hi)``; ``atoms`` are ``(level, weight)``.
    """

    pieces: tuple[tuple[float, float, Callable], ...]
    atoms: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class QuantileDefined:
    """Distribution defined by its quantile function at survival levels.

    ``quantile_fn(u)`` is the value whose survival probability is ``u``,
    nonincreasing on ``(0, 1]``.  A serializable grid form (piecewise
    linear interpolation between ``(us, values)`` nodes) is either the
    primary definition or an approximation of an analytic ``quantile_fn``.
    """

    us: tuple[float, ...]
    values: tuple[float, ...]
    quantile_fn: Callable | None = field(default=None, compare=False)
    survival_fn: Callable | None = field(default=None, compare=False)
    threshold_fn: Callable | None = field(default=None, compare=False)
    measure: SurvivalMeasure | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        us = tuple(float(u) for u in self.us)
        vals = tuple(float(v) for v in self.values)
        if len(us) != len(vals) or len(us) < 2:
            raise InvalidDistributionError("quantile grid needs matching us/values with >= 2 nodes")
        if any(b <= a for a, b in zip(us, us[1:])):
            raise InvalidDistributionError("grid us must be strictly increasing")
        if not (0.0 <= us[0] and abs(us[-1] - 1.0) <= PROB_TOL):
            raise InvalidDistributionError("grid us must lie in [0, 1] and end at 1")
        if any(v < 0.0 for v in vals):
            raise InvalidDistributionError("grid values must be nonnegative")
        if any(b > a + 1e-15 for a, b in zip(vals, vals[1:])):
            raise InvalidDistributionError("quantile values must be nonincreasing in u")
        object.__setattr__(self, "us", us)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_grid(cls, us: Sequence[float], values: Sequence[float]) -> "QuantileDefined":
        return cls(us=tuple(us), values=tuple(values))

    @classmethod
    def uniform_01(cls) -> "QuantileDefined":
        """Uniform on [0, 1]: quantile function u -> 1 - u."""
        return cls.from_grid((0.0, 1.0), (1.0, 0.0))

    def support(self) -> None:
        return None

    def _grid_quantile(self, u):
        return np.interp(u, self.us, self.values)

    def quantile(self, u):
        """Value at survival level ``u`` in (0, 1]."""
        if self.quantile_fn is not None:
            return self.quantile_fn(u)
        return self._grid_quantile(u)

    def survival(self, x: float) -> float:
        if self.survival_fn is not None:
            return float(self.survival_fn(x))
        # Largest u with quantile(u) >= x; grid is piecewise linear and
        # nonincreasing, so invert segment by segment (flat runs inclusive).
        vals = self.values
        us = self.us
        if x <= vals[-1]:
            return 1.0
        if x > vals[0]:
            return 0.0
        for i in range(len(us) - 1, 0, -1):
            v_hi, v_lo = vals[i - 1], vals[i]
            if v_hi >= x > v_lo:
                if v_hi == v_lo:
                    return us[i]
                # linear segment: value v at u = us[i-1] + t*(us[i]-us[i-1])
                t = (v_hi - x) / (v_hi - v_lo)
                return us[i - 1] + t * (us[i] - us[i - 1])
            if v_hi == x == v_lo:
                return us[i]
        return us[0] if x == vals[0] else 0.0

    def threshold_for_quantile(self, q: float) -> float:
        _require_quantile(q)
        if self.threshold_fn is not None:
            return float(self.threshold_fn(q))
        return float(self._grid_quantile(q))

    def value_at_survival(self, u):
        out = self.quantile(u)
        return out if np.ndim(u) else float(out)

    def survival_measure(self) -> SurvivalMeasure:
        """Measure form used by the i.i.d. quantile analysis."""
        if self.measure is not None:
            return self.measure
        pieces = []
        for i in range(len(self.us) - 1):
            lo, hi = self.us[i], self.us[i + 1]
            slope = (self.values[i] - self.values[i + 1]) / (hi - lo)
            if slope > 0.0:
                pieces.append((lo, hi, _const_fn(slope)))
        atoms = []
        if self.values[-1] > 0.0:
            atoms.append((1.0, self.values[-1]))
        return SurvivalMeasure(pieces=tuple(pieces), atoms=tuple(atoms))


def _const_fn(c: float) -> Callable:
    return lambda v: np.full_like(np.asarray(v, dtype=float), c)


def _running_sums(ps) -> list[float]:
    out, acc = [], 0.0
    for p in ps:
        acc += p
        out.append(acc)
    out[-1] = max(out[-1], 1.0)
    return out


Distribution = Union[PointMass, TwoPoint, FiniteDiscrete, QuantileDefined]


@dataclass(frozen=True)
class Instance:
    """A complete problem input: ordered distributions plus removal count."""

    dists: tuple[Distribution, ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "dists", tuple(self.dists))
        n = len(self.dists)
        if n < 1:
            raise InvalidDistributionError("instance needs at least one distribution")
        if not (0 <= self.k <= n - 1):
            raise InvalidDistributionError(f"k must satisfy 0 <= k <= n-1, got k={self.k} n={n}")

    @property
    def n(self) -> int:
        return len(self.dists)

    def is_finite_support(self) -> bool:
        return all(d.support() is not None for d in self.dists)


def sample(dist: Distribution, rng: np.random.Generator) -> float:
    """Draw one value; quantile-defined kinds map a uniform survival level."""
    u = 1.0 - rng.random()  # uniform on (0, 1]
    return float(dist.value_at_survival(u))


def survival(dist: Distribution, x: float) -> float:
    """P(X >= x)."""
    return float(dist.survival(x))


def threshold_for_quantile(dist: Distribution, q: float) -> float:
    """sup{x : P(X >= x) >= q} for q in (0, 1]."""
    return float(dist.threshold_for_quantile(q))


def _require_quantile(q: float) -> None:
    if not (0.0 < q <= 1.0):
        raise ValueError(f"quantile must lie in (0, 1], got {q!r}")


def joint_support_size(instance: Instance) -> int:
    size = 1
    for d in instance.dists:
        sup = d.support()
        if sup is None:
            raise NotFiniteSupportError(f"{type(d).__name__} has no finite support")
        size *= len(sup)
        if size > ENUMERATION_CAP:
            raise EnumerationCapError(f"joint support exceeds cap 2**24 ({size} outcomes)")
    return size


def iter_joint_realizations(instance: Instance):
    """Yield (probability, values tuple) over the full joint support."""
    joint_support_size(instance)
    supports = [d.support() for d in instance.dists]
    for combo in product(*supports):
        p = 1.0
        for _, ap in combo:
            p *= ap
        yield p, tuple(v for v, _ in combo)


def order_statistic_expectation_exact(instance: Instance, j: int) -> float:
    """Exact E of the j-th largest of the n values, by full enumeration."""
    if not (1 <= j <= instance.n):
        raise ValueError(f"rank j must lie in 1..n, got {j}")
    acc = KahanSum()
    for p, values in iter_joint_realizations(instance):
        jth = sorted(values, reverse=True)[j - 1]
        acc.add(p * jth)
    return acc.value


def order_statistic_distribution_exact(instance: Instance, j: int) -> dict[float, float]:
    """Exact pmf of the j-th largest value (keys are exact atom values)."""
    if not (1 <= j <= instance.n):
        raise ValueError(f"rank j must lie in 1..n, got {j}")
    pmf: dict[float, KahanSum] = {}
    for p, values in iter_joint_realizations(instance):
        jth = sorted(values, reverse=True)[j - 1]
        pmf.setdefault(jth, KahanSum()).add(p)
    return {v: acc.value for v, acc in sorted(pmf.items())}


# --- JSON wire form -------------------------------------------------------

def dist_to_json(dist: Distribution) -> dict:
    if isinstance(dist, PointMass):
        return {"type": "point", "value": dist.value}
    if isinstance(dist, TwoPoint):
        return {"type": "two_point", "low": dist.low, "high": dist.high, "p_high": dist.p_high}
    if isinstance(dist, FiniteDiscrete):
        return {"type": "discrete", "atoms": [[v, p] for v, p in dist.atoms]}
    if isinstance(dist, QuantileDefined):
        # Analytic quantile functions serialize through their grid nodes.
        return {"type": "quantile_grid", "us": list(dist.us), "values": list(dist.values)}
    raise TypeError(f"unknown distribution {type(dist).__name__}")


def dist_from_json(obj: dict) -> Distribution:
    kind = obj.get("type")
    if kind == "point":
        return PointMass(value=float(obj["value"]))
    if kind == "two_point":
        return TwoPoint(low=float(obj["low"]), high=float(obj["high"]), p_high=float(obj["p_high"]))
    if kind == "discrete":
        return FiniteDiscrete(atoms=tuple((float(v), float(p)) for v, p in obj["atoms"]))
    if kind == "quantile_grid":
        return QuantileDefined.from_grid(obj["us"], obj["values"])
    raise InvalidDistributionError(f"unknown distribution type {kind!r}")


def instance_to_json(instance: Instance) -> dict:
    return {"k": instance.k, "dists": [dist_to_json(d) for d in instance.dists]}


def instance_from_json(obj: dict) -> Instance:
    return Instance(dists=tuple(dist_from_json(d) for d in obj["dists"]), k=int(obj["k"]))
