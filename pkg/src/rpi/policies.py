"""Gambler strategies behind a single policy interface.

A policy is described by an immutable spec.  Binding a spec to an instance
resolves everything that depends on the input (thresholds from exact order
statistics, secretary cutoffs, mixture components) and yields per-trial
state machines that observe arrivals one at a time and decide irrevocably.

Tie handling: every drawn value carries an engine-supplied uniform
tiebreak.  A sample-based threshold carries the tiebreak of the sample
that defines it, and "exceeds" means strict lexicographic order on
(value, tiebreak).  Plain numeric thresholds (fixed, quantile, baselines)
accept on ``value >= tau`` with no tiebreak involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from . import distributions as dists
from .distributions import Instance


class PolicyModelError(ValueError):
    """Policy requires information the chosen model withholds."""


class PolicySpecError(ValueError):
    """Malformed policy spec or spec incompatible with the instance."""


@dataclass(frozen=True)
class ArrivalEvent:
    """What a policy sees for one arrival; ``index`` is None under NI."""

    value: float
    tiebreak: float
    index: Optional[int]


@dataclass(frozen=True)
class SampleSet:
    """One independent sample per distribution, with engine tiebreaks."""

    values: tuple[float, ...]
    tiebreaks: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.tiebreaks):
            raise PolicySpecError("sample values and tiebreaks must have equal length")

    def ranked_desc(self) -> list[int]:
        """Sample indices sorted by (value, tiebreak), largest first."""
        idx = sorted(
            range(len(self.values)),
            key=lambda j: (self.values[j], self.tiebreaks[j]),
            reverse=True,
        )
        return idx


# --- per-trial state machines ----------------------------------------------


class SampleThresholdTrial:
    """Accept the first arrival lex-exceeding the i-th largest sample.

    With ``exclude_source`` set, arrivals originating from the threshold
    sample's distribution are refused regardless of value.
    """

    __slots__ = ("tau_value", "tau_tiebreak", "exclude_index", "done")

    def __init__(self, samples: SampleSet, i: int, exclude_source: bool):
        ranked = samples.ranked_desc()
        j_star = ranked[i - 1]
        self.tau_value = samples.values[j_star]
        self.tau_tiebreak = samples.tiebreaks[j_star]
        self.exclude_index = j_star if exclude_source else None
        self.done = False

    def observe(self, event: ArrivalEvent) -> bool:
        if self.exclude_index is not None and event.index == self.exclude_index:
            return False
        if event.value > self.tau_value:
            return True
        return event.value == self.tau_value and event.tiebreak > self.tau_tiebreak


class PlainThresholdTrial:
    """Accept the first arrival with value >= tau."""

    __slots__ = ("tau",)

    def __init__(self, tau: float):
        self.tau = tau

    def observe(self, event: ArrivalEvent) -> bool:
        return event.value >= self.tau


class SecretaryTrial:
    """Reject a cutoff prefix, then take the first lex-record arrival."""

    __slots__ = ("cutoff", "seen", "best")

    def __init__(self, cutoff: int):
        self.cutoff = cutoff
        self.seen = 0
        self.best = None

    def observe(self, event: ArrivalEvent) -> bool:
        self.seen += 1
        key = (event.value, event.tiebreak)
        is_record = self.best is None or key > self.best
        if is_record:
            self.best = key
        return self.seen > self.cutoff and is_record


class StopAtTrial:
    """Accept the arrival coming from a fixed distribution index."""

    __slots__ = ("target",)

    def __init__(self, target: int):
        self.target = target

    def observe(self, event: ArrivalEvent) -> bool:
        return event.index == self.target


class ConstantTrial:
    __slots__ = ("accept",)

    def __init__(self, accept: bool):
        self.accept = accept

    def observe(self, event: ArrivalEvent) -> bool:
        return self.accept


# --- policy specs -----------------------------------------------------------


@dataclass(frozen=True)
class Msa:
    """Threshold at the i-th largest of one sample per distribution."""

    i: int

    needs_samples = True
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        if not (1 <= self.i <= instance.n):
            raise PolicySpecError(f"msa rank must lie in 1..n, got {self.i}")

    def spec_string(self) -> str:
        return f"msa:{self.i}"


@dataclass(frozen=True)
class MsaBar:
    """Like Msa but refuses arrivals from the threshold sample's source."""

    i: int

    needs_samples = True
    needs_identity = True

    def validate(self, instance: Instance) -> None:
        if not (1 <= self.i <= instance.k):
            raise PolicySpecError(
                f"msa_bar rank must lie in 1..k (k={instance.k}), got {self.i}"
            )

    def spec_string(self) -> str:
        return f"msa_bar:{self.i}"


@dataclass(frozen=True)
class MsaRand:
    """Uniform mixture of Msa(1)..Msa(k+1); k comes from the instance."""

    k: Optional[int] = None

    needs_samples = True
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        if self.k is not None and self.k != instance.k:
            raise PolicySpecError(f"msa_rand built for k={self.k}, instance has k={instance.k}")

    def spec_string(self) -> str:
        return "msa_rand"


@dataclass(frozen=True)
class MsaBarRand:
    """Mixture: MsaBar(i) w.p. 1/(k+2) for i<=k, Msa(k+1) w.p. 2/(k+2)."""

    k: Optional[int] = None

    needs_samples = True
    needs_identity = True

    def validate(self, instance: Instance) -> None:
        if self.k is not None and self.k != instance.k:
            raise PolicySpecError(f"msa_bar_rand built for k={self.k}, instance has k={instance.k}")

    def spec_string(self) -> str:
        return "msa_bar_rand"


@dataclass(frozen=True)
class Secretary:
    """Classic cutoff rule on the n-k streamed arrivals."""

    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        pass

    def spec_string(self) -> str:
        return "secretary"


@dataclass(frozen=True)
class QuantileThreshold:
    """Threshold tau with P(X >= tau) = q under the common distribution."""

    q: float

    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        if not (0.0 < self.q <= 1.0):
            raise PolicySpecError(f"quantile must lie in (0, 1], got {self.q}")

    def spec_string(self) -> str:
        return f"quantile:{self.q!r}"


@dataclass(frozen=True)
class FixedThreshold:
    tau: float

    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        if self.tau < 0.0:
            raise PolicySpecError("threshold must be nonnegative")

    def spec_string(self) -> str:
        return f"fixed:{self.tau!r}"


@dataclass(frozen=True)
class MedianBaseline:
    """Fixed threshold at the exact median of X_(k+1); finite support only."""

    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        if not instance.is_finite_support():
            raise PolicySpecError("median baseline needs a finite-support instance")

    def spec_string(self) -> str:
        return "baseline:median"


@dataclass(frozen=True)
class HalfMeanBaseline:
    """Fixed threshold at E[X_(k+1)]/2; finite support only."""

    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        if not instance.is_finite_support():
            raise PolicySpecError("half-mean baseline needs a finite-support instance")

    def spec_string(self) -> str:
        return "baseline:half_mean"


@dataclass(frozen=True)
class StopAt:
    """Wait for the arrival with a fixed distribution index (FI only)."""

    index: int

    needs_samples = False
    needs_identity = True

    def validate(self, instance: Instance) -> None:
        if not (0 <= self.index < instance.n):
            raise PolicySpecError(f"stop_at index must lie in 0..n-1, got {self.index}")

    def spec_string(self) -> str:
        return f"stop_at:{self.index}"


@dataclass(frozen=True)
class AcceptFirst:
    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        pass

    def spec_string(self) -> str:
        return "accept_first"


@dataclass(frozen=True)
class NeverAccept:
    needs_samples = False
    needs_identity = False

    def validate(self, instance: Instance) -> None:
        pass

    def spec_string(self) -> str:
        return "never"


PolicySpec = Union[
    Msa, MsaBar, MsaRand, MsaBarRand, Secretary, QuantileThreshold,
    FixedThreshold, MedianBaseline, HalfMeanBaseline, StopAt, AcceptFirst,
    NeverAccept,
]


def msa(i: int) -> Msa:
    return Msa(i=i)


def msa_bar(i: int) -> MsaBar:
    return MsaBar(i=i)


def msa_rand(k: Optional[int] = None) -> MsaRand:
    return MsaRand(k=k)


def msa_bar_rand(k: Optional[int] = None) -> MsaBarRand:
    return MsaBarRand(k=k)


def secretary() -> Secretary:
    return Secretary()


def quantile_threshold(q: float) -> QuantileThreshold:
    return QuantileThreshold(q=q)


def fixed_threshold(tau: float) -> FixedThreshold:
    return FixedThreshold(tau=tau)


def secretary_cutoff(n: int, k: int) -> int:
    """floor((n-k)/e) arrivals are scanned without accepting."""
    return math.floor((n - k) / math.e)


# --- binding a spec to an instance ------------------------------------------


@dataclass(frozen=True)
class Component:
    """One deterministic branch of a (possibly randomized) policy."""

    kind: str                     # "sample_threshold" | "plain" | "secretary" | "stop_at" | "const"
    i: int = 0                    # sample rank for sample_threshold
    exclude_source: bool = False
    tau: float = 0.0
    cutoff: int = 0
    target: int = 0
    accept: bool = False

    def new_trial(self, samples: Optional[SampleSet]):
        if self.kind == "sample_threshold":
            return SampleThresholdTrial(samples, self.i, self.exclude_source)
        if self.kind == "plain":
            return PlainThresholdTrial(self.tau)
        if self.kind == "secretary":
            return SecretaryTrial(self.cutoff)
        if self.kind == "stop_at":
            return StopAtTrial(self.target)
        return ConstantTrial(self.accept)


@dataclass(frozen=True)
class BoundPolicy:
    """A policy spec resolved against a concrete instance.

    ``components`` carries the full (probability, deterministic branch)
    decomposition so exact enumeration can integrate over the policy's
    internal randomization; Monte Carlo trials select a branch from a
    single uniform using the cumulative probabilities.
    """

    spec: PolicySpec
    instance: Instance
    components: tuple[tuple[float, Component], ...]
    needs_samples: bool
    needs_identity: bool

    @property
    def randomized(self) -> bool:
        return len(self.components) > 1

    def component_for_uniform(self, u: float) -> Component:
        acc = 0.0
        for p, comp in self.components:
            acc += p
            if u < acc:
                return comp
        return self.components[-1][1]

    def new_trial(self, samples: Optional[SampleSet], rng) -> object:
        """Spin up one trial; draws one uniform iff the policy is randomized."""
        if self.randomized:
            comp = self.component_for_uniform(float(rng.random()))
        else:
            comp = self.components[0][1]
        return comp.new_trial(samples)


def bind(spec: PolicySpec, instance: Instance) -> BoundPolicy:
    spec.validate(instance)
    k = instance.k
    comps: list[tuple[float, Component]]
    if isinstance(spec, Msa):
        comps = [(1.0, Component(kind="sample_threshold", i=spec.i))]
    elif isinstance(spec, MsaBar):
        comps = [(1.0, Component(kind="sample_threshold", i=spec.i, exclude_source=True))]
    elif isinstance(spec, MsaRand):
        p = 1.0 / (k + 1)
        comps = [(p, Component(kind="sample_threshold", i=i)) for i in range(1, k + 2)]
    elif isinstance(spec, MsaBarRand):
        p = 1.0 / (k + 2)
        comps = [
            (p, Component(kind="sample_threshold", i=i, exclude_source=True))
            for i in range(1, k + 1)
        ]
        comps.append((2.0 * p, Component(kind="sample_threshold", i=k + 1)))
    elif isinstance(spec, Secretary):
        comps = [(1.0, Component(kind="secretary", cutoff=secretary_cutoff(instance.n, k)))]
    elif isinstance(spec, QuantileThreshold):
        tau = dists.threshold_for_quantile(instance.dists[0], spec.q)
        comps = [(1.0, Component(kind="plain", tau=tau))]
    elif isinstance(spec, FixedThreshold):
        comps = [(1.0, Component(kind="plain", tau=spec.tau))]
    elif isinstance(spec, MedianBaseline):
        comps = [(1.0, Component(kind="plain", tau=_order_stat_median(instance)))]
    elif isinstance(spec, HalfMeanBaseline):
        half = dists.order_statistic_expectation_exact(instance, k + 1) / 2.0
        comps = [(1.0, Component(kind="plain", tau=half))]
    elif isinstance(spec, StopAt):
        comps = [(1.0, Component(kind="stop_at", target=spec.index))]
    elif isinstance(spec, AcceptFirst):
        comps = [(1.0, Component(kind="const", accept=True))]
    elif isinstance(spec, NeverAccept):
        comps = [(1.0, Component(kind="const", accept=False))]
    else:
        raise PolicySpecError(f"unknown policy spec {spec!r}")
    needs_id = spec.needs_identity
    return BoundPolicy(
        spec=spec,
        instance=instance,
        components=tuple(comps),
        needs_samples=spec.needs_samples,
        needs_identity=needs_id,
    )


def _order_stat_median(instance: Instance) -> float:
    pmf = dists.order_statistic_distribution_exact(instance, instance.k + 1)
    acc = 0.0
    for v in sorted(pmf):
        acc += pmf[v]
        if acc >= 0.5 - 1e-12:
            return v
    return max(pmf)


# --- CLI spec strings --------------------------------------------------------

_BASELINES = {"median": MedianBaseline, "half_mean": HalfMeanBaseline}


def parse_policy(text: str) -> PolicySpec:
    """Parse a CLI policy spec such as ``msa:2`` or ``quantile:0.25``."""
    name, _, arg = text.strip().partition(":")
    try:
        if name == "msa":
            return Msa(i=int(arg))
        if name == "msa_bar":
            return MsaBar(i=int(arg))
        if name == "msa_rand":
            return MsaRand()
        if name == "msa_bar_rand":
            return MsaBarRand()
        if name == "secretary":
            return Secretary()
        if name == "quantile":
            return QuantileThreshold(q=float(arg))
        if name == "fixed":
            return FixedThreshold(tau=float(arg))
        if name == "baseline":
            return _BASELINES[arg]()
        if name == "stop_at":
            return StopAt(index=int(arg))
        if name == "accept_first":
            return AcceptFirst()
        if name == "never":
            return NeverAccept()
    except (KeyError, ValueError) as exc:
        raise PolicySpecError(f"bad policy spec {text!r}: {exc}") from exc
    raise PolicySpecError(f"unknown policy {text!r}")
