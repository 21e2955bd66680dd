"""Scenario configuration: what to simulate, against which net, until when.

A scenario layers overrides (initial markings, maximal speeds, conflict
policies) on top of a base net, names the delivery target, and fixes the
deadline/horizon window.  Maximal speeds may be constant, piecewise-constant
schedules, or seeded-random resampling on a fixed interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .model import ConflictPolicy, HybridNet
from .rational import to_fraction


@dataclass(frozen=True)
class SpeedSchedule:
    """Piecewise-constant maximal speed: value of the last point at or before t."""

    points: tuple[tuple[Fraction, Fraction | None], ...]  # (time, speed); None = unbounded

    def value_at(self, t):
        current = self.points[0][1]
        for when, value in self.points:
            if when <= t:
                current = value
            else:
                break
        return current

    def breakpoints(self):
        return [when for when, _ in self.points]


@dataclass(frozen=True)
class SpeedResample:
    """Redraw the maximal speed uniformly from [low, high] every interval."""

    interval: Fraction
    low: Fraction
    high: Fraction


def schedule(*points) -> SpeedSchedule:
    return SpeedSchedule(
        tuple(
            (to_fraction(t), None if v is None else to_fraction(v)) for t, v in points
        )
    )


def resample(interval, low, high) -> SpeedResample:
    return SpeedResample(to_fraction(interval), to_fraction(low), to_fraction(high))


@dataclass(frozen=True)
class ScenarioConfig:
    """One runnable what-if configuration.

    ``max_speeds`` maps transition ids to a constant (Fraction), ``None``
    for unbounded, a SpeedSchedule, or a SpeedResample.  ``transfer`` lists
    the transitions whose priorities the decision loop may reorder;
    ``optional_routes`` lists availability places it may additionally mark.
    """

    name: str
    target_place: str
    target_amount: Fraction
    deadline: Fraction
    horizon: Fraction
    net: HybridNet | None = None
    net_ref: str | None = None
    marking: dict = field(default_factory=dict)
    max_speeds: dict = field(default_factory=dict)
    policies: tuple[ConflictPolicy, ...] = ()
    transfer: tuple[str, ...] = ()
    optional_routes: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.target_amount < 0:
            raise ValueError("target amount must be non-negative")
        if self.deadline > self.horizon:
            raise ValueError("deadline must not exceed the horizon")

    def resolve_net(self, lookup=None) -> HybridNet:
        if self.net is not None:
            return self.net
        if self.net_ref is None:
            raise ValueError(f"scenario {self.name!r} names no net")
        if lookup is None:
            raise ValueError(f"scenario {self.name!r} references net {self.net_ref!r}; pass a lookup")
        return lookup(self.net_ref)

    def with_overrides(self, policies=None, marking=None, deadline=None, name=None):
        """A copy with configuration-level overrides layered on top."""
        merged_policies = {p.place: p for p in self.policies}
        for p in policies or ():
            merged_policies[p.place] = p
        merged_marking = dict(self.marking)
        merged_marking.update(marking or {})
        return ScenarioConfig(
            name=name or self.name,
            target_place=self.target_place,
            target_amount=self.target_amount,
            deadline=self.deadline if deadline is None else to_fraction(deadline),
            horizon=self.horizon,
            net=self.net,
            net_ref=self.net_ref,
            marking=merged_marking,
            max_speeds=dict(self.max_speeds),
            policies=tuple(merged_policies.values()),
            transfer=self.transfer,
            optional_routes=self.optional_routes,
            seed=self.seed,
        )
