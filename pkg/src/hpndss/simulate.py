"""Phase-by-phase simulation of a hybrid net.

Between events the speed vector is constant and every continuous marking
evolves linearly, so the engine never integrates: it solves for speeds,
finds the next event exactly (place emptied, timer expiry, speed-schedule
breakpoint, target reached, horizon), jumps there, and repeats.  All
arithmetic is exact rational, which is what makes phase boundaries like
2000/7 come out as equalities instead of approximations.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import InvalidNet, LivelockDetected, OutOfRange, UnknownPlace, UnknownTransition
from .model import CONTINUOUS, HybridNet, initial_marking, validate
from .rational import to_fraction
from .scenario import ScenarioConfig, SpeedResample, SpeedSchedule
from .speeds import CompiledNet, compile_net


class EventKind(enum.Enum):
    PLACE_EMPTIED = "placeEmptied"
    DISCRETE_FIRED = "discreteFired"
    ENABLING_CHANGED = "enablingChanged"
    TARGET_REACHED = "targetReached"
    HORIZON = "horizon"
    STEADY_STATE = "steadyState"


# reporting precedence when several events share one boundary
_PRECEDENCE = {
    EventKind.TARGET_REACHED: 0,
    EventKind.PLACE_EMPTIED: 1,
    EventKind.DISCRETE_FIRED: 2,
    EventKind.ENABLING_CHANGED: 3,
    EventKind.HORIZON: 4,
    EventKind.STEADY_STATE: 5,
}


@dataclass(frozen=True)
class Event:
    time: Fraction
    kind: EventKind
    element: str | None = None


@dataclass(frozen=True)
class Phase:
    """Maximal interval with constant speeds; markings evolve linearly.

    ``end > start`` except for a zero-length closing phase recording a
    steady state.
    """

    start: Fraction
    end: Fraction
    speeds: dict
    balances: dict
    start_marking: dict
    terminator: Event


class OutcomeKind(enum.Enum):
    DELIVERED = "delivered"
    DEADLINE_MISSED = "deadlineMissed"
    HORIZON_REACHED = "horizonReached"
    ERROR = "error"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    time: Fraction | None = None
    reason: str | None = None

    @property
    def delivered(self) -> bool:
        return self.kind == OutcomeKind.DELIVERED


@dataclass(frozen=True)
class Trace:
    scenario: ScenarioConfig
    phases: tuple[Phase, ...]
    outcome: Outcome
    initial: dict = field(default_factory=dict)

    @property
    def end(self) -> Fraction:
        return self.phases[-1].end if self.phases else Fraction(0)


@dataclass(frozen=True)
class EventSchedule:
    """Context for picking the next event: when we are and what we watch."""

    now: Fraction
    target_place: str
    target_amount: Fraction
    horizon: Fraction
    breakpoints: tuple[tuple[Fraction, str], ...] = ()  # (time, transition id)


def next_event(net, marking, speeds, balance_map, timers, schedule: EventSchedule) -> Event:
    """Earliest upcoming event; simultaneous ones report the strongest kind."""
    t = schedule.now
    candidates: list[Event] = []
    for pid, b in balance_map.items():
        if b < 0 and marking[pid] > 0:
            candidates.append(Event(t + marking[pid] / -b, EventKind.PLACE_EMPTIED, pid))
    for tid in sorted(timers):
        candidates.append(Event(t + timers[tid], EventKind.DISCRETE_FIRED, tid))
    for when, tid in schedule.breakpoints:
        if when > t:
            candidates.append(Event(when, EventKind.ENABLING_CHANGED, tid))
            break
    mt = marking.get(schedule.target_place)
    bt = balance_map.get(schedule.target_place, 0)
    if mt is not None and mt < schedule.target_amount and bt > 0:
        candidates.append(
            Event(t + (schedule.target_amount - mt) / bt, EventKind.TARGET_REACHED)
        )
    if not candidates and all(b == 0 for b in balance_map.values()):
        return Event(t, EventKind.STEADY_STATE)
    candidates.append(Event(schedule.horizon, EventKind.HORIZON))
    return min(candidates, key=lambda e: (e.time, _PRECEDENCE[e.kind], e.element or ""))


class _SpeedPlan:
    """Effective maximal speeds over time: overrides, schedules, resampling."""

    def __init__(self, compiled: CompiledNet, scenario: ScenarioConfig):
        self.compiled = compiled
        self.base = list(compiled.vmax)
        self.schedules: dict[int, SpeedSchedule] = {}
        self.resamples: dict[int, SpeedResample] = {}
        self.current: dict[int, Fraction] = {}
        self.rng = random.Random(scenario.seed)
        for tid in sorted(scenario.max_speeds):
            spec = scenario.max_speeds[tid]
            if tid not in compiled.ct_index:
                raise UnknownTransition(f"speed override for unknown transition {tid!r}")
            j = compiled.ct_index[tid]
            if isinstance(spec, SpeedSchedule):
                self.schedules[j] = spec
            elif isinstance(spec, SpeedResample):
                self.resamples[j] = spec
                self.current[j] = self._draw(spec)
            elif spec is None:
                self.base[j] = None
            else:
                self.base[j] = to_fraction(spec)
        self._ticks = {j: 0 for j in self.resamples}

    def _draw(self, spec: SpeedResample) -> Fraction:
        u = Fraction(self.rng.getrandbits(48), 2**48)
        return spec.low + (spec.high - spec.low) * u

    def vmax_at(self, t) -> list:
        if not self.schedules and not self.resamples:
            return self.base
        vmax = list(self.base)
        for j, sched in self.schedules.items():
            vmax[j] = sched.value_at(t)
        for j, value in self.current.items():
            vmax[j] = value
        return vmax

    def breakpoints_after(self, t) -> list[tuple[Fraction, str]]:
        """Upcoming vmax-change times, sorted; at most one per source."""
        points = []
        for j, sched in self.schedules.items():
            for when in sched.breakpoints():
                if when > t:
                    points.append((when, self.compiled.cont_trans[j]))
                    break
        for j, spec in self.resamples.items():
            k = self._ticks[j] + 1
            points.append((k * spec.interval, self.compiled.cont_trans[j]))
        return sorted(points)

    def advance_to(self, t):
        """Consume resample ticks up to and including time t."""
        for j in sorted(self.resamples):
            spec = self.resamples[j]
            while (self._ticks[j] + 1) * spec.interval <= t:
                self._ticks[j] += 1
                self.current[j] = self._draw(spec)


def _apply_scenario(net: HybridNet, scenario: ScenarioConfig) -> tuple[HybridNet, dict]:
    if scenario.policies:
        merged = {p.place: p for p in net.policies}
        for p in scenario.policies:
            merged[p.place] = p
        net = replace(net, policies=tuple(merged[k] for k in sorted(merged)))
    marking = initial_marking(net)
    for pid, value in scenario.marking.items():
        if pid not in marking:
            raise UnknownPlace(f"marking override for unknown place {pid!r}")
        kind = net.place(pid).kind
        marking[pid] = int(value) if kind != CONTINUOUS else to_fraction(value)
    return net, marking


def _stabilize(compiled: CompiledNet, marking: dict, timers: dict, budget: int = 10000) -> list[str]:
    """Fire expired and zero-delay discrete transitions until stable."""
    fired: list[str] = []
    while True:
        ready = [
            tid
            for tid in compiled.disc_trans
            if (compiled.dt_delay[tid] == 0 or timers.get(tid) == 0)
            and compiled.discrete_enabled(tid, marking)
        ]
        if not ready:
            break
        tid = ready[0]
        for pid, w in compiled.dt_inputs[tid]:
            marking[pid] -= w
        for pid, w in compiled.dt_outputs[tid]:
            marking[pid] += w
        timers.pop(tid, None)
        fired.append(tid)
        if len(fired) > budget:
            raise LivelockDetected(f"discrete firing cascade exceeded {budget} firings")
    # timers follow enabling: start fresh ones, drop stale ones
    for tid in compiled.disc_trans:
        delay = compiled.dt_delay[tid]
        if delay == 0:
            continue
        if compiled.discrete_enabled(tid, marking):
            timers.setdefault(tid, delay)
        else:
            timers.pop(tid, None)
    return fired


MAX_PHASES = 10000


def simulate(net: HybridNet | None, scenario: ScenarioConfig, net_lookup=None) -> Trace:
    """Run a scenario to delivery, steady state, or the horizon.

    Deterministic for a fixed scenario (including its seed).  Raises
    NonConvergence or LivelockDetected for nets outside the engine's scope.
    """
    base = net if net is not None else scenario.resolve_net(net_lookup)
    check = validate(base)
    if not check.ok:
        raise InvalidNet(check.violations)
    net2, marking = _apply_scenario(base, scenario)
    if scenario.target_place not in net2.place_ids():
        raise UnknownPlace(f"target place {scenario.target_place!r} not in net")
    compiled = compile_net(net2)
    plan = _SpeedPlan(compiled, scenario)
    t = Fraction(0)
    timers: dict[str, Fraction] = {}
    phases: list[Phase] = []
    initial = dict(marking)
    amount = scenario.target_amount

    while True:
        if len(phases) > MAX_PHASES:
            raise LivelockDetected(f"phase count exceeded {MAX_PHASES}")
        _stabilize(compiled, marking, timers)
        if marking[scenario.target_place] >= amount:
            outcome = Outcome(OutcomeKind.DELIVERED, t)
            break
        v = compiled.solve(marking, plan.vmax_at(t))
        speeds = compiled.speeds_dict(v)
        balance_map = dict(zip(compiled.cont_places, compiled.balances_vector(v)))
        schedule = EventSchedule(
            now=t,
            target_place=scenario.target_place,
            target_amount=amount,
            horizon=scenario.horizon,
            breakpoints=tuple(plan.breakpoints_after(t)),
        )
        event = next_event(net2, marking, speeds, balance_map, timers, schedule)
        dt = event.time - t
        start_marking = dict(marking)
        for pid, b in balance_map.items():
            if b != 0:
                marking[pid] = marking[pid] + b * dt
        phases.append(Phase(t, event.time, speeds, balance_map, start_marking, event))
        t = event.time

        if event.kind == EventKind.STEADY_STATE:
            missed = t >= scenario.deadline
            outcome = Outcome(
                OutcomeKind.DEADLINE_MISSED if missed else OutcomeKind.HORIZON_REACHED,
                t,
                reason="steady state with target unmet",
            )
            break
        if marking[scenario.target_place] >= amount:
            outcome = Outcome(OutcomeKind.DELIVERED, t)
            break
        if event.kind == EventKind.HORIZON:
            missed = t >= scenario.deadline
            outcome = Outcome(
                OutcomeKind.DEADLINE_MISSED if missed else OutcomeKind.HORIZON_REACHED,
                t,
            )
            break
        for tid in list(timers):
            timers[tid] -= dt
        plan.advance_to(t)

    return Trace(scenario, tuple(phases), outcome, initial)


def marking_at(trace: Trace, t) -> dict:
    """Exact marking at time t, interpolated within the covering phase."""
    t = to_fraction(t)
    if t < 0 or t > trace.end:
        raise OutOfRange(f"t={t} outside [0, {trace.end}]")
    if not trace.phases:
        return dict(trace.initial)
    covering = trace.phases[0]
    for phase in trace.phases:
        if phase.start <= t:
            covering = phase
        else:
            break
    out = dict(covering.start_marking)
    dt = t - covering.start
    if dt:
        for pid, b in covering.balances.items():
            if b != 0:
                out[pid] = out[pid] + b * dt
    return out


@dataclass
class EulerTrajectory:
    """Fixed-step reference trajectory; the cross-check for the exact engine."""

    times: list[float]
    markings: list[dict]
    delivered_at: float | None

    def marking_near(self, t: float) -> dict:
        best = min(range(len(self.times)), key=lambda i: abs(self.times[i] - t))
        return self.markings[best]


def euler_oracle(net: HybridNet | None, scenario: ScenarioConfig, step, sample_times=None, stop_at=None) -> EulerTrajectory:
    """Explicit fixed-step integration of the same scenario, in floats.

    Calls the speed solver every step and clamps markings at zero.  Used by
    tests as an independent check on the event-driven engine; step error is
    O(step), so compare with loose tolerances.
    """
    step = float(step)
    if step <= 0:
        raise ValueError("step must be positive")
    base = net if net is not None else scenario.resolve_net()
    net2, marking0 = _apply_scenario(base, scenario)
    compiled = compile_net(net2)
    plan = _SpeedPlan(compiled, scenario)

    m = {
        pid: (float(val) if net2.place(pid).kind == CONTINUOUS else val)
        for pid, val in marking0.items()
    }
    horizon = float(stop_at if stop_at is not None else scenario.horizon)
    wanted = sorted(float(x) for x in (sample_times if sample_times is not None else []))
    timers: dict[str, float] = {}
    t = 0.0
    times: list[float] = []
    markings: list[dict] = []
    delivered_at = None
    amount = float(scenario.target_amount)
    target = scenario.target_place
    next_sample = 0

    def record_until(now):
        nonlocal next_sample
        while next_sample < len(wanted) and wanted[next_sample] <= now + step / 2:
            times.append(wanted[next_sample])
            markings.append(dict(m))
            next_sample += 1

    while t <= horizon + step / 2:
        _stabilize(compiled, m, timers)
        record_until(t)
        if delivered_at is None and m[target] >= amount - 1e-12:
            delivered_at = t
            if next_sample >= len(wanted):
                break
        vmax = plan.vmax_at(t)
        vmax = [None if x is None else float(x) for x in vmax]
        v = compiled.solve(m, vmax)
        balance = compiled.balances_vector(v)
        for i, pid in enumerate(compiled.cont_places):
            nxt = m[pid] + balance[i] * step
            m[pid] = 0.0 if nxt < 1e-12 else nxt
        for tid in list(timers):
            timers[tid] = max(0.0, timers[tid] - step)
        t += step
        plan.advance_to(t)

    return EulerTrajectory(times, markings, delivered_at)
