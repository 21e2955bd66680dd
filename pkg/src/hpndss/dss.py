"""Decision loop: search priority configurations until the deadline is met.

The loop starts from a speed-ordered priority assignment (fastest transfer
transition first), simulates, and on a miss applies two heuristics: demote
the transition that feeds an accumulating place, and, when no demotion is
left, open optional routes.  Sharing-mode candidates (equal weights over the
transfer block) come after the priority candidates.  The first configuration
delivering within the deadline wins; every attempt is reported.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import HpnError
from .model import PRIORITY, PRIORITY_THEN_SHARING, SHARING, ConflictPolicy, HybridNet, initial_marking
from .rational import to_fraction
from .scenario import ScenarioConfig, SpeedResample, SpeedSchedule
from .simulate import Outcome, OutcomeKind, Trace, simulate

HEURISTIC = "heuristic"
EXHAUSTIVE = "exhaustive"

FIRST_HIT = "firstHit"
EXHAUSTED = "exhausted"
BUDGET = "budget"


@dataclass(frozen=True)
class Provenance:
    kind: str  # initial | demotion | routeExpansion | sharing | ordering
    of: str | None = None


@dataclass(frozen=True)
class Configuration:
    """Policy (and optionally marking) overrides layered on a scenario."""

    id: str
    policies: tuple[ConflictPolicy, ...] = ()
    marking: dict = field(default_factory=dict)
    provenance: Provenance = Provenance("initial")

    def key(self):
        """Content identity: two configurations with equal overrides coincide."""
        return (
            tuple(sorted(self.policies, key=lambda p: p.place)),
            tuple(sorted(self.marking.items())),
        )


@dataclass(frozen=True)
class AnalysisRequest:
    scenario: ScenarioConfig
    mode: str = HEURISTIC
    max_configurations: int = 1000

    def __post_init__(self):
        if self.max_configurations < 1:
            raise ValueError("max_configurations must be at least 1")
        if self.mode not in (HEURISTIC, EXHAUSTIVE):
            raise ValueError(f"unknown exploration mode {self.mode!r}")


@dataclass(frozen=True)
class Attempt:
    configuration: Configuration
    outcome: Outcome
    trace: Trace | None = None

    @property
    def hit(self) -> bool:
        return self.outcome.kind is OutcomeKind.DELIVERED


@dataclass(frozen=True)
class AnalysisReport:
    scenario_name: str
    deadline: Fraction
    attempts: tuple[Attempt, ...] = ()
    selected: Configuration | None = None
    stopped_because: str = EXHAUSTED


def _rank_speed(vmax):
    # unbounded sorts ahead of any finite speed
    return (0,) if vmax is None else (1, -vmax)


def _configured_speed(net: HybridNet, scenario: ScenarioConfig, tid: str):
    spec = scenario.max_speeds.get(tid, ...)
    if spec is ...:
        return net.transition(tid).max_speed
    if isinstance(spec, SpeedSchedule):
        return spec.value_at(0)
    if isinstance(spec, SpeedResample):
        return (spec.low + spec.high) / 2
    return None if spec is None else to_fraction(spec)


def _base_policies(net: HybridNet, scenario: ScenarioConfig) -> dict[str, ConflictPolicy]:
    merged = {p.place: p for p in net.policies}
    for p in scenario.policies:
        merged[p.place] = p
    return merged


def _delta_policies(net: HybridNet, merged: dict) -> tuple[ConflictPolicy, ...]:
    """Only the policies that differ from the net's own declarations.

    Keeps configuration content keys comparable no matter which generator
    produced them (heuristic chain, exhaustive orderings, sharing).
    """
    declared = {p.place: p for p in net.policies}
    return tuple(
        merged[place]
        for place in sorted(merged)
        if declared.get(place) != merged[place]
    )


def initial_configuration(net: HybridNet, scenario: ScenarioConfig) -> Configuration:
    """Speed-ordered start: fastest transfer transition gets top priority.

    Within each priority policy the declared transfer transitions are sorted
    by descending maximal speed (ties lexicographic); other finite
    transitions stay ahead of them, unbounded absorbers behind.
    """
    transfer = set(scenario.transfer)
    merged = _base_policies(net, scenario)
    for place_id, pol in sorted(merged.items()):
        if pol.mode != PRIORITY or not transfer.intersection(pol.order):
            continue

        def slot(tid):
            vmax = _configured_speed(net, scenario, tid)
            if tid in transfer:
                return (1,) + _rank_speed(vmax) + (tid,)
            if vmax is None:
                return (2, pol.order.index(tid))
            return (0, pol.order.index(tid))

        new_order = tuple(sorted(pol.order, key=slot))
        merged[place_id] = ConflictPolicy(place_id, PRIORITY, order=new_order)
    return Configuration(
        "initial", _delta_policies(net, merged), provenance=Provenance("initial")
    )


def _effective_marking(trace: Trace) -> dict:
    net = trace.scenario.net
    marking = initial_marking(net)
    marking.update(trace.scenario.marking)
    return marking


def _accumulating_feeders(trace: Trace) -> list[str]:
    """Transitions feeding places that buffered up during the trace.

    A place qualifies if some phase drove it upward (positive balance over a
    real interval) and it has continuous output transitions of its own: pure
    sinks, the delivery target included, are where flow is supposed to end up.
    """
    net = trace.scenario.net
    outputs = {p.id: [] for p in net.places}
    inputs = {p.id: [] for p in net.places}
    trans = {t.id: t for t in net.transitions}
    for a in net.arcs:
        if a.source in trans and a.target in outputs and trans[a.source].kind == "continuous":
            inputs[a.target].append((a.source, a.weight))
        elif a.source in outputs and a.target in trans and trans[a.target].kind == "continuous":
            outputs[a.source].append(a.target)

    feeders: list[str] = []
    for phase in trace.phases:
        if phase.end <= phase.start:
            continue
        for pid in sorted(phase.balances):
            if pid == trace.scenario.target_place or not outputs.get(pid):
                continue
            if phase.balances[pid] <= 0:
                continue
            contrib = [
                (w * phase.speeds.get(tid, 0), tid) for tid, w in inputs[pid]
            ]
            contrib = [(f, tid) for f, tid in contrib if f > 0]
            if not contrib:
                continue
            dominant = max(contrib, key=lambda x: (x[0], x[1]))[1]
            if dominant not in feeders:
                feeders.append(dominant)
    return feeders


def _demote(policies: dict[str, ConflictPolicy], tid: str) -> list[ConflictPolicy] | None:
    """Move tid one rank down in every priority policy listing it."""
    changed = []
    for place_id, pol in sorted(policies.items()):
        if pol.mode != PRIORITY or tid not in pol.order:
            continue
        k = pol.order.index(tid)
        if k + 1 >= len(pol.order):
            continue
        order = list(pol.order)
        order[k], order[k + 1] = order[k + 1], order[k]
        changed.append(ConflictPolicy(place_id, PRIORITY, order=tuple(order)))
    return changed or None


def next_configurations(report: AnalysisReport, trace: Trace) -> list[Configuration]:
    """Follow-up candidates after a miss: demotions, else route expansions."""
    scenario = trace.scenario
    net = scenario.net
    policies = _base_policies(net, scenario)
    n = len(report.attempts)

    demotions: list[Configuration] = []
    for tid in _accumulating_feeders(trace):
        changed = _demote(policies, tid)
        if changed:
            merged = dict(policies)
            for pol in changed:
                merged[pol.place] = pol
            demotions.append(
                Configuration(
                    f"demote-{tid}-{n}",
                    _delta_policies(net, merged),
                    marking=dict(scenario.marking),
                    provenance=Provenance("demotion", of=tid),
                )
            )
    if demotions:
        return demotions

    expansions: list[Configuration] = []
    marking = _effective_marking(trace)
    for pid in sorted(scenario.optional_routes):
        if marking.get(pid, 0) != 0:
            continue
        new_marking = dict(scenario.marking)
        new_marking[pid] = 1
        expansions.append(
            Configuration(
                f"open-{pid}-{n}",
                _delta_policies(net, policies),
                marking=new_marking,
                provenance=Provenance("routeExpansion", of=pid),
            )
        )
    return expansions


def _sharing_candidates(net: HybridNet, scenario: ScenarioConfig) -> list[Configuration]:
    """One equal-weight sharing variant per conflict place on the transfer set."""
    transfer = set(scenario.transfer)
    base = _base_policies(net, scenario)
    out = []
    for place_id, pol in sorted(base.items()):
        if pol.mode != PRIORITY:
            continue
        block = [t for t in pol.order if t in transfer]
        if len(block) < 2:
            continue
        group = tuple((t, Fraction(1)) for t in block)
        if len(block) == len(pol.order):
            shared = ConflictPolicy(place_id, SHARING, groups=(group,))
        else:
            groups = []
            inserted = False
            for t in pol.order:
                if t in transfer:
                    if not inserted:
                        groups.append(group)
                        inserted = True
                else:
                    groups.append(((t, Fraction(1)),))
            shared = ConflictPolicy(place_id, PRIORITY_THEN_SHARING, groups=tuple(groups))
        merged = dict(base)
        merged[place_id] = shared
        out.append(
            Configuration(
                f"share-{place_id}",
                _delta_policies(net, merged),
                marking=dict(scenario.marking),
                provenance=Provenance("sharing", of=place_id),
            )
        )
    return out


def _ordering_candidates(net: HybridNet, scenario: ScenarioConfig) -> list[Configuration]:
    """Every permutation of the transfer block, applied consistently."""
    base = _base_policies(net, scenario)
    transfer = sorted(scenario.transfer)
    out = []
    for perm in itertools.permutations(transfer):
        merged = dict(base)
        touched = False
        for place_id, pol in sorted(base.items()):
            if pol.mode != PRIORITY:
                continue
            block = {t for t in perm if t in pol.order}
            if len(block) < 2:
                continue
            queue = iter(t for t in perm if t in block)
            order = tuple(next(queue) if t in block else t for t in pol.order)
            merged[place_id] = ConflictPolicy(place_id, PRIORITY, order=order)
            touched = True
        if touched:
            out.append(
                Configuration(
                    "order-" + "-".join(perm),
                    _delta_policies(net, merged),
                    provenance=Provenance("ordering"),
                )
            )
    return out


def analyze(request: AnalysisRequest, net_lookup=None) -> AnalysisReport:
    """Try configurations until one delivers within the deadline.

    Attempts are reported in execution order; simulation errors are recorded
    against their configuration and do not abort the run.
    """
    scenario = request.scenario
    net = scenario.resolve_net(net_lookup)
    if scenario.net is None:
        scenario = dataclasses.replace(scenario, net=net)

    attempts: list[Attempt] = []
    tried: set = set()
    pending: list[Configuration] = [initial_configuration(net, scenario)]
    if request.mode == EXHAUSTIVE:
        pending += _ordering_candidates(net, scenario)
        pending += _sharing_candidates(net, scenario)
    sharing_added = request.mode == EXHAUSTIVE
    selected = None
    stopped = EXHAUSTED

    def report_so_far():
        return AnalysisReport(scenario.name, scenario.deadline, tuple(attempts))

    while pending or not sharing_added:
        if not pending:
            pending = _sharing_candidates(net, scenario)
            sharing_added = True
            continue
        cfg = pending.pop(0)
        if cfg.key() in tried:
            continue
        if len(attempts) >= request.max_configurations:
            stopped = BUDGET
            break
        tried.add(cfg.key())
        run = scenario.with_overrides(
            policies=cfg.policies,
            marking=cfg.marking,
            name=f"{scenario.name}+{cfg.id}",
        )
        try:
            trace = simulate(net, run)
            attempts.append(Attempt(cfg, trace.outcome, trace))
        except HpnError as e:
            attempts.append(
                Attempt(cfg, Outcome(OutcomeKind.ERROR, reason=f"{type(e).__name__}: {e}"))
            )
            continue
        if trace.outcome.delivered and trace.outcome.time <= scenario.deadline:
            selected = cfg
            stopped = FIRST_HIT
            break
        if request.mode == HEURISTIC and cfg.provenance.kind != "sharing":
            pending = next_configurations(report_so_far(), trace) + pending

    return AnalysisReport(
        scenario_name=scenario.name,
        deadline=scenario.deadline,
        attempts=tuple(attempts),
        selected=selected,
        stopped_because=stopped,
    )


def resolved_policies(net: HybridNet, scenario: ScenarioConfig, cfg: Configuration) -> dict:
    """Effective per-place policies once a configuration is applied."""
    merged = _base_policies(net, scenario)
    for pol in cfg.policies:
        merged[pol.place] = pol
    return merged


# ---------------------------------------------------------------------------
# report documents


def configuration_doc(cfg: Configuration) -> dict:
    from .documents import _policy_doc  # local import to avoid a cycle
    from .rational import json_number

    doc = {
        "id": cfg.id,
        "provenance": {"kind": cfg.provenance.kind},
        "policies": [_policy_doc(p) for p in sorted(cfg.policies, key=lambda p: p.place)],
    }
    if cfg.provenance.of:
        doc["provenance"]["of"] = cfg.provenance.of
    if cfg.marking:
        doc["marking"] = {k: json_number(v) for k, v in sorted(cfg.marking.items())}
    return doc


def report_doc(report: AnalysisReport, trace_refs: dict | None = None) -> dict:
    from .rational import json_number

    attempts = []
    for attempt in report.attempts:
        entry = {
            "configuration": configuration_doc(attempt.configuration),
            "outcome": {"kind": attempt.outcome.kind.value},
        }
        if attempt.outcome.time is not None:
            entry["outcome"]["time"] = json_number(attempt.outcome.time)
        if attempt.outcome.reason:
            entry["outcome"]["reason"] = attempt.outcome.reason
        if attempt.hit:
            entry["withinDeadline"] = attempt.outcome.time <= report.deadline
        if trace_refs and attempt.configuration.id in trace_refs:
            entry["traceRef"] = trace_refs[attempt.configuration.id]
        attempts.append(entry)
    return {
        "scenario": report.scenario_name,
        "deadline": json_number(report.deadline),
        "attempts": attempts,
        "selected": None if report.selected is None else configuration_doc(report.selected),
        "stoppedBecause": report.stopped_because,
    }
