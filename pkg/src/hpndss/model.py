"""Hybrid Petri net data model: places, transitions, arcs, conflict policies.

A net mixes a discrete part (integer markings, timed transitions) with a
continuous part (real markings, rate-limited transitions).  Values are
immutable after construction and safe to share between concurrent
simulations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import FusionKindMismatch, UnknownId
from .rational import to_fraction

DISCRETE = "discrete"
CONTINUOUS = "continuous"

PRIORITY = "priority"
SHARING = "sharing"
PRIORITY_THEN_SHARING = "priorityThenSharing"


@dataclass(frozen=True)
class PlaceDef:
    """A place holding either an integer token count or a real quantity."""

    id: str
    kind: str  # DISCRETE | CONTINUOUS
    initial: int | Fraction = 0
    label: str = ""


@dataclass(frozen=True)
class TransitionDef:
    """A transition: timed (discrete) or rate-limited (continuous).

    ``max_speed`` is the rate ceiling of a continuous transition; ``None``
    means unbounded, used for low-priority absorbers that soak up whatever
    inflow their input place receives.
    """

    id: str
    kind: str
    max_speed: Fraction | None = None  # continuous only; None = unbounded
    delay: Fraction = Fraction(0)  # discrete only
    label: str = ""


@dataclass(frozen=True)
class ArcDef:
    source: str
    target: str
    weight: int | Fraction = 1


@dataclass(frozen=True)
class ConflictPolicy:
    """How an empty place's inflow is split among competing output transitions.

    ``priority``: strict order, first served fully.
    ``sharing``: one group, inflow split proportionally to weights with
    surplus from capped members redistributed (water filling).
    ``priorityThenSharing``: ordered groups, sharing inside each group.
    """

    place: str
    mode: str
    order: tuple[str, ...] = ()
    groups: tuple[tuple[tuple[str, Fraction], ...], ...] = ()

    def ordered_groups(self) -> list[list[tuple[str, Fraction]]]:
        """Normalize to a list of sharing groups in priority order."""
        if self.mode == PRIORITY:
            return [[(t, Fraction(1))] for t in self.order]
        return [list(g) for g in self.groups]

    def members(self) -> list[str]:
        return [t for group in self.ordered_groups() for t, _ in group]


@dataclass(frozen=True, eq=False)
class HybridNet:
    name: str
    places: tuple[PlaceDef, ...] = ()
    transitions: tuple[TransitionDef, ...] = ()
    arcs: tuple[ArcDef, ...] = ()
    policies: tuple[ConflictPolicy, ...] = ()

    def _canonical(self):
        return (
            self.name,
            tuple(sorted(self.places, key=lambda p: p.id)),
            tuple(sorted(self.transitions, key=lambda t: t.id)),
            tuple(sorted(self.arcs, key=lambda a: (a.source, a.target))),
            tuple(sorted(self.policies, key=lambda p: p.place)),
        )

    def __eq__(self, other):
        # nets are sets of elements; declaration order is not semantic
        if not isinstance(other, HybridNet):
            return NotImplemented
        return self._canonical() == other._canonical()

    def __hash__(self):
        return hash(self._canonical())

    def place(self, pid: str) -> PlaceDef:
        for p in self.places:
            if p.id == pid:
                return p
        raise UnknownId(f"no place {pid!r} in net {self.name!r}")

    def transition(self, tid: str) -> TransitionDef:
        for t in self.transitions:
            if t.id == tid:
                return t
        raise UnknownId(f"no transition {tid!r} in net {self.name!r}")

    def place_ids(self) -> set[str]:
        return {p.id for p in self.places}

    def transition_ids(self) -> set[str]:
        return {t.id for t in self.transitions}

    def policy_for(self, pid: str) -> ConflictPolicy | None:
        for pol in self.policies:
            if pol.place == pid:
                return pol
        return None


def place(pid: str, kind: str, initial=0, label: str = "") -> PlaceDef:
    init = int(initial) if kind == DISCRETE else to_fraction(initial)
    return PlaceDef(pid, kind, init, label)


def continuous_transition(tid: str, max_speed=None, label: str = "") -> TransitionDef:
    speed = None if max_speed is None else to_fraction(max_speed)
    return TransitionDef(tid, CONTINUOUS, max_speed=speed, label=label)


def timed_transition(tid: str, delay=0, label: str = "") -> TransitionDef:
    return TransitionDef(tid, DISCRETE, delay=to_fraction(delay), label=label)


def arc(source: str, target: str, weight=1) -> ArcDef:
    w = weight if isinstance(weight, int) else to_fraction(weight)
    return ArcDef(source, target, w)


def priority(place_id: str, *order: str) -> ConflictPolicy:
    return ConflictPolicy(place_id, PRIORITY, order=tuple(order))


def sharing(place_id: str, *members, weights=None) -> ConflictPolicy:
    ws = weights or [1] * len(members)
    group = tuple((t, to_fraction(w)) for t, w in zip(members, ws))
    return ConflictPolicy(place_id, SHARING, groups=(group,))


def priority_then_sharing(place_id: str, *groups) -> ConflictPolicy:
    """Each group is a list of transition ids or (id, weight) pairs."""
    norm = []
    for g in groups:
        norm.append(
            tuple(
                (m, Fraction(1)) if isinstance(m, str) else (m[0], to_fraction(m[1]))
                for m in g
            )
        )
    return ConflictPolicy(place_id, PRIORITY_THEN_SHARING, groups=tuple(norm))


def initial_marking(net: HybridNet) -> dict:
    """The marking declared on the net's places."""
    return {p.id: p.initial for p in net.places}


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.element}: {self.message}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(net: HybridNet) -> ValidationResult:
    """Check every structural invariant; violations are data, not faults."""
    out: list[Violation] = []
    bad = out.append

    seen: dict[str, str] = {}
    for p in net.places:
        if p.id in seen:
            bad(Violation("duplicate-id", p.id, f"id also used by a {seen[p.id]}"))
        seen[p.id] = "place"
        if p.kind not in (DISCRETE, CONTINUOUS):
            bad(Violation("bad-kind", p.id, f"unknown place kind {p.kind!r}"))
        if p.initial < 0:
            bad(Violation("negative-initial", p.id, f"initial marking {p.initial}"))
        if p.kind == DISCRETE and not isinstance(p.initial, int):
            bad(Violation("fractional-tokens", p.id, "discrete place needs an integer marking"))
    for t in net.transitions:
        if t.id in seen:
            bad(Violation("duplicate-id", t.id, f"id also used by a {seen[t.id]}"))
        seen[t.id] = "transition"
        if t.kind == CONTINUOUS:
            if t.max_speed is not None and t.max_speed <= 0:
                bad(Violation("bad-max-speed", t.id, f"max speed {t.max_speed} must be positive"))
        elif t.kind == DISCRETE:
            if t.delay < 0:
                bad(Violation("negative-delay", t.id, f"delay {t.delay}"))
        else:
            bad(Violation("bad-kind", t.id, f"unknown transition kind {t.kind!r}"))

    places = {p.id: p for p in net.places}
    transitions = {t.id: t for t in net.transitions}

    arc_index: dict[tuple[str, str], Fraction] = {}
    for a in net.arcs:
        name = f"{a.source}->{a.target}"
        src_p, dst_p = a.source in places, a.target in places
        src_t, dst_t = a.source in transitions, a.target in transitions
        if not (src_p or src_t):
            bad(Violation("dangling-arc", name, f"unknown source {a.source!r}"))
            continue
        if not (dst_p or dst_t):
            bad(Violation("dangling-arc", name, f"unknown target {a.target!r}"))
            continue
        if (src_p and dst_p) or (src_t and dst_t):
            bad(Violation("non-bipartite-arc", name, "arcs must connect a place and a transition"))
            continue
        if a.weight <= 0:
            bad(Violation("bad-weight", name, f"weight {a.weight} must be positive"))
        pid = a.source if src_p else a.target
        if places[pid].kind == DISCRETE and not isinstance(a.weight, int):
            bad(Violation("fractional-weight", name, "arc at a discrete place needs an integer weight"))
        arc_index[(a.source, a.target)] = arc_index.get((a.source, a.target), 0) + a.weight

    # Discrete places may touch continuous transitions only through paired
    # self-loops, otherwise continuous firing would bleed fractional tokens.
    for (src, dst), w in arc_index.items():
        p, t = (src, dst) if src in places else (dst, src)
        if p not in places or t not in transitions:
            continue
        if places[p].kind == DISCRETE and transitions[t].kind == CONTINUOUS:
            if arc_index.get((dst, src)) != w:
                bad(
                    Violation(
                        "unpaired-discrete-guard",
                        f"{src}->{dst}",
                        "a discrete place and a continuous transition must be "
                        "linked by a matching pair of arcs (availability self-loop)",
                    )
                )

    # Unbounded transitions are sinks limited by inflow; with no continuous
    # input place there is nothing to limit them.
    cont_inputs = {t.id: 0 for t in net.transitions}
    for a in net.arcs:
        if a.source in places and a.target in transitions:
            if places[a.source].kind == CONTINUOUS:
                cont_inputs[a.target] += 1
    for t in net.transitions:
        if t.kind == CONTINUOUS and t.max_speed is None and cont_inputs[t.id] == 0:
            bad(Violation("unbounded-source", t.id, "unbounded transition has no continuous input place"))

    # Conflict coverage: a continuous place feeding several continuous
    # transitions needs a policy naming each of them exactly once.
    outputs: dict[str, list[str]] = {p.id: [] for p in net.places}
    for a in net.arcs:
        if a.source in places and a.target in transitions:
            if transitions[a.target].kind == CONTINUOUS and a.target not in outputs[a.source]:
                outputs[a.source].append(a.target)
    policy_places = set()
    for pol in net.policies:
        if pol.place in policy_places:
            bad(Violation("duplicate-policy", pol.place, "more than one policy for this place"))
        policy_places.add(pol.place)
        if pol.place not in places:
            bad(Violation("dangling-policy", pol.place, "policy names an unknown place"))
            continue
        if pol.mode not in (PRIORITY, SHARING, PRIORITY_THEN_SHARING):
            bad(Violation("bad-policy-mode", pol.place, f"unknown mode {pol.mode!r}"))
            continue
        members = pol.members()
        for tid in members:
            if tid not in transitions:
                bad(Violation("dangling-policy", pol.place, f"policy names unknown transition {tid!r}"))
        for group in pol.ordered_groups():
            for tid, w in group:
                if w <= 0:
                    bad(Violation("bad-weight", pol.place, f"sharing weight {w} for {tid}"))
        expected = outputs.get(pol.place, [])
        if sorted(members) != sorted(set(members)):
            bad(Violation("policy-duplicate-member", pol.place, "a transition appears twice"))
        elif set(members) != set(expected) and places[pol.place].kind == CONTINUOUS:
            missing = sorted(set(expected) - set(members))
            extra = sorted(set(members) - set(expected))
            detail = []
            if missing:
                detail.append(f"missing {missing}")
            if extra:
                detail.append(f"not outputs: {extra}")
            bad(Violation("policy-coverage", pol.place, "; ".join(detail)))
    for p in net.places:
        if p.kind == CONTINUOUS and len(outputs[p.id]) >= 2 and p.id not in policy_places:
            bad(Violation("missing-policy", p.id, f"{len(outputs[p.id])} competing output transitions"))

    return ValidationResult(tuple(out))


# ---------------------------------------------------------------------------
# Composition


def compose(models: list[HybridNet], fusions, name: str = "composite") -> HybridNet:
    """Disjoint union of nets with selected elements fused.

    Every id is prefixed with its model name; fused elements instead keep the
    first pair member's bare id.  A fused place's initial marking is the sum
    of the two initials.  Fusion pairs are (model name, id, model name, id).
    """
    by_name = {m.name: m for m in models}
    if len(by_name) != len(models):
        raise UnknownId("model names must be unique for composition")

    rename: dict[tuple[str, str], str] = {}

    def kind_of(model: HybridNet, eid: str) -> tuple[str, str]:
        for p in model.places:
            if p.id == eid:
                return "place", p.kind
        for t in model.transitions:
            if t.id == eid:
                return "transition", t.kind
        raise UnknownId(f"no element {eid!r} in model {model.name!r}")

    fused_initial_extra: dict[str, Fraction] = {}
    for m1, id1, m2, id2 in fusions:
        for mn in (m1, m2):
            if mn not in by_name:
                raise UnknownId(f"unknown model {mn!r} in fusion")
        role1, kind1 = kind_of(by_name[m1], id1)
        role2, kind2 = kind_of(by_name[m2], id2)
        if role1 != role2 or kind1 != kind2:
            raise FusionKindMismatch(
                f"cannot fuse {m1}.{id1} ({kind1} {role1}) with {m2}.{id2} ({kind2} {role2})"
            )
        rename[(m1, id1)] = id1
        rename[(m2, id2)] = id1
        if role1 == "place":
            fused_initial_extra[id1] = by_name[m2].place(id2).initial

    def new_id(model: str, eid: str) -> str:
        return rename.get((model, eid), f"{model}.{eid}")

    places: list[PlaceDef] = []
    transitions: list[TransitionDef] = []
    arcs: list[ArcDef] = []
    policies: dict[str, ConflictPolicy] = {}
    fused_done: set[str] = set()

    for m in models:
        for p in m.places:
            nid = new_id(m.name, p.id)
            if (m.name, p.id) in rename:
                if nid in fused_done:
                    continue  # second member of the pair
                fused_done.add(nid)
                extra = fused_initial_extra.get(nid, 0)
                p = replace(p, initial=p.initial + extra)
            places.append(replace(p, id=nid))
        for t in m.transitions:
            nid = new_id(m.name, t.id)
            if (m.name, t.id) in rename:
                if nid in fused_done:
                    continue
                fused_done.add(nid)
            transitions.append(replace(t, id=nid))
        for a in m.arcs:
            arcs.append(ArcDef(new_id(m.name, a.source), new_id(m.name, a.target), a.weight))
        for pol in m.policies:
            nid = new_id(m.name, pol.place)
            renamed = ConflictPolicy(
                nid,
                pol.mode,
                order=tuple(new_id(m.name, t) for t in pol.order),
                groups=tuple(
                    tuple((new_id(m.name, t), w) for t, w in g) for g in pol.groups
                ),
            )
            if nid in policies:
                policies[nid] = _merge_policies(policies[nid], renamed)
            else:
                policies[nid] = renamed

    # Collapse parallel arcs produced by fusion into a single weighted arc.
    merged: dict[tuple[str, str], Fraction] = {}
    for a in arcs:
        key = (a.source, a.target)
        merged[key] = merged.get(key, 0) + a.weight
    arcs = [ArcDef(s, t, w) for (s, t), w in merged.items()]

    return HybridNet(
        name=name,
        places=tuple(places),
        transitions=tuple(transitions),
        arcs=tuple(arcs),
        policies=tuple(policies.values()),
    )


def _merge_policies(first: ConflictPolicy, second: ConflictPolicy) -> ConflictPolicy:
    """Fused place with policies on both sides: first model's groups outrank."""
    if first.mode == PRIORITY and second.mode == PRIORITY:
        return ConflictPolicy(first.place, PRIORITY, order=first.order + second.order)
    groups = tuple(first.ordered_groups()) + tuple(second.ordered_groups())
    return ConflictPolicy(
        first.place,
        PRIORITY_THEN_SHARING,
        groups=tuple(tuple(g) for g in groups),
    )
