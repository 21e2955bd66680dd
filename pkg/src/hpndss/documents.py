"""Canonical JSON documents and CSV trace export.

One canonical form per object: ids sorted, fixed key order, UTF-8, decimal
numbers (the token "inf" stands for an unbounded maximal speed).  Equal nets
serialize to byte-equal documents, and deserialize(serialize(x)) gives back
a structurally equal value, so documents can be diffed and content-addressed.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

from .errors import SchemaError
from .model import (
    CONTINUOUS,
    DISCRETE,
    PRIORITY,
    PRIORITY_THEN_SHARING,
    SHARING,
    ArcDef,
    ConflictPolicy,
    HybridNet,
    PlaceDef,
    TransitionDef,
)
from .rational import json_number, decimal_str, rational_str, to_fraction
from .scenario import ScenarioConfig, SpeedResample, SpeedSchedule
from .simulate import Trace


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def loads(text: str):
    """Parse JSON keeping numbers exact (floats become decimal Fractions)."""

    def reject_constant(token):
        raise SchemaError("$", f"non-finite number {token!r} not allowed")

    try:
        return json.loads(text, parse_float=Fraction, parse_constant=reject_constant)
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"not valid JSON: {e}") from None


# ---------------------------------------------------------------------------
# schema reading helpers


def _obj(value, path):
    if not isinstance(value, dict):
        raise SchemaError(path, "expected an object")
    return value


def _array(value, path):
    if not isinstance(value, list):
        raise SchemaError(path, "expected an array")
    return value


def _string(value, path):
    if not isinstance(value, str) or not value:
        raise SchemaError(path, "expected a non-empty string")
    return value


def _ident(value, path):
    s = _string(value, path)
    if "/" in s or s != s.strip():
        raise SchemaError(path, f"{s!r} is not a usable identifier")
    return s


def _number(value, path, minimum=None, strict_min=None):
    # floats appear when documents are built in Python rather than parsed;
    # they are read through their decimal representation
    if isinstance(value, bool) or not isinstance(value, (int, float, Fraction)):
        raise SchemaError(path, "expected a number")
    if isinstance(value, float) and not math.isfinite(value):
        raise SchemaError(path, "non-finite number not allowed")
    x = to_fraction(value)
    if minimum is not None and x < minimum:
        raise SchemaError(path, f"must be >= {minimum}, got {decimal_str(x)}")
    if strict_min is not None and x <= strict_min:
        raise SchemaError(path, f"must be > {strict_min}, got {decimal_str(x)}")
    return x


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, "expected an integer")
    if minimum is not None and value < minimum:
        raise SchemaError(path, f"must be >= {minimum}, got {value}")
    return value


def _get(obj, key, path, required=True, default=None):
    if key not in obj:
        if required:
            raise SchemaError(f"{path}.{key}", "missing required field")
        return default
    return obj[key]


def _no_extras(obj, path, allowed):
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown field")


# ---------------------------------------------------------------------------
# nets


def net_doc(net: HybridNet) -> dict:
    places = []
    for p in sorted(net.places, key=lambda p: p.id):
        entry = {"id": p.id, "kind": p.kind, "initial": json_number(p.initial)}
        if p.label:
            entry["label"] = p.label
        places.append(entry)
    transitions = []
    for t in sorted(net.transitions, key=lambda t: t.id):
        entry = {"id": t.id, "kind": t.kind}
        if t.kind == CONTINUOUS:
            entry["maxSpeed"] = "inf" if t.max_speed is None else json_number(t.max_speed)
        else:
            entry["delay"] = json_number(t.delay)
        if t.label:
            entry["label"] = t.label
        transitions.append(entry)
    arcs = [
        {"from": a.source, "to": a.target, "weight": json_number(a.weight)}
        for a in sorted(net.arcs, key=lambda a: (a.source, a.target))
    ]
    policies = [_policy_doc(pol) for pol in sorted(net.policies, key=lambda p: p.place)]
    return {
        "name": net.name,
        "places": places,
        "transitions": transitions,
        "arcs": arcs,
        "policies": policies,
    }


def _policy_doc(pol: ConflictPolicy) -> dict:
    entry = {"place": pol.place, "mode": pol.mode}
    if pol.mode == PRIORITY:
        entry["order"] = list(pol.order)
    else:
        entry["groups"] = [
            [{"id": t, "weight": json_number(w)} for t, w in group]
            for group in pol.groups
        ]
    return entry


def net_from_doc(doc, path="$") -> HybridNet:
    doc = _obj(doc, path)
    _no_extras(doc, path, {"name", "places", "transitions", "arcs", "policies"})
    name = _ident(_get(doc, "name", path), f"{path}.name")

    places = []
    for i, raw in enumerate(_array(_get(doc, "places", path, required=False, default=[]), f"{path}.places")):
        p = f"{path}.places[{i}]"
        raw = _obj(raw, p)
        _no_extras(raw, p, {"id", "kind", "initial", "label"})
        kind = _string(_get(raw, "kind", p), f"{p}.kind")
        if kind not in (DISCRETE, CONTINUOUS):
            raise SchemaError(f"{p}.kind", f"unknown kind {kind!r}")
        initial = _number(_get(raw, "initial", p, required=False, default=0), f"{p}.initial", minimum=0)
        if kind == DISCRETE:
            if initial.denominator != 1:
                raise SchemaError(f"{p}.initial", "discrete marking must be an integer")
            initial = int(initial)
        places.append(
            PlaceDef(
                _ident(_get(raw, "id", p), f"{p}.id"),
                kind,
                initial,
                _get(raw, "label", p, required=False, default="") or "",
            )
        )

    transitions = []
    for i, raw in enumerate(_array(_get(doc, "transitions", path, required=False, default=[]), f"{path}.transitions")):
        p = f"{path}.transitions[{i}]"
        raw = _obj(raw, p)
        kind = _string(_get(raw, "kind", p), f"{p}.kind")
        tid = _ident(_get(raw, "id", p), f"{p}.id")
        label = _get(raw, "label", p, required=False, default="") or ""
        if kind == CONTINUOUS:
            _no_extras(raw, p, {"id", "kind", "maxSpeed", "label"})
            speed = _get(raw, "maxSpeed", p)
            if speed == "inf":
                transitions.append(TransitionDef(tid, CONTINUOUS, max_speed=None, label=label))
            else:
                transitions.append(
                    TransitionDef(
                        tid,
                        CONTINUOUS,
                        max_speed=_number(speed, f"{p}.maxSpeed", strict_min=0),
                        label=label,
                    )
                )
        elif kind == DISCRETE:
            _no_extras(raw, p, {"id", "kind", "delay", "label"})
            delay = _number(_get(raw, "delay", p, required=False, default=0), f"{p}.delay", minimum=0)
            transitions.append(TransitionDef(tid, DISCRETE, delay=delay, label=label))
        else:
            raise SchemaError(f"{p}.kind", f"unknown kind {kind!r}")

    arcs = []
    for i, raw in enumerate(_array(_get(doc, "arcs", path, required=False, default=[]), f"{path}.arcs")):
        p = f"{path}.arcs[{i}]"
        raw = _obj(raw, p)
        _no_extras(raw, p, {"from", "to", "weight"})
        weight = _number(_get(raw, "weight", p, required=False, default=1), f"{p}.weight", strict_min=0)
        if weight.denominator == 1:
            weight = int(weight)
        arcs.append(
            ArcDef(
                _ident(_get(raw, "from", p), f"{p}.from"),
                _ident(_get(raw, "to", p), f"{p}.to"),
                weight,
            )
        )

    policies = []
    for i, raw in enumerate(_array(_get(doc, "policies", path, required=False, default=[]), f"{path}.policies")):
        policies.append(_policy_from_doc(raw, f"{path}.policies[{i}]"))

    return HybridNet(name, tuple(places), tuple(transitions), tuple(arcs), tuple(policies))


def _policy_from_doc(raw, p) -> ConflictPolicy:
    raw = _obj(raw, p)
    _no_extras(raw, p, {"place", "mode", "order", "groups"})
    place = _ident(_get(raw, "place", p), f"{p}.place")
    mode = _string(_get(raw, "mode", p), f"{p}.mode")
    if mode == PRIORITY:
        order = [
            _ident(t, f"{p}.order[{k}]")
            for k, t in enumerate(_array(_get(raw, "order", p), f"{p}.order"))
        ]
        return ConflictPolicy(place, PRIORITY, order=tuple(order))
    if mode not in (SHARING, PRIORITY_THEN_SHARING):
        raise SchemaError(f"{p}.mode", f"unknown mode {mode!r}")
    groups = []
    for gi, rawgroup in enumerate(_array(_get(raw, "groups", p), f"{p}.groups")):
        gp = f"{p}.groups[{gi}]"
        group = []
        for mi, member in enumerate(_array(rawgroup, gp)):
            mp = f"{gp}[{mi}]"
            member = _obj(member, mp)
            _no_extras(member, mp, {"id", "weight"})
            group.append(
                (
                    _ident(_get(member, "id", mp), f"{mp}.id"),
                    _number(_get(member, "weight", mp, required=False, default=1), f"{mp}.weight", strict_min=0),
                )
            )
        groups.append(tuple(group))
    if mode == SHARING and len(groups) != 1:
        raise SchemaError(f"{p}.groups", "sharing mode takes exactly one group")
    return ConflictPolicy(place, mode, groups=tuple(groups))


# ---------------------------------------------------------------------------
# scenarios


def scenario_doc(sc: ScenarioConfig) -> dict:
    doc = {"name": sc.name}
    if sc.net is not None:
        doc["net"] = net_doc(sc.net)
    elif sc.net_ref is not None:
        doc["net"] = sc.net_ref
    if sc.marking:
        doc["marking"] = {pid: json_number(v) for pid, v in sorted(sc.marking.items())}
    if sc.max_speeds:
        doc["maxSpeeds"] = {
            tid: _speed_spec_doc(spec) for tid, spec in sorted(sc.max_speeds.items())
        }
    if sc.policies:
        doc["policies"] = [
            _policy_doc(p) for p in sorted(sc.policies, key=lambda p: p.place)
        ]
    if sc.transfer:
        doc["transfer"] = sorted(sc.transfer)
    if sc.optional_routes:
        doc["optionalRoutes"] = sorted(sc.optional_routes)
    doc["target"] = {"place": sc.target_place, "amount": json_number(sc.target_amount)}
    doc["deadline"] = json_number(sc.deadline)
    doc["horizon"] = json_number(sc.horizon)
    doc["seed"] = sc.seed
    return doc


def _speed_spec_doc(spec):
    if spec is None:
        return "inf"
    if isinstance(spec, SpeedSchedule):
        return {
            "schedule": [
                [json_number(t), "inf" if v is None else json_number(v)]
                for t, v in spec.points
            ]
        }
    if isinstance(spec, SpeedResample):
        return {
            "random": {
                "interval": json_number(spec.interval),
                "low": json_number(spec.low),
                "high": json_number(spec.high),
            }
        }
    return json_number(spec)


def scenario_from_doc(doc, path="$") -> ScenarioConfig:
    doc = _obj(doc, path)
    _no_extras(
        doc,
        path,
        {
            "name",
            "net",
            "marking",
            "maxSpeeds",
            "policies",
            "transfer",
            "optionalRoutes",
            "target",
            "deadline",
            "horizon",
            "seed",
        },
    )
    name = _ident(_get(doc, "name", path), f"{path}.name")
    net = net_ref = None
    rawnet = _get(doc, "net", path, required=False)
    if isinstance(rawnet, str):
        net_ref = _ident(rawnet, f"{path}.net")
    elif rawnet is not None:
        net = net_from_doc(rawnet, f"{path}.net")

    marking = {}
    for pid, v in _obj(_get(doc, "marking", path, required=False, default={}), f"{path}.marking").items():
        marking[pid] = _number(v, f"{path}.marking.{pid}", minimum=0)

    max_speeds = {}
    for tid, raw in _obj(_get(doc, "maxSpeeds", path, required=False, default={}), f"{path}.maxSpeeds").items():
        max_speeds[tid] = _speed_spec_from_doc(raw, f"{path}.maxSpeeds.{tid}")

    policies = [
        _policy_from_doc(raw, f"{path}.policies[{i}]")
        for i, raw in enumerate(_array(_get(doc, "policies", path, required=False, default=[]), f"{path}.policies"))
    ]

    transfer = tuple(
        _ident(t, f"{path}.transfer[{i}]")
        for i, t in enumerate(_array(_get(doc, "transfer", path, required=False, default=[]), f"{path}.transfer"))
    )
    optional = tuple(
        _ident(t, f"{path}.optionalRoutes[{i}]")
        for i, t in enumerate(
            _array(_get(doc, "optionalRoutes", path, required=False, default=[]), f"{path}.optionalRoutes")
        )
    )

    rawtarget = _obj(_get(doc, "target", path), f"{path}.target")
    _no_extras(rawtarget, f"{path}.target", {"place", "amount"})
    target_place = _ident(_get(rawtarget, "place", f"{path}.target"), f"{path}.target.place")
    target_amount = _number(_get(rawtarget, "amount", f"{path}.target"), f"{path}.target.amount", minimum=0)

    deadline = _number(_get(doc, "deadline", path), f"{path}.deadline", minimum=0)
    horizon = _number(_get(doc, "horizon", path), f"{path}.horizon", minimum=0)
    if deadline > horizon:
        raise SchemaError(f"{path}.deadline", "deadline must not exceed the horizon")
    seed = _integer(_get(doc, "seed", path, required=False, default=0), f"{path}.seed", minimum=0)

    return ScenarioConfig(
        name=name,
        target_place=target_place,
        target_amount=target_amount,
        deadline=deadline,
        horizon=horizon,
        net=net,
        net_ref=net_ref,
        marking=marking,
        max_speeds=max_speeds,
        policies=tuple(policies),
        transfer=transfer,
        optional_routes=optional,
        seed=seed,
    )


def _speed_spec_from_doc(raw, path):
    if raw == "inf":
        return None
    if isinstance(raw, (int, float, Fraction)) and not isinstance(raw, bool):
        return _number(raw, path, strict_min=0)
    raw = _obj(raw, path)
    if "schedule" in raw:
        _no_extras(raw, path, {"schedule"})
        points = []
        last_t = None
        for i, pair in enumerate(_array(raw["schedule"], f"{path}.schedule")):
            pp = f"{path}.schedule[{i}]"
            pair = _array(pair, pp)
            if len(pair) != 2:
                raise SchemaError(pp, "expected [time, speed]")
            t = _number(pair[0], f"{pp}[0]", minimum=0)
            if last_t is not None and t <= last_t:
                raise SchemaError(f"{pp}[0]", "schedule times must increase")
            last_t = t
            v = None if pair[1] == "inf" else _number(pair[1], f"{pp}[1]", strict_min=0)
            points.append((t, v))
        if not points:
            raise SchemaError(f"{path}.schedule", "schedule needs at least one point")
        return SpeedSchedule(tuple(points))
    if "random" in raw:
        _no_extras(raw, path, {"random"})
        spec = _obj(raw["random"], f"{path}.random")
        _no_extras(spec, f"{path}.random", {"interval", "low", "high"})
        low = _number(_get(spec, "low", f"{path}.random"), f"{path}.random.low", minimum=0)
        high = _number(_get(spec, "high", f"{path}.random"), f"{path}.random.high", minimum=0)
        if high < low:
            raise SchemaError(f"{path}.random.high", "high must be >= low")
        return SpeedResample(
            _number(_get(spec, "interval", f"{path}.random"), f"{path}.random.interval", strict_min=0),
            low,
            high,
        )
    raise SchemaError(path, "expected a speed, \"inf\", a schedule, or a random spec")


# ---------------------------------------------------------------------------
# traces


def _time_field(entry: dict, key: str, value):
    entry[key] = json_number(value)
    x = to_fraction(value)
    if x.denominator != 1 and to_fraction(repr(float(x))) != x:
        entry[key + "Exact"] = rational_str(x)


def trace_doc(trace: Trace) -> dict:
    outcome = {"kind": trace.outcome.kind.value}
    if trace.outcome.time is not None:
        _time_field(outcome, "time", trace.outcome.time)
    if trace.outcome.reason:
        outcome["reason"] = trace.outcome.reason
    phases = []
    for idx, ph in enumerate(trace.phases):
        entry = {"index": idx}
        _time_field(entry, "start", ph.start)
        _time_field(entry, "end", ph.end)
        event = {"kind": ph.terminator.kind.value}
        if ph.terminator.element:
            event["element"] = ph.terminator.element
        _time_field(event, "time", ph.terminator.time)
        entry["event"] = event
        entry["speeds"] = {t: json_number(v) for t, v in sorted(ph.speeds.items())}
        entry["balances"] = {p: json_number(b) for p, b in sorted(ph.balances.items())}
        entry["marking"] = {p: json_number(m) for p, m in sorted(ph.start_marking.items())}
        phases.append(entry)
    return {
        "scenario": scenario_doc(trace.scenario),
        "initialMarking": {p: json_number(m) for p, m in sorted(trace.initial.items())},
        "phases": phases,
        "outcome": outcome,
    }


CSV_HEADER = "phase_index,t_start,t_end,element_kind,element_id,value,slope"


def trace_csv(trace: Trace) -> str:
    """One row per (phase, element): places with slopes, transitions with speeds."""
    lines = [CSV_HEADER]
    for idx, ph in enumerate(trace.phases):
        t0, t1 = decimal_str(ph.start), decimal_str(ph.end)
        for pid in sorted(ph.start_marking):
            value = decimal_str(ph.start_marking[pid])
            slope = decimal_str(ph.balances[pid]) if pid in ph.balances else ""
            lines.append(f"{idx},{t0},{t1},place,{pid},{value},{slope}")
        for tid in sorted(ph.speeds):
            lines.append(f"{idx},{t0},{t1},transition,{tid},{decimal_str(ph.speeds[tid])},")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# dispatch


def serialize(obj) -> str:
    """Canonical text for a net, scenario, or trace."""
    if isinstance(obj, HybridNet):
        return dumps(net_doc(obj))
    if isinstance(obj, ScenarioConfig):
        return dumps(scenario_doc(obj))
    if isinstance(obj, Trace):
        return dumps(trace_doc(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def deserialize(source):
    """Read a net or scenario from text or an already-parsed document."""
    doc = loads(source) if isinstance(source, str) else source
    doc = _obj(doc, "$")
    if "places" in doc or "transitions" in doc:
        return net_from_doc(doc)
    if "target" in doc:
        return scenario_from_doc(doc)
    raise SchemaError("$", "document is neither a net nor a scenario")
