"""Instantaneous firing speeds of continuous transitions.

Given a marking with the discrete part stable, every continuous transition
fires at some speed between 0 and its maximum.  Empty continuous places
constrain their output transitions to the inflow they receive; conflict
policies decide who gets how much.  The solver iterates per-place water
filling to a fixed point, processing places in a fixed topological order so
the result is deterministic.
"""

from __future__ import annotations

import enum
from fractions import Fraction
from functools import lru_cache

from .errors import NonConvergence, UnknownPlace, UnknownTransition, UnstableDiscreteMarking
from .model import CONTINUOUS, DISCRETE, HybridNet

EPSILON = Fraction(1, 10**12)


class Enabling(enum.Enum):
    NOT_ENABLED = "notEnabled"
    STRONGLY_ENABLED = "stronglyEnabled"
    WEAKLY_ENABLED = "weaklyEnabled"


class CompiledNet:
    """Index tables for one net, shared by every solve on that net.

    Continuous places and transitions get dense integer indices; policies are
    normalized to ordered sharing groups; places are sorted into the fixed
    processing order (topological over the continuous subnet, ties and cycles
    broken lexicographically).
    """

    def __init__(self, net: HybridNet):
        self.net = net
        self.cont_places = sorted(p.id for p in net.places if p.kind == CONTINUOUS)
        self.cont_trans = sorted(t.id for t in net.transitions if t.kind == CONTINUOUS)
        self.disc_places = sorted(p.id for p in net.places if p.kind == DISCRETE)
        self.disc_trans = sorted(t.id for t in net.transitions if t.kind == DISCRETE)
        self.cp_index = {p: i for i, p in enumerate(self.cont_places)}
        self.ct_index = {t: j for j, t in enumerate(self.cont_trans)}

        np_, nt = len(self.cont_places), len(self.cont_trans)
        self.vmax = [None] * nt  # None = unbounded
        for t in net.transitions:
            if t.kind == CONTINUOUS:
                self.vmax[self.ct_index[t.id]] = t.max_speed

        # weighted adjacency, duplicate arcs merged by summing
        self.place_in = [[] for _ in range(np_)]  # (transition j, weight) feeding place
        self.place_out = [[] for _ in range(np_)]  # (transition j, weight) draining place
        self.trans_cin = [[] for _ in range(nt)]  # continuous input places of transition
        self.trans_cout = [[] for _ in range(nt)]
        self.trans_guards = [[] for _ in range(nt)]  # (discrete place id, weight)
        place_ids = {p.id: p for p in net.places}
        acc: dict[tuple[str, str], Fraction] = {}
        for a in net.arcs:
            acc[(a.source, a.target)] = acc.get((a.source, a.target), 0) + a.weight
        for (src, dst), w in sorted(acc.items()):
            if src in place_ids and dst in self.ct_index:
                j = self.ct_index[dst]
                if place_ids[src].kind == CONTINUOUS:
                    i = self.cp_index[src]
                    self.place_out[i].append((j, w))
                    self.trans_cin[j].append((i, w))
                else:
                    self.trans_guards[j].append((src, w))
            elif src in self.ct_index and dst in place_ids:
                if place_ids[dst].kind == CONTINUOUS:
                    i, j = self.cp_index[dst], self.ct_index[src]
                    self.place_in[i].append((j, w))
                    self.trans_cout[j].append((i, w))

        # discrete transition adjacency for firing/enabling
        self.dt_inputs = {}
        self.dt_outputs = {}
        self.dt_delay = {}
        for t in net.transitions:
            if t.kind == DISCRETE:
                self.dt_inputs[t.id] = []
                self.dt_outputs[t.id] = []
                self.dt_delay[t.id] = t.delay
        for (src, dst), w in sorted(acc.items()):
            if src in place_ids and dst in self.dt_inputs:
                self.dt_inputs[dst].append((src, w))
            elif src in self.dt_inputs and dst in place_ids:
                self.dt_outputs[src].append((dst, w))

        self.out_weight = [dict(self.place_out[i]) for i in range(np_)]

        # allocation groups per place: declared policy first, stray outputs
        # appended as trailing singleton groups
        self.groups = [None] * np_
        for pid in self.cont_places:
            i = self.cp_index[pid]
            outputs = {j for j, _ in self.place_out[i]}
            pol = net.policy_for(pid)
            groups: list[list[tuple[int, Fraction]]] = []
            covered: set[int] = set()
            if pol is not None:
                for group in pol.ordered_groups():
                    g = [
                        (self.ct_index[t], w)
                        for t, w in group
                        if t in self.ct_index and self.ct_index[t] in outputs
                    ]
                    if g:
                        groups.append(g)
                        covered.update(j for j, _ in g)
            for j, _ in self.place_out[i]:
                if j not in covered:
                    groups.append([(j, Fraction(1))])
            self.groups[i] = groups

        self.order = self._processing_order()
        # Speeds depend on the marking only through which places are empty
        # and which guards hold, so fixed points can be memoized per pattern.
        self._cache: dict = {}

    def _processing_order(self) -> list[int]:
        np_ = len(self.cont_places)
        succ = [set() for _ in range(np_)]
        indeg = [0] * np_
        for j in range(len(self.cont_trans)):
            for i, _ in self.trans_cin[j]:
                for k, _ in self.trans_cout[j]:
                    if k != i and k not in succ[i]:
                        succ[i].add(k)
                        indeg[k] += 1
        ready = sorted(i for i in range(np_) if indeg[i] == 0)
        order: list[int] = []
        while ready:
            i = ready.pop(0)
            order.append(i)
            freed = []
            for k in sorted(succ[i]):
                indeg[k] -= 1
                if indeg[k] == 0:
                    freed.append(k)
            ready = sorted(ready + freed)
        if len(order) < np_:  # cycles: deterministic fallback
            order += sorted(set(range(np_)) - set(order))
        return order

    # -- marking helpers ----------------------------------------------------

    def marking_vector(self, marking: dict) -> list:
        try:
            return [marking[p] for p in self.cont_places]
        except KeyError as e:
            raise UnknownPlace(f"marking is missing place {e.args[0]!r}") from None

    def check_marking(self, marking: dict):
        known = set(self.cont_places) | set(self.disc_places)
        for pid in marking:
            if pid not in known:
                raise UnknownPlace(f"marking names unknown place {pid!r}")
        for pid in known:
            if pid not in marking:
                raise UnknownPlace(f"marking is missing place {pid!r}")

    def discrete_enabled(self, tid: str, marking: dict) -> bool:
        """Classical enabling of a discrete transition (all inputs covered)."""
        return all(marking[p] >= w for p, w in self.dt_inputs[tid])

    def guards_satisfied(self, j: int, marking: dict) -> bool:
        return all(marking[p] >= w for p, w in self.trans_guards[j])

    def zero_delay_enabled(self, marking: dict) -> list[str]:
        return [
            tid
            for tid in self.disc_trans
            if self.dt_delay[tid] == 0 and self.discrete_enabled(tid, marking)
        ]

    # -- the fixed point ----------------------------------------------------

    def solve(self, marking: dict, vmax=None) -> list:
        """Speeds for all continuous transitions, indexed like ``cont_trans``.

        ``vmax`` overrides the compiled maximal speeds (used when scenarios
        reschedule them mid-run).  Markings must be exact: a place counts as
        empty iff its value is exactly zero.
        """
        vmax = self.vmax if vmax is None else vmax
        nt = len(self.cont_trans)
        m = self.marking_vector(marking)
        enabled = [self.guards_satisfied(j, marking) for j in range(nt)]
        # Fraction(4) and 4.0 hash alike, so exact and float runs must not
        # share cache entries.
        exact = not (
            any(type(x) is float for x in m)
            or any(type(x) is float for x in vmax)
        )
        key = (
            exact,
            tuple(x == 0 for x in m),
            tuple(enabled),
            tuple(vmax),
        )
        hit = self._cache.get(key)
        if hit is not None:
            return list(hit)
        constraining = [i for i in self.order if m[i] == 0 and self.place_out[i]]

        def inflow(i):
            return sum(w * v[j] for j, w in self.place_in[i])

        v = [
            vmax[j] if (enabled[j] and vmax[j] is not None) else 0
            for j in range(nt)
        ]
        empty_inputs = [
            [i for i, _ in self.trans_cin[j] if m[i] == 0] for j in range(nt)
        ]
        grants: dict[int, dict[int, Fraction]] = {}
        limit = max(10 * nt, 10)
        previous = list(v)
        for _ in range(limit):
            ucap = {}
            for j in range(nt):
                if vmax[j] is None and enabled[j]:
                    caps = [inflow(i) / w for i, w in self.trans_cin[j]]
                    ucap[j] = min(caps) if caps else 0

            def demand(j, here):
                if not enabled[j]:
                    return 0
                d = vmax[j] if vmax[j] is not None else ucap[j]
                for i in empty_inputs[j]:
                    if i != here and i in grants:
                        g = grants[i].get(j, 0)
                        if g < d:
                            d = g
                return d

            for i in constraining:
                remaining = inflow(i)
                out_w = self.out_weight[i]
                granted: dict[int, Fraction] = {}
                for group in self.groups[i]:
                    if remaining < 0:
                        remaining = 0
                    # allocate flow (weight * speed), then convert back
                    fills = _water_fill(
                        remaining,
                        [(j, w, out_w[j] * demand(j, i)) for j, w in group],
                    )
                    for j, flow in fills.items():
                        granted[j] = flow / out_w[j]
                    remaining -= sum(fills.values())
                grants[i] = granted
                for j in granted:
                    cap = vmax[j] if vmax[j] is not None else ucap.get(j, 0)
                    best = cap if enabled[j] else 0
                    for k in empty_inputs[j]:
                        if k in grants and grants[k].get(j, 0) < best:
                            best = grants[k][j]
                    v[j] = best
            for j in range(nt):
                if vmax[j] is None and enabled[j] and not empty_inputs[j]:
                    v[j] = ucap[j]
            delta = max((abs(v[j] - previous[j]) for j in range(nt)), default=0)
            if delta <= EPSILON:
                if len(self._cache) > 4096:
                    self._cache.clear()
                self._cache[key] = tuple(v)
                return v
            previous = list(v)
        raise NonConvergence(
            f"speed iteration did not settle within {limit} passes",
            last_two=(
                dict(zip(self.cont_trans, previous)),
                dict(zip(self.cont_trans, v)),
            ),
        )

    def speeds_dict(self, v: list) -> dict:
        return dict(zip(self.cont_trans, v))

    def balances_vector(self, v: list) -> list:
        return [
            sum(w * v[j] for j, w in self.place_in[i])
            - sum(w * v[j] for j, w in self.place_out[i])
            for i in range(len(self.cont_places))
        ]


def _water_fill(available, members):
    """Split ``available`` among (id, weight, demand) members proportionally.

    Capped members keep their demand; their surplus is redistributed among
    the rest until nothing is newly capped (at most one round per member).
    """
    grants = {j: 0 * available for j, _, _ in members}
    active = [(j, w, d) for j, w, d in members if d > 0]
    remaining = available
    while active and remaining > 0:
        total = sum(w for _, w, _ in active)
        shares = [(j, w, d, remaining * w / total) for j, w, d in active]
        capped = [entry for entry in shares if entry[3] >= entry[2]]
        if not capped:
            for j, _, _, s in shares:
                grants[j] = s
            break
        for j, _, d, _ in capped:
            grants[j] = d
            remaining -= d
        done = {j for j, _, _, _ in capped}
        active = [(j, w, d) for j, w, d in active if j not in done]
    return grants


@lru_cache(maxsize=128)
def compile_net(net: HybridNet) -> CompiledNet:
    return CompiledNet(net)


def _check_stable(compiled: CompiledNet, marking: dict):
    hot = compiled.zero_delay_enabled(marking)
    if hot:
        raise UnstableDiscreteMarking(
            f"zero-delay discrete transitions enabled: {', '.join(hot)}"
        )


def solve_speeds(net: HybridNet, marking: dict) -> dict:
    """Instantaneous speed of every continuous transition under ``marking``.

    The discrete part must be stable (no enabled zero-delay transition).
    Deterministic: identical inputs give identical vectors.
    """
    compiled = compile_net(net)
    compiled.check_marking(marking)
    _check_stable(compiled, marking)
    return compiled.speeds_dict(compiled.solve(marking))


def enabling(net: HybridNet, marking: dict) -> dict:
    """Classify each continuous transition as strongly/weakly/not enabled.

    Whether an empty place is "fed" depends on the solved speeds, so the
    classification rides on the same fixed point as ``solve_speeds``.
    """
    compiled = compile_net(net)
    compiled.check_marking(marking)
    v = compiled.solve(marking)
    m = compiled.marking_vector(marking)
    result = {}
    for j, tid in enumerate(compiled.cont_trans):
        if not compiled.guards_satisfied(j, marking):
            result[tid] = Enabling.NOT_ENABLED
            continue
        empties = [i for i, _ in compiled.trans_cin[j] if m[i] == 0]
        if not empties:
            result[tid] = Enabling.STRONGLY_ENABLED
        elif all(
            sum(w * v[k] for k, w in compiled.place_in[i]) > 0 for i in empties
        ):
            result[tid] = Enabling.WEAKLY_ENABLED
        else:
            result[tid] = Enabling.NOT_ENABLED
    return result


def balances(net: HybridNet, speeds: dict) -> dict:
    """Net drift dm/dt of every continuous place under the given speeds."""
    compiled = compile_net(net)
    for tid in speeds:
        if tid not in compiled.ct_index:
            raise UnknownTransition(f"speeds name unknown transition {tid!r}")
    v = [speeds.get(t, 0) for t in compiled.cont_trans]
    return dict(zip(compiled.cont_places, compiled.balances_vector(v)))
