"""Built-in demonstration model: a four-node packet relay network.

Node 1 holds a pool of packets (P5) to deliver to node 4 (P4), directly or
through relay nodes 2 and 3.  Each node's working capacity is a continuous
place fed by a source transition; transfers compete for that capacity with
the node's other jobs under priority policies.  Low-priority absorbers
(T13, T16, T18) are unbounded so capacity places never accumulate.  Every
transfer link carries a discrete availability place self-looped to its
transition; unmarking it takes the link down.

Transit buffers: P6 holds 1->2 traffic, P7 holds 1->3, P8 holds 3->2, P9
holds 2->3, and P10 queues relayed traffic at node 2 bound for node 3.
"""

from __future__ import annotations

from fractions import Fraction

from .model import (
    HybridNet,
    arc,
    continuous_transition,
    place,
    priority,
)
from .rational import to_fraction
from .scenario import ScenarioConfig

TRANSFER_LINKS = ("T4", "T5", "T6", "T7", "T8", "T9", "T10", "T11")


def relay_net() -> HybridNet:
    places = [
        place("P1", "continuous", 0, "node 1 capacity"),
        place("P2", "continuous", 0, "node 2 capacity"),
        place("P3", "continuous", 0, "node 3 capacity"),
        place("P4", "continuous", 0, "delivered packets at node 4"),
        place("P5", "continuous", 1000, "packet pool at node 1"),
        place("P6", "continuous", 0, "transit buffer 1->2"),
        place("P7", "continuous", 0, "transit buffer 1->3"),
        place("P8", "continuous", 0, "transit buffer 3->2"),
        place("P9", "continuous", 0, "transit buffer 2->3"),
        place("P10", "continuous", 0, "relay queue at node 2 toward node 3"),
    ]
    # one availability guard per transfer link
    places += [place(f"A{n}", "discrete", 1, f"link for T{n} up") for n in range(4, 12)]

    transitions = [
        continuous_transition("T1", 4, "node 1 work rate"),
        continuous_transition("T2", 3, "node 2 work rate"),
        continuous_transition("T3", 5, "node 3 work rate"),
        continuous_transition("T4", 1, "send 1->2"),
        continuous_transition("T5", Fraction(3, 2), "send 1->4"),
        continuous_transition("T6", 2, "send 1->3"),
        continuous_transition("T7", 1, "relay 2->3"),
        continuous_transition("T8", Fraction(1, 2), "forward 2->4 (from node 1)"),
        continuous_transition("T9", 1, "forward 2->4 (from node 3)"),
        continuous_transition("T10", 1, "forward 3->4 (from node 1)"),
        continuous_transition("T11", 1, "forward 3->4 (from node 2)"),
        continuous_transition("T12", 2, "relay 3->2"),
        continuous_transition("T13", None, "node 2 low-priority jobs"),
        continuous_transition("T14", Fraction(1, 2), "node 2 high-priority jobs"),
        continuous_transition("T15", Fraction(1, 2), "node 1 high-priority jobs"),
        continuous_transition("T16", None, "node 1 low-priority jobs"),
        continuous_transition("T17", 1, "node 3 high-priority jobs"),
        continuous_transition("T18", None, "node 3 low-priority jobs"),
        continuous_transition("T19", 1, "hand off 1->2 traffic to relay queue"),
    ]

    arcs = [
        arc("T1", "P1"),
        arc("T2", "P2"),
        arc("T3", "P3"),
        # node 1 sends from its pool
        arc("P1", "T4"), arc("P5", "T4"), arc("T4", "P6"),
        arc("P1", "T5"), arc("P5", "T5"), arc("T5", "P4"),
        arc("P1", "T6"), arc("P5", "T6"), arc("T6", "P7"),
        # node 2 forwards
        arc("P2", "T7"), arc("P10", "T7"), arc("T7", "P9"),
        arc("P2", "T8"), arc("P6", "T8"), arc("T8", "P4"),
        arc("P2", "T9"), arc("P8", "T9"), arc("T9", "P4"),
        # node 3 forwards
        arc("P3", "T10"), arc("P7", "T10"), arc("T10", "P4"),
        arc("P3", "T11"), arc("P9", "T11"), arc("T11", "P4"),
        arc("P3", "T12"), arc("P7", "T12"), arc("T12", "P8"),
        # other jobs draining node capacity
        arc("P2", "T13"),
        arc("P2", "T14"),
        arc("P1", "T15"),
        arc("P1", "T16"),
        arc("P3", "T17"),
        arc("P3", "T18"),
        # queue handoff at node 2
        arc("P6", "T19"), arc("T19", "P10"),
    ]
    # availability self-loops
    for n in range(4, 12):
        arcs += [arc(f"A{n}", f"T{n}"), arc(f"T{n}", f"A{n}")]

    policies = [
        priority("P1", "T15", "T4", "T5", "T6", "T16"),
        priority("P2", "T14", "T7", "T8", "T9", "T13"),
        priority("P3", "T17", "T10", "T11", "T12", "T18"),
        priority("P5", "T4", "T5", "T6"),
        priority("P6", "T8", "T19"),
        priority("P7", "T12", "T10"),
    ]

    return HybridNet(
        name="relay4",
        places=tuple(places),
        transitions=tuple(transitions),
        arcs=tuple(arcs),
        policies=tuple(policies),
    )


def example_scenario() -> ScenarioConfig:
    """Deliver the full pool with the net's own speeds and priorities."""
    return ScenarioConfig(
        name="relay4-baseline",
        net=relay_net(),
        target_place="P4",
        target_amount=Fraction(1000),
        deadline=Fraction(300),
        horizon=Fraction(2000),
        transfer=("T4", "T5", "T6"),
    )


STUDY_SPEEDS = {
    "T4": Fraction(3),
    "T5": Fraction(2),
    "T6": Fraction(2),
    "T12": Fraction(1),
    "T19": Fraction(1, 2),
}


def study_scenario(deadline=500) -> ScenarioConfig:
    """The what-if study: faster node-1 links, tighter relay capacity.

    The decision loop reorders the ``transfer`` transitions (T4, T5, T6,
    competing at P1 and P5) hunting for an ordering that meets the deadline.
    """
    return ScenarioConfig(
        name="relay4-study",
        net=relay_net(),
        target_place="P4",
        target_amount=Fraction(1000),
        deadline=to_fraction(deadline),
        horizon=Fraction(5000),
        max_speeds=dict(STUDY_SPEEDS),
        transfer=("T4", "T5", "T6"),
    )


def sender_ordering(*sends: str) -> list:
    """Priority policies for P1/P5 with the given order of the send links."""
    return [
        priority("P1", "T15", *sends, "T16"),
        priority("P5", *sends),
    ]
