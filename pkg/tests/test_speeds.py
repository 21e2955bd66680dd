"""Speed solver: published-fixture vectors, small hand-checkable nets, bounds."""

from fractions import Fraction

import pytest

from hpndss.errors import NonConvergence, UnknownPlace, UnstableDiscreteMarking
from hpndss.model import (
    HybridNet,
    arc,
    continuous_transition,
    initial_marking,
    place,
    priority,
    sharing,
    timed_transition,
)
from hpndss.sample import relay_net
from hpndss.speeds import Enabling, balances, enabling, solve_speeds

F = Fraction

# Fixed point of the bundled relay net at its declared speeds/priorities,
# verified against per-place flow conservation by hand: every capacity and
# transit place has inflow == outflow, so all balances except P4/P5 vanish.
BASELINE_SPEEDS = {
    "T1": F(4), "T2": F(3), "T3": F(5),
    "T4": F(1), "T5": F(3, 2), "T6": F(1),
    "T7": F(1, 2), "T8": F(1, 2), "T9": F(1),
    "T10": F(0), "T11": F(1, 2), "T12": F(1),
    "T13": F(1, 2), "T14": F(1, 2), "T15": F(1, 2),
    "T16": F(0), "T17": F(1), "T18": F(5, 2), "T19": F(1, 2),
}


def net_of(places, transitions, arcs, policies=()):
    return HybridNet("t", tuple(places), tuple(transitions), tuple(arcs), tuple(policies))


class TestRelayFixture:
    def test_full_vector(self, relay, relay_marking):
        assert solve_speeds(relay, relay_marking) == BASELINE_SPEEDS

    def test_pool_and_destination_balances(self, relay, relay_marking):
        b = balances(relay, solve_speeds(relay, relay_marking))
        assert b["P4"] == F(7, 2)
        assert b["P5"] == -F(7, 2)

    def test_internal_places_hold_level(self, relay, relay_marking):
        b = balances(relay, solve_speeds(relay, relay_marking))
        for pid in ("P1", "P2", "P3", "P6", "P7", "P8", "P9", "P10"):
            assert b[pid] == 0, pid

    def test_deterministic_bit_for_bit(self, relay, relay_marking):
        first = solve_speeds(relay, relay_marking)
        for _ in range(3):
            assert solve_speeds(relay, relay_marking) == first


class TestSmallNets:
    def test_source_fires_at_max(self):
        net = net_of([place("P", "continuous")], [continuous_transition("T", 7)], [arc("T", "P")])
        assert solve_speeds(net, {"P": F(0)}) == {"T": F(7)}

    def test_equal_sharing_splits_inflow(self):
        net = net_of(
            [place("P", "continuous")],
            [
                continuous_transition("S", 1),
                continuous_transition("A", 2),
                continuous_transition("B", 2),
            ],
            [arc("S", "P"), arc("P", "A"), arc("P", "B")],
            [sharing("P", "A", "B")],
        )
        v = solve_speeds(net, {"P": F(0)})
        assert v["A"] == v["B"] == F(1, 2)

    def test_sharing_redistributes_surplus(self):
        # inflow 1 split 1:1 caps A at 0.3; the whole surplus must go to B
        net = net_of(
            [place("P", "continuous")],
            [
                continuous_transition("S", 1),
                continuous_transition("A", "0.3"),
                continuous_transition("B", 5),
            ],
            [arc("S", "P"), arc("P", "A"), arc("P", "B")],
            [sharing("P", "A", "B")],
        )
        v = solve_speeds(net, {"P": F(0)})
        assert v["A"] == F(3, 10)
        assert v["B"] == F(7, 10)
        assert v["A"] + v["B"] == F(1)  # nothing lost, nothing invented

    def test_priority_starves_the_tail(self):
        net = net_of(
            [place("P", "continuous")],
            [
                continuous_transition("S", 2),
                continuous_transition("A", "1.5"),
                continuous_transition("B", 4),
            ],
            [arc("S", "P"), arc("P", "A"), arc("P", "B")],
            [priority("P", "A", "B")],
        )
        v = solve_speeds(net, {"P": F(0)})
        assert v == {"S": F(2), "A": F(3, 2), "B": F(1, 2)}

    def test_marked_place_does_not_constrain(self):
        net = net_of(
            [place("P", "continuous", 5)],
            [continuous_transition("A", 2), continuous_transition("B", 3)],
            [arc("P", "A"), arc("P", "B")],
            [priority("P", "A", "B")],
        )
        v = solve_speeds(net, {"P": F(5)})
        assert v == {"A": F(2), "B": F(3)}

    def test_unbounded_sink_absorbs_slack(self):
        net = net_of(
            [place("P", "continuous")],
            [
                continuous_transition("S", 3),
                continuous_transition("A", 1),
                continuous_transition("Z", None),
            ],
            [arc("S", "P"), arc("P", "A"), arc("P", "Z")],
            [priority("P", "A", "Z")],
        )
        v = solve_speeds(net, {"P": F(0)})
        assert v == {"S": F(3), "A": F(1), "Z": F(2)}

    def test_arc_weights_scale_flow(self):
        # S fills P at 2*1; each firing of A takes 4 from P, so A runs at 1/2
        net = net_of(
            [place("P", "continuous")],
            [continuous_transition("S", 1), continuous_transition("A", 9)],
            [arc("S", "P", 2), arc("P", "A", 4)],
        )
        v = solve_speeds(net, {"P": F(0)})
        assert v["A"] == F(1, 2)

    def test_chain_propagates_limits(self):
        net = net_of(
            [place("P", "continuous"), place("Q", "continuous")],
            [
                continuous_transition("S", "0.75"),
                continuous_transition("M", 2),
                continuous_transition("E", 5),
            ],
            [arc("S", "P"), arc("P", "M"), arc("M", "Q"), arc("Q", "E")],
        )
        v = solve_speeds(net, {"P": F(0), "Q": F(0)})
        assert v == {"S": F(3, 4), "M": F(3, 4), "E": F(3, 4)}


class TestEnabling:
    def test_source_is_strongly_enabled(self):
        net = net_of([place("P", "continuous")], [continuous_transition("T", 7)], [arc("T", "P")])
        assert enabling(net, {"P": F(0)})["T"] is Enabling.STRONGLY_ENABLED

    def test_unmarked_guard_disables(self):
        net = net_of(
            [place("P", "continuous", 3), place("A", "discrete", 0)],
            [continuous_transition("T", 1)],
            [arc("P", "T"), arc("A", "T"), arc("T", "A")],
        )
        state = enabling(net, {"P": F(3), "A": 0})
        assert state["T"] is Enabling.NOT_ENABLED
        assert solve_speeds(net, {"P": F(3), "A": 0})["T"] == 0

    def test_empty_but_fed_is_weak(self):
        net = net_of(
            [place("P", "continuous")],
            [continuous_transition("S", 4), continuous_transition("T", 2)],
            [arc("S", "P"), arc("P", "T")],
        )
        state = enabling(net, {"P": F(0)})
        assert state["T"] is Enabling.WEAKLY_ENABLED

    def test_empty_and_unfed_is_not_enabled(self):
        net = net_of(
            [place("P", "continuous")],
            [continuous_transition("T", 2)],
            [arc("P", "T")],
        )
        state = enabling(net, {"P": F(0)})
        assert state["T"] is Enabling.NOT_ENABLED
        assert solve_speeds(net, {"P": F(0)})["T"] == 0

    def test_marked_inputs_are_strong(self, relay, relay_marking):
        state = enabling(relay, relay_marking)
        assert state["T5"] is Enabling.WEAKLY_ENABLED  # node capacity empty but fed
        m = dict(relay_marking)
        m["P1"] = F(2)
        assert enabling(relay, m)["T5"] is Enabling.STRONGLY_ENABLED


class TestBalances:
    def test_zero_speeds_zero_balances(self, relay):
        b = balances(relay, {t.id: F(0) for t in relay.transitions if t.kind == "continuous"})
        assert all(v == 0 for v in b.values())

    def test_transit_buffer_accumulates(self, relay):
        # send link faster than the buffer's two outlets combined
        v = dict(BASELINE_SPEEDS)
        v["T4"] = F(3)
        b = balances(relay, v)
        assert b["P6"] == F(3) - v["T8"] - v["T19"] == F(2)

    def test_unknown_transition_rejected(self, relay):
        with pytest.raises(Exception):
            balances(relay, {"nope": F(1)})


class TestErrors:
    def test_marking_must_cover_net(self, relay, relay_marking):
        m = dict(relay_marking)
        del m["P4"]
        with pytest.raises(UnknownPlace):
            solve_speeds(relay, m)
        m = dict(relay_marking)
        m["ghost"] = F(1)
        with pytest.raises(UnknownPlace):
            solve_speeds(relay, m)

    def test_unstable_discrete_marking(self):
        net = net_of(
            [place("D", "discrete", 1), place("E", "discrete", 0)],
            [timed_transition("T", 0), continuous_transition("C", 1)],
            [arc("D", "T"), arc("T", "E")],
        )
        with pytest.raises(UnstableDiscreteMarking):
            solve_speeds(net, {"D": 1, "E": 0})

    def test_nonconvergence_reports_last_iterates(self):
        # an unbounded self-reinforcing loop has no finite fixed point: the
        # inflow cap chases its own output upward every pass
        net = net_of(
            [place("P", "continuous"), place("Q", "continuous")],
            [
                continuous_transition("S", 1),
                continuous_transition("up", None),
                continuous_transition("back", None),
            ],
            [
                arc("S", "P"),
                arc("P", "up"), arc("up", "Q", 2),
                arc("Q", "back"), arc("back", "P"),
            ],
        )
        with pytest.raises(NonConvergence) as err:
            solve_speeds(net, {"P": F(0), "Q": F(0)})
        assert err.value.last_two is not None


class TestSolverProperties:
    def test_priority_dominance(self):
        # raising inflow never hurts the head of a priority order
        def head_speed(rate):
            net = net_of(
                [place("P", "continuous")],
                [
                    continuous_transition("S", rate),
                    continuous_transition("A", 2),
                    continuous_transition("B", 2),
                ],
                [arc("S", "P"), arc("P", "A"), arc("P", "B")],
                [priority("P", "A", "B")],
            )
            return solve_speeds(net, {"P": F(0)})["A"]

        speeds = [head_speed(F(i, 4)) for i in range(0, 17)]
        assert speeds == sorted(speeds)

    def test_bounds_and_starvation_on_fixture(self, relay, relay_marking):
        v = solve_speeds(relay, relay_marking)
        for t in relay.transitions:
            if t.kind != "continuous":
                continue
            assert v[t.id] >= 0
            if t.max_speed is not None:
                assert v[t.id] <= t.max_speed
        b = balances(relay, v)
        for pid, value in relay_marking.items():
            if pid in b and value == 0:
                assert b[pid] >= 0
