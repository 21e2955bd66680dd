"""Net validation and composition."""

from fractions import Fraction

import pytest

from hpndss.errors import FusionKindMismatch, UnknownId
from hpndss.model import (
    HybridNet,
    arc,
    compose,
    continuous_transition,
    initial_marking,
    place,
    priority,
    timed_transition,
    validate,
)
from hpndss.sample import relay_net

F = Fraction


def codes(result):
    return sorted(v.code for v in result.violations)


class TestValidate:
    def test_empty_net_is_ok(self):
        assert validate(HybridNet("empty")).ok

    def test_relay_fixture_is_ok(self, relay):
        result = validate(relay)
        assert result.ok, [str(v) for v in result.violations]

    def test_place_to_place_arc(self):
        net = HybridNet(
            "n",
            places=(place("P1", "continuous"), place("P2", "continuous")),
            arcs=(arc("P1", "P2"),),
        )
        assert codes(validate(net)) == ["non-bipartite-arc"]

    def test_dangling_arc(self):
        net = HybridNet("n", places=(place("P", "continuous"),), arcs=(arc("P", "ghost"),))
        assert codes(validate(net)) == ["dangling-arc"]

    def test_duplicate_ids(self):
        net = HybridNet(
            "n",
            places=(place("X", "continuous"),),
            transitions=(continuous_transition("X", 1),),
        )
        assert "duplicate-id" in codes(validate(net))

    def test_negative_initial_and_delay(self):
        net = HybridNet(
            "n",
            places=(place("P", "continuous", 0),),
            transitions=(timed_transition("T", 0),),
        )
        bad = HybridNet(
            "n",
            places=(
                *net.places,
                # bypass helper coercion on purpose
                place("Q", "continuous").__class__("Q2", "continuous", F(-1), ""),
            ),
        )
        assert "negative-initial" in codes(validate(bad))

    def test_missing_conflict_policy(self):
        net = HybridNet(
            "n",
            places=(place("P", "continuous"),),
            transitions=(continuous_transition("A", 1), continuous_transition("B", 1)),
            arcs=(arc("P", "A"), arc("P", "B")),
        )
        assert codes(validate(net)) == ["missing-policy"]

    def test_policy_must_cover_all_outputs(self):
        net = HybridNet(
            "n",
            places=(place("P", "continuous"),),
            transitions=(continuous_transition("A", 1), continuous_transition("B", 1)),
            arcs=(arc("P", "A"), arc("P", "B")),
            policies=(priority("P", "A"),),
        )
        assert codes(validate(net)) == ["policy-coverage"]

    def test_discrete_guard_needs_matching_self_loop(self):
        net = HybridNet(
            "n",
            places=(place("D", "discrete", 1), place("P", "continuous", 1)),
            transitions=(continuous_transition("T", 1),),
            arcs=(arc("D", "T"), arc("P", "T")),  # no return arc T->D
        )
        assert "unpaired-discrete-guard" in codes(validate(net))

    def test_unbounded_transition_needs_an_input(self):
        net = HybridNet(
            "n",
            places=(place("P", "continuous"),),
            transitions=(continuous_transition("Z", None),),
            arcs=(arc("Z", "P"),),
        )
        assert codes(validate(net)) == ["unbounded-source"]


class TestCompose:
    def two_place_net(self, name, pid, initial=0):
        return HybridNet(
            name,
            places=(place(pid, "continuous", initial),),
            transitions=(continuous_transition("T", 1),),
            arcs=(arc(pid, "T"),),
        )

    def test_identity_composition_prefixes_ids(self):
        n = self.two_place_net("a", "P", 2)
        out = compose([n], [])
        assert {p.id for p in out.places} == {"a.P"}
        assert {t.id for t in out.transitions} == {"a.T"}
        assert out.arcs[0].source == "a.P"

    def test_fused_place_sums_initials(self):
        a = self.two_place_net("a", "P", 2)
        b = self.two_place_net("b", "P", 3)
        out = compose([a, b], [("a", "P", "b", "P")])
        fused = out.place("P")
        assert fused.initial == 5
        assert len(out.places) == 1
        assert len(out.transitions) == 2

    def test_fuse_requires_matching_kinds(self):
        a = HybridNet("a", places=(place("P", "continuous"),))
        b = HybridNet("b", places=(place("P", "discrete"),))
        with pytest.raises(FusionKindMismatch):
            compose([a, b], [("a", "P", "b", "P")])

    def test_fuse_unknown_id(self):
        a = HybridNet("a", places=(place("P", "continuous"),))
        with pytest.raises(UnknownId):
            compose([a, a.__class__("b")], [("a", "P", "b", "Q")])

    def test_two_relay_nets_chained_at_boundary(self, relay):
        from dataclasses import replace

        up = replace(relay, name="up")
        down = replace(relay, name="down")
        # upstream's delivery store feeds downstream's outbound pool
        out = compose([up, down], [("up", "P4", "down", "P5")])
        result = validate(out)
        assert result.ok, [str(v) for v in result.violations]
        fused = out.place("P4")
        assert fused.initial == F(1000)  # 0 + downstream pool
        # seven node-capacity/destination places survive distinctly
        names = {p.id for p in out.places}
        assert {"up.P1", "up.P2", "up.P3", "down.P1", "down.P2", "down.P3", "down.P4"} <= names

    def test_validates_after_fusion_of_policy_places(self, relay):
        from dataclasses import replace

        up = replace(relay, name="up")
        down = replace(relay, name="down")
        out = compose([up, down], [("up", "P4", "down", "P5")])
        # the fused place inherits downstream's conflict policy
        pol = out.policy_for("P4")
        assert pol is not None
        assert [t for t in pol.order] == ["down.T4", "down.T5", "down.T6"]


class TestMarking:
    def test_initial_marking_matches_declarations(self, relay):
        m = initial_marking(relay)
        assert m["P5"] == 1000
        assert m["A4"] == 1
        assert m["P4"] == 0
