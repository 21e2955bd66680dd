"""Decision loop: speed-ordered start, demotion chain, selection rules."""

from dataclasses import replace
from fractions import Fraction

import pytest

from hpndss.dss import (
    EXHAUSTIVE,
    AnalysisReport,
    AnalysisRequest,
    analyze,
    initial_configuration,
    next_configurations,
    report_doc,
    resolved_policies,
)
from hpndss.sample import relay_net, study_scenario
from hpndss.simulate import OutcomeKind, simulate

from conftest import ordered_study

F = Fraction


def order_at(cfg, place, net=None, scenario=None):
    """Effective priority order at a place under cfg (overrides + base)."""
    source = cfg.policies
    if net is not None:
        source = resolved_policies(net, scenario, cfg).values()
    for pol in source:
        if pol.place == place:
            return list(pol.order)
    return None


class TestInitialConfiguration:
    def test_fastest_transfer_first(self, relay, study):
        cfg = initial_configuration(relay, study)
        assert order_at(cfg, "P5", relay, study) == ["T4", "T5", "T6"]  # speeds 3 > 2 = 2
        assert order_at(cfg, "P1", relay, study) == ["T15", "T4", "T5", "T6", "T16"]

    def test_slower_head_gets_reordered(self, relay, study):
        sc = study
        sc.max_speeds.update({"T4": F(1), "T5": F(3), "T6": F(2)})
        cfg = initial_configuration(relay, sc)
        assert order_at(cfg, "P5", relay, sc) == ["T5", "T6", "T4"]
        assert order_at(cfg, "P1", relay, sc) == ["T15", "T5", "T6", "T4", "T16"]

    def test_equal_speeds_fall_back_to_lexicographic(self, relay, study):
        sc = study
        sc.max_speeds.update({"T4": F(2), "T5": F(2), "T6": F(2)})
        cfg = initial_configuration(relay, sc)
        assert order_at(cfg, "P5", relay, sc) == ["T4", "T5", "T6"]

    def test_absorbers_stay_below(self, relay, study):
        cfg = initial_configuration(relay, study)
        order = order_at(cfg, "P1", relay, study)
        assert order[0] == "T15" and order[-1] == "T16"


class TestNextConfigurations:
    def report(self, *attempts):
        return AnalysisReport("s", F(500), tuple(attempts))

    def test_accumulating_buffer_demotes_its_feeder(self):
        trace = simulate(None, ordered_study("T4", "T5", "T6"))
        out = next_configurations(self.report(), trace)
        assert len(out) == 1
        cfg = out[0]
        assert cfg.provenance.kind == "demotion" and cfg.provenance.of == "T4"
        assert order_at(cfg, "P1") == ["T15", "T5", "T4", "T6", "T16"]
        assert order_at(cfg, "P5") == ["T5", "T4", "T6"]

    def test_second_demotion_reaches_the_bottom_rank(self):
        trace = simulate(None, ordered_study("T5", "T4", "T6"))
        out = next_configurations(self.report(), trace)
        assert len(out) == 1
        assert order_at(out[0], "P1") == ["T15", "T5", "T6", "T4", "T16"]
        assert order_at(out[0], "P5") == ["T5", "T6", "T4"]

    def test_quiet_trace_yields_nothing(self):
        trace = simulate(None, ordered_study("T5", "T6", "T4"))
        assert next_configurations(self.report(), trace) == []

    def test_route_expansion_marks_a_down_link(self, study):
        sc = study.with_overrides(marking={"A4": 0})
        sc = replace(sc, optional_routes=("A4",), deadline=F(100))
        trace = simulate(None, sc)
        assert trace.outcome.time > sc.deadline
        out = next_configurations(self.report(), trace)
        assert [c.provenance.kind for c in out] == ["routeExpansion"]
        assert out[0].marking["A4"] == 1


class TestAnalyze:
    def test_deadline_500_selects_single_demotion(self):
        report = analyze(AnalysisRequest(study_scenario(500)))
        kinds = [(a.configuration.id, a.outcome.time) for a in report.attempts]
        assert kinds[0] == ("initial", F(6000, 7))
        assert report.attempts[0].outcome.time > F(500)  # recorded as a miss
        assert report.selected is report.attempts[1].configuration
        assert report.attempts[1].outcome.time == F(3000, 7)
        assert report.stopped_because == "firstHit"

    def test_deadline_300_needs_two_demotions(self):
        report = analyze(AnalysisRequest(study_scenario(300)))
        assert [a.outcome.time for a in report.attempts] == [
            F(6000, 7),
            F(3000, 7),
            F(2000, 7),
        ]
        assert report.selected is report.attempts[2].configuration
        assert order_at(report.selected, "P5") == ["T5", "T6", "T4"]

    def test_deadline_100_exhausts(self):
        report = analyze(AnalysisRequest(study_scenario(100)))
        assert report.selected is None
        assert report.stopped_because == "exhausted"
        times = [a.outcome.time for a in report.attempts]
        assert all(t > 100 for t in times)

    def test_exhaustive_minimum_matches_best_heuristic(self):
        report = analyze(AnalysisRequest(study_scenario(100), mode=EXHAUSTIVE))
        times = [a.outcome.time for a in report.attempts if a.outcome.delivered]
        assert min(times) == F(2000, 7)
        assert report.selected is None

    def test_heuristic_attempts_subset_of_exhaustive(self):
        heuristic = analyze(AnalysisRequest(study_scenario(100)))
        exhaustive = analyze(AnalysisRequest(study_scenario(100), mode=EXHAUSTIVE))
        hkeys = {a.configuration.key() for a in heuristic.attempts}
        ekeys = {a.configuration.key() for a in exhaustive.attempts}
        assert hkeys <= ekeys

    def test_speed_ordered_start_is_not_optimal_here(self):
        # the whole point of the search: the greedy initial ordering loses
        report = analyze(AnalysisRequest(study_scenario(100)))
        assert report.attempts[0].outcome.time == F(6000, 7)
        assert min(a.outcome.time for a in report.attempts) == F(2000, 7)

    def test_selection_soundness_by_resimulation(self):
        report = analyze(AnalysisRequest(study_scenario(500)))
        sc = study_scenario(500).with_overrides(
            policies=report.selected.policies, marking=report.selected.marking
        )
        again = simulate(None, sc)
        assert again.outcome.delivered and again.outcome.time <= F(500)

    def test_attempt_order_is_deterministic(self):
        a = analyze(AnalysisRequest(study_scenario(100)))
        b = analyze(AnalysisRequest(study_scenario(100)))
        assert [x.configuration.id for x in a.attempts] == [
            x.configuration.id for x in b.attempts
        ]

    def test_budget_stop(self):
        report = analyze(AnalysisRequest(study_scenario(300), max_configurations=1))
        assert len(report.attempts) == 1
        assert report.stopped_because == "budget"

    def test_report_document_selection_invariant(self):
        report = analyze(AnalysisRequest(study_scenario(500)))
        doc = report_doc(report)
        hits = [
            a["configuration"]["id"]
            for a in doc["attempts"]
            if a["outcome"]["kind"] == "delivered" and a.get("withinDeadline")
        ]
        assert doc["selected"]["id"] == hits[0]
        assert doc["stoppedBecause"] == "firstHit"
