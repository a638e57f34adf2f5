"""Metric arithmetic on hand-built windows, plus report/CSV layout."""

from fractions import Fraction
from io import StringIO

import pytest

from flowcap.controlplane import FlowSample, FlowTruth, OracleClassifier, predict_labels
from flowcap.errors import EmptyWindowError, NoMaliciousFlowsError
from flowcap.metrics import (
    aggregate,
    collected_flows,
    quality,
    sfnr,
    window_report,
    write_aggregate_csv,
    write_window_csv,
)


def flow(n, c, label=0):
    return FlowTruth(packets=n, label=label, collected=c)


def key(i):
    return (i, 1, 2, 3, 6)


class TestCollectedFlows:
    def test_all_collected_is_one(self):
        truth = {key(i): flow(5, 1) for i in range(10)}
        assert collected_flows(truth) == 1.0

    def test_exact_fraction(self):
        truth = {key(i): flow(3, 1 if i < 3 else 0) for i in range(8)}
        assert collected_flows(truth) == pytest.approx(3 / 8)

    def test_half_percent_loss_case(self):
        truth = {key(i): flow(2, 0 if i < 40 else 1) for i in range(8000)}
        assert collected_flows(truth) == pytest.approx(0.995)

    def test_empty_window_raises(self):
        with pytest.raises(EmptyWindowError):
            collected_flows({})


class TestQuality:
    def test_short_flow_fully_collected(self):
        assert quality({key(0): flow(2, 2)}, p=4) == 1.0

    def test_long_flow_one_packet(self):
        assert quality({key(0): flow(10, 1)}, p=4) == pytest.approx(0.25)

    def test_overfull_flow_clamps_to_one(self):
        assert quality({key(0): flow(10, 10)}, p=4) == 1.0

    def test_mixed_window_exact_fraction(self):
        truth = {
            key(0): flow(2, 2),    # l=2, score 1
            key(1): flow(10, 1),   # l=4, score 1/4
            key(2): flow(6, 0),    # l=4, score 0
            key(3): flow(3, 2),    # l=3, score 2/3
        }
        expected = Fraction(1) + Fraction(1, 4) + Fraction(0) + Fraction(2, 3)
        assert quality(truth, p=4) == pytest.approx(float(expected / 4))

    def test_validates_inputs(self):
        with pytest.raises(EmptyWindowError):
            quality({}, p=4)
        with pytest.raises(ValueError, match="p must be"):
            quality({key(0): flow(1, 1)}, p=0)


class TestSfnr:
    def test_perfect_classifier_counts_only_uncollected(self):
        truth = {key(i): flow(4, 0 if i < 2 else 2, label=1) for i in range(10)}
        preds = {key(i): 1 for i in range(2, 10)}
        assert sfnr(truth, preds) == pytest.approx(0.2)

    def test_zero_when_everything_works(self):
        truth = {key(i): flow(4, 2, label=1) for i in range(5)}
        preds = {key(i): 1 for i in range(5)}
        assert sfnr(truth, preds) == 0.0

    def test_misclassified_and_uncollected_add_up(self):
        # 10 malicious: 2 uncollected, 3 of the 8 collected mislabeled
        truth = {key(i): flow(4, 0 if i < 2 else 1, label=1) for i in range(10)}
        preds = {key(i): (0 if i < 5 else 1) for i in range(2, 10)}
        assert sfnr(truth, preds) == pytest.approx((3 + 2) / 10)

    def test_alternative_denominator_splits_terms(self):
        truth = {key(i): flow(4, 0 if i < 2 else 1, label=1) for i in range(10)}
        preds = {key(i): (0 if i < 5 else 1) for i in range(2, 10)}
        # classifier term 3/8 over collected, uncollected term 2/10
        expected = 3 / 8 + 2 / 10
        assert sfnr(truth, preds, fnr_denominator="collected_malicious") == pytest.approx(expected)

    def test_alternative_denominator_with_nothing_collected(self):
        truth = {key(0): flow(4, 0, label=1)}
        assert sfnr(truth, {}, fnr_denominator="collected_malicious") == 1.0

    def test_benign_flows_do_not_enter_the_rate(self):
        truth = {key(0): flow(4, 1, label=1), key(1): flow(4, 1, label=0)}
        preds = {key(0): 1, key(1): 0}
        assert sfnr(truth, preds) == 0.0

    def test_error_cases(self):
        benign_only = {key(0): flow(4, 1, label=0)}
        with pytest.raises(NoMaliciousFlowsError):
            sfnr(benign_only, {})
        collected_mal = {key(0): flow(4, 1, label=1)}
        with pytest.raises(ValueError, match="predictions missing"):
            sfnr(collected_mal, {})
        with pytest.raises(ValueError, match="fnr_denominator"):
            sfnr(collected_mal, {key(0): 1}, fnr_denominator="bogus")

    def test_injected_fnr_matches_binomial_expectation(self):
        # 1000 collected malicious flows, oracle mislabels at rate 0.1
        truth = {key(i): flow(4, 2, label=1) for i in range(1000)}
        labels = {k: 1 for k in truth}
        samples = [FlowSample(key=k, matrix=None, packet_count=4) for k in truth]
        rates = []
        for seed in range(20):
            clf = OracleClassifier(labels.get, injected_fnr=0.1, seed=seed)
            preds = predict_labels(clf, samples)
            rates.append(sfnr(truth, preds))
        mean_rate = sum(rates) / len(rates)
        # binomial(1000, 0.1)/1000 averaged over 20 seeds: sigma ~ 0.002
        assert mean_rate == pytest.approx(0.1, abs=0.01)


class TestMonotonicity:
    def test_adding_a_collected_packet_never_hurts(self):
        base = {
            key(0): flow(5, 0, label=1),
            key(1): flow(3, 1, label=1),
            key(2): flow(2, 1, label=0),
        }
        preds = {k: 1 for k in base}
        for target in base:
            bumped = {k: FlowTruth(t.packets, t.label, t.collected + (k == target))
                      for k, t in base.items()}
            assert collected_flows(bumped) >= collected_flows(base)
            assert quality(bumped, 4) >= quality(base, 4)
            assert sfnr(bumped, preds) <= sfnr(base, preds)


class TestReports:
    def window(self):
        truth = {
            key(0): flow(4, 2, label=1),
            key(1): flow(4, 0, label=1),
            key(2): flow(2, 1, label=0),
            key(3): flow(8, 0, label=0),
        }
        preds = {key(0): 0, key(2): 1}
        return truth, preds

    def test_window_report_counts(self):
        truth, preds = self.window()
        rep = window_report(3, truth, preds, p=4)
        assert rep.window_index == 3
        assert (rep.total_flows, rep.malicious_flows, rep.benign_flows) == (4, 2, 2)
        assert (rep.collected_malicious, rep.misclassified_malicious,
                rep.uncollected_malicious) == (1, 1, 1)
        assert rep.collected_malicious + rep.uncollected_malicious == rep.malicious_flows
        assert rep.collected_flows_pct == pytest.approx(50.0)
        assert rep.quality_pct == pytest.approx(100 * (0.5 + 0 + 0.5 + 0) / 4)
        assert rep.sfnr == pytest.approx(1.0)

    def test_benign_only_window_reports_without_sfnr(self):
        truth = {key(0): flow(2, 1, label=0)}
        rep = window_report(0, truth, {}, p=4)
        assert rep.sfnr is None
        assert rep.malicious_flows == 0

    def test_window_csv_layout(self):
        truth, preds = self.window()
        rep = window_report(3, truth, preds, p=4)
        out = StringIO()
        write_window_csv([rep], out)
        header, line = out.getvalue().strip().split("\n")
        assert header == ("window_index,collected_flows_pct,quality_pct,sfnr,"
                          "total_flows,malicious_flows,benign_flows,collected_malicious,"
                          "misclassified_malicious,uncollected_malicious")
        assert line == "3,50.0,25.0,1.0000,4,2,2,1,1,1"

    def test_aggregate_and_csv(self):
        truth, preds = self.window()
        reports = [window_report(i, truth, preds, p=4) for i in range(3)]
        reports.append(window_report(3, {key(0): flow(2, 1, label=0)}, {}, p=4))
        summary = aggregate(reports)
        assert summary["windows"] == 4
        assert summary["collected_flows_pct_mean"] == pytest.approx((50 * 3 + 100) / 4)
        assert summary["sfnr_mean"] == pytest.approx(1.0)  # benign-only window excluded
        out = StringIO()
        write_aggregate_csv(summary, out)
        header, line = out.getvalue().strip().split("\n")
        assert header.startswith("windows,collected_flows_pct_mean")
        assert line.split(",")[0] == "4"
        with pytest.raises(EmptyWindowError):
            aggregate([])
