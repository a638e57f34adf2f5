"""Window-level evaluation metrics over finalized ground truth.

All functions are pure: they take the per-window ground truth (observed
packet count n, collected packet count c, label per flow) after collection
has filled in c, and return plain rates. Percentages are only rounded when
written to CSV; raw doubles are kept internally.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from .controlplane import FlowTruth
from .errors import EmptyWindowError, NoMaliciousFlowsError

FNR_DENOMINATORS = ("all_malicious", "collected_malicious")

WINDOW_CSV_COLUMNS = (
    "window_index", "collected_flows_pct", "quality_pct", "sfnr",
    "total_flows", "malicious_flows", "benign_flows", "collected_malicious",
    "misclassified_malicious", "uncollected_malicious",
)

AGGREGATE_CSV_COLUMNS = (
    "windows", "collected_flows_pct_mean", "collected_flows_pct_std",
    "quality_pct_mean", "quality_pct_std", "sfnr_mean", "sfnr_std",
)


def collected_flows(truth: dict) -> float:
    """Fraction of observed flows with at least one stored packet."""
    if not truth:
        raise EmptyWindowError("no flows observed in this window")
    return sum(1 for t in truth.values() if t.collected >= 1) / len(truth)


def quality(truth: dict, p: int) -> float:
    """Mean per-flow completeness min(c, l)/l with l = min(n, p).

    Unfiltered runs can overwrite a flow's own rows, so c may exceed l;
    per-flow scores are clamped at 1.
    """
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if not truth:
        raise EmptyWindowError("no flows observed in this window")
    total = 0.0
    for t in truth.values():
        l = min(t.packets, p)
        total += min(t.collected, l) / l
    return total / len(truth)


def sfnr(truth: dict, predictions: dict, *,
         fnr_denominator: str = "all_malicious") -> float:
    """Fraction of malicious flows that slip through the system.

    A malicious flow is missed either because the classifier mislabels its
    sample or because none of its packets were stored. With the default
    denominator both terms are counted over all malicious flows, keeping the
    result a true rate in [0, 1]; "collected_malicious" instead computes the
    classifier term over collected malicious flows only and adds the
    uncollected rate, so it can exceed 1.
    """
    if fnr_denominator not in FNR_DENOMINATORS:
        raise ValueError(f"fnr_denominator must be one of {FNR_DENOMINATORS}")
    malicious = {key: t for key, t in truth.items() if t.label == 1}
    if not malicious:
        raise NoMaliciousFlowsError("window has no malicious flows")
    collected = [key for key, t in malicious.items() if t.collected >= 1]
    missing = [key for key in collected if key not in predictions]
    if missing:
        raise ValueError(f"predictions missing for {len(missing)} collected malicious flows")
    misclassified = sum(1 for key in collected if predictions[key] == 0)
    uncollected = len(malicious) - len(collected)
    if fnr_denominator == "all_malicious":
        return (misclassified + uncollected) / len(malicious)
    classifier_term = misclassified / len(collected) if collected else 0.0
    return classifier_term + uncollected / len(malicious)


@dataclass
class WindowReport:
    """One window's metric values plus the counts behind them."""

    window_index: int
    collected_flows_pct: float
    quality_pct: float
    sfnr: float | None
    total_flows: int
    malicious_flows: int
    benign_flows: int
    collected_malicious: int
    misclassified_malicious: int
    uncollected_malicious: int


def window_report(window_index: int, truth: dict, predictions: dict, p: int, *,
                  fnr_denominator: str = "all_malicious") -> WindowReport:
    """Bundle all three metrics and their counts for one window.

    Windows without malicious flows get sfnr=None rather than an error so
    benign-only stretches of a trace still produce rows.
    """
    malicious = {key: t for key, t in truth.items() if t.label == 1}
    collected_mal = [key for key, t in malicious.items() if t.collected >= 1]
    misclassified = sum(1 for key in collected_mal if predictions.get(key) == 0)
    rate = None
    if malicious:
        rate = sfnr(truth, predictions, fnr_denominator=fnr_denominator)
    return WindowReport(
        window_index=window_index,
        collected_flows_pct=100.0 * collected_flows(truth),
        quality_pct=100.0 * quality(truth, p),
        sfnr=rate,
        total_flows=len(truth),
        malicious_flows=len(malicious),
        benign_flows=len(truth) - len(malicious),
        collected_malicious=len(collected_mal),
        misclassified_malicious=misclassified,
        uncollected_malicious=len(malicious) - len(collected_mal),
    )


def write_window_csv(reports: list[WindowReport], fh) -> None:
    """Per-window CSV; percentages to one decimal, sfnr to four."""
    fh.write(",".join(WINDOW_CSV_COLUMNS) + "\n")
    for r in reports:
        fields = (
            str(r.window_index),
            f"{r.collected_flows_pct:.1f}",
            f"{r.quality_pct:.1f}",
            "" if r.sfnr is None else f"{r.sfnr:.4f}",
            str(r.total_flows), str(r.malicious_flows), str(r.benign_flows),
            str(r.collected_malicious), str(r.misclassified_malicious),
            str(r.uncollected_malicious),
        )
        fh.write(",".join(fields) + "\n")


def aggregate(reports: list[WindowReport]) -> dict:
    """Mean and std of each metric across windows (sfnr over windows that have one)."""
    if not reports:
        raise EmptyWindowError("no window reports to aggregate")

    def mean_std(values):
        if not values:
            return None, None
        return statistics.fmean(values), statistics.pstdev(values)

    cf_mean, cf_std = mean_std([r.collected_flows_pct for r in reports])
    q_mean, q_std = mean_std([r.quality_pct for r in reports])
    s_mean, s_std = mean_std([r.sfnr for r in reports if r.sfnr is not None])
    return {
        "windows": len(reports),
        "collected_flows_pct_mean": cf_mean, "collected_flows_pct_std": cf_std,
        "quality_pct_mean": q_mean, "quality_pct_std": q_std,
        "sfnr_mean": s_mean, "sfnr_std": s_std,
    }


def write_aggregate_csv(summary: dict, fh) -> None:
    fh.write(",".join(AGGREGATE_CSV_COLUMNS) + "\n")
    fields = []
    for column in AGGREGATE_CSV_COLUMNS:
        value = summary[column]
        if value is None:
            fields.append("")
        elif column == "windows":
            fields.append(str(value))
        elif column.startswith("sfnr"):
            fields.append(f"{value:.4f}")
        else:
            fields.append(f"{value:.1f}")
    fh.write(",".join(fields) + "\n")
