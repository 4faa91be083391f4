"""Pairwise error metrics, naive baselines, and threshold sweeps.

All counting is over unordered record pairs. The false-link rate uses the
total number of ground-truth links as its denominator, matching the
true-link rate; a promiscuous linker can therefore score well above 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import LinkageEstimate, estimate_from_mpmms, mpmms_assignments
from .schema import GroundTruth, RecordTable
from .sampler import PosteriorSampleSet


def _pairs_in(n: int) -> int:
    return n * (n - 1) // 2


@dataclass(frozen=True)
class ErrorReport:
    true_links: int        # correctly found pairs
    false_links: int
    missing_links: int
    fnr: float
    fpr: float

    @property
    def total_true_links(self) -> int:
        return self.true_links + self.missing_links

    @classmethod
    def from_counts(cls, true_links: int, false_links: int,
                    missing_links: int) -> "ErrorReport":
        total = true_links + missing_links
        fnr = missing_links / total if total else 0.0
        fpr = false_links / total if total else 0.0
        return cls(true_links, false_links, missing_links, fnr, fpr)


def _truth_ids(truth) -> np.ndarray:
    ids = np.asarray(truth.ids if hasattr(truth, "ids") else truth, dtype=np.int64)
    if np.any(ids < 0):
        raise ValueError("ground truth must cover every record")
    return ids


def error_report(estimate, truth) -> ErrorReport:
    """Score an estimate against ground truth.

    estimate may be a LinkageEstimate, a label array (one latent label per
    record), or an iterable of record-id pairs (not necessarily transitive).
    """
    ids = _truth_ids(truth)
    _, truth_counts = np.unique(ids, return_counts=True)
    total = int(sum(_pairs_in(int(c)) for c in truth_counts))

    if isinstance(estimate, LinkageEstimate):
        labels = estimate.assignment()
    elif isinstance(estimate, np.ndarray):
        labels = estimate
    else:
        found = 0
        false = 0
        for u, v in estimate:
            if u == v:
                raise ValueError("a record cannot pair with itself")
            if ids[u] == ids[v]:
                found += 1
            else:
                false += 1
        return ErrorReport.from_counts(found, false, total - found)

    labels = np.asarray(labels)
    if labels.shape != ids.shape:
        raise ValueError("estimate length does not match the records")
    joint: dict[tuple[int, int], int] = {}
    est_counts: dict[int, int] = {}
    for j, e in zip(labels.tolist(), ids.tolist()):
        joint[(j, e)] = joint.get((j, e), 0) + 1
        est_counts[j] = est_counts.get(j, 0) + 1
    found = sum(_pairs_in(c) for c in joint.values())
    est_total = sum(_pairs_in(c) for c in est_counts.values())
    return ErrorReport.from_counts(found, est_total - found, total - found)


def exact_match_baseline(table: RecordTable) -> set[tuple[int, int]]:
    """Link two records exactly when all their fields agree (transitive)."""
    _, inverse = np.unique(table.codes, axis=0, return_inverse=True)
    inverse = inverse.ravel()  # shape differs across numpy versions
    pairs = set()
    for v in np.unique(inverse):
        members = np.flatnonzero(inverse == v)
        for i in range(members.size):
            for j in range(i + 1, members.size):
                pairs.add((int(members[i]), int(members[j])))
    return pairs


def near_twins_baseline(table: RecordTable) -> set[tuple[int, int]]:
    """Link pairs agreeing on all fields or all but one. Deliberately no
    transitive closure: the output is a pair set, not a partition."""
    codes = table.codes
    n, p = codes.shape
    pairs = set()
    for i in range(n - 1):
        agree = (codes[i + 1:] == codes[i]).sum(axis=1)
        for off in np.flatnonzero(agree >= p - 1):
            pairs.add((i, int(i + 1 + off)))
    return pairs


def matched_fraction(estimate: LinkageEstimate, truth) -> float:
    """Fraction of true entities whose full record set is recovered exactly
    as one estimated cluster (single-record entities included)."""
    ids = _truth_ids(truth)
    truth_sets = set()
    order = np.argsort(ids, kind="stable")
    bounds = np.flatnonzero(np.diff(ids[order])) + 1
    for members in np.split(order, bounds):
        truth_sets.add(frozenset(int(g) for g in members))
    est_sets = set(estimate.clusters)
    return len(truth_sets & est_sets) / len(truth_sets)


def roc_sweep(samples: PosteriorSampleSet, truth,
              thresholds) -> list[tuple[float, float, float]]:
    """(threshold, FNR, FPR) per threshold, from one MPMMS computation."""
    thresholds = [float(v) for v in thresholds]
    if thresholds != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    assignments = mpmms_assignments(samples)
    out = []
    for v in thresholds:
        est = estimate_from_mpmms(assignments, threshold=v)
        rep = error_report(est, truth)
        out.append((v, rep.fnr, rep.fpr))
    return out
