"""Graph and JSON report export for posterior linkage results.

Both exporters are pure functions of their inputs: keys are sorted, floats
are written with Python's repr, and nothing environmental (timestamps,
hostnames, paths) is embedded, so identical runs yield identical bytes.
File indices in exported documents are 1-based and record indices 0-based,
matching the "file.record" node labels.
"""
from __future__ import annotations

import json
import math

import numpy as np

from . import __version__
from .analysis import (
    confusion_matrix,
    mpmms_assignments,
    pairwise_match_prob,
    population_size_posterior,
    shared_mpmms_estimate,
    subgroup_counts,
)
from .sampler import PosteriorSampleSet

REPORT_FORMAT = "latentlink-report"
REPORT_VERSION = 1


def record_label(table, g: int) -> str:
    """Display label "file.record", 1-based file and 0-based record."""
    f, r = table.coords(g)
    return f"{f + 1}.{r}"


def _truth_ids(truth, n: int):
    if truth is None:
        return None
    ids = np.asarray(truth.ids if hasattr(truth, "ids") else truth, dtype=np.int64)
    if ids.shape != (n,):
        raise ValueError("truth length does not match the records")
    return ids


def to_dot(samples: PosteriorSampleSet, threshold: float = 0.8,
           truth=None, name: str = "linkage") -> str:
    """Shared-MPMMS partition as an undirected DOT graph.

    One node per record; each cluster of the unthresholded shared-MPMMS
    partition becomes a clique. Edges are colored green when the cluster's
    posterior probability reaches ``threshold`` and red below it. With
    ground truth, edges the truth confirms are solid and edges it
    contradicts are dashed; an endpoint with unknown truth cannot
    contradict, so its edges stay solid.
    """
    table = samples.table
    est = shared_mpmms_estimate(samples, None)
    ids = _truth_ids(truth, table.n_records)
    lines = [f'graph "{name}" {{', "  node [shape=circle];"]
    for g in range(table.n_records):
        lines.append(f'  "{record_label(table, g)}";')
    for members, prob in zip(est.clusters, est.probabilities):
        color = "green" if prob >= threshold else "red"
        group = sorted(members)
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                a, b = group[i], group[j]
                attrs = f"color={color}"
                if ids is not None:
                    wrong = ids[a] >= 0 and ids[b] >= 0 and ids[a] != ids[b]
                    attrs += ", style=dashed" if wrong else ", style=solid"
                lines.append(f'  "{record_label(table, a)}" -- '
                             f'"{record_label(table, b)}" [{attrs}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _finite_or_none(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def _matrix(mat: np.ndarray, allow_nonfinite: bool) -> list:
    if allow_nonfinite:
        return [[_finite_or_none(x) for x in row] for row in np.asarray(mat)]
    return [[float(x) for x in row] for row in np.asarray(mat)]


def confusion_dict(cm) -> dict:
    """JSON-ready view of a file-pattern confusion matrix; non-finite
    log-relative entries become null, file indices 1-based."""
    return {
        "patterns": [[i + 1 for i in sorted(fs)] for fs in cm.patterns],
        "raw": _matrix(cm.raw, False),
        "normalized": _matrix(cm.normalized, False),
        "log_relative": _matrix(cm.log_relative, True),
        "excluded_records": cm.excluded_records,
    }


def build_report(samples: PosteriorSampleSet, threshold: float | None = None,
                 truth=None, queries=(), config_hash: str | None = None) -> dict:
    """Assemble the JSON analysis report as a plain dict.

    Sections: match-probability queries (pairs of records, global id or
    (file, record)), the per-record MPMMS table, the posterior of the number
    of latent entities, mean latent counts per file-presence subgroup, and,
    when truth is given, the file-pattern confusion matrix. Non-finite
    log-relative entries become null.
    """
    table = samples.table
    n = table.n_records
    k = table.n_files

    query_rows = []
    for rec_a, rec_b in queries:
        a = rec_a if isinstance(rec_a, (int, np.integer)) else table.index(*rec_a)
        b = rec_b if isinstance(rec_b, (int, np.integer)) else table.index(*rec_b)
        query_rows.append({
            "a": record_label(table, int(a)),
            "b": record_label(table, int(b)),
            "probability": pairwise_match_prob(samples, int(a), int(b)),
        })

    assignments = mpmms_assignments(samples)
    mpmms_rows = [{
        "record": record_label(table, g),
        "set": [record_label(table, m) for m in assignments[g].sorted_records()],
        "probability": assignments[g].probability,
    } for g in range(n)]

    pop = population_size_posterior(samples)

    subgroup_rows = []
    for mask in range(1, (1 << k)):
        files_in = [i for i in range(k) if mask >> i & 1]
        files_out = [i for i in range(k) if not mask >> i & 1]
        subgroup_rows.append({
            "files": [i + 1 for i in files_in],
            "mean_count": subgroup_counts(samples, files_in, files_out),
        })

    confusion = None
    if truth is not None:
        confusion = confusion_dict(confusion_matrix(samples, truth))

    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "package_version": __version__,
        "config_hash": config_hash,
        "seed": samples.meta.get("seed"),
        "mode": samples.mode,
        "n_records": n,
        "n_samples": samples.n_samples,
        "threshold": threshold,
        "match_queries": query_rows,
        "mpmms": mpmms_rows,
        "population_size": {
            "mean": pop.mean,
            "median": pop.median,
            "mode": pop.mode,
            "se": pop.se,
            "distribution": {str(v): p for v, p in sorted(pop.distribution.items())},
        },
        "subgroups": subgroup_rows,
        "confusion": confusion,
    }


def render_report(report: dict) -> str:
    # allow_nan=False: every non-finite value must have been mapped to null
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_report(report))
