"""DOT and JSON report export checks on the three-roster fixture.

Edges are parsed back out of the DOT text and the recovered components are
compared against the shared-MPMMS partition; report bytes are checked for
determinism and for the advertised sections.
"""
import json
import re

import numpy as np
import pytest

from latentlink.analysis import pairwise_match_prob, shared_mpmms_estimate
from latentlink.export import build_report, record_label, render_report, to_dot
from latentlink.sampler import PosteriorSampleSet

from fixtures import TRUE_LAM, three_roster_table, three_roster_truth

EDGE_RE = re.compile(r'"(\d+\.\d+)" -- "(\d+\.\d+)" \[([^\]]*)\]')
NODE_RE = re.compile(r'^  "(\d+\.\d+)";$', re.MULTILINE)


def make_samples(table, rows, mode="smered"):
    lams = np.asarray(rows, dtype=np.int64)
    return PosteriorSampleSet(
        lams=lams,
        iterations=np.arange(lams.shape[0]),
        table=table,
        mode=mode,
        meta={"mode": mode, "seed": 7},
        block_of=np.zeros(table.n_records, dtype=np.int32),
    )


@pytest.fixture
def table():
    return three_roster_table()


@pytest.fixture
def samples(table):
    # {4,9} holds in two of four sweeps; every other cluster always holds
    split = list(TRUE_LAM)
    split[9] = 9
    return make_samples(table, [TRUE_LAM, TRUE_LAM, split, split])


def parse_partition(dot: str, table):
    """Connected components of the DOT edges, singletons included."""
    label_to_g = {record_label(table, g): g for g in range(table.n_records)}
    adj = {g: set() for g in range(table.n_records)}
    for a, b, _ in EDGE_RE.findall(dot):
        u, v = label_to_g[a], label_to_g[b]
        adj[u].add(v)
        adj[v].add(u)
    seen = set()
    parts = set()
    for g in range(table.n_records):
        if g in seen:
            continue
        stack, comp = [g], set()
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(adj[u] - comp)
        seen |= comp
        parts.add(frozenset(comp))
    return parts


def test_dot_has_one_labeled_node_per_record(table, samples):
    dot = to_dot(samples)
    labels = NODE_RE.findall(dot)
    assert len(labels) == table.n_records
    assert labels == [record_label(table, g) for g in range(table.n_records)]
    assert labels[0] == "1.0" and labels[9] == "3.3"


def test_dot_cliques_recover_shared_mpmms_partition(table, samples):
    est = shared_mpmms_estimate(samples, None)
    dot = to_dot(samples)
    assert parse_partition(dot, table) == set(est.clusters)
    # cliques, not just connected: every within-cluster pair gets an edge
    n_pairs = sum(len(fs) * (len(fs) - 1) // 2 for fs in est.clusters)
    assert len(EDGE_RE.findall(dot)) == n_pairs


def test_dot_edge_color_tracks_threshold(table, samples):
    by_pair = {frozenset((a, b)): attrs
               for a, b, attrs in EDGE_RE.findall(to_dot(samples, threshold=0.8))}
    assert "color=red" in by_pair[frozenset((record_label(table, 4),
                                             record_label(table, 9)))]
    greens = [attrs for attrs in by_pair.values() if "color=green" in attrs]
    assert len(greens) == len(by_pair) - 1
    assert all("color=green" in attrs for _, _, attrs in
               EDGE_RE.findall(to_dot(samples, threshold=0.0)))
    assert all("color=red" in attrs for _, _, attrs in
               EDGE_RE.findall(to_dot(samples, threshold=1.01)))


def test_dot_style_requires_truth(samples):
    assert "style" not in to_dot(samples)
    styled = to_dot(samples, truth=three_roster_truth())
    assert all("style=solid" in attrs for _, _, attrs in EDGE_RE.findall(styled))


def test_dot_truth_disagreement_is_dashed(table):
    wrong = list(TRUE_LAM)
    wrong[1] = 0  # record 1 joins {0,6,7} against the truth
    samples = make_samples(table, [wrong] * 3)
    dot = to_dot(samples, truth=three_roster_truth())
    styles = {frozenset((a, b)): attrs for a, b, attrs in EDGE_RE.findall(dot)}
    lbl = lambda g: record_label(table, g)
    assert "style=dashed" in styles[frozenset((lbl(0), lbl(1)))]
    assert "style=dashed" in styles[frozenset((lbl(1), lbl(6)))]
    assert "style=solid" in styles[frozenset((lbl(0), lbl(6)))]


def test_dot_unknown_truth_stays_solid(table):
    wrong = list(TRUE_LAM)
    wrong[1] = 0
    samples = make_samples(table, [wrong] * 3)
    ids = np.array(TRUE_LAM, dtype=np.int64)
    ids[1] = -1
    dot = to_dot(samples, truth=ids)
    styles = {frozenset((a, b)): attrs for a, b, attrs in EDGE_RE.findall(dot)}
    lbl = lambda g: record_label(table, g)
    assert "style=solid" in styles[frozenset((lbl(0), lbl(1)))]


def test_report_sections_and_mpmms_rows(table, samples):
    report = build_report(samples, threshold=0.8,
                          queries=[(0, 6), ((0, 0), (1, 0))])
    assert report["format"] == "latentlink-report"
    assert report["n_records"] == table.n_records
    assert report["seed"] == 7
    assert len(report["mpmms"]) == table.n_records
    row0 = report["mpmms"][0]
    assert row0["record"] == "1.0"
    assert row0["set"] == ["1.0", "3.0", "3.1"]
    assert row0["probability"] == 1.0
    q0, q1 = report["match_queries"]
    assert q0 == {"a": "1.0", "b": "3.0", "probability": 1.0}
    assert q1["probability"] == pairwise_match_prob(samples, (0, 0), (1, 0))
    assert report["confusion"] is None


def test_report_population_and_subgroups(table):
    samples = make_samples(table, [TRUE_LAM] * 4)
    report = build_report(samples)
    pop = report["population_size"]
    assert pop["mean"] == 4.0 and pop["se"] == 0.0
    assert pop["distribution"] == {"4": 1.0}
    rows = {tuple(r["files"]): r["mean_count"] for r in report["subgroups"]}
    assert len(rows) == 7  # every non-empty subset of the three files
    assert rows[(1, 3)] == 1.0  # {0,6,7}
    assert rows[(1, 2)] == 1.0  # {2,5}
    assert rows[(2, 3)] == 1.0  # {4,9}
    assert rows[(1, 2, 3)] == 1.0  # {1,3,8}
    assert rows[(1,)] == rows[(2,)] == rows[(3,)] == 0.0


def test_report_confusion_with_truth(table):
    samples = make_samples(table, [TRUE_LAM] * 4)
    report = build_report(samples, truth=three_roster_truth())
    conf = report["confusion"]
    assert conf["patterns"][0] == [1] and conf["patterns"][-1] == [1, 2, 3]
    raw = np.asarray(conf["raw"])
    assert raw.sum() == table.n_records
    for i, row in enumerate(conf["normalized"]):
        for j, x in enumerate(row):
            lr = conf["log_relative"][i][j]
            assert (lr is None) == (x == 0.0)


def test_report_bytes_deterministic(table, samples):
    a = render_report(build_report(samples, threshold=0.9, queries=[(0, 7)],
                                   truth=three_roster_truth(), config_hash="c" * 8))
    split = list(TRUE_LAM)
    split[9] = 9
    again = make_samples(table, [TRUE_LAM, TRUE_LAM, split, split])
    b = render_report(build_report(again, threshold=0.9, queries=[(0, 7)],
                                   truth=three_roster_truth(), config_hash="c" * 8))
    assert a == b
    parsed = json.loads(a)  # strict JSON, no NaN or Infinity literals
    assert parsed["config_hash"] == "c" * 8
    assert to_dot(samples) == to_dot(again)
