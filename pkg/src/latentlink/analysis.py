"""Posterior summaries of stored assignment draws.

Matching sets are frozensets of global record ids. "MPMMS" below is the most
probable maximal matching set of a record: the cluster containing it that
appears most often across stored sweeps, ties broken toward the larger set
and then lexicographically smaller member tuple.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampler import PosteriorSampleSet


def _gid(samples: PosteriorSampleSet, rec) -> int:
    if isinstance(rec, (int, np.integer)):
        return int(rec)
    f, r = rec
    return samples.table.index(int(f), int(r))


def pairwise_match_prob(samples: PosteriorSampleSet, rec_a, rec_b) -> float:
    """Fraction of stored sweeps in which the two records share a latent."""
    u, v = _gid(samples, rec_a), _gid(samples, rec_b)
    return float(np.mean(samples.lams[:, u] == samples.lams[:, v]))


def _cluster_counts(samples: PosteriorSampleSet):
    """Counter of clusters over all stored sweeps, with interned frozensets."""
    counts: dict[frozenset, int] = {}
    for s in range(samples.n_samples):
        for members in samples.clusters(s):
            fs = frozenset(int(g) for g in members)
            counts[fs] = counts.get(fs, 0) + 1
    return counts


@dataclass(frozen=True)
class MatchingSet:
    records: frozenset[int]
    probability: float

    def sorted_records(self) -> tuple[int, ...]:
        return tuple(sorted(self.records))


def mms_probability(samples: PosteriorSampleSet, records) -> float:
    """Posterior probability that the given records form exactly one latent's
    record set: no member missing, no outsider included."""
    ids = sorted({_gid(samples, r) for r in records})
    if not ids:
        raise ValueError("need at least one record")
    ids_arr = np.asarray(ids)
    hits = 0
    for s in range(samples.n_samples):
        row = samples.lams[s]
        j = row[ids_arr[0]]
        if np.all(row[ids_arr] == j) and int((row == j).sum()) == len(ids):
            hits += 1
    return hits / samples.n_samples


def _best_cluster_per_record(samples: PosteriorSampleSet):
    counts = _cluster_counts(samples)
    best: dict[int, tuple] = {}
    for fs, c in counts.items():
        key = (c, len(fs), tuple(sorted(fs)))
        for g in fs:
            inc = best.get(g)
            if inc is None or _cluster_key_better(key, inc):
                best[g] = key
    return best, counts


def _cluster_key_better(cand: tuple, inc: tuple) -> bool:
    if cand[0] != inc[0]:
        return cand[0] > inc[0]
    if cand[1] != inc[1]:
        return cand[1] > inc[1]
    return cand[2] < inc[2]


def mpmms_assignments(samples: PosteriorSampleSet) -> dict[int, MatchingSet]:
    """The MPMMS table: each record's most probable maximal matching set."""
    best, _ = _best_cluster_per_record(samples)
    s_total = samples.n_samples
    return {g: MatchingSet(frozenset(best[g][2]), best[g][0] / s_total)
            for g in range(samples.n_records)}


def most_probable_mms(samples: PosteriorSampleSet, rec) -> MatchingSet:
    g = _gid(samples, rec)
    best, _ = _best_cluster_per_record(samples)
    c, _, members = best[g]
    return MatchingSet(frozenset(members), c / samples.n_samples)


@dataclass
class LinkageEstimate:
    """A point estimate: a partition of all records plus per-group support."""

    clusters: list[frozenset[int]]
    probabilities: list[float]
    threshold: float | None
    n_records: int

    def __post_init__(self):
        seen: set[int] = set()
        for fs in self.clusters:
            if seen & fs:
                raise ValueError("clusters overlap")
            seen |= fs
        if seen != set(range(self.n_records)):
            raise ValueError("clusters do not cover the records")

    def assignment(self) -> np.ndarray:
        out = np.empty(self.n_records, dtype=np.int64)
        for ci, fs in enumerate(self.clusters):
            for g in fs:
                out[g] = ci
        return out

    def linked_pairs(self) -> set[tuple[int, int]]:
        pairs = set()
        for fs in self.clusters:
            ids = sorted(fs)
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    pairs.add((ids[i], ids[j]))
        return pairs

    @classmethod
    def from_assignment(cls, labels: np.ndarray, probabilities=None,
                        threshold=None) -> "LinkageEstimate":
        labels = np.asarray(labels)
        groups: dict[int, list[int]] = {}
        for g, j in enumerate(labels):
            groups.setdefault(int(j), []).append(g)
        clusters = [frozenset(v) for _, v in sorted(groups.items())]
        probs = list(probabilities) if probabilities is not None else [1.0] * len(clusters)
        return cls(clusters, probs, threshold, labels.size)


def estimate_from_mpmms(assignments: dict[int, MatchingSet],
                        threshold: float | None = None) -> LinkageEstimate:
    """Partition from a precomputed MPMMS table; see shared_mpmms_estimate."""
    n = len(assignments)
    groups: dict[tuple, list[int]] = {}
    probs_by_key: dict[tuple, float] = {}
    for g in range(n):
        ms = assignments[g]
        if threshold is not None and ms.probability < threshold:
            key = ("single", g)
        else:
            key = ("set", ms.sorted_records())
        groups.setdefault(key, []).append(g)
        probs_by_key[key] = ms.probability
    clusters = []
    probs = []
    for key in sorted(groups, key=lambda k: min(groups[k])):
        clusters.append(frozenset(groups[key]))
        probs.append(probs_by_key[key])
    return LinkageEstimate(clusters, probs, threshold, n)


def shared_mpmms_estimate(samples: PosteriorSampleSet,
                          threshold: float | None = None) -> LinkageEstimate:
    """Link records exactly when they have identical MPMMS (and, when a
    threshold is given, its probability reaches it). Grouping by an identical
    set is transitive, so the result is always a partition; records whose
    MPMMS falls below the threshold stay single, keeping their sub-threshold
    probability as the reported support."""
    return estimate_from_mpmms(mpmms_assignments(samples), threshold)


@dataclass
class PopulationSizePosterior:
    values: np.ndarray
    mean: float
    median: float
    mode: int
    se: float
    distribution: dict[int, float]


def population_size_posterior(samples: PosteriorSampleSet) -> PopulationSizePosterior:
    """Posterior of the number of distinct latents backing the records."""
    values = samples.population_sizes()
    uniq, counts = np.unique(values, return_counts=True)
    mode = int(uniq[np.argmax(counts)])
    dist = {int(u): float(c) / values.size for u, c in zip(uniq, counts)}
    return PopulationSizePosterior(
        values=values,
        mean=float(values.mean()),
        median=float(np.median(values)),
        mode=mode,
        se=float(values.std(ddof=1)) if values.size > 1 else 0.0,
        distribution=dist,
    )


def _file_count_matrix(samples: PosteriorSampleSet, s: int) -> np.ndarray:
    """Records per (latent, file) in stored sweep s."""
    n = samples.n_records
    k = samples.table.n_files
    m = np.zeros((n, k), dtype=np.int32)
    np.add.at(m, (samples.lams[s], samples.table.file_of), 1)
    return m


def subgroup_counts(samples: PosteriorSampleSet, files_in, files_out,
                    exactly_one: bool | None = None) -> float:
    """Mean number of latents present in every ``files_in`` file and absent
    from every ``files_out`` file. ``exactly_one`` requires exactly one record
    per in-file; it defaults to True in duplicate-free mode and False
    otherwise."""
    if exactly_one is None:
        exactly_one = samples.mode == "smere"
    files_in = [int(i) for i in files_in]
    files_out = [int(i) for i in files_out]
    total = 0.0
    for s in range(samples.n_samples):
        m = _file_count_matrix(samples, s)
        cond = m.sum(axis=1) > 0
        for i in files_in:
            cond &= (m[:, i] == 1) if exactly_one else (m[:, i] >= 1)
        for i in files_out:
            cond &= m[:, i] == 0
        total += int(cond.sum())
    return total / samples.n_samples


def kway_match_profile(samples: PosteriorSampleSet) -> dict[frozenset[int], float]:
    """Mean number of latents per file-presence pattern."""
    k = samples.table.n_files
    weights = 1 << np.arange(k)
    acc: dict[int, float] = {}
    for s in range(samples.n_samples):
        m = _file_count_matrix(samples, s)
        masks = (m > 0) @ weights
        masks = masks[m.sum(axis=1) > 0]
        for mask, c in zip(*np.unique(masks, return_counts=True)):
            acc[int(mask)] = acc.get(int(mask), 0.0) + float(c)
    out = {}
    for mask, total in sorted(acc.items()):
        files = frozenset(i for i in range(k) if mask >> i & 1)
        out[files] = total / samples.n_samples
    return out


def coreference_matrix(lam: np.ndarray) -> np.ndarray:
    """Boolean matrix: records share a latent (diagonal true)."""
    lam = np.asarray(lam)
    return lam[:, None] == lam[None, :]


def partition_from_coreference(delta: np.ndarray) -> np.ndarray:
    """Labels (smallest member id per group) from a coreference matrix."""
    delta = np.asarray(delta, dtype=bool)
    n = delta.shape[0]
    if delta.shape != (n, n) or not np.array_equal(delta, delta.T) or not np.all(np.diag(delta)):
        raise ValueError("not a coreference matrix")
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = int(np.flatnonzero(delta[i])[0])
    return labels


@dataclass
class ConfusionMatrix:
    """Estimated vs true file-presence pattern, averaged over stored sweeps.

    Row r, column c holds the mean number of records whose estimated latent
    shows pattern r while the record's true entity shows pattern c. Patterns
    enumerate the non-empty file subsets in bitmask order."""

    patterns: list[frozenset[int]]
    raw: np.ndarray
    normalized: np.ndarray
    log_relative: np.ndarray
    excluded_records: int


def confusion_matrix(samples: PosteriorSampleSet, truth) -> ConfusionMatrix:
    k = samples.table.n_files
    n = samples.n_records
    npat = (1 << k) - 1
    weights = 1 << np.arange(k)
    ids = np.asarray(truth.ids if hasattr(truth, "ids") else truth, dtype=np.int64)
    if ids.shape != (n,):
        raise ValueError("truth length does not match the records")
    known = ids >= 0
    excluded = int((~known).sum())
    # true pattern per record
    true_mask = np.zeros(n, dtype=np.int64)
    if known.any():
        ent = np.zeros((int(ids.max()) + 1, k), dtype=np.int64)
        np.add.at(ent, (ids[known], samples.table.file_of[known]), 1)
        true_mask[known] = ((ent > 0) @ weights)[ids[known]]
    conf = np.zeros((npat, npat), dtype=float)
    for s in range(samples.n_samples):
        m = _file_count_matrix(samples, s)
        est_mask = ((m > 0) @ weights)[samples.lams[s]]
        np.add.at(conf, (est_mask[known] - 1, true_mask[known] - 1), 1.0)
    conf /= samples.n_samples
    rows = conf.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(rows > 0, conf / np.where(rows > 0, rows, 1.0), 0.0)
        log_relative = np.where(normalized > 0, np.log(normalized), -np.inf)
    patterns = [frozenset(i for i in range(k) if mask >> i & 1)
                for mask in range(1, npat + 1)]
    return ConfusionMatrix(patterns, conf, normalized, log_relative, excluded)
