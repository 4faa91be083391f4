"""Posterior-summary checks against hand-enumerated values.

The three-roster fixture's true assignment has four latents:
{0,6,7} (files 0,2; within-file duplicate), {1,3,8} (all files),
{2,5} (files 0,1) and {4,9} (files 1,2).
"""
import numpy as np
import pytest

from latentlink.analysis import (
    LinkageEstimate,
    confusion_matrix,
    coreference_matrix,
    kway_match_profile,
    mms_probability,
    most_probable_mms,
    pairwise_match_prob,
    partition_from_coreference,
    population_size_posterior,
    shared_mpmms_estimate,
    subgroup_counts,
)
from latentlink.sampler import PosteriorSampleSet

from fixtures import TRUE_LAM, three_roster_table, three_roster_truth


def make_samples(table, rows, mode="smered"):
    lams = np.asarray(rows, dtype=np.int64)
    return PosteriorSampleSet(
        lams=lams,
        iterations=np.arange(lams.shape[0]),
        table=table,
        mode=mode,
        meta={"mode": mode},
        block_of=np.zeros(table.n_records, dtype=np.int32),
    )


@pytest.fixture
def truth_samples():
    table = three_roster_table()
    return make_samples(table, [TRUE_LAM] * 4)


def test_pairwise_match_prob_accepts_ids_and_coords(truth_samples):
    assert pairwise_match_prob(truth_samples, 0, 6) == 1.0
    assert pairwise_match_prob(truth_samples, (0, 0), (2, 0)) == 1.0
    assert pairwise_match_prob(truth_samples, (0, 0), (1, 0)) == 0.0


def test_pairwise_match_prob_averages_over_sweeps():
    table = three_roster_table()
    other = list(TRUE_LAM)
    other[6] = 6  # break record 6 out of {0,6,7} in one of two sweeps
    samples = make_samples(table, [TRUE_LAM, other])
    assert pairwise_match_prob(samples, 0, 6) == 0.5
    assert pairwise_match_prob(samples, 0, 7) == 1.0


def test_mms_probability_exact_set_only(truth_samples):
    assert mms_probability(truth_samples, [0, 6, 7]) == 1.0
    assert mms_probability(truth_samples, [0, 6]) == 0.0          # member missing
    assert mms_probability(truth_samples, [0, 6, 7, 1]) == 0.0    # outsider added
    assert mms_probability(truth_samples, [(0, 2), (1, 2)]) == 1.0


def test_most_probable_mms_majority():
    table = three_roster_table()
    other = list(TRUE_LAM)
    other[8] = 8
    samples = make_samples(table, [TRUE_LAM, TRUE_LAM, other])
    ms = most_probable_mms(samples, 8)
    assert ms.records == frozenset({1, 3, 8})
    assert ms.probability == pytest.approx(2 / 3)


def test_most_probable_mms_tiebreaks():
    table = three_roster_table()
    base = list(range(10))
    a = list(base)
    a[1] = 0  # {0,1}
    b = list(base)
    b[2] = 0  # {0,2}
    samples = make_samples(table, [a, b])
    # counts tie (1 each), sizes tie (2 each): smaller member tuple wins
    assert most_probable_mms(samples, 0).records == frozenset({0, 1})
    # size beats the singleton {2} which also appears once
    assert most_probable_mms(samples, 2).records == frozenset({0, 2})


def test_shared_mpmms_is_partition_and_groups_by_set(truth_samples):
    est = shared_mpmms_estimate(truth_samples)
    got = {tuple(sorted(fs)) for fs in est.clusters}
    assert got == {(0, 6, 7), (1, 3, 8), (2, 5), (4, 9)}
    assert all(p == 1.0 for p in est.probabilities)
    labels = est.assignment()
    assert labels.shape == (10,)


def test_shared_mpmms_threshold_dissolves_weak_records():
    table = three_roster_table()
    other = list(TRUE_LAM)
    other[8] = 8
    rows = [TRUE_LAM, other, other]  # {1,3,8} holds 1/3 of sweeps
    samples = make_samples(table, rows)
    est = shared_mpmms_estimate(samples, threshold=0.9)
    # {1,3} appears twice (2/3 < 0.9) so records 1,3,8 all fall below
    singles = {tuple(sorted(fs)) for fs in est.clusters if len(fs) == 1}
    assert {(1,), (3,), (8,)} <= singles
    # the stable clusters survive
    assert frozenset({0, 6, 7}) in est.clusters


def test_linkage_estimate_rejects_non_partition():
    with pytest.raises(ValueError):
        LinkageEstimate([frozenset({0, 1}), frozenset({1, 2})], [1.0, 1.0], None, 3)
    with pytest.raises(ValueError):
        LinkageEstimate([frozenset({0, 1})], [1.0], None, 3)


def test_shared_mpmms_partition_property_random_traces():
    rng = np.random.default_rng(7)
    table = three_roster_table()
    n = table.n_records
    for _ in range(40):
        rows = rng.integers(0, n, size=(6, n))
        # labels must be valid (any ints in range work for the summary)
        samples = make_samples(table, rows)
        for thr in (None, 0.3, 0.8):
            est = shared_mpmms_estimate(samples, threshold=thr)
            labels = est.assignment()
            assert labels.shape == (n,)  # __post_init__ already checked cover/disjoint


def test_population_size_posterior():
    table = three_roster_table()
    other = list(TRUE_LAM)
    other[8] = 8  # five latents in this sweep
    samples = make_samples(table, [TRUE_LAM, TRUE_LAM, other, other, other])
    post = population_size_posterior(samples)
    assert post.values.tolist() == [4, 4, 5, 5, 5]
    assert post.mean == pytest.approx(4.6)
    assert post.median == 5.0
    assert post.mode == 5
    assert post.distribution == {4: 0.4, 5: 0.6}
    assert post.se == pytest.approx(np.std([4, 4, 5, 5, 5], ddof=1))


def test_subgroup_counts_fixture_patterns(truth_samples):
    # in files 0 and 1, absent from 2: only {2,5}
    assert subgroup_counts(truth_samples, [0, 1], [2]) == 1.0
    # present in all three files: only {1,3,8}
    assert subgroup_counts(truth_samples, [0, 1, 2], []) == 1.0
    # in files 0 and 2, absent from 1: {0,6,7} counts under at-least-one...
    assert subgroup_counts(truth_samples, [0, 2], [1], exactly_one=False) == 1.0
    # ...but not under exactly-one (two records in file 2)
    assert subgroup_counts(truth_samples, [0, 2], [1], exactly_one=True) == 0.0
    # file 1 only, absent from the others: nobody
    assert subgroup_counts(truth_samples, [1], [0, 2]) == 0.0


def test_subgroup_counts_default_semantics_follows_mode(truth_samples):
    # smered default is at-least-one
    assert subgroup_counts(truth_samples, [0, 2], [1]) == 1.0
    smere_like = make_samples(three_roster_table(), [TRUE_LAM], mode="smere")
    # smere default is exactly-one, which the duplicate latent fails
    assert subgroup_counts(smere_like, [0, 2], [1]) == 0.0


def test_kway_match_profile_fixture(truth_samples):
    prof = kway_match_profile(truth_samples)
    assert prof == {
        frozenset({0, 2}): 1.0,
        frozenset({0, 1, 2}): 1.0,
        frozenset({0, 1}): 1.0,
        frozenset({1, 2}): 1.0,
    }


def test_kway_match_profile_averages():
    table = three_roster_table()
    other = list(TRUE_LAM)
    other[8] = 8  # {1,3} two-file + singleton in file 2
    samples = make_samples(table, [TRUE_LAM, other])
    prof = kway_match_profile(samples)
    assert prof[frozenset({0, 1, 2})] == 0.5
    assert prof[frozenset({2})] == 0.5
    # {2,5} shows {0,1} in both sweeps; {1,3} joins it in the second
    assert prof[frozenset({0, 1})] == 1.5


def test_coreference_round_trip_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        lam = rng.integers(0, n, size=n)
        delta = coreference_matrix(lam)
        assert delta.shape == (n, n)
        assert np.array_equal(delta, delta.T)
        assert np.all(np.diag(delta))
        labels = partition_from_coreference(delta)
        # same grouping, canonical labels (smallest member id)
        assert np.array_equal(coreference_matrix(labels), delta)
        for j in np.unique(labels):
            members = np.flatnonzero(labels == j)
            assert members.min() == j


def test_partition_from_coreference_rejects_bad_matrix():
    with pytest.raises(ValueError):
        partition_from_coreference(np.array([[True, True], [False, True]]))
    with pytest.raises(ValueError):
        partition_from_coreference(np.array([[False, False], [False, True]]))


def test_confusion_matrix_diagonal_when_estimate_matches_truth(truth_samples):
    truth = three_roster_truth()
    conf = confusion_matrix(truth_samples, truth)
    assert conf.excluded_records == 0
    assert conf.raw.sum() == pytest.approx(10.0)
    off = conf.raw - np.diag(np.diag(conf.raw))
    assert np.all(off == 0)
    # pattern index = bitmask - 1
    idx = {frozenset(p): i for i, p in enumerate(conf.patterns)}
    assert conf.raw[idx[frozenset({0, 2})], idx[frozenset({0, 2})]] == 3.0
    assert conf.raw[idx[frozenset({0, 1, 2})], idx[frozenset({0, 1, 2})]] == 3.0
    assert conf.raw[idx[frozenset({0, 1})], idx[frozenset({0, 1})]] == 2.0
    assert conf.raw[idx[frozenset({1, 2})], idx[frozenset({1, 2})]] == 2.0
    rows = conf.raw.sum(axis=1)
    live = rows > 0
    assert np.allclose(conf.normalized[live].sum(axis=1), 1.0)
    assert np.all(conf.normalized[~live] == 0)
    assert conf.log_relative[idx[frozenset({0, 1})], idx[frozenset({0, 1})]] == 0.0


def test_confusion_matrix_misassignment_and_unknown_truth():
    table = three_roster_table()
    other = list(TRUE_LAM)
    other[8] = 8  # record 8 estimated alone; {1,3} loses its file-2 presence
    truth = three_roster_truth()
    samples = make_samples(table, [TRUE_LAM, other])
    conf = confusion_matrix(samples, truth)
    idx = {frozenset(p): i for i, p in enumerate(conf.patterns)}
    all3 = idx[frozenset({0, 1, 2})]
    # second sweep: records 1,3 show pattern {0,1}, record 8 shows {2}
    assert conf.raw[idx[frozenset({0, 1})], all3] == 1.0   # 2 records / 2 sweeps
    assert conf.raw[idx[frozenset({2})], all3] == 0.5
    assert conf.raw[all3, all3] == 1.5
    # unknown truth rows are excluded and counted
    ids = truth.ids.copy()
    ids[0] = -1
    conf2 = confusion_matrix(samples, ids)
    assert conf2.excluded_records == 1
    assert conf2.raw.sum() == pytest.approx(9.0)
