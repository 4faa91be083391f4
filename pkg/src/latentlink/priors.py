"""Partition prior induced by uniform assignment into a latent population.

Dropping n records uniformly at random into m latent slots makes every
labeled assignment equally likely, so a partition with k occupied slots has
prior mass m!/((m-k)! m^n). These helpers evaluate that prior, the induced
distribution of the number of distinct latents, its mean, and the inverse
problem of picking m to hit a desired prior mean. Everything runs in log
space so record counts in the thousands stay finite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PartitionPriorSpec:
    """Record count and latent-population size; m defaults to n_records."""

    n_records: int
    m: int | None = None

    def __post_init__(self):
        if self.n_records < 1:
            raise ValueError("n_records must be at least 1")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def population(self) -> int:
        return self.n_records if self.m is None else self.m


def log_partition_prior(spec: PartitionPriorSpec, partition_size: int) -> float:
    """Log prior of any particular partition with the given number of groups."""
    n, m = spec.n_records, spec.population
    k = int(partition_size)
    if not 1 <= k <= n:
        raise ValueError("partition size must be in 1..n_records")
    if k > m:
        return NEG_INF
    return float(gammaln(m + 1) - gammaln(m - k + 1) - n * np.log(m))


def log_stirling2_row(n: int) -> np.ndarray:
    """log S(n, k) for k = 0..n (second kind), via the row recurrence."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    row = np.full(n + 1, NEG_INF)
    row[0] = 0.0
    for i in range(1, n + 1):
        new = np.full(n + 1, NEG_INF)
        ks = np.arange(1, i + 1)
        new[1:i + 1] = np.logaddexp(np.log(ks) + row[1:i + 1], row[0:i])
        row = new
    return row


def prior_cardinality_distribution(spec: PartitionPriorSpec) -> np.ndarray:
    """pmf of the number of distinct latents; entry i is P(k = i + 1).

    Combines the count of partitions with k groups (Stirling numbers) with
    the per-partition prior. Returned unnormalized on purpose: summing to 1
    cross-checks the construction.
    """
    n, m = spec.n_records, spec.population
    if n > 2000:
        raise ValueError("n_records above 2000 not supported")
    log_s = log_stirling2_row(n)
    kmax = min(n, m)
    ks = np.arange(1, kmax + 1)
    log_p = (log_s[1:kmax + 1]
             + gammaln(m + 1) - gammaln(m - ks + 1) - n * np.log(m))
    return np.exp(log_p)


def prior_mean_cardinality(spec: PartitionPriorSpec, exact: bool = True) -> float:
    """Prior mean number of distinct latents.

    Exact: m (1 - ((m-1)/m)^n). Approximate: m (1 - exp(-n/m)).
    """
    n, m = spec.n_records, spec.population
    if m == 1:
        return 1.0
    if exact:
        return float(-m * np.expm1(n * np.log1p(-1.0 / m)))
    return float(-m * np.expm1(-n / m))


def solve_m_for_target_mean(n_records: int, target_mean: float,
                            tolerance: float = 1e-9) -> int:
    """Smallest population size m whose exact prior mean reaches
    target_mean - tolerance. The mean increases in m and approaches
    n_records only in the limit, so targets above n_records (or exactly
    at it with zero tolerance) are infeasible."""
    if n_records < 1:
        raise ValueError("n_records must be at least 1")
    if not 1 <= target_mean <= n_records:
        raise ValueError("target mean must be in [1, n_records]")
    if target_mean == n_records and tolerance <= 0:
        raise ValueError("mean equals n_records only in the limit m -> inf")
    goal = target_mean - tolerance

    def mean(m):
        return prior_mean_cardinality(PartitionPriorSpec(n_records, m))

    lo, hi = 1, 1
    while mean(hi) < goal:
        lo, hi = hi, hi * 2
    while lo < hi:
        mid = (lo + hi) // 2
        if mean(mid) >= goal:
            hi = mid
        else:
            lo = mid + 1
    return lo
