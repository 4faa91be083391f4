"""Synthetic categorical rosters drawn from the linkage model itself.

Latent individuals get field values from per-field categorical
distributions; each appears on files according to a sampled overlap pattern;
each record cell is independently distorted (redrawn from the same
distribution) with a fixed probability. Ground truth and the distortion
flags are returned alongside the data so error rates can be scored exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import FieldSchema, GroundTruth, RecordTable


def nltcs_like_schema(n_birth_years: int = 100, n_regions: int = 50,
                      n_offices: int = 30) -> list[FieldSchema]:
    """Demographic-survey-shaped schema: sex plus three wider fields."""
    return [
        FieldSchema("sex", 2),
        FieldSchema("birth_year", n_birth_years),
        FieldSchema("region", n_regions),
        FieldSchema("office", n_offices),
    ]


def proportions_from_counts(counts: dict) -> dict:
    """Turn raw pattern counts into proportions summing to 1."""
    total = float(sum(counts.values()))
    if total <= 0:
        raise ValueError("counts must sum to something positive")
    return {pattern: c / total for pattern, c in counts.items()}


# Three-wave overlap shaped like longitudinal survey panels: keys give
# records per file for one individual, values are proportions.
DEFAULT_THREE_WAVE_WEIGHTS = proportions_from_counts({
    (1, 0, 0): 7955,
    (0, 1, 0): 2959,
    (0, 0, 1): 7572,
    (1, 1, 0): 4464,
    (1, 0, 1): 3929,
    (0, 1, 1): 1511,
    (1, 1, 1): 6114,
})


@dataclass
class SimulatedDataset:
    table: RecordTable
    truth: GroundTruth
    distorted: np.ndarray      # (n_records, p) flags, aligned with table rows
    latents: np.ndarray        # (n_entities, p) true field values
    theta: list[np.ndarray]    # per-field distribution the data was drawn from

    @property
    def n_entities(self) -> int:
        return int(self.latents.shape[0])


def _normalize_weights(pattern_weights) -> tuple[list[tuple[int, ...]], np.ndarray, int]:
    patterns = list(pattern_weights)
    if not patterns:
        raise ValueError("pattern_weights is empty")
    k = len(patterns[0])
    weights = np.array([float(pattern_weights[p]) for p in patterns])
    for p in patterns:
        if len(p) != k:
            raise ValueError("pattern tuples must share one length")
        if any(c < 0 for c in p) or sum(p) == 0:
            raise ValueError(f"bad pattern {p}: counts must be >= 0, not all 0")
    if np.any(weights < 0):
        raise ValueError("pattern weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("pattern weights must sum to 1; see proportions_from_counts")
    return patterns, weights / weights.sum(), k


def simulate_dataset(fields: list[FieldSchema], pattern_weights: dict,
                     n_entities: int, distortion: float, rng,
                     theta: list[np.ndarray] | None = None,
                     mu: float = 1.0) -> SimulatedDataset:
    """Draw a synthetic multi-file dataset from the model.

    pattern_weights maps per-file record-count tuples to proportions (counts
    above 1 create within-file duplicates). distortion is the per-cell
    redraw probability. theta defaults to one Dirichlet(mu) draw per field.
    """
    if not 0 <= distortion < 1:
        raise ValueError("distortion must be in [0, 1)")
    if n_entities < 1:
        raise ValueError("n_entities must be at least 1")
    patterns, weights, k = _normalize_weights(pattern_weights)
    p = len(fields)
    if theta is None:
        theta = [rng.dirichlet(np.full(f.levels, mu)) for f in fields]
    theta = [np.asarray(t, dtype=float) for t in theta]
    for f, t in zip(fields, theta):
        if t.shape != (f.levels,):
            raise ValueError(f"theta for {f.name} has wrong length")

    latents = np.column_stack([
        rng.choice(f.levels, size=n_entities, p=t)
        for f, t in zip(fields, theta)
    ]).astype(np.int32)
    which = rng.choice(len(patterns), size=n_entities, p=weights)

    per_file_codes = [[] for _ in range(k)]
    per_file_truth = [[] for _ in range(k)]
    for e in range(n_entities):
        for i, copies in enumerate(patterns[which[e]]):
            for _ in range(copies):
                per_file_codes[i].append(latents[e])
                per_file_truth[i].append(e)

    blocks = []
    truth_ids = []
    file_sizes = []
    for i in range(k):
        rows = np.asarray(per_file_codes[i], dtype=np.int32).reshape(-1, p)
        ids = np.asarray(per_file_truth[i], dtype=np.int64)
        order = rng.permutation(rows.shape[0])
        blocks.append(rows[order])
        truth_ids.append(ids[order])
        file_sizes.append(rows.shape[0])

    codes = np.concatenate(blocks, axis=0) if blocks else np.empty((0, p), np.int32)
    n = codes.shape[0]
    distorted = rng.random((n, p)) < distortion
    if distorted.any():
        for l, (f, t) in enumerate(zip(fields, theta)):
            hit = distorted[:, l]
            codes[hit, l] = rng.choice(f.levels, size=int(hit.sum()), p=t)

    table = RecordTable(fields, file_sizes, codes)
    truth = GroundTruth(np.concatenate(truth_ids))
    return SimulatedDataset(table, truth, distorted, latents, theta)
