"""Shared hand-built test instances."""
from __future__ import annotations

import numpy as np

from latentlink.schema import FieldSchema, GroundTruth, RecordTable
from latentlink.state import Hyperparameters, LinkageState

# The three-roster toy: ten records over three files describing four people.
# Only ages are ever distorted; region and sex are always copied faithfully.

REGION = ("NC", "PA", "SC", "VA")
AGE = (37, 70, 72, 73, 91, 92, 93, 94)
SEX = ("F", "M")

ROSTERS = [
    [("NC", 72, "F"), ("SC", 70, "F"), ("PA", 91, "M")],
    [("SC", 37, "F"), ("VA", 93, "M"), ("PA", 92, "M")],
    [("NC", 72, "F"), ("NC", 72, "F"), ("SC", 72, "F"), ("VA", 94, "M")],
]

TRUE_PEOPLE = [("NC", 72, "F"), ("SC", 73, "F"), ("PA", 91, "M"), ("VA", 94, "M")]

# latent id per record, global row order (file 0 rows, then 1, then 2)
TRUE_LAM = [0, 1, 2, 1, 3, 2, 0, 0, 1, 3]

# distortion flags, same row order, fields (region, age, sex)
TRUE_Z = [
    [0, 0, 0], [0, 1, 0], [0, 0, 0],
    [0, 1, 0], [0, 1, 0], [0, 1, 0],
    [0, 0, 0], [0, 0, 0], [0, 1, 0], [0, 0, 0],
]

# the five distorted cells, as (file, record, field) with field 1 = age
DISTORTED_CELLS = [(0, 1, 1), (1, 0, 1), (1, 1, 1), (1, 2, 1), (2, 2, 1)]


def encode(rec):
    return (REGION.index(rec[0]), AGE.index(rec[1]), SEX.index(rec[2]))


def three_roster_table() -> RecordTable:
    fields = [
        FieldSchema("region", len(REGION), REGION),
        FieldSchema("age", len(AGE), tuple(str(v) for v in AGE)),
        FieldSchema("sex", len(SEX), SEX),
    ]
    per_file = [np.array([encode(r) for r in roster]) for roster in ROSTERS]
    return RecordTable.from_file_arrays(fields, per_file)


def three_roster_state(theta=None, beta=None) -> LinkageState:
    table = three_roster_table()
    n = table.n_records
    y = np.zeros((n, table.p), dtype=np.int32)
    for j, person in enumerate(TRUE_PEOPLE):
        y[j] = encode(person)
    if theta is None:
        theta = [np.full(f.levels, 1.0 / f.levels) for f in table.fields]
    if beta is None:
        beta = np.array([0.05, 0.2, 0.05])
    return LinkageState(table, lam=np.array(TRUE_LAM), y=y,
                        z=np.array(TRUE_Z, dtype=np.int8), theta=theta, beta=beta)


def three_roster_truth() -> GroundTruth:
    return GroundTruth(np.array(TRUE_LAM, dtype=np.int64))


def three_roster_hp(**kw) -> Hyperparameters:
    return Hyperparameters.default(three_roster_table(), **kw)


def random_valid_state(rng, n_files=(2, 3), sizes=(1, 4), p_range=(1, 3),
                       levels_range=(2, 4), sentinel_prob=0.0):
    """Random table plus a random state satisfying the copy constraint."""
    k = int(rng.integers(n_files[0], n_files[1] + 1))
    fsizes = [int(rng.integers(sizes[0], sizes[1] + 1)) for _ in range(k)]
    p = int(rng.integers(p_range[0], p_range[1] + 1))
    fields = [FieldSchema(f"f{l}", int(rng.integers(levels_range[0], levels_range[1] + 1)))
              for l in range(p)]
    n = sum(fsizes)
    codes = np.column_stack([rng.integers(0, f.levels, size=n) for f in fields])
    lam = rng.integers(0, n, size=n)
    y = np.column_stack([rng.integers(0, f.levels, size=n) for f in fields]).astype(np.int32)
    sentinel = rng.random(p) < sentinel_prob
    beta = np.where(sentinel, 0.0, rng.uniform(0.05, 0.95, size=p))
    z = np.zeros((n, p), dtype=np.int8)
    for l in range(p):
        if sentinel[l]:
            # zero distortion: records must copy the latent values
            codes[:, l] = y[lam, l]
        else:
            mismatch = codes[:, l] != y[lam, l]
            z[:, l] = mismatch | (rng.random(n) < 0.4)
    theta = [rng.dirichlet(np.full(f.levels, 2.0)) for f in fields]
    a = rng.uniform(0.5, 3.0, size=p)
    b = np.where(sentinel, np.inf, rng.uniform(0.5, 20.0, size=p))
    mu = [rng.uniform(0.5, 3.0, size=f.levels) for f in fields]
    hp = Hyperparameters(a=a, b=b, mu=mu)
    table = RecordTable(fields, fsizes, codes)
    state = LinkageState(table, lam=lam, y=y, z=z, theta=theta, beta=beta)
    return table, state, hp
