"""Deterministic blocking: records are grouped by exact agreement on chosen fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import RecordTable


@dataclass
class BlockPartition:
    """Disjoint record groups; the sampler never links across groups."""

    field_names: tuple[str, ...]
    keys: list[tuple]
    records: list[np.ndarray]     # global record ids per block, ascending

    @property
    def n_blocks(self) -> int:
        return len(self.keys)

    def block_of(self, n_records: int) -> np.ndarray:
        out = np.full(n_records, -1, dtype=np.int32)
        for bi, recs in enumerate(self.records):
            out[recs] = bi
        return out


def build_blocks(table: RecordTable, fields) -> BlockPartition:
    """Partition records by their codes in the named (or indexed) fields.

    Block order follows sorted key tuples, so the layout is reproducible
    across runs regardless of record order.
    """
    if not table.has_codes:
        raise ValueError("blocking needs record codes")
    idx = []
    names = []
    by_name = {f.name: l for l, f in enumerate(table.fields)}
    for f in fields:
        l = by_name[f] if isinstance(f, str) else int(f)
        if not 0 <= l < table.p:
            raise ValueError(f"field index {l} out of range")
        idx.append(l)
        names.append(table.fields[l].name)
    if not idx:
        raise ValueError("need at least one blocking field")
    cols = table.codes[:, idx]
    uniq, inverse = np.unique(cols, axis=0, return_inverse=True)
    keys = [tuple(int(v) for v in row) for row in uniq]
    records = [np.flatnonzero(inverse == bi).astype(np.int64) for bi in range(len(keys))]
    return BlockPartition(tuple(names), keys, records)


def single_block(table: RecordTable) -> BlockPartition:
    return BlockPartition((), [()], [np.arange(table.n_records, dtype=np.int64)])
