"""Record tables: categorical data spread over multiple files."""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np


@dataclass(frozen=True)
class FieldSchema:
    """One categorical field: a name and the number of category levels."""

    name: str
    levels: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"field {self.name!r} needs at least one level")
        if self.labels is not None and len(self.labels) != self.levels:
            raise ValueError(f"field {self.name!r}: {len(self.labels)} labels for {self.levels} levels")


class RecordTable:
    """Records from k files stacked into one coded array.

    Rows are global record indices: file 0's records first, then file 1's,
    and so on. ``codes[g, l]`` is the 0-based category code of record g in
    field l. A table may be structural (``codes is None``) when only the
    file layout is known, e.g. when reloading a sample trace.
    """

    def __init__(self, fields: list[FieldSchema], file_sizes: list[int],
                 codes: np.ndarray | None):
        self.fields = list(fields)
        self.file_sizes = [int(s) for s in file_sizes]
        if any(s < 0 for s in self.file_sizes):
            raise ValueError("negative file size")
        self.n_files = len(self.file_sizes)
        self.n_records = int(sum(self.file_sizes))
        self.p = len(self.fields)
        self.offsets = np.concatenate([[0], np.cumsum(self.file_sizes)]).astype(np.int64)
        self.file_of = np.repeat(np.arange(self.n_files, dtype=np.int32), self.file_sizes)
        if codes is None:
            self.codes = None
        else:
            codes = np.asarray(codes)
            if codes.shape != (self.n_records, self.p):
                raise ValueError(f"codes shape {codes.shape} != ({self.n_records}, {self.p})")
            self.codes = codes.astype(np.int32, copy=True)
            for l, f in enumerate(self.fields):
                col = self.codes[:, l]
                if col.size and (col.min() < 0 or col.max() >= f.levels):
                    raise ValueError(f"field {f.name!r}: code out of range [0, {f.levels})")

    @property
    def has_codes(self) -> bool:
        return self.codes is not None

    @property
    def code_rows(self) -> list:
        """codes as a list of plain-int rows; cached for scalar-heavy loops."""
        if getattr(self, "_code_rows", None) is None:
            self._code_rows = self.codes.tolist()
        return self._code_rows

    @property
    def file_of_list(self) -> list:
        """file_of as a plain-int list; cached for scalar-heavy loops."""
        if getattr(self, "_file_of_list", None) is None:
            self._file_of_list = self.file_of.tolist()
        return self._file_of_list

    @property
    def levels(self) -> list[int]:
        return [f.levels for f in self.fields]

    # Field-concatenated layout: level m of field l sits at position
    # level_offsets[l] + m of a vector of length total_levels. The sweep
    # kernels work in this layout so their numpy call count stays flat in p.

    @property
    def level_sizes(self) -> np.ndarray:
        if getattr(self, "_level_sizes", None) is None:
            self._level_sizes = np.array([f.levels for f in self.fields], dtype=np.int64)
        return self._level_sizes

    @property
    def level_offsets(self) -> np.ndarray:
        if getattr(self, "_level_offsets", None) is None:
            self._level_offsets = np.concatenate(
                [[0], np.cumsum(self.level_sizes)[:-1]]).astype(np.int64)
        return self._level_offsets

    @property
    def level_bounds(self) -> list[tuple[int, int]]:
        """Per-field (start, end) slice bounds into the concatenated layout."""
        if getattr(self, "_level_bounds", None) is None:
            off = self.level_offsets.tolist()
            self._level_bounds = [(o, o + f.levels) for o, f in zip(off, self.fields)]
        return self._level_bounds

    @property
    def total_levels(self) -> int:
        return int(self.level_sizes.sum())

    @property
    def field_index_row(self) -> np.ndarray:
        if getattr(self, "_field_index_row", None) is None:
            self._field_index_row = np.arange(self.p, dtype=np.int64)
        return self._field_index_row

    @property
    def level_ends(self) -> np.ndarray:
        """Concatenated-layout position of each field's last level."""
        if getattr(self, "_level_ends", None) is None:
            self._level_ends = self.level_offsets + self.level_sizes - 1
        return self._level_ends

    @property
    def field_of_level(self) -> np.ndarray:
        """Owning field index per concatenated-layout position."""
        if getattr(self, "_field_of_level", None) is None:
            self._field_of_level = np.repeat(self.field_index_row, self.level_sizes)
        return self._field_of_level

    @property
    def codes_flat(self) -> np.ndarray:
        """codes raveled to int64, row-major over (record, field)."""
        if getattr(self, "_codes_flat", None) is None:
            self._codes_flat = self.codes.ravel().astype(np.int64)
        return self._codes_flat

    @property
    def codes_offset(self) -> np.ndarray:
        """codes shifted into the concatenated layout: codes + level_offsets."""
        if getattr(self, "_codes_offset", None) is None:
            self._codes_offset = self.codes.astype(np.int64) + self.level_offsets
        return self._codes_offset

    @classmethod
    def from_file_arrays(cls, fields: list[FieldSchema], per_file: list[np.ndarray]) -> "RecordTable":
        """Build from one (n_i, p) code array per file."""
        sizes = [int(np.asarray(a).shape[0]) for a in per_file]
        if sizes and sum(sizes):
            codes = np.vstack([np.asarray(a).reshape(s, len(fields)) for a, s in zip(per_file, sizes)])
        else:
            codes = np.zeros((0, len(fields)), dtype=np.int32)
        return cls(fields, sizes, codes)

    def index(self, file: int, record: int) -> int:
        """Global row index of record ``record`` in file ``file`` (both 0-based)."""
        if not 0 <= file < self.n_files:
            raise IndexError(f"file {file} out of range")
        if not 0 <= record < self.file_sizes[file]:
            raise IndexError(f"record {record} out of range for file {file}")
        return int(self.offsets[file] + record)

    def coords(self, g: int) -> tuple[int, int]:
        """Inverse of :meth:`index`."""
        g = int(g)
        if not 0 <= g < self.n_records:
            raise IndexError(f"record {g} out of range")
        f = int(np.searchsorted(self.offsets, g, side="right") - 1)
        return f, int(g - self.offsets[f])

    def file_slice(self, file: int) -> slice:
        return slice(int(self.offsets[file]), int(self.offsets[file + 1]))

    def subset(self, records: np.ndarray) -> tuple["RecordTable", np.ndarray]:
        """Sub-table over the given global record ids (any order).

        Returns the sub-table plus the id array reordered to the sub-table's
        row order (grouped by file, original order within a file).
        """
        records = np.asarray(records, dtype=np.int64)
        order = np.argsort(records, kind="stable")  # global order groups by file
        ids = records[order]
        sizes = np.bincount(self.file_of[ids], minlength=self.n_files).tolist()
        codes = None if self.codes is None else self.codes[ids]
        return RecordTable(self.fields, sizes, codes), ids

    def __repr__(self):
        return f"RecordTable(files={self.file_sizes}, fields={[f.name for f in self.fields]})"


@dataclass
class GroundTruth:
    """True entity id per global record; -1 marks records with unknown truth."""

    ids: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)

    @property
    def known(self) -> np.ndarray:
        return self.ids >= 0

    @property
    def n_entities(self) -> int:
        return int(np.unique(self.ids[self.known]).size)

    def clusters(self) -> dict[int, np.ndarray]:
        """Map entity id -> global record ids, known records only."""
        out: dict[int, list[int]] = {}
        for g, e in enumerate(self.ids):
            if e >= 0:
                out.setdefault(int(e), []).append(g)
        return {e: np.asarray(v, dtype=np.int64) for e, v in out.items()}
