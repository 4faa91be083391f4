"""Delimited-file ingestion, label dictionaries, sample traces, run configs.

File formats (all versioned):

- Record files: delimited text, one file per source list, header row naming
  the columns. Raw labels are mapped to dense 0-based codes in order of
  first appearance across all files jointly; the label dictionary is a JSON
  document that can be persisted and later frozen, so a re-ingest keeps the
  original coding and rejects labels it has never seen.
- Sample traces: one JSON object per line, ``{"iteration": g, "lam":
  [...]}``, with a ``<path>.meta.json`` sidecar carrying the schema, chain
  settings, seed and config hash. Keys are sorted and separators fixed, so
  identical runs produce byte-identical files. The trace doubles as a
  checkpoint: the last line is the restart point for ``run_chain``.
- Run config: a single human-readable JSON file bundling prior settings,
  chain settings, the ingestion spec and the output directory; its sha256
  over the canonical encoding is the config hash stamped into outputs.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .sampler import ChainConfig, PosteriorSampleSet
from .schema import FieldSchema, GroundTruth, RecordTable

SAMPLES_FORMAT = "latentlink-samples"
SAMPLES_VERSION = 1
DICTIONARY_FORMAT = "latentlink-dictionary"
DICTIONARY_VERSION = 1
CONFIG_FORMAT = "latentlink-config"
CONFIG_VERSION = 1

ENV_SEED = "LATENTLINK_SEED"
ENV_JOBS = "LATENTLINK_JOBS"

MISSING_TRUTH = ("", "-1")


class IngestionError(ValueError):
    """Unreadable or inconsistent input data; message names file and line."""


@dataclass
class IngestionSpec:
    """Where the record files live and how to read them.

    ``field_names`` None means: model every column of the first file's
    header except the truth column. ``dictionary_path`` naming an existing
    file freezes the coding to that dictionary; naming a fresh path writes
    the dictionary there after ingestion.
    """

    paths: list[str]
    delimiter: str = ","
    field_names: list[str] | None = None
    truth_column: str | None = None
    block_fields: list[str] | None = None
    dictionary_path: str | None = None

    def __post_init__(self):
        if not self.paths:
            raise ValueError("ingestion needs at least one record file")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")


def _read_rows(path: str, delimiter: str) -> tuple[list[str], list[list[str]]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}, line 1: empty file") from None
        rows = []
        width = len(header)
        for i, row in enumerate(reader, start=2):
            if len(row) != width:
                raise IngestionError(
                    f"{path}, line {i}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise IngestionError(f"{path}, line 2: no data rows")
    return header, rows


def load_dictionary(path: str) -> dict[str, list[str]]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != DICTIONARY_FORMAT:
        raise IngestionError(f"{path}: not a label dictionary file")
    return {name: list(labels) for name, labels in doc["fields"].items()}


def save_dictionary(dictionaries: dict[str, list[str]], path: str) -> None:
    doc = {"format": DICTIONARY_FORMAT, "version": DICTIONARY_VERSION,
           "fields": dictionaries}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ingest(spec: IngestionSpec) -> tuple[RecordTable, GroundTruth | None,
                                         dict[str, list[str]]]:
    """Read the record files into a coded table.

    Returns the table, the ground truth when a truth column was declared
    (entity labels coded densely, missing marked -1), and the label
    dictionary per field (position = code). Codes follow first appearance
    across all files jointly unless a frozen dictionary pins them.
    """
    frozen = None
    if spec.dictionary_path and os.path.exists(spec.dictionary_path):
        frozen = load_dictionary(spec.dictionary_path)

    per_file = [_read_rows(path, spec.delimiter) for path in spec.paths]

    first_header = per_file[0][0]
    names = list(spec.field_names) if spec.field_names is not None else [
        c for c in first_header if c != spec.truth_column]
    if not names:
        raise IngestionError(f"{spec.paths[0]}, line 1: no data columns")
    if frozen is not None:
        missing = [n for n in names if n not in frozen]
        if missing:
            raise IngestionError(
                f"{spec.dictionary_path}: dictionary lacks field {missing[0]!r}")

    wanted = names + ([spec.truth_column] if spec.truth_column else [])
    columns: list[dict[str, int]] = []
    for path, (header, _) in zip(spec.paths, per_file):
        pos = {c: i for i, c in enumerate(header)}
        for name in wanted:
            if name not in pos:
                raise IngestionError(f"{path}, line 1: unknown column {name!r}")
        columns.append(pos)

    codebook: dict[str, dict[str, int]] = {
        name: ({lab: c for c, lab in enumerate(frozen[name])} if frozen else {})
        for name in names}
    truth_codes: dict[str, int] = {}
    code_rows: list[list[int]] = []
    truth_ids: list[int] = []
    file_sizes: list[int] = []
    for path, (header, rows), pos in zip(spec.paths, per_file, columns):
        file_sizes.append(len(rows))
        idx = [pos[n] for n in names]
        tidx = pos[spec.truth_column] if spec.truth_column else None
        for i, row in enumerate(rows, start=2):
            coded = []
            for name, j in zip(names, idx):
                book = codebook[name]
                value = row[j]
                code = book.get(value)
                if code is None:
                    if frozen is not None:
                        raise IngestionError(
                            f"{path}, line {i}: unseen label {value!r} "
                            f"for field {name!r}")
                    code = book[value] = len(book)
                coded.append(code)
            code_rows.append(coded)
            if tidx is not None:
                raw = row[tidx]
                if raw in MISSING_TRUTH:
                    truth_ids.append(-1)
                else:
                    truth_ids.append(
                        truth_codes.setdefault(raw, len(truth_codes)))

    dictionaries = {}
    for name in names:
        book = codebook[name]
        labels = [None] * len(book)
        for lab, c in book.items():
            labels[c] = lab
        dictionaries[name] = labels
    fields = [FieldSchema(name, max(len(dictionaries[name]), 1),
                          labels=tuple(dictionaries[name]) or None)
              for name in names]
    codes = np.asarray(code_rows, dtype=np.int32)
    table = RecordTable(fields, file_sizes, codes)
    truth = GroundTruth(np.asarray(truth_ids, dtype=np.int64)) \
        if spec.truth_column else None

    if spec.dictionary_path and frozen is None:
        save_dictionary(dictionaries, spec.dictionary_path)
    return table, truth, dictionaries


def write_records(table: RecordTable, paths: list[str],
                  dictionaries: dict[str, list[str]] | None = None,
                  truth: GroundTruth | None = None,
                  truth_column: str = "entity_id",
                  delimiter: str = ",") -> dict[str, list[str]]:
    """Write one delimited file per source list; returns the labels used.

    Labels come from ``dictionaries``, else each field's schema labels, else
    the decimal code. Persist the returned dictionary and re-ingest with it
    frozen to get the exact same coding back.
    """
    if len(paths) != table.n_files:
        raise ValueError(f"{table.n_files} files but {len(paths)} paths")
    if table.codes is None:
        raise ValueError("table has no codes to write")
    used: dict[str, list[str]] = {}
    for l, f in enumerate(table.fields):
        if dictionaries is not None and f.name in dictionaries:
            labels = list(dictionaries[f.name])
        elif f.labels is not None:
            labels = list(f.labels)
        else:
            labels = [str(c) for c in range(f.levels)]
        if len(labels) < int(table.codes[:, l].max(initial=0)) + 1:
            raise ValueError(f"field {f.name!r}: not enough labels")
        used[f.name] = labels
    header = [f.name for f in table.fields]
    if truth is not None:
        header = header + [truth_column]
    for k, path in enumerate(paths):
        sl = table.file_slice(k)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter=delimiter)
            writer.writerow(header)
            for g in range(sl.start, sl.stop):
                row = [used[f.name][table.codes[g, l]]
                       for l, f in enumerate(table.fields)]
                if truth is not None:
                    e = int(truth.ids[g])
                    row.append("" if e < 0 else str(e))
                writer.writerow(row)
    return used


def _meta_path(path: str) -> str:
    return f"{path}.meta.json"


def save_samples(samples: PosteriorSampleSet, path: str,
                 config_hash: str | None = None) -> None:
    """Write the trace as JSON lines plus a ``.meta.json`` sidecar.

    Output bytes are a pure function of the sample set and config hash:
    keys sorted, separators fixed, no timestamps.
    """
    with open(path, "w") as fh:
        for s in range(samples.n_samples):
            fh.write(json.dumps(
                {"iteration": int(samples.iterations[s]),
                 "lam": samples.lams[s].tolist()},
                sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    meta = dict(samples.meta)
    meta.update({
        "format": SAMPLES_FORMAT,
        "version": SAMPLES_VERSION,
        "package_version": __version__,
        "config_hash": config_hash,
        "mode": samples.mode,
        "n_records": samples.n_records,
        "n_samples": samples.n_samples,
        "file_sizes": list(samples.table.file_sizes),
        "fields": [{"name": f.name, "levels": f.levels}
                   for f in samples.table.fields],
        "block_of": samples.block_of.tolist(),
    })
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_samples(path: str, table: RecordTable | None = None) -> PosteriorSampleSet:
    """Rebuild a sample set from a trace file and its sidecar.

    Without ``table`` the result carries a structural table (file layout and
    field schema, no codes): enough for every partition-level analysis.
    Parameter draws are not persisted and come back as None.
    """
    meta_path = _meta_path(path)
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise IngestionError(f"{meta_path}: {exc.strerror or exc}") from exc
    if meta.get("format") != SAMPLES_FORMAT:
        raise IngestionError(f"{meta_path}: not a sample trace sidecar")
    if int(meta.get("version", -1)) > SAMPLES_VERSION:
        raise IngestionError(f"{meta_path}: trace version {meta['version']} "
                             f"is newer than supported {SAMPLES_VERSION}")
    iterations = []
    lams = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}, line {i}: bad JSON ({exc.msg})") from None
            iterations.append(int(rec["iteration"]))
            lams.append(rec["lam"])
    if not lams:
        raise IngestionError(f"{path}, line 1: empty trace")
    lam_arr = np.asarray(lams, dtype=np.int64)
    if lam_arr.ndim != 2 or lam_arr.shape[1] != int(meta["n_records"]):
        raise IngestionError(f"{path}: assignment rows do not match n_records")
    if table is None:
        fields = [FieldSchema(f["name"], int(f["levels"])) for f in meta["fields"]]
        table = RecordTable(fields, list(meta["file_sizes"]), None)
    return PosteriorSampleSet(
        lam_arr, np.asarray(iterations, dtype=np.int64), table,
        meta.get("mode", "smere"), meta,
        np.asarray(meta.get("block_of", [0] * lam_arr.shape[1]), dtype=np.int32))


@dataclass
class RunConfig:
    """Everything one linkage run needs, serializable to one JSON file."""

    ingestion: IngestionSpec
    chain: ChainConfig = field(default_factory=ChainConfig)
    a: float = 1.0
    b: float = 99.0              # float("inf") pins every beta to zero
    mu: float = 1.0
    out_dir: str = "."
    jobs: int = 1

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("prior shapes a, b must be positive")
        if self.mu <= 0:
            raise ValueError("prior concentration mu must be positive")

    def to_dict(self) -> dict:
        doc = {
            "format": CONFIG_FORMAT,
            "version": CONFIG_VERSION,
            "ingestion": asdict(self.ingestion),
            "chain": asdict(self.chain),
            "a": self.a,
            "b": "inf" if np.isinf(self.b) else self.b,
            "mu": self.mu,
            "out_dir": self.out_dir,
            "jobs": self.jobs,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if doc.get("format", CONFIG_FORMAT) != CONFIG_FORMAT:
            raise ValueError("not a run config document")
        b = doc.get("b", 99.0)
        return cls(
            ingestion=IngestionSpec(**doc["ingestion"]),
            chain=ChainConfig(**doc.get("chain", {})),
            a=float(doc.get("a", 1.0)),
            b=float("inf") if b == "inf" else float(b),
            mu=float(doc.get("mu", 1.0)),
            out_dir=doc.get("out_dir", "."),
            jobs=int(doc.get("jobs", 1)),
        )

    def config_hash(self) -> str:
        """Digest of everything that shapes the draws.

        ``out_dir`` and ``jobs`` are excluded: where results land and how
        many workers produced them must not change what was run.
        """
        doc = self.to_dict()
        del doc["out_dir"], doc["jobs"]
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


def env_seed() -> int | None:
    """Default seed from the environment; command-line flags override it."""
    raw = os.environ.get(ENV_SEED)
    return int(raw) if raw else None


def env_jobs() -> int | None:
    """Default worker count from the environment; flags override it."""
    raw = os.environ.get(ENV_JOBS)
    return int(raw) if raw else None
