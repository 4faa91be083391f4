"""The chain: Metropolis-within-Gibbs sweeps over blocks of records.

Each sweep runs S_M Metropolis steps of T split-merge operations followed by
a value/flag refresh, then redraws theta and beta from their conditionals.
Blocks are independent sub-chains with RNG streams keyed by (seed, block
index), so execution order cannot change the output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocking import BlockPartition, single_block
from .kernels import sample_beta, sample_theta, sample_y, sample_z
from .proposals import apply_proposal, mh_accept, propose_merge, propose_split
from .schema import RecordTable
from .state import Hyperparameters, LinkageState

MODES = ("smere", "smered")
ACCEPTANCES = ("hastings", "plain")


@dataclass
class ChainConfig:
    """Run-level knobs. ``mode`` "smere" forbids within-file duplicates;
    "smered" allows them. ``acceptance`` picks the Metropolis ratio, see
    :mod:`latentlink.proposals`."""

    mode: str = "smere"
    s_g: int = 100
    s_m: int = 10
    t: int = 5
    acceptance: str = "hastings"
    burn_in: int | None = None
    thinning: int = 1
    max_stored: int | None = None
    store_params: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.acceptance not in ACCEPTANCES:
            raise ValueError(f"acceptance must be one of {ACCEPTANCES}")
        for name in ("s_g", "s_m", "t", "thinning"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.s_g:
            raise ValueError("burn_in must lie in [0, s_g)")
        if self.max_stored is not None and self.max_stored < 1:
            raise ValueError("max_stored must be >= 1")

    @classmethod
    def from_hyperparameters(cls, hp: Hyperparameters, **overrides) -> "ChainConfig":
        base = dict(mode="smered" if hp.allow_within_file_duplicates else "smere",
                    s_g=hp.s_g, s_m=hp.s_m, t=hp.t, seed=hp.seed)
        base.update(overrides)
        return cls(**base)

    def resolved_burn_in(self) -> int:
        return self.s_g // 5 if self.burn_in is None else self.burn_in

    def storage_plan(self) -> tuple[int, int, list[int]]:
        """(burn_in, effective thinning, stored sweep indices)."""
        burn = self.resolved_burn_in()
        thin = self.thinning
        kept = list(range(burn, self.s_g, thin))
        if self.max_stored is not None and len(kept) > self.max_stored:
            thin = thin * math.ceil(len(kept) / self.max_stored)
            kept = list(range(burn, self.s_g, thin))
        return burn, thin, kept


class PosteriorSampleSet:
    """Stored draws of the latent assignment, plus provenance.

    ``lams[s, g]`` is the latent label of record g in stored sweep s; labels
    are global record ids, so they never collide across blocks and the
    number of distinct labels in a row is the population size draw.
    """

    def __init__(self, lams: np.ndarray, iterations: np.ndarray, table: RecordTable,
                 mode: str, meta: dict, block_of: np.ndarray,
                 betas: np.ndarray | None = None, thetas: list | None = None):
        self.lams = np.asarray(lams, dtype=np.int64)
        self.iterations = np.asarray(iterations, dtype=np.int64)
        self.table = table
        self.mode = mode
        self.meta = dict(meta)
        self.block_of = np.asarray(block_of, dtype=np.int32)
        self.betas = betas            # (S, n_blocks, p) or None
        self.thetas = thetas          # [sweep][block][field] arrays or None

    @property
    def n_samples(self) -> int:
        return int(self.lams.shape[0])

    @property
    def n_records(self) -> int:
        return int(self.lams.shape[1])

    def population_sizes(self) -> np.ndarray:
        return np.array([np.unique(row).size for row in self.lams], dtype=np.int64)

    def clusters(self, s: int) -> list[np.ndarray]:
        """Member record ids per latent in stored sweep s, deterministic order."""
        row = self.lams[s]
        order = np.argsort(row, kind="stable")
        bounds = np.flatnonzero(np.diff(row[order])) + 1
        return np.split(order, bounds)


class _PairDraws:
    """Uniform record pairs by rejection, drawn from a batched integer buffer.

    Rejects identical records and, when distinct files are required, records
    of one file. Batching replaces two generator calls per proposal with one
    call per ~``batch`` proposals.
    """

    __slots__ = ("rng", "n", "files", "batch", "buf", "ptr")

    def __init__(self, rng, n, file_of, need_distinct_files, batch=256):
        self.rng = rng
        self.n = n
        self.files = file_of.tolist() if need_distinct_files else None
        self.batch = max(int(batch) * 2, 32)
        self.buf: list[int] = []
        self.ptr = 0

    def draw(self):
        while True:
            if self.ptr + 2 > len(self.buf):
                self.buf = self.rng.integers(0, self.n, size=self.batch).tolist()
                self.ptr = 0
            a = self.buf[self.ptr]
            b = self.buf[self.ptr + 1]
            self.ptr += 2
            if a == b:
                continue
            if self.files is not None and self.files[a] == self.files[b]:
                continue
            return a, b


def run_block_chain(subtable: RecordTable, hp: Hyperparameters, config: ChainConfig,
                    rng: np.random.Generator, kept: list[int],
                    counters: dict | None = None,
                    init_lam: np.ndarray | None = None):
    """One block's sub-chain; returns (lam snapshots, beta snapshots, theta snapshots)."""
    state = LinkageState.init_singletons(subtable, hp, rng)
    if init_lam is not None:
        _fold_in_assignment(state, subtable, init_lam, rng)
    n = subtable.n_records
    smere = config.mode == "smere"
    pairs_exist = n >= 2 and (not smere or np.unique(subtable.file_of).size >= 2)
    pairs = _PairDraws(rng, n, subtable.file_of, smere,
                       batch=config.s_m * config.t) if pairs_exist else None
    keep = set(kept)
    lams = np.empty((len(kept), n), dtype=np.int64)
    betas = np.empty((len(kept), subtable.p))
    thetas = [] if config.store_params else None
    out = 0
    for g in range(config.s_g):
        for _ in range(config.s_m):
            if pairs_exist:
                for _ in range(config.t):
                    a, b = pairs.draw()
                    if state.lam[a] == state.lam[b]:
                        prop = propose_split(state, subtable, a, b, rng)
                    else:
                        prop = propose_merge(state, subtable, a, b, rng,
                                             allow_within_file_duplicates=not smere)
                    ok, _ = mh_accept(prop, rng, config.acceptance)
                    if counters is not None:
                        counters["proposed"][prop.kind] += 1
                        if ok:
                            counters["accepted"][prop.kind] += 1
                    if ok:
                        apply_proposal(state, prop)
            sample_y(state, subtable, hp, rng)
            sample_z(state, subtable, hp, rng)
        sample_theta(state, subtable, hp, rng)
        sample_beta(state, subtable, hp, rng)
        if g in keep:
            lams[out] = state.lam
            betas[out] = state.beta
            if thetas is not None:
                thetas.append([t.copy() for t in state.theta])
            out += 1
    return lams, betas, thetas


def _fold_in_assignment(state: LinkageState, subtable: RecordTable,
                        lam: np.ndarray, rng: np.random.Generator) -> None:
    """Adopt a stored assignment: rebuild groups, re-seed values and flags."""
    lam = np.asarray(lam, dtype=np.int64)
    if lam.shape != (subtable.n_records,):
        raise ValueError("assignment length does not match the block")
    state.lam = lam.copy()
    n = subtable.n_records
    state.sizes = np.bincount(lam, minlength=n).astype(np.int64)
    state.members = [set() for _ in range(n)]
    for g, j in enumerate(lam):
        state.members[int(j)].add(g)
    state.free = [j for j in range(n) if not state.members[j]]
    for j in range(n):
        if state.members[j]:
            pick = sorted(state.members[j])[int(rng.integers(state.sizes[j]))]
            state.y[j] = subtable.codes[pick]
    sample_z(state, subtable, None, rng)


def run_chain(table: RecordTable, hp: Hyperparameters, config: ChainConfig | None = None,
              blocks: BlockPartition | None = None,
              resume_lam: np.ndarray | None = None,
              start_iteration: int = 0) -> PosteriorSampleSet:
    """Run the sampler and return stored assignment draws.

    ``blocks`` defaults to a single block over all records. ``resume_lam``
    restarts every block from a stored global assignment (latent values and
    flags are re-seeded from it, nuisance parameters redrawn). Identical
    (table, hp, config, blocks) inputs give identical outputs.
    """
    hp.validate_for(table)
    if not table.has_codes:
        raise ValueError("run_chain needs record codes")
    if config is None:
        config = ChainConfig.from_hyperparameters(hp)
    if blocks is None:
        blocks = single_block(table)
    burn, thin, kept = config.storage_plan()
    n = table.n_records
    lams = np.empty((len(kept), n), dtype=np.int64)
    betas = np.empty((len(kept), blocks.n_blocks, table.p))
    thetas = [[None] * blocks.n_blocks for _ in kept] if config.store_params else None
    counters = {"proposed": {"split": 0, "merge": 0},
                "accepted": {"split": 0, "merge": 0}}
    for bi in range(blocks.n_blocks):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed,
                                                           spawn_key=(bi,)))
        subtable, ids = table.subset(blocks.records[bi])
        init = None
        if resume_lam is not None:
            pos = {int(g): i for i, g in enumerate(ids)}
            try:
                init = np.array([pos[int(resume_lam[g])] for g in ids], dtype=np.int64)
            except KeyError as exc:
                raise ValueError("resume assignment links records across blocks") from exc
        sub_lams, sub_betas, sub_thetas = run_block_chain(
            subtable, hp, config, rng, kept, counters, init_lam=init)
        lams[:, ids] = ids[sub_lams]
        betas[:, bi, :] = sub_betas
        if thetas is not None:
            for s in range(len(kept)):
                thetas[s][bi] = sub_thetas[s]
    meta = {
        "s_g": config.s_g, "s_m": config.s_m, "t": config.t,
        "mode": config.mode, "acceptance": config.acceptance,
        "burn_in": burn, "thinning": thin, "seed": config.seed,
        "start_iteration": start_iteration,
        "counters": counters,
        "block_fields": list(blocks.field_names),
        "n_blocks": blocks.n_blocks,
    }
    iterations = np.asarray(kept, dtype=np.int64) + start_iteration
    return PosteriorSampleSet(lams, iterations, table, config.mode, meta,
                              blocks.block_of(n), betas=betas, thetas=thetas)
