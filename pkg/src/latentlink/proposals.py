"""Split-merge proposals and their Metropolis-Hastings acceptance.

A proposal is built from an ordered record pair (a, b): records sharing a
latent trigger a split, records in different latents a merge. Splits assign
the remaining members to the two sides by fair coins, keep a's side at the
old latent index and draw a fresh index for b's side uniformly from the free
list; each side's latent value is copied from a uniformly chosen member and
the affected distortion flags are redrawn from their conditional. Merges
mirror all of that.

Acceptance supports two ratios. "hastings" multiplies the posterior ratio by
the reverse/forward proposal densities, making the walk exact for the
labeled-assignment posterior: the uniform fresh-index draw contributes
1/freeCount forward and the member-copy density n(v)/|side| counts how many
members carry the proposed value, so a latent whose current value matches no
member has zero reverse density and the move is rejected outright (the
per-step value/flag refresh moves such states along instead). "plain" accepts
on the bare posterior ratio, reproducing the uncorrected original sweep.
"""
from __future__ import annotations

import math

import numpy as np

from .schema import RecordTable
from .state import Hyperparameters, LinkageState

LOG2 = math.log(2.0)
NEG_INF = float("-inf")


class Proposal:
    """One candidate move; plain __slots__ record kept cheap to build."""

    __slots__ = ("kind", "rec_a", "rec_b", "latents_old", "latents_new",
                 "rows", "new_lam", "y_new", "z_new", "log_q_fwd",
                 "log_q_rev", "delta_log_post", "feasible", "free_slot")

    def __init__(self, kind: str, rec_a: int, rec_b: int,
                 latents_old: tuple[int, ...], latents_new: tuple[int, ...],
                 rows: list[int], new_lam: list[int],
                 y_new: dict[int, list[int]], z_new: list[list[int]],
                 log_q_fwd: float, log_q_rev: float, delta_log_post: float,
                 feasible: bool = True, free_slot: int | None = None):
        self.kind = kind                    # "split" or "merge"
        self.rec_a = rec_a
        self.rec_b = rec_b
        self.latents_old = latents_old
        self.latents_new = latents_new
        self.rows = rows                    # affected records
        self.new_lam = new_lam              # latent per affected record
        self.y_new = y_new
        self.z_new = z_new                  # flags per affected record
        self.log_q_fwd = log_q_fwd
        self.log_q_rev = log_q_rev
        self.delta_log_post = delta_log_post
        self.feasible = feasible
        self.free_slot = free_slot          # split only: slot drawn in the free list


class _DrawPool:
    """Batched scalar uniforms for the proposal hot path.

    One generator call refills thousands of draws; consumption order is a
    pure function of the wrapped generator, so chains stay reproducible. A
    pool is cached on the state and rebuilt whenever a different generator
    shows up.
    """

    __slots__ = ("rng", "buf", "ptr")
    SIZE = 4096

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = rng.random(self.SIZE).tolist()
        self.ptr = 0

    def take(self, k: int) -> list[float]:
        ptr = self.ptr
        if ptr + k > len(self.buf):
            if k > self.SIZE:
                return self.rng.random(k).tolist()
            self.buf = self.rng.random(self.SIZE).tolist()
            ptr = 0
        self.ptr = ptr + k
        return self.buf[ptr:ptr + k]

    def one(self) -> float:
        ptr = self.ptr
        if ptr >= len(self.buf):
            self.buf = self.rng.random(self.SIZE).tolist()
            ptr = 0
        self.ptr = ptr + 1
        return self.buf[ptr]

    def index(self, k: int) -> int:
        # floor(u * k) is uniform on [0, k) up to O(k / 2^53) rounding bias
        return int(self.one() * k)


def _pool_for(state: LinkageState, rng: np.random.Generator) -> _DrawPool:
    pool = state.rng_pool
    if pool is None or pool.rng is not rng:
        pool = state.rng_pool = _DrawPool(rng)
    return pool


def _draw_side(state: LinkageState, code_rows: list, rows: list[int],
               y_row: list, us: list, p: int) -> tuple[list, float, float, int]:
    """Draw flags for one proposed side, in a single pass per cell.

    Consumes one pre-drawn uniform per cell (row-major). Mismatching cells
    are forced to 1 and contribute density one. Returns the flags, their log
    proposal density, the side's state-dependent log-joint contribution
    (the latent value's theta factor, each cell's distortion Bernoulli, and
    the cell likelihood), and how many rows equal y_row outright.
    """
    flag_prob = state.flag_prob_list
    log_theta = state.log_theta_list
    log_flag = state.log_flag_list
    log1m_flag = state.log1m_flag_list
    log1m_beta = state.log1m_beta_list
    dist_logp = state.dist_logp_list
    z = []
    logq = 0.0
    contrib = 0.0
    n_match = 0
    for l in range(p):
        contrib += log_theta[l][y_row[l]]
    base = 0
    for g in rows:
        xg = code_rows[g]
        zi = [1] * p
        hit = True
        for l in range(p):
            v = xg[l]
            if v == y_row[l]:
                if us[base + l] < flag_prob[l][v]:
                    logq += log_flag[l][v]
                    contrib += dist_logp[l][v]
                else:
                    zi[l] = 0
                    logq += log1m_flag[l][v]
                    contrib += log1m_beta[l]
            else:
                hit = False
                contrib += dist_logp[l][v]
        if hit:
            n_match += 1
        z.append(zi)
        base += p
    return z, logq, contrib, n_match


def _side_density(state: LinkageState, code_rows: list, rows: list[int],
                  y_row: list, z_all: np.ndarray, p: int) -> tuple[float, float, int]:
    """Flag log density and log-joint contribution of an existing side.

    Single pass per cell under latent value y_row, reading flag rows straight
    out of the full (n, p) array. The density is -inf when some flag has zero
    conditional probability; the contribution is -inf when an undistorted
    cell mismatches y_row (broken coupling). Also counts the rows equal to
    y_row outright.
    """
    log_theta = state.log_theta_list
    log_flag = state.log_flag_list
    log1m_flag = state.log1m_flag_list
    log1m_beta = state.log1m_beta_list
    dist_logp = state.dist_logp_list
    logq = 0.0
    contrib = 0.0
    n_match = 0
    for l in range(p):
        contrib += log_theta[l][y_row[l]]
    for g in rows:
        xg = code_rows[g]
        zi = z_all[g].tolist()
        hit = True
        for l in range(p):
            v = xg[l]
            if zi[l]:
                contrib += dist_logp[l][v]
                if v == y_row[l]:
                    logq += log_flag[l][v]
                else:
                    hit = False
            elif v == y_row[l]:
                contrib += log1m_beta[l]
                logq += log1m_flag[l][v]
            else:
                hit = False
                contrib = NEG_INF  # undistorted cell must copy its latent
        if hit:
            n_match += 1
    return logq, contrib, n_match


def propose_split(state: LinkageState, table: RecordTable, rec_a: int, rec_b: int,
                  rng: np.random.Generator) -> Proposal:
    """Split the latent shared by rec_a and rec_b; rec_a's side keeps its index."""
    j1 = int(state.lam[rec_a])
    if state.lam[rec_b] != j1 or rec_a == rec_b:
        raise ValueError("split needs two distinct records of one latent")
    pool = _pool_for(state, rng)
    p = table.p
    code_rows = table.code_rows
    group = sorted(state.members[j1])
    others = [g for g in group if g != rec_a and g != rec_b]
    side_a = [rec_a]
    side_b = [rec_b]
    for g, u in zip(others, pool.take(len(others))):
        (side_a if u < 0.5 else side_b).append(g)
    free_slot = pool.index(len(state.free))
    j2 = state.free[free_slot]

    seed_a = side_a[pool.index(len(side_a))]
    seed_b = side_b[pool.index(len(side_b))]
    y_a = code_rows[seed_a]
    y_b = code_rows[seed_b]
    us = pool.take(len(group) * p)
    cut = len(side_a) * p
    z_a, logq_za, con_a, n_a = _draw_side(state, code_rows, side_a, y_a, us[:cut], p)
    z_b, logq_zb, con_b, n_b = _draw_side(state, code_rows, side_b, y_b, us[cut:], p)

    log_q_fwd = (-len(others) * LOG2
                 + math.log(n_a / len(side_a)) + math.log(n_b / len(side_b))
                 - math.log(len(state.free))
                 + logq_za + logq_zb)

    y_cur = state.y[j1].tolist()
    logpmf_cur, con_cur, n_cur = _side_density(state, code_rows, group, y_cur,
                                               state.z, p)
    if n_cur == 0:
        log_q_rev = NEG_INF
    else:
        log_q_rev = math.log(n_cur / len(group)) + logpmf_cur

    delta = con_a + con_b - con_cur

    rows = side_a + side_b
    new_lam = [j1] * len(side_a) + [j2] * len(side_b)
    return Proposal("split", rec_a, rec_b, (j1,), (j1, j2), rows, new_lam,
                    {j1: y_a, j2: y_b}, z_a + z_b, log_q_fwd, log_q_rev, delta,
                    free_slot=free_slot)


def propose_merge(state: LinkageState, table: RecordTable, rec_a: int, rec_b: int,
                  rng: np.random.Generator,
                  allow_within_file_duplicates: bool) -> Proposal:
    """Merge rec_b's latent into rec_a's; the merged latent keeps rec_a's index."""
    j1 = int(state.lam[rec_a])
    j2 = int(state.lam[rec_b])
    if j1 == j2:
        raise ValueError("merge needs records of two different latents")
    side_a = sorted(state.members[j1])
    side_b = sorted(state.members[j2])
    union = side_a + side_b
    new_lam = [j1] * len(union)

    if not allow_within_file_duplicates:
        file_of = table.file_of_list
        files_a = {file_of[g] for g in side_a}
        if any(file_of[g] in files_a for g in side_b):
            # two records of one file would share the latent: zero support
            return Proposal("merge", rec_a, rec_b, (j1, j2), (j1,), union, new_lam,
                            {}, [], 0.0, 0.0, NEG_INF,
                            feasible=False)

    pool = _pool_for(state, rng)
    p = table.p
    code_rows = table.code_rows
    seed = union[pool.index(len(union))]
    y_u = code_rows[seed]
    us = pool.take(len(union) * p)
    z_u, logq_zu, con_u, n_u = _draw_side(state, code_rows, union, y_u, us, p)
    log_q_fwd = math.log(n_u / len(union)) + logq_zu

    y_1, y_2 = state.y[j1].tolist(), state.y[j2].tolist()
    logpmf_1, con_1, n_1 = _side_density(state, code_rows, side_a, y_1,
                                         state.z, p)
    logpmf_2, con_2, n_2 = _side_density(state, code_rows, side_b, y_2,
                                         state.z, p)
    if n_1 == 0 or n_2 == 0:
        log_q_rev = NEG_INF
    else:
        log_q_rev = (-(len(union) - 2) * LOG2
                     + math.log(n_1 / len(side_a)) + math.log(n_2 / len(side_b))
                     - math.log(len(state.free) + 1)
                     + logpmf_1 + logpmf_2)

    delta = con_u - con_1 - con_2

    return Proposal("merge", rec_a, rec_b, (j1, j2), (j1,), union, new_lam,
                    {j1: y_u}, z_u, log_q_fwd, log_q_rev, delta)


def mh_accept(proposal: Proposal, rng: np.random.Generator,
              acceptance: str = "hastings") -> tuple[bool, float]:
    """Acceptance decision; -inf log ratios always reject."""
    log_r = proposal.delta_log_post
    if acceptance == "hastings":
        if proposal.log_q_rev == NEG_INF:
            log_r = NEG_INF
        elif log_r != NEG_INF:
            log_r = log_r + proposal.log_q_rev - proposal.log_q_fwd
    elif acceptance != "plain":
        raise ValueError(f"unknown acceptance mode {acceptance!r}")
    if not proposal.feasible:
        log_r = NEG_INF
    u = rng.random()
    if log_r >= 0.0:
        return True, log_r
    if log_r == NEG_INF or math.isnan(log_r):
        return False, NEG_INF
    return u < math.exp(log_r), log_r


def apply_proposal(state: LinkageState, proposal: Proposal) -> None:
    """Mutate the state; only valid immediately after the propose call."""
    if proposal.kind == "split":
        j1, j2 = proposal.latents_new
        split_at = proposal.new_lam.index(j2)
        side_a = proposal.rows[:split_at]
        side_b = proposal.rows[split_at:]
        state.members[j1] = set(side_a)
        state.members[j2] = set(side_b)
        state.sizes[j1] = len(side_a)
        state.sizes[j2] = len(side_b)
        slot = proposal.free_slot
        state.free[slot] = state.free[-1]
        state.free.pop()
    else:
        j1, j2 = proposal.latents_old
        state.members[j1] = set(proposal.rows)
        state.members[j2] = set()
        state.sizes[j1] = len(proposal.rows)
        state.sizes[j2] = 0
        state.free.append(j2)
    state.lam[proposal.rows] = proposal.new_lam
    for j, row in proposal.y_new.items():
        state.y[j] = row
    state.z[proposal.rows] = proposal.z_new
