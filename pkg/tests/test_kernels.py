"""Joint density and full-conditional checks."""
from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from latentlink.kernels import (NEG_INF, lambda_support_check, log_joint,
                                sample_beta, sample_theta, sample_y, sample_z)
from latentlink.schema import FieldSchema, RecordTable
from latentlink.state import Hyperparameters, LinkageInvariantError, LinkageState

from fixtures import random_valid_state, three_roster_hp, three_roster_state
from oracles import log_joint_scalar


def as_oracle_args(state, table, hp):
    x = [tuple(r) for r in table.codes]
    y = [tuple(r) for r in state.y]
    z = [list(r) for r in state.z]
    theta = [list(t) for t in state.theta]
    mu = [list(m) for m in hp.mu]
    return dict(x=x, lam=list(state.lam), y=y, z=z, theta=theta,
                beta=list(state.beta), a=list(hp.a), b=list(hp.b), mu=mu)


def test_log_joint_single_cell_worked_example():
    # one record, one 2-level field, distorted cell, everything symmetric:
    # log theta[x] + log theta[y] + log beta = 3 log(1/2)
    table = RecordTable([FieldSchema("f", 2)], [1], np.array([[0]]))
    hp = Hyperparameters(a=[1.0], b=[1.0], mu=[[1.0, 1.0]])
    state = LinkageState(table, lam=[0], y=np.array([[1]]), z=np.array([[1]]),
                         theta=[np.array([0.5, 0.5])], beta=np.array([0.5]))
    assert log_joint(state, table, hp) == pytest.approx(3 * math.log(0.5), abs=1e-12)


def test_log_joint_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    for trial in range(80):
        table, state, hp = random_valid_state(rng, sentinel_prob=0.2 if trial % 3 == 0 else 0.0)
        got = log_joint(state, table, hp)
        want = log_joint_scalar(**as_oracle_args(state, table, hp))
        if math.isinf(want):
            assert got == want
        else:
            assert got == pytest.approx(want, abs=1e-9)


def test_log_joint_copy_violation_is_impossible():
    state = three_roster_state()
    table, hp = state.table, three_roster_hp()
    assert math.isfinite(log_joint(state, table, hp))
    bad = state.clone()
    bad.z[1, 1] = 0  # distorted age cell marked clean
    assert log_joint(bad, table, hp) == NEG_INF


def test_log_joint_sentinel_field():
    state = three_roster_state()
    table = state.table
    hp = three_roster_hp()
    hp.b[0] = np.inf  # region never distorted; fixture has z=0 there
    state.beta[0] = 0.0
    state.refresh_param_logs()
    assert math.isfinite(log_joint(state, table, hp))
    bad = state.clone()
    bad.z[0, 0] = 1
    assert log_joint(bad, table, hp) == NEG_INF
    drifted = state.clone()
    drifted.beta[0] = 0.01
    assert log_joint(drifted, table, hp) == NEG_INF


# conditional-vs-joint consistency: replacing one block by another value and
# differencing log_joint must reproduce the conditional log-density ratio.

def conditional_discrepancies(rng, table, state, hp):
    """Max abs difference between joint deltas and conditional ratios, per block type."""
    out = {}
    base = log_joint(state, table, hp)
    n = table.n_records

    # beta block
    l = int(rng.integers(table.p))
    if not np.isinf(hp.b[l]):
        d = int(state.z[:, l].sum())
        a_post, b_post = hp.a[l] + d, hp.b[l] + (n - d)
        new = float(rng.uniform(0.02, 0.98))
        alt = state.clone()
        alt.beta[l] = new
        alt.refresh_param_logs()
        lhs = log_joint(alt, table, hp) - base
        rhs = (stats.beta.logpdf(new, a_post, b_post)
               - stats.beta.logpdf(state.beta[l], a_post, b_post))
        out["beta"] = abs(lhs - rhs)

    # theta block
    l = int(rng.integers(table.p))
    levels = table.fields[l].levels
    active = state.active_latents()
    county = np.bincount(state.y[active, l], minlength=levels)
    countzx = np.bincount(table.codes[state.z[:, l] == 1, l], minlength=levels)
    alpha = hp.mu[l] + county + countzx
    new_theta = rng.dirichlet(np.full(levels, 5.0))
    alt = state.clone()
    alt.theta[l] = new_theta
    alt.refresh_param_logs()
    lhs = log_joint(alt, table, hp) - base
    rhs = (stats.dirichlet.logpdf(new_theta, alpha)
           - stats.dirichlet.logpdf(state.theta[l], alpha))
    out["theta"] = abs(lhs - rhs)

    # y block: a latent field free to move (no undistorted member cell)
    for _ in range(20):
        j = int(rng.choice(active))
        l = int(rng.integers(table.p))
        members = sorted(state.members[j])
        if any(state.z[g, l] == 0 for g in members):
            continue
        new_v = int(rng.integers(levels_of(table, l)))
        if new_v == state.y[j, l]:
            continue
        alt = state.clone()
        alt.y[j, l] = new_v
        lhs = log_joint(alt, table, hp) - base
        rhs = state.log_theta[l][new_v] - state.log_theta[l][state.y[j, l]]
        out["y"] = abs(lhs - rhs)
        break

    # z block: an agreeing cell may flip
    for _ in range(20):
        g = int(rng.integers(n))
        l = int(rng.integers(table.p))
        if table.codes[g, l] != state.y[state.lam[g], l]:
            continue
        if np.isinf(hp.b[l]):
            continue
        tx = state.theta[l][table.codes[g, l]]
        p1 = state.beta[l] * tx / (state.beta[l] * tx + 1 - state.beta[l])
        alt = state.clone()
        alt.z[g, l] = 1 - alt.z[g, l]
        lhs = log_joint(alt, table, hp) - base
        if alt.z[g, l] == 1:
            rhs = math.log(p1) - math.log(1 - p1)
        else:
            rhs = math.log(1 - p1) - math.log(p1)
        out["z"] = abs(lhs - rhs)
        break
    return out


def levels_of(table, l):
    return table.fields[l].levels


def test_conditionals_match_joint_ratios():
    rng = np.random.default_rng(11)
    seen = set()
    for _ in range(60):
        table, state, hp = random_valid_state(rng)
        for kind, err in conditional_discrepancies(rng, table, state, hp).items():
            seen.add(kind)
            assert err < 1e-8, f"{kind} conditional inconsistent with joint: {err}"
    assert seen == {"beta", "theta", "y", "z"}


def test_sample_beta_posterior_moments():
    # long-run mean of the conditional draw matches (a + d) / (a + b + n)
    state = three_roster_state()
    table, hp = state.table, three_roster_hp()
    rng = np.random.default_rng(3)
    n = table.n_records
    d = state.z.sum(axis=0)
    draws = np.empty((4000, table.p))
    for i in range(draws.shape[0]):
        sample_beta(state, table, hp, rng)
        draws[i] = state.beta
    want = (hp.a + d) / (hp.a + hp.b + n)
    se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - want) < 4 * se + 1e-12)


def test_sample_beta_sentinel_stays_zero():
    state = three_roster_state()
    table, hp = state.table, three_roster_hp()
    hp.b[2] = np.inf
    rng = np.random.default_rng(4)
    sample_beta(state, table, hp, rng)
    assert state.beta[2] == 0.0


def test_sample_theta_posterior_moments():
    state = three_roster_state()
    table, hp = state.table, three_roster_hp()
    rng = np.random.default_rng(5)
    l = 1  # age
    active = state.active_latents()
    county = np.bincount(state.y[active, l], minlength=8)
    countzx = np.bincount(table.codes[state.z[:, l] == 1, l], minlength=8)
    alpha = hp.mu[l] + county + countzx
    draws = np.empty((4000, 8))
    for i in range(draws.shape[0]):
        sample_theta(state, table, hp, rng)
        draws[i] = state.theta[l]
    want = alpha / alpha.sum()
    se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - want) < 4 * se + 1e-12)


def test_sample_y_forced_and_free():
    # the "SC, 73, F" person: every linked age cell is distorted, so age is
    # redrawn from theta; region and sex are pinned by undistorted cells
    rng = np.random.default_rng(6)
    theta = [np.full(4, 0.25), np.zeros(8), np.full(2, 0.5)]
    theta[1][3] = 1.0  # age redraw can only produce code 3 (= 73)
    state = three_roster_state(theta=theta)
    table, hp = state.table, three_roster_hp()
    for _ in range(10):
        sample_y(state, table, hp, rng)
        assert state.y[1, 0] == 2 and state.y[1, 2] == 0  # SC, F forced
        assert state.y[1, 1] == 3  # redrawn, but theta pins it
        assert state.y[0, 1] == 2  # NC person's age forced by three clean cells
    state.check_coupling()


def test_sample_y_conflicting_forced_cells_raise():
    state = three_roster_state()
    table, hp = state.table, three_roster_hp()
    state.z[3, 1] = 0  # 37 now claims to be clean next to a clean 73... but
    state.z[8, 1] = 0  # first make two clean members disagree outright
    rng = np.random.default_rng(7)
    with pytest.raises(LinkageInvariantError):
        sample_y(state, table, hp, rng)


def test_sample_z_mismatch_forced_and_beta_zero():
    state = three_roster_state()
    table, hp = state.table, three_roster_hp()
    rng = np.random.default_rng(8)
    mismatch = table.codes != state.y[state.lam]
    state.beta[:] = 0.0
    state.refresh_param_logs()
    sample_z(state, table, hp, rng)
    assert np.array_equal(state.z.astype(bool), mismatch)
    state.beta[:] = np.array([0.3, 0.3, 0.3])
    state.refresh_param_logs()
    for _ in range(5):
        sample_z(state, table, hp, rng)
        assert np.all(state.z[mismatch] == 1)
        state.check_coupling()


def test_gibbs_passes_preserve_coupling_and_finiteness():
    rng = np.random.default_rng(9)
    for _ in range(15):
        table, state, hp = random_valid_state(rng, sentinel_prob=0.15)
        for _ in range(4):
            sample_y(state, table, hp, rng)
            sample_z(state, table, hp, rng)
            sample_theta(state, table, hp, rng)
            sample_beta(state, table, hp, rng)
        state.check_coupling()
        assert log_joint(state, table, hp) > NEG_INF


def test_lambda_support_check_modes():
    state = three_roster_state()
    table = state.table
    # the NC person holds two records of file 2: fine with duplicates only
    assert lambda_support_check(state, table, allow_within_file_duplicates=True)
    assert not lambda_support_check(state, table, allow_within_file_duplicates=False)
    singles = state.clone()
    singles.lam = np.arange(table.n_records)
    singles.y = table.codes.copy()
    singles.z[:] = 0
    singles.sizes = np.ones(table.n_records, dtype=np.int64)
    singles.members = [{g} for g in range(table.n_records)]
    singles.free = []
    assert lambda_support_check(singles, table, allow_within_file_duplicates=False)
    bad = state.clone()
    bad.z[1, 1] = 0
    assert not lambda_support_check(bad, table, allow_within_file_duplicates=True)
