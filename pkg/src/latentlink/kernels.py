"""Model kernels: joint log density and the Gibbs full conditionals.

The model, per field l with M_l levels:

    theta_l ~ Dirichlet(mu_l)
    beta_l  ~ Beta(a_l, b_l)          (b_l = inf pins beta_l = 0)
    y_{j'l} ~ Multinomial(1, theta_l)  for every active latent j'
    z_{gl}  ~ Bernoulli(beta_l)        for every record cell
    x_{gl}  = y_{lam(g) l}  if z_{gl} = 0, else ~ Multinomial(1, theta_l)

and a flat prior over labeled latent assignments. ``log_joint`` drops all
state-independent normalizing constants, so differences of ``log_joint``
across single-block changes equal the corresponding conditional log-density
ratios exactly.
"""
from __future__ import annotations

import numpy as np
from scipy.special import xlogy

from .schema import RecordTable
from .state import Hyperparameters, LinkageState, LinkageInvariantError

NEG_INF = float("-inf")


def log_joint(state: LinkageState, table: RecordTable, hp: Hyperparameters) -> float:
    """Log joint density of (lam, y, z, theta, beta, x), up to a constant.

    Terms, summed over fields l:

      * record cells: z=0 contributes 0 when x equals the latent value and
        -inf otherwise; z=1 contributes log theta_l[x]
      * latent values of active latents plus the Dirichlet prior:
        sum_m (mu_lm - 1 + county_lm) log theta_lm
      * distortion flags plus the Beta prior:
        (a_l - 1 + d_l) log beta_l + (b_l - 1 + ncells - d_l) log(1 - beta_l)
        where d_l counts z=1 cells; for sentinel fields (b_l = inf) the term
        is 0 when beta_l = 0 and d_l = 0, else -inf.
    """
    x = table.codes
    lam, y, z = state.lam, state.y, state.z
    yv = y[lam]
    if np.any((z == 0) & (x != yv)):
        return NEG_INF
    total = 0.0
    active = state.active_latents()
    n_cells = table.n_records
    for l in range(table.p):
        lt = state.log_theta[l]
        distorted = z[:, l] == 1
        total += float(lt[x[distorted, l]].sum())
        county = np.bincount(y[active, l], minlength=table.fields[l].levels)
        expo = hp.mu[l] - 1.0 + county
        with np.errstate(invalid="ignore", divide="ignore"):
            total += float(xlogy(expo, state.theta[l]).sum())
        d = int(distorted.sum())
        if np.isinf(hp.b[l]):
            if state.beta[l] != 0.0 or d != 0:
                return NEG_INF
            continue
        bl = state.beta[l]
        with np.errstate(invalid="ignore", divide="ignore"):
            total += float(xlogy(hp.a[l] - 1.0 + d, bl)
                           + xlogy(hp.b[l] - 1.0 + (n_cells - d), 1.0 - bl))
    # nan only arises from boundary states (a zero parameter against a
    # negative exponent), which carry no posterior mass
    return NEG_INF if np.isnan(total) else float(total)


def sample_beta(state: LinkageState, table: RecordTable, hp: Hyperparameters,
                rng: np.random.Generator) -> None:
    """Draw beta_l ~ Beta(a_l + d_l, b_l + ncells - d_l); sentinel fields stay 0."""
    d = state.z.sum(axis=0, dtype=np.int64)
    finite = ~np.isinf(hp.b)
    b_safe = np.where(finite, hp.b, 1.0)
    draws = rng.beta(hp.a + d, b_safe + (table.n_records - d))
    state.beta[:] = np.where(finite, draws, 0.0)
    state.refresh_beta_logs()


def sample_theta(state: LinkageState, table: RecordTable, hp: Hyperparameters,
                 rng: np.random.Generator) -> None:
    """Draw theta_l ~ Dirichlet(mu_l + county_l + countzx_l).

    county counts latent values over active latents; countzx counts observed
    values of distorted cells. All fields are drawn in one pass: per-level
    gamma variates over the field-concatenated alpha vector, normalized
    within each field.
    """
    total = table.total_levels
    offsets = table.level_offsets
    ya = state.y[state.active_latents()]
    county = np.bincount((ya + offsets).ravel(), minlength=total)
    distorted = state.z.ravel() == 1
    countzx = np.bincount(table.codes_offset.ravel()[distorted], minlength=total)
    alpha = np.concatenate(hp.mu) + county + countzx
    draw = rng.standard_gamma(alpha)
    sums = np.add.reduceat(draw, offsets)
    denom = np.repeat(np.where(sums > 0, sums, 1.0), table.level_sizes)
    concat = draw / denom
    state.theta = [concat[s:e] for s, e in table.level_bounds]
    state.refresh_theta_logs()


def sample_y(state: LinkageState, table: RecordTable, hp: Hyperparameters,
             rng: np.random.Generator) -> None:
    """Redraw latent values given everything else.

    A field of a latent is forced to the shared observed value of its
    undistorted member cells; when no member cell is undistorted the value is
    drawn from theta_l. Disagreeing undistorted members mean the state was
    invalid, which is reported as an invariant error rather than repaired.

    One pass over all cells: undistorted cells scatter their value into a
    per-(latent, field) slot, a gather verifies duplicate writers agree, and
    the loose cells of active latents are drawn together with a single
    searchsorted against the shifted cumulative, which inverts every field's
    cdf at once. Inactive latents keep their stale rows.
    """
    n, p = table.n_records, table.p
    z0 = state.z.ravel() == 0
    slots = ((state.lam * p)[:, None] + table.field_index_row).ravel()
    pos = slots[z0]
    vals = table.codes_flat[z0]
    buf = getattr(state, "_y_scratch", None)
    if buf is None or buf.size != n * p:
        buf = state._y_scratch = np.empty(n * p, dtype=np.int64)
    buf.fill(-1)
    buf[pos] = vals
    bad = buf[pos] != vals
    if bad.any():
        s = int(pos[np.flatnonzero(bad)[0]])
        raise LinkageInvariantError(
            f"latent {s // p}, field {s % p}: undistorted members disagree")
    forced = buf >= 0
    y_flat = state.y.ravel()                # same (latent, field) flat layout
    y_flat[forced] = buf[forced]
    active = state.sizes > 0
    loose = np.flatnonzero((~forced.reshape(n, p)) & active[:, None])
    if loose.size:
        f = loose % p
        w = rng.random(loose.size) + f
        hits = np.searchsorted(state.shifted_cum_theta, w, side="right")
        y_flat[loose] = hits - table.level_offsets[f]


def sample_z(state: LinkageState, table: RecordTable, hp: Hyperparameters,
             rng: np.random.Generator) -> None:
    """Redraw distortion flags given everything else.

    Cells disagreeing with their latent value are distorted with probability
    one; agreeing cells are distorted with probability
    beta theta_l[x] / (beta theta_l[x] + 1 - beta).
    """
    x = table.codes
    yv = state.y[state.lam]
    u = rng.random(x.shape)
    prob = state.flag_prob_concat[table.codes_offset]
    state.z[:, :] = ((x != yv) | (u < prob)).astype(np.int8)


def lambda_support_check(state: LinkageState, table: RecordTable,
                         allow_within_file_duplicates: bool) -> bool:
    """True iff the assignment has nonzero probability in the current mode.

    Checks the copy constraint on undistorted cells and, when within-file
    duplicates are disallowed, that no two records of one file share a latent.
    """
    if np.any((state.z == 0) & (table.codes != state.y[state.lam])):
        return False
    if not allow_within_file_duplicates:
        for i in range(table.n_files):
            sl = table.file_slice(i)
            block = state.lam[sl]
            if np.unique(block).size != block.size:
                return False
    return True
