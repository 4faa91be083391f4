"""Linkage model state: latent assignments, latent values, distortion flags."""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .schema import RecordTable


class LinkageInvariantError(RuntimeError):
    """A structural invariant was violated; unreachable from valid states."""


@dataclass
class Hyperparameters:
    """Prior settings plus default chain lengths.

    ``a``/``b`` are the per-field Beta parameters of the distortion
    probability; ``b[l] = inf`` is the sentinel that pins field l's
    distortion probability to exactly zero. ``mu`` holds one Dirichlet
    parameter vector per field.
    """

    a: np.ndarray
    b: np.ndarray
    mu: list[np.ndarray]
    latent_population_m: int | None = None
    s_g: int = 100
    s_m: int = 10
    t: int = 5
    seed: int | None = None
    allow_within_file_duplicates: bool = False
    threshold: float | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.mu = [np.asarray(m, dtype=float) for m in self.mu]
        if self.a.ndim != 1 or self.a.shape != self.b.shape:
            raise ValueError("a and b must be 1-d arrays of equal length")
        if np.any(self.a <= 0):
            raise ValueError("a must be positive")
        if np.any(self.b <= 0):
            raise ValueError("b must be positive (inf allowed)")
        if np.any(np.isinf(self.a)):
            raise ValueError("a must be finite")
        if len(self.mu) != self.a.size:
            raise ValueError("need one mu vector per field")
        for l, m in enumerate(self.mu):
            if m.ndim != 1 or np.any(m <= 0) or np.any(~np.isfinite(m)):
                raise ValueError(f"mu[{l}] must be a positive finite vector")

    @classmethod
    def default(cls, table: RecordTable, a: float = 1.0, b: float = 9.0, mu: float = 1.0,
                **kw) -> "Hyperparameters":
        """Flat Dirichlet(mu) per field, Beta(a, b) distortion prior."""
        p = table.p
        return cls(a=np.full(p, float(a)), b=np.full(p, float(b)),
                   mu=[np.full(f.levels, float(mu)) for f in table.fields], **kw)

    def validate_for(self, table: RecordTable) -> None:
        if len(self.mu) != table.p:
            raise ValueError(f"{len(self.mu)} mu vectors for {table.p} fields")
        for l, (m, f) in enumerate(zip(self.mu, table.fields)):
            if m.size != f.levels:
                raise ValueError(f"mu[{l}] has {m.size} entries, field {f.name!r} has {f.levels} levels")

    @property
    def fixed_zero_distortion(self) -> np.ndarray:
        return np.isinf(self.b)


class LinkageState:
    """Mutable sampler state over one record table (one block).

    Latent indices live in [0, n): a latent is active iff it has members.
    ``y`` rows of inactive latents are stale and carry no meaning. The free
    list holds the inactive indices; a split draws its fresh index uniformly
    from it.
    """

    def __init__(self, table: RecordTable, lam: np.ndarray, y: np.ndarray, z: np.ndarray,
                 theta: list[np.ndarray], beta: np.ndarray):
        n, p = table.n_records, table.p
        self.table = table
        self.lam = np.asarray(lam, dtype=np.int64).copy()
        self.y = np.asarray(y, dtype=np.int32).copy()
        self.z = np.asarray(z, dtype=np.int8).copy()
        if self.lam.shape != (n,) or self.y.shape != (n, p) or self.z.shape != (n, p):
            raise ValueError("state arrays do not match the table")
        self.theta = [np.asarray(t, dtype=float).copy() for t in theta]
        for l, t in enumerate(self.theta):
            if t.shape != (table.fields[l].levels,):
                raise ValueError(f"theta[{l}] does not match field {table.fields[l].name!r}")
        self.beta = np.asarray(beta, dtype=float).copy()
        if self.beta.shape != (p,):
            raise ValueError("beta must hold one entry per field")
        self.sizes = np.bincount(self.lam, minlength=n).astype(np.int64)
        self.members: list[set[int]] = [set() for _ in range(n)]
        for g, j in enumerate(self.lam):
            self.members[j].add(g)
        self.free: list[int] = [j for j in range(n) if not self.members[j]]
        self.rng_pool = None  # batched-draw pool, owned by the proposal layer
        self.refresh_param_logs()

    @classmethod
    def init_singletons(cls, table: RecordTable, hp: Hyperparameters,
                        rng: np.random.Generator) -> "LinkageState":
        """Every record its own latent, y copied from the records, z = 0,
        theta from Dirichlet(mu), beta from Beta(a, b) (0 when b is inf)."""
        hp.validate_for(table)
        n = table.n_records
        theta = [rng.dirichlet(m) for m in hp.mu]
        beta = np.where(np.isinf(hp.b), 0.0,
                        rng.beta(hp.a, np.where(np.isinf(hp.b), 1.0, hp.b)))
        return cls(table, lam=np.arange(n), y=table.codes.copy(),
                   z=np.zeros((n, table.p), dtype=np.int8), theta=theta, beta=beta)

    @property
    def n_active(self) -> int:
        return self.table.n_records - len(self.free)

    def active_latents(self) -> np.ndarray:
        return np.flatnonzero(self.sizes > 0)

    def refresh_param_logs(self) -> None:
        """Recompute every cached log and lookup table; see the part refreshes.

        All caches live in the table's field-concatenated layout with
        per-field views sliced out of shared buffers, keeping the numpy call
        count flat in p. The plain-list copies exist for the proposal hot
        path: Python list indexing beats numpy scalar indexing by an order
        of magnitude there.
        """
        self.refresh_theta_logs()
        self.refresh_beta_logs()

    def refresh_theta_logs(self) -> None:
        """Recompute the theta-dependent caches (and the joint flag table).

        ``shifted_cum_theta`` holds every field's cumulative theta shifted up
        by its field index, with the last entry of each field pinned to an
        exact segment boundary, so one searchsorted call inverts all fields'
        cdfs at once.
        """
        table = self.table
        bounds = table.level_bounds
        th = np.concatenate(self.theta)
        self._theta_concat = th
        with np.errstate(divide="ignore"):
            lt = np.log(th)
        self.log_theta = [lt[s:e] for s, e in bounds]
        cc = np.cumsum(th)
        ends = table.level_ends
        carried = np.concatenate([[0.0], cc[ends[:-1]]])
        gcum = cc - np.repeat(carried, table.level_sizes)
        gcum += table.field_of_level
        gcum[ends] = np.arange(1, table.p + 1)
        self.shifted_cum_theta = gcum
        self._log_theta_concat = lt
        lt_list = lt.tolist()
        self.log_theta_list = [lt_list[s:e] for s, e in bounds]
        self._refresh_flag_prob()

    def refresh_beta_logs(self) -> None:
        """Recompute the beta-dependent caches (and the joint flag table).

        Assumes the theta caches are current; a direct theta edit needs
        :meth:`refresh_theta_logs` (or the full refresh) first.
        """
        with np.errstate(divide="ignore"):
            self.log_beta = np.log(self.beta)
            self.log1m_beta = np.log1p(-self.beta)
        self.log_beta_list = self.log_beta.tolist()
        self.log1m_beta_list = self.log1m_beta.tolist()
        self._refresh_flag_prob()

    def _refresh_flag_prob(self) -> None:
        """Rebuild flag_prob[l][v], the conditional probability that an
        agreeing cell with observed value v is flagged distorted:
        beta theta / (beta theta + 1 - beta).

        Also rebuilds the per-level log tables the proposal loops index
        instead of calling math.log per cell: log and log1p of flag_prob
        (zero-probability flags land on -inf, so impossible configurations
        propagate without branches) and dist_logp, the log density
        log(beta_l) + log(theta_lv) of a distorted cell holding value v.
        """
        table = self.table
        th = self._theta_concat
        with np.errstate(invalid="ignore"):
            brep = np.repeat(self.beta, table.level_sizes)
            num = brep * th
            den = num + 1.0 - brep
            fpc = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
        self.flag_prob_concat = fpc
        self.flag_prob = [fpc[s:e] for s, e in table.level_bounds]
        fp_list = fpc.tolist()
        bounds = table.level_bounds
        self.flag_prob_list = [fp_list[s:e] for s, e in bounds]
        with np.errstate(divide="ignore"):
            lfp = np.log(fpc)
            l1fp = np.log1p(-fpc)
            dlp = np.log(brep) + self._log_theta_concat
        lfp_list = lfp.tolist()
        l1fp_list = l1fp.tolist()
        dlp_list = dlp.tolist()
        self.log_flag_list = [lfp_list[s:e] for s, e in bounds]
        self.log1m_flag_list = [l1fp_list[s:e] for s, e in bounds]
        self.dist_logp_list = [dlp_list[s:e] for s, e in bounds]

    def check_structure(self) -> None:
        """Internal bookkeeping consistency; raises on violation."""
        n = self.table.n_records
        sizes = np.bincount(self.lam, minlength=n)
        if not np.array_equal(sizes, self.sizes):
            raise LinkageInvariantError("sizes cache out of sync")
        for j in range(n):
            if self.members[j] != {g for g in range(n) if self.lam[g] == j}:
                raise LinkageInvariantError("member sets out of sync")
        if sorted(self.free) != [j for j in range(n) if sizes[j] == 0]:
            raise LinkageInvariantError("free list out of sync")

    def check_coupling(self) -> None:
        """Every undistorted cell must copy its latent's value."""
        bad = (self.z == 0) & (self.table.codes != self.y[self.lam])
        if np.any(bad):
            g, l = np.argwhere(bad)[0]
            raise LinkageInvariantError(f"undistorted cell ({g}, {l}) disagrees with latent value")

    def clone(self) -> "LinkageState":
        return LinkageState(self.table, self.lam, self.y, self.z, self.theta, self.beta)
