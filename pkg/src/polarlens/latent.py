"""Latent ideology: user x influencer retweet matrix and correspondence analysis."""

from __future__ import annotations

import csv
import logging
import warnings
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from threadpoolctl import threadpool_limits

from .ingest import DebateDataset

__all__ = [
    "DegenerateMatrixError",
    "ConvergenceError",
    "InteractionMatrix",
    "CAResult",
    "IdeologyScores",
    "build_interaction_matrix",
    "correspondence_analysis",
    "rescale_and_orient",
    "influencer_ideology",
    "estimate_ideology",
]

log = logging.getLogger(__name__)


class DegenerateMatrixError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last change {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Sparse retweet counts, rows are users and columns influencers."""

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    entries: sp.csr_matrix
    dropped_columns: tuple[str, ...] = ()

    @property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.entries.sum(axis=1)).ravel()

    @property
    def col_sums(self) -> np.ndarray:
        return np.asarray(self.entries.sum(axis=0)).ravel()

    @property
    def shape(self):
        return self.entries.shape

    @classmethod
    def from_dense(cls, counts, row_ids=None, col_ids=None) -> InteractionMatrix:
        m = sp.csr_matrix(np.asarray(counts))
        m.eliminate_zeros()
        rows = tuple(row_ids) if row_ids is not None else tuple(f"r{i}" for i in range(m.shape[0]))
        cols = tuple(col_ids) if col_ids is not None else tuple(f"c{j}" for j in range(m.shape[1]))
        return cls(rows, cols, m)


def build_interaction_matrix(dataset: DebateDataset, influencer_set: Iterable,
                             min_row_sum: int = 2, include_quotes: bool = False) -> InteractionMatrix:
    """Count retweets of each user to each influencer.

    Users with fewer than ``min_row_sum`` retweets to the influencers are
    dropped, then influencers left without any retweet are dropped too
    (listed in ``dropped_columns``). Influencers can appear as rows.
    """
    ids = []
    for item in influencer_set:
        ids.append(getattr(item, "account_id", item))
    index = dataset.account_index
    col_ids = sorted(set(ids))
    col_of = np.full(dataset.n_accounts, -1, dtype=np.int64)
    for j, acc in enumerate(col_ids):
        i = index.get(acc)
        if i is not None:
            col_of[i] = j

    users, sources = dataset.retweet_pairs(include_quotes)
    cols = col_of[sources]
    keep = cols >= 0
    users, cols = users[keep], cols[keep]
    if users.size == 0:
        raise DegenerateMatrixError("matrix degenerate after filtering: no retweets to influencers")

    row_accounts, rows = np.unique(users, return_inverse=True)
    m = sp.coo_matrix((np.ones(rows.size, dtype=np.int64), (rows, cols)),
                      shape=(row_accounts.size, len(col_ids))).tocsr()
    m.sum_duplicates()
    rsum = np.asarray(m.sum(axis=1)).ravel()
    keep_rows = np.flatnonzero(rsum >= min_row_sum)
    m = m[keep_rows]
    csum = np.asarray(m.sum(axis=0)).ravel()
    keep_cols = np.flatnonzero(csum > 0)
    dropped = tuple(col_ids[j] for j in np.flatnonzero(csum == 0))
    if dropped:
        log.info("%s: dropped %d influencer column(s) with no retained retweeters",
                 dataset.debate_id, len(dropped))
    m = m[:, keep_cols].tocsr()
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise DegenerateMatrixError("matrix degenerate after filtering")
    acc = dataset.accounts
    return InteractionMatrix(
        row_ids=tuple(acc[i] for i in row_accounts[keep_rows]),
        col_ids=tuple(col_ids[j] for j in keep_cols),
        entries=m,
        dropped_columns=dropped,
    )


@dataclass(frozen=True)
class CAResult:
    row_coords: np.ndarray
    singular_value: float
    u: np.ndarray
    v: np.ndarray
    iterations: int
    residual: float


class _Residuals:
    """Implicit standardized-residual operator ``D_r^-1/2 (P - r c^T) D_c^-1/2``."""

    def __init__(self, m: sp.csr_matrix):
        total = float(m.sum())
        p = (m / total).tocsr()
        self.p = p
        self.pt = p.T.tocsr()
        self.r = np.asarray(p.sum(axis=1)).ravel()
        self.c = np.asarray(p.sum(axis=0)).ravel()
        self.sr = np.sqrt(self.r)
        self.sc = np.sqrt(self.c)

    def matvec(self, v):
        w = v / self.sc
        return (self.p @ w - self.r * self.sc.dot(v)) / self.sr

    def rmatvec(self, u):
        w = u / self.sr
        return (self.pt @ w - self.c * self.sr.dot(u)) / self.sc


def correspondence_analysis(matrix, tol: float = 1e-10, max_iter: int = 10_000,
                            seed: int = 0) -> CAResult:
    """First standard row coordinates of a correspondence analysis.

    The leading right singular vector of the residual matrix is found by
    Lanczos iteration on ``S^T S`` with full reorthogonalization; ``S`` is
    only ever applied through sparse products. Iteration stops once two
    successive Ritz vectors agree to ``tol`` in max-norm, or when the
    Krylov space is exhausted (the answer is then exact).

    Raises
    ------
    ConvergenceError
        If ``max_iter`` Lanczos steps pass without convergence.
    """
    m = matrix.entries if isinstance(matrix, InteractionMatrix) else sp.csr_matrix(matrix)
    m = sp.csr_matrix(m, dtype=np.float64)
    if m.nnz == 0 or m.sum() <= 0:
        raise DegenerateMatrixError("zero matrix")
    if (m.data < 0).any():
        raise ValueError("counts must be nonnegative")
    op = _Residuals(m)
    if (op.r <= 0).any() or (op.c <= 0).any():
        raise DegenerateMatrixError("empty row or column")
    k = m.shape[1]
    if k < 2 or m.shape[0] < 2:
        raise DegenerateMatrixError("need at least two rows and two columns")

    # bitwise reproducibility: keep BLAS single-threaded inside the solver
    with threadpool_limits(limits=1):
        v, sigma, steps, change = _lanczos_top(op, k, tol, max_iter, seed)
        su = op.matvec(v)
        sigma = float(np.linalg.norm(su))
        # singular values of S lie in [0, 1]; anything this small is rounding noise
        if sigma <= 1e-12:
            raise DegenerateMatrixError("residual matrix is zero: rows are proportional")
        u = su / sigma
        residual = float(np.max(np.abs(op.rmatvec(u) - sigma * v)))
    coords = u / op.sr
    return CAResult(coords, sigma, u, v, steps, residual)


def _lanczos_top(op, k, tol, max_iter, seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(k)
    # the trivial direction sqrt(c) is in the null space of S
    q -= op.sc * op.sc.dot(q)
    q /= np.linalg.norm(q)
    basis = np.empty((k, min(k, max_iter) + 1))
    alphas, betas = [], []
    prev = None
    change = np.inf
    for j in range(min(k, max_iter)):
        basis[:, j] = q
        w = op.rmatvec(op.matvec(q))
        alpha = float(q.dot(w))
        Q = basis[:, :j + 1]
        w -= Q @ (Q.T @ w)
        w -= Q @ (Q.T @ w)
        w -= op.sc * op.sc.dot(w)
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        T = np.diag(alphas)
        if j:
            T += np.diag(betas, 1) + np.diag(betas, -1)
        evals, evecs = np.linalg.eigh(T)
        ritz = Q @ evecs[:, -1]
        ritz /= np.linalg.norm(ritz)
        if prev is not None:
            if ritz.dot(prev) < 0:
                ritz = -ritz
            change = float(np.max(np.abs(ritz - prev)))
        scale = max(abs(evals[-1]), 1e-300)
        if change < tol or beta <= 1e-13 * scale or j == k - 1:
            return ritz, float(np.sqrt(max(evals[-1], 0.0))), j + 1, change
        prev = ritz
        betas.append(beta)
        q = w / beta
    raise ConvergenceError(f"no convergence after {max_iter} Lanczos steps", change)


@dataclass(frozen=True)
class IdeologyScores:
    debate_id: str
    user_scores: dict[str, float]
    influencer_scores: dict[str, float] = field(default_factory=dict)
    orientation_flipped: bool = False
    singular_value_1: float = float("nan")
    unscored_influencers: tuple[str, ...] = ()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["account_id", "score", "role"])
            for acc, s in self.user_scores.items():
                w.writerow([acc, repr(float(s)), "user"])
            for acc, s in self.influencer_scores.items():
                w.writerow([acc, repr(float(s)), "influencer"])

    @classmethod
    def from_csv(cls, path, debate_id: str = "") -> IdeologyScores:
        users, infl = {}, {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                target = users if row["role"] == "user" else infl
                target[row["account_id"]] = float(row["score"])
        return cls(debate_id, users, infl)


def rescale_and_orient(raw_coords) -> tuple[np.ndarray, bool]:
    """Map coordinates affinely onto [-1, 1] and put the larger side at -1.

    Returns the scores and whether they were negated. Zeros count for
    neither side; an exact tie keeps the unflipped sign with a warning.
    """
    x = np.asarray(raw_coords, dtype=float)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise ValueError("no ideological axis: coordinates are constant")
    s = 2.0 * (x - lo) / (hi - lo) - 1.0
    s[x == lo] = -1.0
    s[x == hi] = 1.0
    pos, neg = np.count_nonzero(s > 0), np.count_nonzero(s < 0)
    if pos == neg:
        warnings.warn("orientation tie: equal counts on both sides, keeping sign", stacklevel=2)
    flipped = pos > neg
    return (-s if flipped else s), bool(flipped)


def influencer_ideology(user_scores, matrix: InteractionMatrix) -> tuple[dict[str, float], tuple[str, ...]]:
    """Median score of each influencer's distinct retweeters.

    ``user_scores`` is either an array aligned with the matrix rows or a
    mapping from account id. Returns the scores and the influencers that
    had no scored retweeter.
    """
    if isinstance(user_scores, dict):
        x = np.array([user_scores.get(r, np.nan) for r in matrix.row_ids])
    else:
        x = np.asarray(user_scores, dtype=float)
    csc = matrix.entries.tocsc()
    scores, missing = {}, []
    for j, acc in enumerate(matrix.col_ids):
        rows = csc.indices[csc.indptr[j]:csc.indptr[j + 1]]
        vals = x[rows]
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            missing.append(acc)
        else:
            scores[acc] = float(np.median(vals))
    return scores, tuple(missing)


def estimate_ideology(dataset: DebateDataset, influencer_set, tol: float = 1e-10,
                      max_iter: int = 10_000, seed: int = 0,
                      include_quotes: bool = False) -> tuple[IdeologyScores, InteractionMatrix]:
    """Matrix build, correspondence analysis, rescaling and influencer medians in one call."""
    matrix = build_interaction_matrix(dataset, influencer_set, include_quotes=include_quotes)
    ca = correspondence_analysis(matrix, tol=tol, max_iter=max_iter, seed=seed)
    if ca.residual >= 10 * tol:
        log.warning("%s: CA residual %.2e above 10*tol", dataset.debate_id, ca.residual)
    scores, flipped = rescale_and_orient(ca.row_coords)
    infl, missing = influencer_ideology(scores, matrix)
    result = IdeologyScores(
        debate_id=dataset.debate_id,
        user_scores=dict(zip(matrix.row_ids, scores.tolist())),
        influencer_scores=infl,
        orientation_flipped=flipped,
        singular_value_1=ca.singular_value,
        unscored_influencers=missing,
    )
    return result, matrix
