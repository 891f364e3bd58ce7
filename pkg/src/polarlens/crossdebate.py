"""Debate-level and cross-debate analyses built on scores and registries."""

from __future__ import annotations

import csv
import enum
import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .influencers import CATEGORIES, Category, InfluencerRegistry
from .ingest import DebateDataset
from .latent import IdeologyScores, InteractionMatrix
from .stats import (BootstrapEstimate, TestResult, bootstrap_median_bca, gini, gini_rows,
                    ks_two_sample, wilcoxon_rank_sum)

__all__ = [
    "Group",
    "Labeling",
    "CategoryDistributions",
    "ConditionalMatrix",
    "CategoryNetwork",
    "JointSample",
    "GiniSummary",
    "engagement_distributions",
    "pairwise_ks",
    "null_model_compare",
    "user_category_gini",
    "assign_groups",
    "joint_ideology",
    "conditional_matrix",
    "engagement_by_ideology",
    "category_network",
]

QUANTILES = (0.05, 0.5, 0.95)


class Group(str, enum.Enum):
    Majority = "Majority"
    Minority = "Minority"


@dataclass(frozen=True)
class Labeling:
    """Group labels of one debate; users inside the dead zone are absent."""

    labels: dict[str, Group]
    threshold: float = 0.0

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, account):
        return self.labels[account]

    def get(self, account, default=None):
        return self.labels.get(account, default)

    def count(self, group: Group) -> int:
        return sum(1 for g in self.labels.values() if g is group)


# -- engagement by category -----------------------------------------------------

@dataclass(frozen=True)
class CategoryDistributions:
    samples: dict[Category, np.ndarray]
    quantiles: dict[Category, tuple[float, ...]]
    empty: tuple[Category, ...]


def engagement_distributions(registry: InfluencerRegistry) -> CategoryDistributions:
    """Retweets received per influencer, grouped by category, with 5/50/95% quantiles."""
    samples, quants, empty = {}, {}, []
    for cat in CATEGORIES:
        x = np.array([p.retweets_received for p in registry if p.category is cat], dtype=float)
        samples[cat] = x
        if x.size:
            quants[cat] = tuple(float(q) for q in np.quantile(x, QUANTILES))
        else:
            quants[cat] = (math.nan,) * len(QUANTILES)
            empty.append(cat)
    return CategoryDistributions(samples, quants, tuple(empty))


def pairwise_ks(dists: CategoryDistributions) -> dict[tuple[Category, Category], TestResult]:
    """KS test for every pair of non-empty categories."""
    out = {}
    for a, b in itertools.combinations(CATEGORIES, 2):
        if dists.samples[a].size and dists.samples[b].size:
            out[(a, b)] = ks_two_sample(dists.samples[a], dists.samples[b])
    return out


def randomize_labels(labels: np.ndarray, mode: str, rng) -> np.ndarray:
    if mode == "reshuffle":
        return rng.permutation(labels)
    if mode == "uniform":
        return rng.integers(0, len(CATEGORIES), size=labels.size)
    raise ValueError(f"unknown null model {mode!r}")


def null_model_compare(registry: InfluencerRegistry, mode: str = "reshuffle", seed: int = 0,
                       n_rep: int = 100) -> dict[Category, TestResult]:
    """Compare each category's retweet counts with label-randomized counterparts.

    ``reshuffle`` permutes the observed labels (category sizes kept);
    ``uniform`` draws each label with probability 1/6. The randomized
    samples of all ``n_rep`` replicates are pooled before a two-sided
    Wilcoxon rank-sum test against the observed sample. Categories with an
    empty observed or pooled sample are omitted.
    """
    rng = np.random.default_rng(seed)
    retweets = np.array([p.retweets_received for p in registry], dtype=float)
    labels = np.array([CATEGORIES.index(p.category) for p in registry], dtype=np.int64)
    pooled = {c: [] for c in range(len(CATEGORIES))}
    for _ in range(n_rep):
        fake = randomize_labels(labels, mode, rng)
        for c in range(len(CATEGORIES)):
            pooled[c].append(retweets[fake == c])
    out = {}
    for c, cat in enumerate(CATEGORIES):
        observed = retweets[labels == c]
        randomized = np.concatenate(pooled[c]) if pooled[c] else np.empty(0)
        if observed.size and randomized.size:
            out[cat] = wilcoxon_rank_sum(observed, randomized)
    return out


# -- user / debate Gini -----------------------------------------------------------

@dataclass(frozen=True)
class GiniSummary:
    user_ids: tuple[str, ...]
    user_gini: np.ndarray
    debate_gini: float
    median: float
    q1: float
    q3: float
    category_totals: dict[Category, int]


def _category_codes(dataset: DebateDataset, registry: InfluencerRegistry) -> np.ndarray:
    codes = np.full(dataset.n_accounts, -1, dtype=np.int64)
    index = dataset.account_index
    for p in registry:
        i = index.get(p.account_id)
        if i is not None:
            codes[i] = CATEGORIES.index(p.category)
    return codes


def _user_category_counts(dataset, registry, include_quotes=False):
    users, sources = dataset.retweet_pairs(include_quotes)
    cats = _category_codes(dataset, registry)[sources]
    keep = cats >= 0
    return users[keep], cats[keep]


def user_category_gini(dataset: DebateDataset, registry: InfluencerRegistry,
                       min_retweets: int = 6) -> GiniSummary:
    """Gini index of category frequencies per user and for the whole debate.

    Users qualify with at least ``min_retweets`` retweets to registry
    influencers. The debate-level index uses the total retweets each
    category received from everyone.
    """
    users, cats = _user_category_counts(dataset, registry)
    n = dataset.n_accounts
    counts = sp.coo_matrix((np.ones(users.size), (users, cats)), shape=(n, len(CATEGORIES))).tocsr()
    totals = np.asarray(counts.sum(axis=1)).ravel()
    rows = np.flatnonzero(totals >= min_retweets)
    per_user = gini_rows(counts[rows].toarray()) if rows.size else np.empty(0)
    cat_totals = np.bincount(cats, minlength=len(CATEGORIES))
    debate = gini(cat_totals) if cat_totals.sum() > 0 else math.nan
    if per_user.size:
        q1, med, q3 = (float(v) for v in np.quantile(per_user, [0.25, 0.5, 0.75]))
    else:
        q1 = med = q3 = math.nan
    return GiniSummary(
        user_ids=tuple(dataset.accounts[i] for i in rows),
        user_gini=per_user,
        debate_gini=debate,
        median=med, q1=q1, q3=q3,
        category_totals={c: int(v) for c, v in zip(CATEGORIES, cat_totals)},
    )


# -- groups and persistence -------------------------------------------------------

def _user_scores(scores) -> Mapping[str, float]:
    return scores.user_scores if isinstance(scores, IdeologyScores) else scores


def assign_groups(scores, threshold: float = 0.0) -> Labeling:
    """Majority below ``-threshold``, Minority above ``+threshold``, others unlabeled."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    labels = {}
    for acc, s in _user_scores(scores).items():
        if s < -threshold:
            labels[acc] = Group.Majority
        elif s > threshold:
            labels[acc] = Group.Minority
    return Labeling(labels, threshold)


@dataclass(frozen=True)
class JointSample:
    account_ids: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray
    histogram: np.ndarray
    edges: np.ndarray
    n_shared: int


def _balance(ids, values, rng):
    neg = np.flatnonzero(values < 0)
    pos = np.flatnonzero(values > 0)
    big, small = (neg, pos) if neg.size >= pos.size else (pos, neg)
    if big.size == small.size:
        return ids
    drop = rng.choice(big, size=big.size - small.size, replace=False)
    keep = np.ones(ids.size, dtype=bool)
    keep[drop] = False
    return ids[keep]


def joint_ideology(scores_x, scores_y, seed: int = 0, bins: int = 100) -> JointSample:
    """Paired scores of users present in both debates, balanced by downsampling.

    The larger side of the x debate is first downsampled without
    replacement to the size of the smaller side; the same is then done on
    the y debate among the surviving users. Users at exactly 0 are kept
    and never dropped.
    """
    sx, sy = _user_scores(scores_x), _user_scores(scores_y)
    shared = np.array(sorted(set(sx) & set(sy)), dtype=object)
    if shared.size == 0:
        raise ValueError("no users scored in both debates")
    rng = np.random.default_rng(seed)
    xs = np.array([sx[a] for a in shared])
    ids = _balance(np.arange(shared.size), xs, rng)
    ys = np.array([sy[a] for a in shared[ids]])
    ids = _balance(ids, ys, rng)
    x = np.array([sx[a] for a in shared[ids]])
    y = np.array([sy[a] for a in shared[ids]])
    edges = np.linspace(-1.0, 1.0, bins + 1)
    hist, _, _ = np.histogram2d(x, y, bins=[edges, edges])
    return JointSample(tuple(shared[ids].tolist()), x, y, hist, edges, int(shared.size))


@dataclass(frozen=True)
class ConditionalMatrix:
    group: Group
    debates: tuple[str, ...]
    entries: dict[tuple[str, str], float]
    support: dict[tuple[str, str], int]
    undefined: tuple[tuple[str, str], ...] = ()

    def as_array(self) -> np.ndarray:
        k = len(self.debates)
        out = np.full((k, k), np.nan)
        for i, a in enumerate(self.debates):
            for j, b in enumerate(self.debates):
                out[i, j] = self.entries[(a, b)]
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "from_debate", "to_debate", "fraction", "support"])
            for (a, b), v in self.entries.items():
                w.writerow([self.group.value, a, b, repr(v), self.support[(a, b)]])


def conditional_matrix(labelings: Mapping[str, Labeling | Mapping], group: Group) -> ConditionalMatrix:
    """Share of ``group`` members in one debate who hold the same label in another.

    Entry ``(A, B)`` divides the users in ``group`` in both A and B by the
    users in ``group`` in A that carry any label in B. Empty denominators
    yield NaN and are listed in ``undefined``.
    """
    group = Group(group)
    if len(labelings) < 2:
        raise ValueError("need at least two debates")
    debates = tuple(labelings)
    lab = {d: (l.labels if isinstance(l, Labeling) else dict(l)) for d, l in labelings.items()}
    entries, support, undefined = {}, {}, []
    for a in debates:
        members = [u for u, g in lab[a].items() if g == group]
        for b in debates:
            in_b = [lab[b][u] for u in members if u in lab[b]]
            den = len(in_b)
            support[(a, b)] = den
            if den == 0:
                entries[(a, b)] = math.nan
                undefined.append((a, b))
            else:
                entries[(a, b)] = sum(1 for g in in_b if g == group) / den
    return ConditionalMatrix(group, debates, entries, support, tuple(undefined))


# -- engagement vs ideology ---------------------------------------------------------

def engagement_by_ideology(registry: InfluencerRegistry, influencer_scores, matrix: InteractionMatrix,
                           n_boot: int = 10000, seed: int = 0) -> dict[Group, dict[str, BootstrapEstimate]]:
    """BCa medians of retweets received and distinct retweeters per ideological side.

    Influencers are split by the sign of their score; distinct retweeters
    are the nonzero entries of the influencer's matrix column.
    """
    if isinstance(influencer_scores, IdeologyScores):
        influencer_scores = influencer_scores.influencer_scores
    csc = matrix.entries.tocsc()
    retweeters = dict(zip(matrix.col_ids, np.diff(csc.indptr).tolist()))
    ss = np.random.SeedSequence(seed)
    seeds = iter(ss.generate_state(4))
    out = {}
    for group, sign in ((Group.Majority, -1), (Group.Minority, 1)):
        members = [p for p in registry
                   if p.account_id in influencer_scores and np.sign(influencer_scores[p.account_id]) == sign]
        if len(members) < 2:
            raise ValueError(f"{group.value} side has fewer than 2 scored influencers")
        rts = np.array([p.retweets_received for p in members], dtype=float)
        users = np.array([retweeters.get(p.account_id, 0) for p in members], dtype=float)
        out[group] = {
            "retweets": bootstrap_median_bca(rts, n_boot=n_boot, seed=int(next(seeds))),
            "retweeters": bootstrap_median_bca(users, n_boot=n_boot, seed=int(next(seeds))),
        }
    return out


# -- category networks --------------------------------------------------------------

@dataclass(frozen=True)
class CategoryNetwork:
    debate_id: str
    side: Group
    node_weights: dict[Category, int]
    edge_weights: dict[frozenset, int]
    retweet_shares: dict[Category, float] = field(default_factory=dict)
    n_users: int = 0

    def edge_rows(self):
        for a, b in itertools.combinations(CATEGORIES, 2):
            w = self.edge_weights.get(frozenset((a, b)), 0)
            if w:
                yield a.value, b.value, w

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["cat_a", "cat_b", "weight"])
            w.writerows(self.edge_rows())


def category_network(dataset: DebateDataset, registry: InfluencerRegistry, labels: Labeling,
                     side: Group) -> CategoryNetwork:
    """Co-retweet network of influencer categories among users of one side.

    Node weight: distinct users of the side who retweeted the category at
    least once. Edge weight: distinct users who retweeted both categories.
    Also reports each category's share of the side's retweets to influencers.
    """
    side = Group(side)
    labels = labels.labels if isinstance(labels, Labeling) else labels
    index = dataset.account_index
    on_side = np.zeros(dataset.n_accounts, dtype=bool)
    for acc, g in labels.items():
        i = index.get(acc)
        if g == side and i is not None:
            on_side[i] = True
    if not on_side.any():
        raise ValueError(f"no users labeled {side.value}")
    users, cats = _user_category_counts(dataset, registry)
    keep = on_side[users]
    users, cats = users[keep], cats[keep]
    counts = sp.coo_matrix((np.ones(users.size), (users, cats)),
                           shape=(dataset.n_accounts, len(CATEGORIES))).tocsr()
    touched = (counts > 0).astype(np.int64)
    co = (touched.T @ touched).toarray()
    nodes = {c: int(co[i, i]) for i, c in enumerate(CATEGORIES)}
    edges = {}
    for i, j in itertools.combinations(range(len(CATEGORIES)), 2):
        if co[i, j]:
            edges[frozenset((CATEGORIES[i], CATEGORIES[j]))] = int(co[i, j])
    totals = np.bincount(cats, minlength=len(CATEGORIES))
    shares = {c: (float(t / totals.sum()) if totals.sum() else math.nan) for c, t in zip(CATEGORIES, totals)}
    return CategoryNetwork(dataset.debate_id, side, nodes, edges, shares, int(np.unique(users).size))
