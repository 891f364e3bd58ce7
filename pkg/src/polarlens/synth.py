"""Synthetic debates with planted sides, categories and engagement.

Users belong to a Majority (side 0) or Minority (side 1). Each user has a
favorite influencer category drawn from their side's category mix; a
retweet goes to their own side with probability ``cross_loyalty`` and to a
category that is the favorite with probability ``category_focus`` and
otherwise drawn from the side mix. Within (side, category) the influencer
is drawn proportionally to a log-normal engagement weight.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .influencers import CATEGORIES
from .ingest import ORIGINAL, QUOTE, REPLY, RETWEET, DebateDataset, ParseReport

__all__ = [
    "SynthConfig",
    "SynthDebate",
    "generate_debate",
    "generate_debate_pair",
    "generate_debate_family",
    "write_debate",
]

BALANCED_MIX = (1 / 6,) * 6
SIDE_NAMES = ("majority", "minority")


@dataclass(frozen=True)
class SynthConfig:
    debate_id: str = "synthetic"
    n_users: int = 10_000
    n_influencers: int = 300
    majority_fraction: float = 0.7
    cross_loyalty: float = 0.95
    category_mix_majority: tuple[float, ...] = BALANCED_MIX
    category_mix_minority: tuple[float, ...] = BALANCED_MIX
    category_focus: float = 0.7
    influencer_majority_fraction: float | None = None
    engagement_mu: float = 0.0
    engagement_sigma: float = 1.0
    mean_retweets: float = 8.0
    background_retweets: float = 0.2
    user_originals: float = 0.5
    influencer_originals: float = 40.0
    replies: float = 0.1
    quotes: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("category_mix_majority", "category_mix_minority"):
            mix = tuple(float(p) for p in getattr(self, name))
            object.__setattr__(self, name, mix)
            if len(mix) != 6 or min(mix) < 0 or abs(sum(mix) - 1) > 1e-12:
                raise ValueError(f"{name} must be 6 probabilities summing to 1")
        if self.n_influencers < 12 or self.n_users < 100:
            raise ValueError("need n_influencers >= 12 and n_users >= 100")
        if not 0 < self.majority_fraction < 1:
            raise ValueError("majority_fraction must lie in (0, 1)")
        for name in ("cross_loyalty", "category_focus"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mean_retweets < 1:
            raise ValueError("mean_retweets must be at least 1")

    @property
    def n_majority_influencers(self) -> int:
        frac = self.influencer_majority_fraction
        if frac is None:
            frac = self.majority_fraction
        return int(round(self.n_influencers * frac))

    @classmethod
    def from_dict(cls, data: dict) -> SynthConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> SynthConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["category_mix_majority"] = list(self.category_mix_majority)
        d["category_mix_minority"] = list(self.category_mix_minority)
        return d


@dataclass(frozen=True, eq=False)
class SynthDebate:
    """A generated dataset plus its ground truth."""

    config: SynthConfig
    dataset: DebateDataset
    user_ids: tuple[str, ...]
    user_side: np.ndarray
    user_favorite: np.ndarray
    influencer_ids: tuple[str, ...]
    influencer_side: np.ndarray
    influencer_category: np.ndarray
    influencer_weight: np.ndarray
    retweet_user: np.ndarray  # planted user -> influencer events, generator indices
    retweet_influencer: np.ndarray

    @property
    def planted_totals(self) -> dict[str, int]:
        counts = np.bincount(self.retweet_influencer, minlength=len(self.influencer_ids))
        return dict(zip(self.influencer_ids, counts.tolist()))

    def planted_counts(self):
        """Sparse user x influencer count matrix in generator order."""
        import scipy.sparse as sp
        m = sp.coo_matrix((np.ones(self.retweet_user.size, dtype=np.int64),
                           (self.retweet_user, self.retweet_influencer)),
                          shape=(len(self.user_ids), len(self.influencer_ids)))
        return m.tocsr()

    def true_sides(self) -> dict[str, int]:
        return dict(zip(self.user_ids, self.user_side.tolist()))

    def annotation_rows(self) -> list[dict]:
        return [
            {"account_id": acc, "category": CATEGORIES[c].value, "stance": SIDE_NAMES[s]}
            for acc, c, s in zip(self.influencer_ids, self.influencer_category.tolist(),
                                 self.influencer_side.tolist())
        ]

    def write_annotations(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["account_id", "category", "stance"])
            w.writeheader()
            w.writerows(self.annotation_rows())

    def write_truth(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["account_id", "true_side", "true_category"])
            for acc, s, c in zip(self.user_ids, self.user_side.tolist(), self.user_favorite.tolist()):
                w.writerow([acc, SIDE_NAMES[s], CATEGORIES[c].value])
            for acc, s, c in zip(self.influencer_ids, self.influencer_side.tolist(),
                                 self.influencer_category.tolist()):
                w.writerow([acc, SIDE_NAMES[s], CATEGORIES[c].value])


def _influencer_table(cfg, rng):
    n_inf = cfg.n_influencers
    n_maj = cfg.n_majority_influencers
    if n_maj < 1 or n_maj >= n_inf:
        raise ValueError("infeasible config: a side has no influencers")
    side = np.r_[np.zeros(n_maj, dtype=np.int8), np.ones(n_inf - n_maj, dtype=np.int8)]
    category = np.empty(n_inf, dtype=np.int8)
    for s in (0, 1):
        idx = np.flatnonzero(side == s)
        # cycle through categories so every side covers all six when it can
        category[rng.permutation(idx)] = np.arange(idx.size) % 6
    weight = rng.lognormal(cfg.engagement_mu, cfg.engagement_sigma, size=n_inf)
    return side, category, weight


def _pick_influencers(rng, side_of_event, cat_of_event, inf_side, inf_cat, inf_weight):
    out = np.empty(side_of_event.size, dtype=np.int64)
    for s in (0, 1):
        in_side = np.flatnonzero(inf_side == s)
        for c in range(6):
            sel = np.flatnonzero((side_of_event == s) & (cat_of_event == c))
            if sel.size == 0:
                continue
            pool = in_side[inf_cat[in_side] == c]
            if pool.size == 0:
                pool = in_side
            p = inf_weight[pool] / inf_weight[pool].sum()
            out[sel] = pool[rng.choice(pool.size, size=sel.size, p=p)]
    return out


def generate_debate(config: SynthConfig, user_sides=None, seed=None,
                    user_prefix: str = "u", influencer_prefix: str | None = None) -> SynthDebate:
    """Generate one debate; deterministic given the config seed (or ``seed``)."""
    cfg = config
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    n_users, n_inf = cfg.n_users, cfg.n_influencers
    if influencer_prefix is None:
        influencer_prefix = f"{cfg.debate_id}_i"

    inf_side, inf_cat, inf_weight = _influencer_table(cfg, rng)
    if user_sides is None:
        user_side = (rng.random(n_users) >= cfg.majority_fraction).astype(np.int8)
    else:
        user_side = np.asarray(user_sides, dtype=np.int8)
        if user_side.size != n_users:
            raise ValueError("user_sides length must equal n_users")
    mixes = np.array([cfg.category_mix_majority, cfg.category_mix_minority])
    cum = np.cumsum(mixes, axis=1)
    cum[:, -1] = 1.0

    def draw_category(sides):
        u = rng.random(sides.size)
        return (u[:, None] >= cum[sides][:, :5]).sum(axis=1).astype(np.int8)

    favorite = draw_category(user_side)

    # planted retweets of influencers
    n_rt = 1 + rng.poisson(cfg.mean_retweets - 1, size=n_users)
    rt_user = np.repeat(np.arange(n_users), n_rt)
    own = rng.random(rt_user.size) < cfg.cross_loyalty
    target_side = np.where(own, user_side[rt_user], 1 - user_side[rt_user]).astype(np.int8)
    focused = rng.random(rt_user.size) < cfg.category_focus
    cat = np.where(focused, favorite[rt_user], draw_category(user_side[rt_user])).astype(np.int8)
    rt_inf = _pick_influencers(rng, target_side, cat, inf_side, inf_cat, inf_weight)

    # background noise: user-to-user retweets, replies, quotes, originals
    n_bg = rng.poisson(cfg.background_retweets, size=n_users)
    bg_user = np.repeat(np.arange(n_users), n_bg)
    bg_target = rng.integers(0, n_users - 1, size=bg_user.size)
    bg_target += bg_target >= bg_user  # never self
    n_rep = rng.poisson(cfg.replies, size=n_users)
    rep_user = np.repeat(np.arange(n_users), n_rep)
    n_quo = rng.poisson(cfg.quotes, size=n_users)
    quo_user = np.repeat(np.arange(n_users), n_quo)
    quo_inf = rng.integers(0, n_inf, size=quo_user.size)
    n_uo = rng.poisson(cfg.user_originals, size=n_users)
    uo_user = np.repeat(np.arange(n_users), n_uo)
    n_io = 1 + rng.poisson(cfg.influencer_originals, size=n_inf)
    io_inf = np.repeat(np.arange(n_inf), n_io)

    # global account numbering: users then influencers
    U = n_users
    author = np.concatenate([rt_user, bg_user, rep_user, quo_user, uo_user, U + io_inf])
    kind = np.concatenate([
        np.full(rt_user.size, RETWEET), np.full(bg_user.size, RETWEET),
        np.full(rep_user.size, REPLY), np.full(quo_user.size, QUOTE),
        np.full(uo_user.size, ORIGINAL), np.full(io_inf.size, ORIGINAL),
    ]).astype(np.int8)
    target = np.concatenate([U + rt_inf, bg_target, np.full(rep_user.size + quo_user.size + uo_user.size
                                                           + io_inf.size, -1)])
    quoted = np.concatenate([np.full(rt_user.size + bg_user.size + rep_user.size, -1), U + quo_inf,
                             np.full(uo_user.size + io_inf.size, -1)])
    t0 = 1_635_000_000
    ts = t0 + rng.integers(0, 30 * 86_400, size=author.size)
    order = np.argsort(ts, kind="stable")
    author, kind, target, quoted, ts = author[order], kind[order], target[order], quoted[order], ts[order]

    user_ids = tuple(f"{user_prefix}{i:07d}" for i in range(n_users))
    influencer_ids = tuple(f"{influencer_prefix}{j:04d}" for j in range(n_inf))
    all_ids = user_ids + influencer_ids

    # renumber accounts by first appearance so a parse round trip is exact
    seq = np.stack([author, target, quoted], axis=1).ravel()
    seq = seq[seq >= 0]
    uniq, first = np.unique(seq, return_index=True)
    appearance = uniq[np.argsort(first, kind="stable")]
    remap = np.full(len(all_ids), -1, dtype=np.int64)
    remap[appearance] = np.arange(appearance.size)

    def rm(a):
        return np.where(a >= 0, remap[np.maximum(a, 0)], -1).astype(np.int32)

    dataset = DebateDataset(
        debate_id=cfg.debate_id,
        tweet_ids=tuple(f"{cfg.debate_id}_t{i:09d}" for i in range(author.size)),
        kind=kind,
        author=rm(author),
        target=rm(target),
        quoted=rm(quoted),
        timestamp=ts.astype(np.int64),
        accounts=tuple(all_ids[i] for i in appearance.tolist()),
        report=ParseReport(lines=int(author.size)),
    )
    return SynthDebate(
        config=cfg, dataset=dataset, user_ids=user_ids, user_side=user_side, user_favorite=favorite,
        influencer_ids=influencer_ids, influencer_side=inf_side, influencer_category=inf_cat,
        influencer_weight=inf_weight, retweet_user=rt_user, retweet_influencer=rt_inf,
    )


def generate_debate_family(configs, cross_debate_consistency: float, seed: int = 0) -> list[SynthDebate]:
    """Several debates over one user universe, each tied to the first one.

    A user keeps their side from the first debate with probability
    ``cross_debate_consistency`` and flips otherwise, independently per
    debate. Side shares of the later debates therefore follow from the
    first debate rather than from their own ``majority_fraction``.
    """
    configs = list(configs)
    if len(configs) < 2:
        raise ValueError("need at least two debate configs")
    n = configs[0].n_users
    if any(c.n_users != n for c in configs):
        raise ValueError("paired debates must share n_users")
    if len({c.debate_id for c in configs}) != len(configs):
        raise ValueError("paired debates need distinct debate ids")
    if not 0 <= cross_debate_consistency <= 1:
        raise ValueError("cross_debate_consistency must lie in [0, 1]")
    children = np.random.SeedSequence(seed).spawn(len(configs) + 1)
    side_rng = np.random.default_rng(children[0])
    base = (side_rng.random(n) >= configs[0].majority_fraction).astype(np.int8)
    debates = []
    for k, (cfg, child) in enumerate(zip(configs, children[1:])):
        if k == 0:
            sides = base
        else:
            keep = side_rng.random(n) < cross_debate_consistency
            sides = np.where(keep, base, 1 - base).astype(np.int8)
        sub_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        debates.append(generate_debate(cfg, user_sides=sides, seed=sub_seed))
    return debates


def generate_debate_pair(config_a: SynthConfig, config_b: SynthConfig,
                         cross_debate_consistency: float, seed: int = 0) -> tuple[SynthDebate, SynthDebate]:
    """Two debates sharing users; see :func:`generate_debate_family`."""
    a, b = generate_debate_family([config_a, config_b], cross_debate_consistency, seed)
    return a, b


def write_debate(debate: SynthDebate, out_dir) -> dict:
    """Write records, annotations and truth tables; return their paths."""
    from .ingest import write_jsonl

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    did = debate.config.debate_id
    paths = {
        "records": out / f"{did}.jsonl",
        "annotations": out / f"{did}_annotations.csv",
        "truth": out / f"{did}_truth.csv",
    }
    with open(paths["records"], "w", encoding="utf-8") as fh:
        write_jsonl(debate.dataset, fh)
    debate.write_annotations(paths["annotations"])
    debate.write_truth(paths["truth"])
    return paths
