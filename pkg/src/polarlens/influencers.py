"""Influencer selection and annotation registry."""

from __future__ import annotations

import csv
import enum
import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import ActivityTable

__all__ = [
    "Category",
    "Stance",
    "AnnotationError",
    "InfluencerProfile",
    "InfluencerRegistry",
    "retweet_cut",
    "select_influencers",
    "load_annotations",
    "top_k_by_retweets",
]


class Category(str, enum.Enum):
    Activist = "Activist"
    OrgNGO = "OrgNGO"
    Media = "Media"
    Politics = "Politics"
    PrivateIndividual = "PrivateIndividual"
    Other = "Other"


CATEGORIES = tuple(Category)


class Stance(str, enum.Enum):
    MajorityAligned = "majority"
    MinorityAligned = "minority"
    Unlabeled = "unlabeled"


EXCLUDED = "EXCLUDED"


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class InfluencerProfile:
    account_id: str
    category: Category
    stance: Stance
    retweets_received: int
    original_tweets: int


@dataclass(frozen=True)
class InfluencerRegistry:
    debate_id: str
    profiles: tuple[InfluencerProfile, ...]
    excluded: frozenset[str] = frozenset()
    unannotated: tuple[str, ...] = ()
    by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [p.account_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate influencer in registry")
        if self.excluded.intersection(ids):
            raise ValueError("an excluded account also has a profile")
        object.__setattr__(self, "by_id", {p.account_id: p for p in self.profiles})

    def __len__(self):
        return len(self.profiles)

    def __iter__(self):
        return iter(self.profiles)

    @property
    def account_ids(self) -> list[str]:
        return [p.account_id for p in self.profiles]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["account_id", "category", "stance", "retweets_received", "original_tweets"])
            for p in self.profiles:
                w.writerow([p.account_id, p.category.value, p.stance.value,
                            p.retweets_received, p.original_tweets])


def _top_with_ties(values: np.ndarray, share: float) -> np.ndarray:
    """Indices of the top ``ceil(share * n)`` entries plus anything tied with the last one."""
    n = values.size
    k = max(1, math.ceil(share * n - 1e-9))
    cutoff = np.partition(values, n - k)[n - k]
    return np.flatnonzero(values >= cutoff)


def retweet_cut(activity: ActivityTable, retweet_quantile: float = 0.99) -> set[str]:
    """Accounts at or above the nearest-rank ``retweet_quantile`` of retweets received."""
    if len(activity) == 0:
        raise ValueError("no accounts")
    if not 0 < retweet_quantile < 1:
        raise ValueError("retweet_quantile must lie in (0, 1)")
    idx = _top_with_ties(np.asarray(activity.retweets_received), 1 - retweet_quantile)
    return {activity.account_ids[i] for i in idx}


def select_influencers(activity, retweet_quantile: float = 0.99,
                       producer_share: float = 0.50) -> set[str]:
    """Top retweeted accounts, restricted to the most prolific original posters among them.

    The first cut keeps the top ``1 - retweet_quantile`` share of accounts by
    retweets received; the second keeps the top ``producer_share`` of that set
    by original tweets. Shares are rounded up and ties at either cutoff are
    kept, so the result can be larger than the nominal size.
    """
    if not isinstance(activity, ActivityTable):
        activity = ActivityTable.from_stats(activity)
    if not 0 < producer_share <= 1:
        raise ValueError("producer_share must lie in (0, 1]")
    if len(activity) == 0:
        raise ValueError("no accounts")
    if not 0 < retweet_quantile < 1:
        raise ValueError("retweet_quantile must lie in (0, 1)")
    first = _top_with_ties(np.asarray(activity.retweets_received), 1 - retweet_quantile)
    second = _top_with_ties(np.asarray(activity.original_tweets)[first], producer_share)
    return {activity.account_ids[i] for i in first[second]}


def _read_table(table):
    if isinstance(table, (str, Path)):
        with open(table, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    return [dict(r) for r in table]


def load_annotations(table, selection: Iterable[str], activity=None,
                     debate_id: str = "") -> InfluencerRegistry:
    """Attach category and stance annotations to a selected influencer set.

    ``table`` is a CSV path or an iterable of mappings with keys
    ``account_id``, ``category``, ``stance``. Rows labeled ``EXCLUDED`` move
    the account to ``registry.excluded``; selected accounts missing from the
    table end up in ``registry.unannotated`` and get no profile.
    """
    rows = _read_table(table)
    selection = set(selection)
    if activity is not None and not isinstance(activity, ActivityTable):
        activity = ActivityTable.from_stats(activity)
    pos = {a: i for i, a in enumerate(activity.account_ids)} if activity is not None else {}

    labels = {}
    for lineno, row in enumerate(rows, start=2):
        acc = (row.get("account_id") or "").strip()
        cat = (row.get("category") or "").strip()
        stance = (row.get("stance") or "").strip()
        if not acc:
            raise AnnotationError(f"row {lineno}: missing account_id")
        if cat != EXCLUDED and cat not in Category.__members__:
            raise AnnotationError(f"row {lineno} ({acc}): unknown category {cat!r}")
        if cat != EXCLUDED:
            try:
                Stance(stance.lower())
            except ValueError:
                raise AnnotationError(f"row {lineno} ({acc}): unknown stance {stance!r}") from None
        if acc in labels:
            raise AnnotationError(f"row {lineno}: duplicate account_id {acc!r}")
        labels[acc] = (cat, stance.lower())

    profiles, excluded, missing = [], set(), []
    for acc in sorted(selection):
        if acc not in labels:
            missing.append(acc)
            continue
        cat, stance = labels[acc]
        if cat == EXCLUDED:
            excluded.add(acc)
            continue
        i = pos.get(acc)
        profiles.append(InfluencerProfile(
            account_id=acc,
            category=Category[cat],
            stance=Stance(stance),
            retweets_received=int(activity.retweets_received[i]) if i is not None else 0,
            original_tweets=int(activity.original_tweets[i]) if i is not None else 0,
        ))
    return InfluencerRegistry(debate_id, tuple(profiles), frozenset(excluded), tuple(missing))


def top_k_by_retweets(registry: InfluencerRegistry, k: int = 300) -> list[InfluencerProfile]:
    """The ``k`` most retweeted profiles, descending, ties broken by account id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ranked = sorted(registry.profiles, key=lambda p: (-p.retweets_received, p.account_id))
    return ranked[:k]
