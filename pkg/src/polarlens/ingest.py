"""Parse debate streams into columnar datasets and per-account tallies."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "KINDS",
    "SchemaError",
    "TweetRecord",
    "DebateDataset",
    "ActivityStats",
    "ActivityTable",
    "ParseReport",
    "parse_records",
    "read_dataset",
    "compute_activity",
    "write_jsonl",
    "save_cache",
    "load_cache",
]

log = logging.getLogger(__name__)

KINDS = ("original", "retweet", "reply", "quote")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}
ORIGINAL, RETWEET, REPLY, QUOTE = range(4)

CACHE_MAGIC = b"PLNSDS"
CACHE_VERSION = 1


class SchemaError(ValueError):
    """Input stream is too malformed to trust."""


@dataclass(frozen=True, slots=True)
class TweetRecord:
    tweet_id: str
    author_id: str
    kind: str
    retweeted_author_id: str | None = None
    timestamp: int = 0
    quoted_author_id: str | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown kind {self.kind!r}")
        if (self.kind == "retweet") != (self.retweeted_author_id is not None):
            raise ValueError("retweeted_author_id must be set exactly for retweets")
        if self.quoted_author_id is not None and self.kind != "quote":
            raise ValueError("quoted_author_id is only valid on quotes")


@dataclass(frozen=True)
class ParseReport:
    lines: int = 0
    skipped: int = 0
    self_retweets: int = 0
    duplicates: int = 0


@dataclass(frozen=True, eq=False)
class DebateDataset:
    """Immutable columnar store of one debate's records.

    Account ids are mapped to dense integers at construction; ``author``,
    ``target`` (retweet source, -1 if none) and ``quoted`` (-1 if none)
    hold those indices. Iterating yields :class:`TweetRecord` objects.
    """

    debate_id: str
    tweet_ids: tuple[str, ...]
    kind: np.ndarray
    author: np.ndarray
    target: np.ndarray
    quoted: np.ndarray
    timestamp: np.ndarray
    accounts: tuple[str, ...]
    report: ParseReport = field(default_factory=ParseReport)

    def __post_init__(self):
        for name in ("kind", "author", "target", "quoted", "timestamp"):
            getattr(self, name).flags.writeable = False

    @property
    def account_index(self) -> dict[str, int]:
        idx = self.__dict__.get("_account_index")
        if idx is None:
            idx = {a: i for i, a in enumerate(self.accounts)}
            object.__setattr__(self, "_account_index", idx)
        return idx

    @property
    def n_accounts(self) -> int:
        return len(self.accounts)

    def __len__(self) -> int:
        return len(self.tweet_ids)

    def record(self, i: int) -> TweetRecord:
        acc = self.accounts
        t, q = int(self.target[i]), int(self.quoted[i])
        return TweetRecord(
            tweet_id=self.tweet_ids[i],
            author_id=acc[self.author[i]],
            kind=KINDS[self.kind[i]],
            retweeted_author_id=acc[t] if t >= 0 else None,
            timestamp=int(self.timestamp[i]),
            quoted_author_id=acc[q] if q >= 0 else None,
        )

    def __iter__(self) -> Iterator[TweetRecord]:
        return (self.record(i) for i in range(len(self)))

    @property
    def records(self) -> list[TweetRecord]:
        return list(self)

    def retweet_mask(self, include_quotes: bool = False) -> np.ndarray:
        mask = self.kind == RETWEET
        if include_quotes:
            mask = mask | ((self.kind == QUOTE) & (self.quoted >= 0))
        return mask

    def retweet_pairs(self, include_quotes: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """(retweeter, source) account indices of every retweet event."""
        mask = self.retweet_mask(include_quotes)
        src = np.where(self.kind == RETWEET, self.target, self.quoted)
        return self.author[mask], src[mask]

    def same_as(self, other: DebateDataset) -> bool:
        return (
            self.debate_id == other.debate_id
            and self.tweet_ids == other.tweet_ids
            and self.accounts == other.accounts
            and all(np.array_equal(getattr(self, n), getattr(other, n))
                    for n in ("kind", "author", "target", "quoted", "timestamp"))
        )

    @classmethod
    def from_records(cls, records: Iterable[TweetRecord], debate_id: str = "") -> DebateDataset:
        builder = _Builder(debate_id)
        for rec in records:
            builder.add(rec.tweet_id, rec.author_id, _KIND_CODE[rec.kind],
                        rec.retweeted_author_id, rec.timestamp, rec.quoted_author_id)
        return builder.build(ParseReport(lines=len(builder.tweet_ids)))


class _Builder:
    def __init__(self, debate_id):
        self.debate_id = debate_id
        self.index: dict[str, int] = {}
        self.tweet_ids: list[str] = []
        self.seen: set[str] = set()
        self.kind = []
        self.author = []
        self.target = []
        self.quoted = []
        self.timestamp = []

    def _id(self, account):
        i = self.index.get(account)
        if i is None:
            i = self.index[account] = len(self.index)
        return i

    def add(self, tweet_id, author, kind, target, ts, quoted):
        self.seen.add(tweet_id)
        self.tweet_ids.append(tweet_id)
        self.kind.append(kind)
        self.author.append(self._id(author))
        self.target.append(self._id(target) if target is not None else -1)
        self.quoted.append(self._id(quoted) if quoted is not None else -1)
        self.timestamp.append(ts)

    def build(self, report):
        return DebateDataset(
            debate_id=self.debate_id,
            tweet_ids=tuple(self.tweet_ids),
            kind=np.array(self.kind, dtype=np.int8),
            author=np.array(self.author, dtype=np.int32),
            target=np.array(self.target, dtype=np.int32),
            quoted=np.array(self.quoted, dtype=np.int32),
            timestamp=np.array(self.timestamp, dtype=np.int64),
            accounts=tuple(self.index),
            report=report,
        )


def _validate(obj):
    """Return the normalized field tuple of one raw row, or None if malformed."""
    if not isinstance(obj, dict):
        return None
    tid, author, kind = obj.get("tweet_id"), obj.get("author_id"), obj.get("kind")
    target, quoted, ts = obj.get("retweeted_author_id"), obj.get("quoted_author_id"), obj.get("timestamp")
    if not (isinstance(tid, str) and tid and isinstance(author, str) and author):
        return None
    code = _KIND_CODE.get(kind)
    if code is None:
        return None
    if target == "":
        target = None
    if quoted == "":
        quoted = None
    if (code == RETWEET) != (target is not None) or (target is not None and not isinstance(target, str)):
        return None
    if quoted is not None and (code != QUOTE or not isinstance(quoted, str)):
        return None
    if isinstance(ts, str):
        try:
            ts = int(ts)
        except ValueError:
            return None
    if isinstance(ts, bool) or not isinstance(ts, int):
        return None
    return tid, author, code, target, ts, quoted


def _rows(lines, fmt):
    if fmt == "jsonl":
        for line in lines:
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None
    elif fmt == "csv":
        for row in csv.DictReader(lines):
            if None in row or any(v is None for v in row.values()):
                yield None
            else:
                yield row
    else:
        raise ValueError(f"unknown format {fmt!r}")


def parse_records(line_stream: Iterable[str], debate_id: str, fmt: str = "jsonl",
                  max_malformed_fraction: float = 0.01) -> DebateDataset:
    """Parse newline-delimited records into a :class:`DebateDataset`.

    Malformed rows, rows with a repeated ``tweet_id`` and self-retweets are
    dropped and counted in ``dataset.report``. Record order is preserved.

    Raises
    ------
    SchemaError
        If more than ``max_malformed_fraction`` of the rows are malformed.
    """
    builder = _Builder(debate_id)
    lines = skipped = selfrt = dups = 0
    try:
        for obj in _rows(line_stream, fmt):
            lines += 1
            fields = _validate(obj)
            if fields is None:
                skipped += 1
                continue
            tid, author, code, target, ts, quoted = fields
            if tid in builder.seen:
                dups += 1
                skipped += 1
                continue
            if code == RETWEET and target == author:
                selfrt += 1
                continue
            builder.add(tid, author, code, target, ts, quoted)
    except (OSError, UnicodeDecodeError) as exc:
        raise OSError(f"cannot read records for {debate_id!r}: {exc}") from exc
    if lines and skipped > max_malformed_fraction * lines:
        raise SchemaError(f"{skipped} of {lines} lines malformed in {debate_id!r} "
                          f"(limit {max_malformed_fraction:.2%})")
    if skipped:
        log.warning("%s: skipped %d malformed line(s)", debate_id, skipped)
    if selfrt:
        log.info("%s: dropped %d self-retweet(s)", debate_id, selfrt)
    return builder.build(ParseReport(lines=lines, skipped=skipped, self_retweets=selfrt, duplicates=dups))


def read_dataset(path, debate_id: str | None = None, fmt: str | None = None, **kwargs) -> DebateDataset:
    """Parse a file; the format defaults from the suffix (``.csv`` or JSON lines)."""
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    with open(path, encoding="utf-8", newline="" if fmt == "csv" else None) as fh:
        return parse_records(fh, debate_id or path.stem, fmt=fmt, **kwargs)


# -- activity -------------------------------------------------------------------

@dataclass(frozen=True)
class ActivityStats:
    account_id: str
    retweets_received: int
    retweets_made: int
    original_tweets: int


@dataclass(frozen=True, eq=False)
class ActivityTable(Sequence):
    """Per-account tallies, columnar; indexing yields :class:`ActivityStats`."""

    account_ids: tuple[str, ...]
    retweets_received: np.ndarray
    retweets_made: np.ndarray
    original_tweets: np.ndarray

    def __len__(self):
        return len(self.account_ids)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return ActivityStats(self.account_ids[i], int(self.retweets_received[i]),
                             int(self.retweets_made[i]), int(self.original_tweets[i]))

    @classmethod
    def from_stats(cls, stats: Iterable[ActivityStats]) -> ActivityTable:
        stats = list(stats)
        return cls(
            tuple(s.account_id for s in stats),
            np.array([s.retweets_received for s in stats], dtype=np.int64),
            np.array([s.retweets_made for s in stats], dtype=np.int64),
            np.array([s.original_tweets for s in stats], dtype=np.int64),
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["account_id", "retweets_received", "retweets_made", "original_tweets"])
            for row in zip(self.account_ids, self.retweets_received.tolist(),
                           self.retweets_made.tolist(), self.original_tweets.tolist()):
                w.writerow(row)


def compute_activity(dataset: DebateDataset, include_quotes: bool = False) -> ActivityTable:
    """Tally retweets received/made and original tweets for every account."""
    n = dataset.n_accounts
    made, source = dataset.retweet_pairs(include_quotes)
    return ActivityTable(
        account_ids=dataset.accounts,
        retweets_received=np.bincount(source, minlength=n).astype(np.int64),
        retweets_made=np.bincount(made, minlength=n).astype(np.int64),
        original_tweets=np.bincount(dataset.author[dataset.kind == ORIGINAL], minlength=n).astype(np.int64),
    )


# -- serialization --------------------------------------------------------------

def write_jsonl(dataset: DebateDataset, fh) -> None:
    """Write the dataset back in the line-oriented input schema."""
    acc = dataset.accounts
    for tid, k, a, t, q, ts in zip(dataset.tweet_ids, dataset.kind.tolist(), dataset.author.tolist(),
                                   dataset.target.tolist(), dataset.quoted.tolist(),
                                   dataset.timestamp.tolist()):
        obj = {"tweet_id": tid, "author_id": acc[a], "kind": KINDS[k]}
        if t >= 0:
            obj["retweeted_author_id"] = acc[t]
        if q >= 0:
            obj["quoted_author_id"] = acc[q]
        obj["timestamp"] = ts
        fh.write(json.dumps(obj, separators=(",", ":")))
        fh.write("\n")


def _pack_strings(strings):
    encoded = [s.encode("utf-8") for s in strings]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(b) for b in encoded], out=offsets[1:])
    return np.frombuffer(b"".join(encoded), dtype=np.uint8), offsets


def _unpack_strings(blob, offsets):
    raw = blob.tobytes()
    return tuple(raw[offsets[i]:offsets[i + 1]].decode("utf-8") for i in range(len(offsets) - 1))


def save_cache(dataset: DebateDataset, path) -> None:
    """Write the binary cache: magic, uint16 version, then an npz payload."""
    tid_blob, tid_off = _pack_strings(dataset.tweet_ids)
    acc_blob, acc_off = _pack_strings(dataset.accounts)
    buf = io.BytesIO()
    np.savez(
        buf,
        debate_id=np.frombuffer(dataset.debate_id.encode("utf-8"), dtype=np.uint8),
        tid_blob=tid_blob, tid_off=tid_off, acc_blob=acc_blob, acc_off=acc_off,
        kind=dataset.kind, author=dataset.author, target=dataset.target,
        quoted=dataset.quoted, timestamp=dataset.timestamp,
        report=np.array([dataset.report.lines, dataset.report.skipped,
                         dataset.report.self_retweets, dataset.report.duplicates], dtype=np.int64),
    )
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(np.uint16(CACHE_VERSION).tobytes())
        fh.write(buf.getvalue())


def load_cache(path) -> DebateDataset:
    with open(path, "rb") as fh:
        head = fh.read(len(CACHE_MAGIC) + 2)
        if head[:len(CACHE_MAGIC)] != CACHE_MAGIC:
            raise SchemaError(f"{path}: not a dataset cache file")
        version = int(np.frombuffer(head[len(CACHE_MAGIC):], dtype=np.uint16)[0])
        if version != CACHE_VERSION:
            raise SchemaError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
        payload = np.load(io.BytesIO(fh.read()), allow_pickle=False)
        rep = payload["report"].tolist()
        return DebateDataset(
            debate_id=payload["debate_id"].tobytes().decode("utf-8"),
            tweet_ids=_unpack_strings(payload["tid_blob"], payload["tid_off"]),
            kind=payload["kind"], author=payload["author"], target=payload["target"],
            quoted=payload["quoted"], timestamp=payload["timestamp"],
            accounts=_unpack_strings(payload["acc_blob"], payload["acc_off"]),
            report=ParseReport(*rep),
        )
