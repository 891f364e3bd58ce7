"""Stage orchestration shared by the command line and the report.

Seeds: every stage draws its seed from the single global seed through
:func:`derive_seed`, i.e. the first 8 bytes (big endian) of
``sha256("<seed>/<stage>/<key>")``. Rerunning one stage therefore gives
the same numbers as running it inside a full report.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import crossdebate as cd
from .influencers import CATEGORIES, load_annotations, select_influencers, top_k_by_retweets
from .ingest import KINDS, compute_activity, load_cache, read_dataset, save_cache
from .latent import IdeologyScores, InteractionMatrix, estimate_ideology
from .stats import dip_test

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MATRIX_MAGIC = b"PLNSMX"
MATRIX_VERSION = 1


class ConfigError(ValueError):
    """Invalid or incomplete pipeline configuration."""


def derive_seed(seed: int, stage: str, key: str = "") -> int:
    digest = hashlib.sha256(f"{seed}/{stage}/{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("POLARLENS_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


@dataclass
class DebateSpec:
    id: str
    path: str
    format: str = "jsonl"
    annotations: str | None = None


@dataclass
class PipelineConfig:
    debates: list[DebateSpec]
    seed: int
    out: str = "polarlens-out"
    retweet_quantile: float = 0.99
    producer_share: float = 0.5
    top_k: int = 300
    include_quotes: bool = False
    tol: float = 1e-10
    max_iter: int = 10_000
    min_retweets: int = 6
    threshold: float = 0.0
    n_boot: int = 10_000
    dip_boot: int = 2000
    null_reps: int = 100
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> PipelineConfig:
        data = dict(data)
        if "seed" not in data:
            raise ConfigError("config must set an explicit 'seed'")
        raw = data.pop("debates", None)
        if not raw:
            raise ConfigError("config must list at least one debate")
        base = Path(base_dir) if base_dir is not None else Path(".")
        debates = []
        for d in raw:
            d = dict(d)
            if "id" not in d or "path" not in d:
                raise ConfigError("each debate needs 'id' and 'path'")
            for key in ("path", "annotations"):
                if d.get(key) is not None and not Path(d[key]).is_absolute():
                    d[key] = str(base / d[key])
            debates.append(DebateSpec(**d))
        if "out" in data and not Path(data["out"]).is_absolute():
            data["out"] = str(base / data["out"])
        known = {f for f in cls.__dataclass_fields__} - {"debates"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(debates=debates, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> PipelineConfig:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, base_dir=path.parent)

    def validate(self) -> None:
        ids = [d.id for d in self.debates]
        if len(set(ids)) != len(ids):
            raise ConfigError("debate ids must be unique")
        for d in self.debates:
            if not Path(d.path).exists():
                raise ConfigError(f"input path does not exist: {d.path}")
            if d.annotations is not None and not Path(d.annotations).exists():
                raise ConfigError(f"annotation path does not exist: {d.annotations}")
            if d.format not in ("jsonl", "csv"):
                raise ConfigError(f"unknown format {d.format!r} for debate {d.id}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        return asdict(self)


def _file_digest(path, extra: str = "") -> str:
    h = hashlib.sha256(extra.encode())
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def save_matrix(matrix: InteractionMatrix, path) -> None:
    buf = io.BytesIO()
    m = matrix.entries.tocsr()
    np.savez(buf, data=m.data, indices=m.indices, indptr=m.indptr, shape=np.array(m.shape),
             rows=np.array(matrix.row_ids, dtype=str), cols=np.array(matrix.col_ids, dtype=str),
             dropped=np.array(matrix.dropped_columns, dtype=str))
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC + np.uint16(MATRIX_VERSION).tobytes() + buf.getvalue())


def load_matrix(path) -> InteractionMatrix:
    with open(path, "rb") as fh:
        head = fh.read(len(MATRIX_MAGIC) + 2)
        if head[:len(MATRIX_MAGIC)] != MATRIX_MAGIC:
            raise ValueError(f"{path}: not a matrix cache file")
        z = np.load(io.BytesIO(fh.read()), allow_pickle=False)
    m = sp.csr_matrix((z["data"], z["indices"], z["indptr"]), shape=tuple(z["shape"]))
    return InteractionMatrix(tuple(z["rows"].tolist()), tuple(z["cols"].tolist()), m,
                             tuple(z["dropped"].tolist()))


@dataclass
class DebateState:
    spec: DebateSpec
    dataset: object = None
    activity: object = None
    selection: set = field(default_factory=set)
    registry: object = None
    top: list = field(default_factory=list)
    scores: IdeologyScores | None = None
    matrix: InteractionMatrix | None = None
    labeling: cd.Labeling | None = None


class Pipeline:
    """Lazily evaluated stages over the debates of one config."""

    def __init__(self, config: PipelineConfig, threads: int | None = None):
        config.validate()
        self.config = config
        self.threads = resolve_threads(threads if threads is not None else config.threads)
        self.out = Path(config.out)
        self.states = {d.id: DebateState(d) for d in config.debates}

    def seed(self, stage: str, key: str = "") -> int:
        return derive_seed(self.config.seed, stage, key)

    # -- stages ------------------------------------------------------------------

    def dataset(self, debate_id):
        st = self.states[debate_id]
        if st.dataset is None:
            spec = st.spec
            cache_dir = self.out / "cache"
            cache_dir.mkdir(parents=True, exist_ok=True)
            digest = _file_digest(spec.path, f"{spec.format}|{spec.id}")
            cached = cache_dir / f"{spec.id}-{digest}.plds"
            if cached.exists():
                st.dataset = load_cache(cached)
            else:
                st.dataset = read_dataset(spec.path, debate_id=spec.id, fmt=spec.format)
                save_cache(st.dataset, cached)
        return st.dataset

    def activity(self, debate_id):
        st = self.states[debate_id]
        if st.activity is None:
            st.activity = compute_activity(self.dataset(debate_id), include_quotes=self.config.include_quotes)
        return st.activity

    def registry(self, debate_id):
        st = self.states[debate_id]
        if st.registry is None:
            cfg = self.config
            act = self.activity(debate_id)
            st.selection = select_influencers(act, cfg.retweet_quantile, cfg.producer_share)
            if st.spec.annotations is None:
                raise ConfigError(f"debate {debate_id} has no annotation table")
            st.registry = load_annotations(st.spec.annotations, st.selection, act, debate_id)
            if not len(st.registry):
                raise ValueError(f"{debate_id}: no annotated influencers selected")
            st.top = top_k_by_retweets(st.registry, cfg.top_k)
        return st.registry

    def ideology(self, debate_id):
        st = self.states[debate_id]
        if st.scores is None:
            self.registry(debate_id)
            st.scores, st.matrix = estimate_ideology(
                self.dataset(debate_id), st.top, tol=self.config.tol, max_iter=self.config.max_iter,
                seed=self.seed("ideology", debate_id), include_quotes=self.config.include_quotes)
        return st.scores

    def labeling(self, debate_id):
        st = self.states[debate_id]
        if st.labeling is None:
            st.labeling = cd.assign_groups(self.ideology(debate_id), self.config.threshold)
        return st.labeling

    # -- summaries ----------------------------------------------------------------

    def ingest_summary(self, debate_id) -> dict:
        ds = self.dataset(debate_id)
        rep = ds.report
        return {"records": len(ds), "lines": rep.lines, "skipped": rep.skipped,
                "self_retweets": rep.self_retweets, "duplicates": rep.duplicates,
                "accounts": ds.n_accounts,
                "kinds": dict(zip(KINDS, np.bincount(ds.kind, minlength=len(KINDS)).tolist()))}

    def influencer_summary(self, debate_id) -> dict:
        reg = self.registry(debate_id)
        st = self.states[debate_id]
        counts = {c.value: 0 for c in CATEGORIES}
        for p in reg:
            counts[p.category.value] += 1
        return {"selected": len(st.selection), "annotated": len(reg), "excluded": len(reg.excluded),
                "unannotated": len(reg.unannotated), "top_k": len(st.top), "categories": counts}

    def ideology_summary(self, debate_id) -> dict:
        sc = self.ideology(debate_id)
        m = self.states[debate_id].matrix
        x = np.fromiter(sc.user_scores.values(), dtype=float)
        dip = dip_test(x, n_boot=self.config.dip_boot, seed=self.seed("dip", debate_id),
                       threads=self.threads)
        out = {
            "matrix": {"rows": m.shape[0], "cols": m.shape[1], "nnz": int(m.entries.nnz),
                       "dropped_columns": len(m.dropped_columns)},
            "singular_value_1": sc.singular_value_1,
            "orientation_flipped": sc.orientation_flipped,
            "n_users": int(x.size),
            "share_negative": float(np.mean(x < 0)),
            "dip": {"D": dip.D, "p_value": dip.p_value, "n": dip.n, "n_boot": dip.n_boot},
            "unscored_influencers": len(sc.unscored_influencers),
        }
        xi = np.fromiter(sc.influencer_scores.values(), dtype=float)
        if xi.size >= 4:
            d = dip_test(xi, n_boot=self.config.dip_boot, seed=self.seed("dip-influencers", debate_id),
                         threads=self.threads)
            out["influencer_dip"] = {"D": d.D, "p_value": d.p_value, "n": d.n, "n_boot": d.n_boot}
        return out

    def stats_summary(self, debate_id) -> dict:
        cfg = self.config
        reg = self.registry(debate_id)
        dists = cd.engagement_distributions(reg)
        ks = cd.pairwise_ks(dists)
        g = cd.user_category_gini(self.dataset(debate_id), reg, cfg.min_retweets)
        nulls = {}
        for mode in ("reshuffle", "uniform"):
            res = cd.null_model_compare(reg, mode, seed=self.seed(f"null-{mode}", debate_id), n_rep=cfg.null_reps)
            nulls[mode] = {c.value: {"W": r.statistic, "p_value": r.p_value} for c, r in res.items()}
        return {
            "engagement": {c.value: {"n": int(dists.samples[c].size),
                                     "q05": dists.quantiles[c][0], "q50": dists.quantiles[c][1],
                                     "q95": dists.quantiles[c][2]} for c in CATEGORIES},
            "ks_pairs": [{"a": a.value, "b": b.value, "statistic": r.statistic, "p_value": r.p_value}
                         for (a, b), r in ks.items()],
            "null_models": nulls,
            "gini": {"users": int(g.user_gini.size), "median": g.median, "q1": g.q1, "q3": g.q3,
                     "debate": g.debate_gini},
        }

    def engagement_summary(self, debate_id) -> dict:
        sc = self.ideology(debate_id)
        try:
            res = cd.engagement_by_ideology(self.registry(debate_id), sc, self.states[debate_id].matrix,
                                            n_boot=self.config.n_boot, seed=self.seed("bca", debate_id))
        except ValueError as exc:
            return {"error": str(exc)}
        return {grp.value: {k: {"median": e.point, "ci_low": e.ci_low, "ci_high": e.ci_high,
                                "degenerate": e.degenerate} for k, e in d.items()}
                for grp, d in res.items()}

    def networks(self, debate_id) -> dict:
        out = {}
        for side in cd.Group:
            try:
                out[side] = cd.category_network(self.dataset(debate_id), self.registry(debate_id),
                                                self.labeling(debate_id), side)
            except ValueError as exc:
                log.warning("%s: %s", debate_id, exc)
        return out

    def network_summary(self, debate_id) -> dict:
        return {side.value: {
                    "users": net.n_users,
                    "nodes": {c.value: w for c, w in net.node_weights.items()},
                    "edges": [{"cat_a": a, "cat_b": b, "weight": w} for a, b, w in net.edge_rows()],
                    "shares": {c.value: s for c, s in net.retweet_shares.items()}}
                for side, net in self.networks(debate_id).items()}

    def conditional(self) -> dict:
        labelings = {d: self.labeling(d) for d in self.states}
        return {g: cd.conditional_matrix(labelings, g) for g in cd.Group}

    def joints(self) -> dict:
        ids = list(self.states)
        out = {}
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                try:
                    out[(a, b)] = cd.joint_ideology(self.ideology(a), self.ideology(b),
                                                    seed=self.seed("joint", f"{a}|{b}"))
                except ValueError as exc:
                    log.warning("joint %s/%s: %s", a, b, exc)
        return out

    def cross_summary(self) -> dict:
        if len(self.states) < 2:
            return {}
        cond = self.conditional()
        joint = self.joints()
        return {
            "conditional": {g.value: [{"from": a, "to": b, "fraction": m.entries[(a, b)],
                                       "support": m.support[(a, b)]} for (a, b) in m.entries]
                            for g, m in cond.items()},
            "joint": [{"x": a, "y": b, "n_shared": j.n_shared, "n_balanced": len(j.account_ids),
                       "consistent_mass": float(np.mean(np.sign(j.x) == np.sign(j.y))) if j.x.size else None}
                      for (a, b), j in joint.items()],
        }

    def report(self) -> dict:
        debates = {}
        for did in self.states:
            entry = {"ingest": self.ingest_summary(did), "influencers": self.influencer_summary(did)}
            entry["ideology"] = self.ideology_summary(did)
            entry["stats"] = self.stats_summary(did)
            entry["engagement_by_ideology"] = self.engagement_summary(did)
            entry["networks"] = self.network_summary(did)
            debates[did] = entry
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.config.seed,
            "parameters": {k: v for k, v in self.config.to_dict().items()
                           if k not in ("debates", "out", "threads")},
            "debates": debates,
            "cross": self.cross_summary(),
        }


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dump_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _fmt(v, spec=".3f"):
    return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)


def render_text(report: dict) -> str:
    lines = [f"polarlens report (schema {report['schema_version']}, seed {report['seed']})", ""]
    for did, d in report["debates"].items():
        ing, inf, ideo, st = d["ingest"], d["influencers"], d["ideology"], d["stats"]
        lines.append(f"== {did} ==")
        lines.append(f"records {ing['records']} (skipped {ing['skipped']}), accounts {ing['accounts']}")
        lines.append(f"influencers selected {inf['selected']}, annotated {inf['annotated']}, "
                     f"excluded {inf['excluded']}, used {inf['top_k']}")
        dip = ideo["dip"]
        lines.append(f"ideology: {ideo['n_users']} users, {ideo['share_negative']:.1%} at negative scores, "
                     f"dip D = {dip['D']:.4f} (p = {dip['p_value']:.4f}, {dip['n_boot']} null draws)")
        g = st["gini"]
        lines.append(f"user Gini median {_fmt(g['median'], '.2f')} (Q1 {_fmt(g['q1'], '.2f')}, "
                     f"Q3 {_fmt(g['q3'], '.2f')}, n = {g['users']}); debate Gini {_fmt(g['debate'], '.2f')}")
        ks_min = min((p["p_value"] for p in st["ks_pairs"]), default=None)
        lines.append(f"category KS: {len(st['ks_pairs'])} pairs, smallest p = {_fmt(ks_min, '.4f')}")
        for mode, res in st["null_models"].items():
            pmin = min((r["p_value"] for r in res.values()), default=None)
            lines.append(f"null model {mode}: smallest Wilcoxon p = {_fmt(pmin, '.4f')}")
        eng = d["engagement_by_ideology"]
        if "error" in eng:
            lines.append(f"engagement by side: {eng['error']}")
        else:
            for grp, vals in eng.items():
                r, u = vals["retweets"], vals["retweeters"]
                lines.append(f"{grp} influencers: median retweets {r['median']:.1f} "
                             f"[{r['ci_low']:.1f}, {r['ci_high']:.1f}], median retweeters {u['median']:.1f} "
                             f"[{u['ci_low']:.1f}, {u['ci_high']:.1f}]")
        for side, net in d["networks"].items():
            top = sorted(net["shares"].items(), key=lambda kv: -(kv[1] or 0))[:3]
            lines.append(f"{side} retweet shares: " + ", ".join(f"{c} {_fmt(s, '.0%')}" for c, s in top))
        lines.append("")
    cross = report.get("cross") or {}
    if cross:
        lines.append("== cross-debate ==")
        for grp, cells in cross["conditional"].items():
            for c in cells:
                if c["from"] != c["to"]:
                    lines.append(f"{grp} {c['from']} -> {c['to']}: {_fmt(c['fraction'])} (n = {c['support']})")
        for j in cross["joint"]:
            lines.append(f"joint {j['x']}/{j['y']}: {j['n_shared']} shared users, {j['n_balanced']} after "
                         f"balancing, {_fmt(j['consistent_mass'], '.1%')} in consistent quadrants")
    return "\n".join(lines) + "\n"
