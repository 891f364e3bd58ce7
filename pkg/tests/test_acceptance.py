"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (collected and
repeated in the pytest terminal summary) before asserting. Run only these
with ``pytest tests/test_acceptance.py -v`` or as a script with
``python tests/test_acceptance.py``.
"""

import json
import os
import resource
import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import ca_dense, dip_lp, gini_bruteforce, ks_sweep, random_count_matrix, wilcoxon_exact_p
from polarlens.crossdebate import Group, assign_groups, conditional_matrix, null_model_compare
from polarlens.influencers import (CATEGORIES, InfluencerProfile, InfluencerRegistry, Stance, load_annotations,
                                   select_influencers, top_k_by_retweets)
from polarlens.ingest import compute_activity
from polarlens.latent import correspondence_analysis, estimate_ideology
from polarlens.stats import bootstrap_median_bca, dip_statistic, dip_test, gini, ks_two_sample, wilcoxon_rank_sum
from polarlens.synth import SynthConfig, generate_debate, generate_debate_pair

RESULTS = {}


def record(n, title, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def score_debate(deb, seed=0):
    """Selection, annotation and ideology exactly as the pipeline runs them."""
    act = compute_activity(deb.dataset)
    n_inf = deb.config.n_influencers
    chosen = select_influencers(act, retweet_quantile=1 - n_inf / len(act), producer_share=1.0)
    reg = load_annotations(deb.annotation_rows(), chosen, activity=act, debate_id=deb.config.debate_id)
    top = [p.account_id for p in top_k_by_retweets(reg, 300)]
    scores, _ = estimate_ideology(deb.dataset, top, seed=seed)
    return scores


def test_c01_ca_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        m = random_count_matrix(rng, max_rows=50, max_cols=10)
        x, _ = ca_dense(m)
        got = correspondence_analysis(m).row_coords
        worst = max(worst, min(np.max(np.abs(got - x)), np.max(np.abs(got + x))))
    elapsed = time.perf_counter() - t0
    record(1, "CA matches dense SVD oracle", worst < 1e-9 and elapsed < 10,
           f"max dev {worst:.1e}, {elapsed:.1f} s")


def test_c02_planted_side_recovery():
    t0 = time.perf_counter()
    cfg = SynthConfig(debate_id="planted", n_users=10_000, n_influencers=300, cross_loyalty=0.95,
                      majority_fraction=0.7, seed=17)
    deb = generate_debate(cfg)
    scores = score_debate(deb)
    truth = deb.true_sides()
    users = list(scores.user_scores)
    x = np.array([scores.user_scores[u] for u in users])
    side = np.array([truth[u] for u in users])
    dip = dip_test(x, n_boot=2000, seed=1)
    oriented = np.median(x[side == 0]) < 0 < np.median(x[side == 1])
    confident = np.abs(x) > 0.5
    # majority (side 0) should sit below zero
    correct = np.mean((x[confident] < 0) == (side[confident] == 0))
    elapsed = time.perf_counter() - t0
    ok = dip.p_value < 0.01 and oriented and correct >= 0.95 and elapsed < 60
    record(2, "planted sides recovered", ok,
           f"dip p {dip.p_value:.4f}, majority at -1: {oriented}, accuracy {correct:.4f} "
           f"on {confident.sum()} users, {elapsed:.1f} s")


def test_c03_cross_debate_consistency():
    t0 = time.perf_counter()
    a_cfg = SynthConfig(debate_id="A", n_users=10_000, n_influencers=300)
    b_cfg = SynthConfig(debate_id="B", n_users=10_000, n_influencers=300)
    a, b = generate_debate_pair(a_cfg, b_cfg, 0.90, seed=33)
    labels = {"A": assign_groups(score_debate(a)), "B": assign_groups(score_debate(b))}
    entries = {g: conditional_matrix(labels, g) for g in Group}
    vals = {g.value: m.entries[("A", "B")] for g, m in entries.items()}
    support = {g.value: m.support[("A", "B")] for g, m in entries.items()}
    elapsed = time.perf_counter() - t0
    ok = all(abs(v - 0.90) <= 0.02 for v in vals.values()) and elapsed < 120
    detail = ", ".join(f"{k} {v:.4f} (n={support[k]})" for k, v in vals.items())
    record(3, "conditional matrix recovers 0.90", ok, f"{detail}, {elapsed:.1f} s")


def test_c04_gini():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        x = rng.exponential(size=rng.integers(1, 51)) * (rng.random() < 0.9 or 0.0)
        if rng.random() < 0.3:
            x = np.floor(x * 3)
        if x.sum() == 0:
            x[0] = 1.0
        worst = max(worst, abs(gini(x) - gini_bruteforce(x)))
    ok = worst < 1e-12 and gini([1, 0, 0, 0]) == 0.75 and gini(np.full(17, 2.5)) == 0
    record(4, "Gini sorted form equals double sum", ok, f"max dev {worst:.1e}")


def test_c05_dip_calibration():
    exact = dip_statistic([0, 1]) == 0.25 and abs(dip_lp([0, 1]) - 0.25) < 1e-12
    grid = all(abs(dip_statistic(np.arange(n)) - 1 / (2 * n)) < 1e-15 and
               abs(dip_lp(np.arange(n)) - 1 / (2 * n)) < 1e-9 for n in range(2, 9))
    rejections = 0
    for s in range(100):
        x = np.random.default_rng(5000 + s).standard_normal(1000)
        rejections += dip_test(x, n_boot=2000, seed=s).p_value < 0.05
    ok = exact and grid and rejections <= 10
    record(5, "dip exact values and null calibration", ok,
           f"two atoms {exact}, grid {grid}, normal rejections {rejections}/100")


def test_c06_test_statistic_oracles():
    rng = np.random.default_rng(6)
    ks_ok = 0
    for _ in range(200):
        a = rng.integers(0, 7, size=rng.integers(1, 9)).astype(float)
        b = rng.normal(3, 2, size=rng.integers(1, 9)).round(1)
        ks_ok += ks_two_sample(a, b).statistic == ks_sweep(a, b)
    worst = 0.0
    for _ in range(100):
        a = rng.normal(size=6)
        b = rng.normal(rng.normal(0, 1.5), 1, size=6)
        worst = max(worst, abs(wilcoxon_rank_sum(a, b).p_value - wilcoxon_exact_p(a, b)))
    record(6, "KS sweep and Wilcoxon permutation oracles", ks_ok == 200 and worst <= 0.02,
           f"KS exact {ks_ok}/200, Wilcoxon max |dp| {worst:.4f}")


def test_c07_bca_coverage():
    covered = 0
    for t in range(500):
        x = np.random.default_rng(7000 + t).standard_normal(100)
        est = bootstrap_median_bca(x, n_boot=10_000, seed=t)
        covered += est.ci_low <= 0.0 <= est.ci_high
    rate = covered / 500
    record(7, "BCa median interval coverage", 0.90 <= rate <= 0.98, f"coverage {rate:.3f}")


def test_c08_null_model_fidelity():
    per_cat = {mode: np.zeros(len(CATEGORIES)) for mode in ("reshuffle", "uniform")}
    whole = {mode: 0 for mode in per_cat}
    for s in range(100):
        rng = np.random.default_rng(8000 + s)
        profiles = tuple(InfluencerProfile(f"i{i:03d}", CATEGORIES[rng.integers(6)], Stance.Unlabeled,
                                           int(rng.lognormal(6, 1.2)), 0) for i in range(300))
        reg = InfluencerRegistry("null", profiles)
        for mode in per_cat:
            res = null_model_compare(reg, mode, seed=s, n_rep=100)
            ps = np.array([res[c].p_value for c in CATEGORIES])
            per_cat[mode] += ps > 0.01
            whole[mode] += bool((ps > 0.01).all())
    ok = all((v >= 90).all() for v in per_cat.values())
    detail = "; ".join(f"{m}: min per-category {int(per_cat[m].min())}/100, all six {whole[m]}/100"
                       for m in per_cat)
    record(8, "null models under random labels", ok, detail)


def run_cli(args, env=None):
    full_env = dict(os.environ, **(env or {}))
    proc = subprocess.run([sys.executable, "-m", "polarlens.cli", *args], capture_output=True, text=True,
                          env=full_env)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.mark.slow
def test_c09_determinism(tmp_path):
    data = tmp_path / "synthetic"
    run_cli(["synth", "--out", str(data)])
    cfg = str(data / "pipeline.json")
    outs = {}
    for name, threads in (("first", "1"), ("second", "1"), ("eight", "8")):
        run_cli(["report", "--config", cfg, "--out", str(tmp_path / name), "--threads", threads])
        run_cli(["ideology", "--config", cfg, "--out", str(tmp_path / name), "--threads", threads])
        outs[name] = tmp_path / name
    same = all((outs["first"] / f).read_bytes() == (outs[k] / f).read_bytes()
               for k in ("second", "eight") for f in ("report.json", "report.txt"))
    worst = 0.0
    for deb in ("alpha", "beta"):
        a = np.loadtxt(outs["first"] / f"{deb}_ideology.csv", delimiter=",", skiprows=1, usecols=1)
        b = np.loadtxt(outs["eight"] / f"{deb}_ideology.csv", delimiter=",", skiprows=1, usecols=1)
        worst = max(worst, float(np.max(np.abs(a - b))))
    report = json.loads((outs["first"] / "report.json").read_text())
    dips = [report["debates"][d]["ideology"]["dip"]["p_value"] for d in ("alpha", "beta")]
    ok = same and worst < 1e-10 and all(p < 0.01 for p in dips)
    record(9, "report byte-identical across runs and threads", ok,
           f"identical {same}, score diff {worst:.1e}, dip p {dips}")


SCALE = {
    "seed": 10,
    "debates": [{"debate_id": "big", "n_users": 1_000_000, "n_influencers": 300, "mean_retweets": 5.05,
                 "background_retweets": 0.0, "user_originals": 0.3, "replies": 0.05, "quotes": 0.05}],
    "pipeline": {"n_boot": 10000, "dip_boot": 2000, "null_reps": 100},
}


@pytest.mark.slow
def test_c10_scale(tmp_path):
    spec = tmp_path / "scale.json"
    spec.write_text(json.dumps(SCALE))
    data = tmp_path / "data"
    t0 = time.perf_counter()
    run_cli(["synth", "--config", str(spec), "--out", str(data)])
    t_synth = time.perf_counter() - t0
    run_cli(["report", "--config", str(data / "pipeline.json"), "--out", str(tmp_path / "report")])
    elapsed = time.perf_counter() - t0
    # peak resident size of the largest finished child process, in kilobytes on Linux
    peak_gb = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss / 1024 ** 2
    report = json.loads((tmp_path / "report" / "report.json").read_text())
    big = report["debates"]["big"]
    n_rt = big["ingest"]["kinds"]["retweet"]
    users = big["ideology"]["n_users"]
    ok = n_rt >= 5_000_000 and elapsed < 600 and peak_gb < 8
    record(10, "10^6 users end to end", ok,
           f"{n_rt} retweets, {users} users scored, {elapsed:.0f} s (synth {t_synth:.0f} s), "
           f"peak RSS {peak_gb:.2f} GB")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
