"""Recover two planted camps from a synthetic retweet stream.

Generates one debate with a 70/30 split, selects influencers the same way
the pipeline does, scores every active user on the latent axis and checks
the result against the planted sides. Run with ``python demos/planted_debate.py``.
"""

import numpy as np

from polarlens import (SynthConfig, compute_activity, dip_test, estimate_ideology, generate_debate,
                       load_annotations, select_influencers, top_k_by_retweets)

cfg = SynthConfig(debate_id="demo", n_users=10_000, n_influencers=300, cross_loyalty=0.95,
                  majority_fraction=0.7, seed=5)
deb = generate_debate(cfg)
print(f"{len(deb.dataset)} records, {deb.dataset.n_accounts} accounts")

act = compute_activity(deb.dataset)
chosen = select_influencers(act, retweet_quantile=1 - cfg.n_influencers / len(act), producer_share=1.0)
registry = load_annotations(deb.annotation_rows(), chosen, activity=act, debate_id=cfg.debate_id)
top = [p.account_id for p in top_k_by_retweets(registry, 300)]
print(f"{len(chosen)} influencers selected, {len(top)} used as matrix columns")

scores, matrix = estimate_ideology(deb.dataset, top, seed=0)
print(f"interaction matrix {matrix.shape[0]} x {matrix.shape[1]}, {matrix.entries.nnz} nonzeros")

truth = deb.true_sides()
x = np.array(list(scores.user_scores.values()))
side = np.array([truth[u] for u in scores.user_scores])
print(f"median score, planted majority: {np.median(x[side == 0]):+.3f}")
print(f"median score, planted minority: {np.median(x[side == 1]):+.3f}")

sure = np.abs(x) > 0.5
hit = np.mean((x[sure] < 0) == (side[sure] == 0))
print(f"sign agreement for |score| > 0.5: {hit:.4f} over {sure.sum()} users")

dip = dip_test(x, n_boot=2000, seed=1)
print(f"dip D = {dip.D:.4f}, p = {dip.p_value:.4f}  (small p: not unimodal)")

# crude text histogram of the scores
counts, edges = np.histogram(x, bins=20, range=(-1, 1))
for c, lo in zip(counts, edges):
    print(f"{lo:+.1f} {'#' * int(60 * c / counts.max())}")
