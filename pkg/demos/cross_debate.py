"""Persistence of camps across two debates sharing the same users.

Users keep their side from debate A to debate B with probability 0.9.
Labels are estimated independently in each debate and the conditional
matrix shows how often a camp member in one debate lands in the same
camp in the other.
"""

import numpy as np

from polarlens import (Group, SynthConfig, assign_groups, compute_activity, conditional_matrix,
                       estimate_ideology, generate_debate_pair, joint_ideology, load_annotations,
                       select_influencers, top_k_by_retweets)


def scores_for(deb):
    act = compute_activity(deb.dataset)
    q = 1 - deb.config.n_influencers / len(act)
    reg = load_annotations(deb.annotation_rows(), select_influencers(act, q, 1.0), activity=act,
                           debate_id=deb.config.debate_id)
    return estimate_ideology(deb.dataset, [p.account_id for p in top_k_by_retweets(reg, 300)])[0]


a, b = generate_debate_pair(SynthConfig(debate_id="A", n_users=10_000, n_influencers=300),
                            SynthConfig(debate_id="B", n_users=10_000, n_influencers=300), 0.9, seed=3)
sa, sb = scores_for(a), scores_for(b)
labels = {"A": assign_groups(sa), "B": assign_groups(sb)}

for g in Group:
    cm = conditional_matrix(labels, g)
    print(f"{g.value}:")
    print(np.array2string(cm.as_array(), precision=3))
    print("  support", cm.support)

joint = joint_ideology(sa, sb, seed=0, bins=4)
print(f"{joint.n_shared} users scored in both, {len(joint.account_ids)} after balancing")
print("coarse joint histogram (rows: A, columns: B)")
print(joint.histogram.astype(int))
print(f"score correlation {np.corrcoef(joint.x, joint.y)[0, 1]:.3f}")
