"""Latent ideology, polarization statistics and cross-debate persistence for retweet data."""

from .crossdebate import (ConditionalMatrix, CategoryNetwork, Group, Labeling, assign_groups,
                          category_network, conditional_matrix, engagement_by_ideology,
                          engagement_distributions, joint_ideology, null_model_compare, pairwise_ks,
                          user_category_gini)
from .influencers import (Category, InfluencerProfile, InfluencerRegistry, Stance, load_annotations,
                          select_influencers, top_k_by_retweets)
from .ingest import (ActivityStats, DebateDataset, TweetRecord, compute_activity, parse_records,
                     read_dataset)
from .latent import (IdeologyScores, InteractionMatrix, build_interaction_matrix,
                     correspondence_analysis, estimate_ideology, influencer_ideology, rescale_and_orient)
from .stats import (bootstrap_median_bca, dip_statistic, dip_test, gini, ks_two_sample,
                    wilcoxon_rank_sum)
from .synth import SynthConfig, generate_debate, generate_debate_pair

__version__ = "0.1.0"
