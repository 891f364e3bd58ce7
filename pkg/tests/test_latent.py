import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ca_dense, random_count_matrix
from polarlens.ingest import DebateDataset, TweetRecord
from polarlens.latent import (ConvergenceError, DegenerateMatrixError, IdeologyScores, InteractionMatrix,
                              build_interaction_matrix, correspondence_analysis, estimate_ideology,
                              influencer_ideology, rescale_and_orient)
from polarlens.synth import SynthConfig, generate_debate


def same_up_to_sign(a, b):
    return min(np.max(np.abs(a - b)), np.max(np.abs(a + b)))


def test_frozen_small_example():
    m = np.array([[3, 0, 1], [2, 1, 0], [0, 4, 2], [1, 0, 3], [0, 2, 2]])
    res = correspondence_analysis(InteractionMatrix.from_dense(m))
    # dense SVD oracle output, frozen
    expected = np.array([-1.474431905772903, -0.9487996446238778, 1.0296820723554603,
                         -0.22913237220406346, 0.8706409029116842])
    assert same_up_to_sign(res.row_coords, expected) < 1e-12
    assert res.singular_value == pytest.approx(0.7215031974849097, abs=1e-12)


def test_matches_dense_oracle_20x5():
    rng = np.random.default_rng(20)
    for _ in range(100):
        m = random_count_matrix(rng, max_rows=20, max_cols=5)
        x, sv = ca_dense(m)
        res = correspondence_analysis(m)
        assert same_up_to_sign(res.row_coords, x) < 1e-9
        assert res.singular_value == pytest.approx(sv[0], abs=1e-12)


def test_block_diagonal_separates_blocks():
    m = np.zeros((7, 5), dtype=int)
    m[:4, :2] = [[2, 1], [1, 3], [4, 4], [1, 1]]
    m[4:, 2:] = [[1, 2, 1], [3, 1, 1], [2, 2, 2]]
    x = correspondence_analysis(m).row_coords
    assert np.ptp(x[:4]) < 1e-10 and np.ptp(x[4:]) < 1e-10
    assert abs(x[0] - x[4]) > 0.5


def test_duplicate_rows_share_coordinates():
    rng = np.random.default_rng(1)
    m = random_count_matrix(rng)
    m = np.vstack([m, m[:1]])
    x = correspondence_analysis(m).row_coords
    assert x[0] == pytest.approx(x[-1], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
def test_scale_and_permutation(seed, k):
    rng = np.random.default_rng(seed)
    m = random_count_matrix(rng)
    base = correspondence_analysis(m)
    assert same_up_to_sign(correspondence_analysis(k * m).row_coords, base.row_coords) < 1e-9
    perm = rng.permutation(m.shape[0])
    moved = correspondence_analysis(m[perm]).row_coords
    assert same_up_to_sign(moved, base.row_coords[perm]) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_within_tolerance(seed):
    m = random_count_matrix(np.random.default_rng(seed))
    tol = 1e-10
    res = correspondence_analysis(m, tol=tol)
    assert res.residual < 10 * tol
    # the coordinates come from u = S v / sigma, so S v - sigma u vanishes by construction
    p = m / m.sum()
    r, c = p.sum(1), p.sum(0)
    s = (p - np.outer(r, c)) / np.sqrt(np.outer(r, c))
    assert np.max(np.abs(s @ res.v - res.singular_value * res.u)) < 10 * tol
    assert np.max(np.abs(s.T @ res.u - res.singular_value * res.v)) < 10 * tol


def test_seed_reproducible():
    m = random_count_matrix(np.random.default_rng(3))
    a = correspondence_analysis(m, seed=4)
    b = correspondence_analysis(m, seed=4)
    assert np.array_equal(a.row_coords, b.row_coords)


def test_degenerate_inputs():
    with pytest.raises(DegenerateMatrixError):
        correspondence_analysis(np.zeros((3, 3)))
    with pytest.raises(DegenerateMatrixError):
        correspondence_analysis(np.array([[1, 0], [0, 0]]))
    with pytest.raises(DegenerateMatrixError):
        # proportional rows leave nothing after removing the trivial axis
        correspondence_analysis(np.array([[1, 2, 3], [2, 4, 6]]))


def test_non_convergence_reports_residual():
    m = random_count_matrix(np.random.default_rng(9), max_rows=30, max_cols=10)
    with pytest.raises(ConvergenceError) as info:
        correspondence_analysis(m, max_iter=1)
    assert info.value.residual > 0


def recs(pairs):
    out = [TweetRecord(f"o{a}", a, "original") for a in ("j1", "j2")]
    out += [TweetRecord(f"t{i}", u, "retweet", j) for i, (u, j) in enumerate(pairs)]
    return DebateDataset.from_records(out, "d")


def test_row_filter():
    ds = recs([("u", "j1"), ("w", "j1"), ("w", "j1"), ("v", "j1"), ("v", "j2")])
    m = build_interaction_matrix(ds, ["j1", "j2"])
    assert "u" not in m.row_ids
    assert m.entries.toarray()[m.row_ids.index("w")].tolist() == [2, 0]
    assert (m.entries.data > 0).all()
    assert (m.row_sums >= 2).all() and (m.col_sums >= 1).all()


def test_zero_columns_dropped_and_degenerate():
    ds = recs([("w", "j1"), ("w", "j1"), ("v", "j2")])
    m = build_interaction_matrix(ds, ["j1", "j2"])
    assert m.col_ids == ("j1",) and m.dropped_columns == ("j2",)
    with pytest.raises(DegenerateMatrixError):
        build_interaction_matrix(recs([("u", "j1")]), ["j1", "j2"])


@pytest.fixture(scope="module")
def debate():
    return generate_debate(SynthConfig(n_users=4000, n_influencers=80, seed=12))


def test_matrix_equals_planted_counts(debate):
    m = build_interaction_matrix(debate.dataset, debate.influencer_ids)
    planted = debate.planted_counts().toarray()
    uid = {u: i for i, u in enumerate(debate.user_ids)}
    iid = {a: j for j, a in enumerate(debate.influencer_ids)}
    keep = planted.sum(axis=1) >= 2
    rows = [uid[r] for r in m.row_ids]
    cols = [iid[c] for c in m.col_ids]
    assert sorted(rows) == sorted(np.flatnonzero(keep).tolist())
    assert np.array_equal(m.entries.toarray(), planted[np.ix_(rows, cols)])


def test_rescale_examples():
    s, flipped = rescale_and_orient([-3, 1, 1, 1])
    assert s.tolist() == [1, -1, -1, -1] and flipped
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        s, flipped = rescale_and_orient([-2, 2])
    assert s.tolist() == [-1, 1] and not flipped
    assert any("tie" in str(x.message) for x in w)
    with pytest.raises(ValueError, match="no ideological axis"):
        rescale_and_orient([0.3, 0.3])


@settings(max_examples=60)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
def test_rescale_invariants(raw):
    raw = np.array(raw)
    if np.ptp(raw) == 0:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s, _ = rescale_and_orient(raw)
        s2, _ = rescale_and_orient(-raw)
    assert s.min() == -1.0 and s.max() == 1.0
    assert np.count_nonzero(s < 0) >= np.count_nonzero(s > 0)
    if np.count_nonzero(s < 0) != np.count_nonzero(s > 0):
        # sign gauge: the orientation fixes the output
        assert np.allclose(s, s2, atol=1e-12)


def test_influencer_medians():
    m = InteractionMatrix.from_dense(np.array([[1, 1, 0], [2, 1, 0], [1, 0, 0]]), col_ids=("a", "b", "z"))
    scores, missing = influencer_ideology(np.array([-1.0, 1.0, -0.5]), m)
    assert scores == {"a": -0.5, "b": 0.0}
    assert missing == ("z",)
    scores, _ = influencer_ideology({"r0": -1.0, "r1": -0.5, "r2": 0.8}, m)
    assert scores["a"] == -0.5


def test_synthetic_orientation_and_influencers(debate):
    sc, m = estimate_ideology(debate.dataset, debate.influencer_ids)
    truth = debate.true_sides()
    x = np.array(list(sc.user_scores.values()))
    assert x.min() == -1.0 and x.max() == 1.0
    maj = np.array([truth[u] == 0 for u in sc.user_scores])
    assert np.median(x[maj]) < 0 < np.median(x[~maj])
    nz = dict(zip(m.col_ids, np.diff(m.entries.tocsc().indptr)))
    side = dict(zip(debate.influencer_ids, debate.influencer_side))
    for acc, s in sc.influencer_scores.items():
        if nz[acc] >= 20:
            assert (s < 0) == (side[acc] == 0)


def test_scores_csv_round_trip(debate, tmp_path):
    sc, _ = estimate_ideology(debate.dataset, debate.influencer_ids)
    p = tmp_path / "scores.csv"
    sc.to_csv(p)
    back = IdeologyScores.from_csv(p, sc.debate_id)
    assert back.user_scores == sc.user_scores
    assert back.influencer_scores == sc.influencer_scores
    assert p.read_text().splitlines()[0] == "account_id,score,role"
