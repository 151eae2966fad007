import itertools
import random
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from nodmt.diversity import (
    ClusterAssignment,
    EncodingMismatchError,
    TooFewCasesError,
    affinity,
    distance_matrix,
    encode_view,
    jacobi_eigh,
    kmeans,
    levenshtein,
    normalized_laplacian,
    select_k,
    silhouette,
    spectral_cluster,
    view_distance,
    violation_diversity,
)
from nodmt.gridworld import AgentState, observe

from conftest import sample_case

seqs = st.lists(st.sampled_from("ABCD"), max_size=8)


def lev_oracle(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def planted(sizes, seed, intra=(0.2, 1.0), inter=(5.0, 8.0)):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            lo, hi = intra if labels[i] == labels[j] else inter
            d[i, j] = d[j, i] = rng.uniform(lo, hi)
    return d, labels


def same_partition(a, b):
    return {frozenset(np.flatnonzero(np.asarray(a) == k)) for k in set(a)} == {
        frozenset(np.flatnonzero(np.asarray(b) == k)) for k in set(b)
    }


def brute_force_ncut(aff, k):
    """Exhaustive minimum normalized cut over all k-block labelings."""
    n = len(aff)
    deg = aff.sum(axis=1)
    best, arg = np.inf, None
    for labels in itertools.product(range(k), repeat=n - 1):
        labels = np.array((0,) + labels)
        if len(set(labels)) != k:
            continue
        cost = 0.0
        for c in range(k):
            m = labels == c
            cost += aff[m][:, ~m].sum() / deg[m].sum()
        if cost < best - 1e-12:
            best, arg = cost, labels
    return arg


# -- levenshtein ------------------------------------------------------------------------

@settings(max_examples=300)
@given(seqs, seqs)
def test_levenshtein_matches_recursive_oracle(a, b):
    assert levenshtein(a, b) == lev_oracle(tuple(a), tuple(b))


@settings(max_examples=300)
@given(seqs, seqs, seqs)
def test_levenshtein_metric_axioms(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
    assert (levenshtein(a, b) == 0) == (a == b)


def test_levenshtein_examples():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein([], ["MOVE_AHEAD"] * 4) == 4


# -- view encoding ------------------------------------------------------------------------

def test_view_encoding_layout():
    env, task, start, _ = sample_case(3)
    v = encode_view(observe(env, start, 90.0))
    assert v.shape == (16,)
    assert v[2:6].sum() == 1.0
    assert 0.0 <= v[6:14].sum() <= 1.0
    assert v[14] == env.lighting.hue and v[15] == env.lighting.brightness


def test_view_distance_accepts_encodings():
    env, task, start, _ = sample_case(4)
    a = observe(env, start, 90.0)
    b = observe(env, AgentState(start.position, (start.heading + 90) % 360), 90.0)
    assert view_distance(a, b) == pytest.approx(view_distance(list(encode_view(a)), encode_view(b)))
    assert view_distance(a, a) == 0.0
    with pytest.raises(EncodingMismatchError):
        view_distance([0.0] * 16, [0.0] * 15)


# -- linear algebra ------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 14), st.integers(0, 10**6))
def test_jacobi_matches_numpy(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    a = (m + m.T) / 2
    w, v = jacobi_eigh(a)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-9)
    assert np.allclose(a @ v, v * w, atol=1e-8)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-9)
    assert np.all(np.diff(w) >= -1e-12)


def test_affinity_auto_sigma():
    d = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]])
    a = affinity(d)  # median off-diagonal distance is 2
    assert a[0, 1] == pytest.approx(np.exp(-1 / 8))
    assert np.all(np.diag(a) == 1.0)
    assert np.all(affinity(np.zeros((3, 3))) == 1.0)  # zero median falls back to sigma 1
    with pytest.raises(ValueError):
        affinity(d, sigma=-1.0)


def test_normalized_laplacian_spectrum():
    d, _ = planted([4, 4], 1)
    lap = normalized_laplacian(affinity(d))
    w = np.linalg.eigvalsh(lap)
    assert w[0] == pytest.approx(0.0, abs=1e-10)
    assert w[-1] <= 2.0 + 1e-10


# -- clustering -------------------------------------------------------------------------------

@pytest.mark.parametrize("sizes", [(6, 6), (4, 8), (3, 3, 3), (4, 3, 5), (5, 5, 5, 5)])
@pytest.mark.parametrize("seed", range(5))
def test_spectral_recovers_planted_blocks(sizes, seed):
    d, labels = planted(sizes, seed)
    got = spectral_cluster(affinity(d), len(sizes), seed=seed)
    assert same_partition(got.labels, labels)


@pytest.mark.parametrize("sizes,k", [((6, 6), 2), ((5, 7), 2), ((3, 3, 3), 3), ((2, 4, 3), 3)])
def test_spectral_agrees_with_brute_force_ncut(sizes, k):
    d, labels = planted(sizes, 7)
    aff = affinity(d)
    oracle = brute_force_ncut(aff, k)
    assert same_partition(oracle, labels)
    assert same_partition(spectral_cluster(aff, k, seed=0).labels, oracle)


@pytest.mark.parametrize("sizes", [(5, 6), (4, 4, 4), (3, 4, 3)])
def test_select_k_finds_planted_k(sizes):
    d, labels = planted(sizes, 11)
    k, assignment, score = select_k(d, seed=0)
    assert k == len(sizes)
    assert same_partition(assignment.labels, labels)


def test_planted_silhouette_beats_random_relabelings():
    d, labels = planted([4, 4, 4], 5)
    target = silhouette(labels, d)
    rng = random.Random(0)
    for _ in range(100):
        perm = list(labels)
        rng.shuffle(perm)
        if len(set(perm)) < 2 or same_partition(perm, labels):
            continue
        assert silhouette(perm, d) < target


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 12), st.integers(0, 10**6))
def test_silhouette_matches_sklearn(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    labels = rng.integers(0, 3, size=n)
    if len(set(labels)) < 2:
        labels[0], labels[1] = 0, 1
    assert silhouette(labels, d) == pytest.approx(silhouette_score(d, labels, metric="precomputed"), abs=1e-12)


def test_silhouette_needs_two_clusters():
    with pytest.raises(ValueError):
        silhouette([0, 0, 0], np.ones((3, 3)))


def test_kmeans_deterministic_and_nonempty():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(30, 3))
    a = kmeans(pts, 5, seed=9)
    assert np.array_equal(a, kmeans(pts, 5, seed=9))
    assert set(a) == set(range(5))
    dup = np.zeros((6, 2))  # identical points still give k non-empty clusters
    assert set(kmeans(dup, 3, seed=0)) == {0, 1, 2}


def test_spectral_cluster_k_range():
    d, _ = planted([3, 3], 0)
    with pytest.raises(ValueError):
        spectral_cluster(affinity(d), 1)
    with pytest.raises(ValueError):
        spectral_cluster(affinity(d), 6)


def test_labels_canonical():
    d, _ = planted([3, 3, 3], 2)
    labels = spectral_cluster(affinity(d), 3, seed=4).labels
    first = []
    for lab in labels:
        if lab not in first:
            first.append(lab)
    assert first == [0, 1, 2]


def test_cluster_assignment_validation():
    with pytest.raises(ValueError):
        ClusterAssignment((0, 2), 2)
    with pytest.raises(ValueError):
        ClusterAssignment((0, 0), 2)


def test_select_k_requires_three():
    with pytest.raises(TooFewCasesError):
        select_k(np.zeros((2, 2)))


# -- violation diversity -------------------------------------------------------------------------

def test_vd_small_pools_flagged():
    r = violation_diversity([([0.0] * 16, ["MOVE_AHEAD"])] * 2)
    assert r.vd == 2 and r.flagged
    assert violation_diversity([]).vd == 0


def test_vd_identical_cases_is_one():
    r = violation_diversity([([0.1] * 16, ["DONE"])] * 5)
    assert r.vd == 1 and r.k_view == 1 and r.k_action == 1 and not r.flagged


def test_vd_counts_distinct_pairs():
    v0, v1 = [0.0] * 16, [5.0] * 16
    a0, a1 = ["MOVE_AHEAD"] * 10, ["ROTATE_LEFT"] * 10
    cases = [(v0, a0)] * 3 + [(v0, a1)] * 3 + [(v1, a0)] * 3 + [(v1, a1)] * 3
    r = violation_diversity(cases, seed=1)
    assert (r.k_view, r.k_action) == (2, 2)
    assert r.vd == 4
    correlated = [(v0, a0)] * 4 + [(v1, a1)] * 4
    assert violation_diversity(correlated).vd == 2


def test_vd_bounded_by_cluster_product():
    rng = random.Random(5)
    cases = [([rng.random() for _ in range(16)], [rng.choice("ABC") for _ in range(rng.randrange(1, 8))]) for _ in range(15)]
    r = violation_diversity(cases, seed=2)
    assert max(r.k_view, r.k_action) <= r.vd <= min(15, r.k_view * r.k_action)
    assert r.to_dict("x")["vd"] == r.vd


def test_distance_matrix_symmetric():
    items = ["ab", "b", "abc", ""]
    d = distance_matrix(items, levenshtein)
    assert np.array_equal(d, d.T) and np.all(np.diag(d) == 0)
