import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blockfit.generators import (BisbmSpec, DcsbmSpec, ParameterError, SbmSpec,
                                 build_edge_prob_matrix, equal_size_labels, perturb_labels,
                                 perturb_labels_to_nmi, planted_partition, sample_bisbm,
                                 sample_dcsbm, sample_sbm, sample_theta_two_point,
                                 two_block_edge_probs)
from blockfit.graph import degrees
from blockfit.metrics import nmi


def _block_density(g, r_labels, c_labels, k, l, square=True):
    A = g.to_csr()
    rk = np.flatnonzero(r_labels == k)
    cl = np.flatnonzero(c_labels == l)
    edges = A[rk][:, cl].sum()
    if square and k == l:
        pairs = rk.size * (rk.size - 1)
    else:
        pairs = rk.size * cl.size
    return edges, pairs


def test_beta_zero_is_diagonal():
    P = build_edge_prob_matrix(2, 0.0, [1, 1], 5.0, [0.5, 0.5], 1000)
    assert P[0, 1] == 0.0 and P[1, 0] == 0.0
    assert P[0, 0] > 0


def test_beta_one_is_constant():
    P = build_edge_prob_matrix(3, 1.0, [1, 1, 1], 5.0, [0.2, 0.3, 0.5], 1000)
    assert np.all(P == P[0, 0])


def test_expected_degree_hits_target():
    pi = np.array([0.2, 0.3, 0.5])
    P = build_edge_prob_matrix(3, 0.05, [1, 1, 1], 5.0, pi, 4000)
    assert (4000 - 1) * pi @ P @ pi == pytest.approx(5.0, rel=1e-10)


def test_build_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        build_edge_prob_matrix(2, 0.1, [1, 1], 500.0, [0.5, 0.5], 100)
    with pytest.raises(ParameterError):
        build_edge_prob_matrix(2, -0.1, [1, 1], 5.0, [0.5, 0.5], 100)


def test_spec_validation():
    with pytest.raises(ParameterError):
        SbmSpec(10, [0.5, 0.6], np.eye(2))
    with pytest.raises(ParameterError):
        SbmSpec(10, [0.5, 0.5], [[0.1, 0.2], [0.3, 0.1]])
    with pytest.raises(ParameterError):
        SbmSpec(10, [0.5, 0.5], [[1.1, 0.2], [0.2, 0.1]])
    with pytest.raises(ParameterError):
        DcsbmSpec(3, [1.0], [[0.1]], [1.0, 1.0, 2.0])


def test_identity_P_gives_two_cliques():
    g, c = sample_sbm(SbmSpec(40, [0.5, 0.5], np.eye(2)), 5)
    A = g.to_csr().toarray()
    same = c[:, None] == c[None, :]
    np.fill_diagonal(same, False)
    assert np.array_equal(A.astype(bool), same)


def test_determinism():
    spec = SbmSpec(300, [0.4, 0.6], [[0.1, 0.02], [0.02, 0.08]])
    g1, c1 = sample_sbm(spec, 17)
    g2, c2 = sample_sbm(spec, 17)
    g3, _ = sample_sbm(spec, 18)
    assert np.array_equal(c1, c2)
    assert np.array_equal(g1.col_indices, g2.col_indices)
    assert not np.array_equal(g1.col_indices, g3.col_indices)


@pytest.mark.parametrize("method", ["dense", "skip"])
def test_block_densities_within_four_sigma(method):
    P = np.array([[0.2, 0.1], [0.1, 0.2]])
    g, c = sample_sbm(SbmSpec(2000, [0.5, 0.5], P), 3, method=method)
    for k in range(2):
        for l in range(2):
            edges, pairs = _block_density(g, c, c, k, l)
            if k == l:
                edges, pairs = edges / 2, pairs / 2
            p = P[k, l]
            assert abs(edges - pairs * p) <= 4 * np.sqrt(pairs * p * (1 - p))


def test_dense_and_skip_agree_in_distribution():
    # per-pair edge frequencies over many seeds; each method must fit the
    # model's Bernoulli rates (chi-square over all pairs)
    n, reps = 30, 400
    P = np.array([[0.3, 0.1], [0.1, 0.2]])
    labels = equal_size_labels(n, 2)
    spec = SbmSpec(n, [0.5, 0.5], P)
    iu = np.triu_indices(n, 1)
    p = P[labels[iu[0]], labels[iu[1]]]
    counts = {}
    for method in ("dense", "skip"):
        acc = np.zeros(p.size)
        for s in range(reps):
            g, _ = sample_sbm(spec, s, method=method, labels=labels)
            acc += g.to_csr().toarray()[iu]
        counts[method] = acc
        stat = ((acc - reps * p) ** 2 / (reps * p * (1 - p))).sum()
        assert stats.chi2.sf(stat, p.size) > 1e-3
    # two-sample comparison of the two frequency vectors
    diff = counts["dense"] - counts["skip"]
    stat = (diff ** 2 / (2 * reps * p * (1 - p))).sum()
    assert stats.chi2.sf(stat, p.size) > 1e-3


def test_dcsbm_with_unit_theta_reproduces_sbm():
    spec = SbmSpec(200, [0.3, 0.7], [[0.1, 0.03], [0.03, 0.07]])
    for method in ("dense", "skip"):
        g1, c1 = sample_sbm(spec, 9, method=method)
        g2, c2 = sample_dcsbm(DcsbmSpec(200, spec.pi, spec.P, np.ones(200)), 9, method=method)
        assert np.array_equal(c1, c2)
        if method == "dense":
            assert np.array_equal(g1.col_indices, g2.col_indices)


def _reference_dc_spec(n=1200, m=4, seed=0):
    P = 1e-2 * (np.ones((3, 3)) + np.diag([2.0, 3.0, 4.0]))
    theta = sample_theta_two_point(n, m, seed)
    return DcsbmSpec(n, np.full(3, 1 / 3), P, theta)


def test_dcsbm_reference_spec_rates_are_valid():
    spec = _reference_dc_spec()
    x = 2 / 5
    assert 1.6 * 1.6 * spec.P.max() == pytest.approx(0.128)
    assert spec.theta.max() * spec.theta.max() * spec.P.max() < 0.14
    assert x * 4 == pytest.approx(1.6)
    g, _ = sample_dcsbm(spec, 1)
    g.validate()


def test_dcsbm_rate_above_one_rejected():
    theta = np.array([0.1, 1.9])
    with pytest.raises(ParameterError):
        sample_dcsbm(DcsbmSpec(2, [1.0], [[0.5]], theta), 0)


def test_dcsbm_degree_proportional_to_theta():
    obs, exp = [], []
    for s in range(20):
        spec = _reference_dc_spec(seed=s)
        g, c = sample_dcsbm(spec, 100 + s)
        Q = spec.P[c][:, c] * spec.theta[None, :]
        np.fill_diagonal(Q, 0.0)
        obs.append(degrees(g))
        exp.append(spec.theta * Q.sum(axis=1))
    obs, exp = np.concatenate(obs), np.concatenate(exp)
    slope = (obs @ exp) / (exp @ exp)
    assert abs(slope - 1.0) < 0.1


def test_theta_two_point():
    assert np.all(sample_theta_two_point(50, 1.0, 0) == 1.0)
    raw = sample_theta_two_point(1000, 4.0, 0, rescale=False)
    assert set(np.round(raw, 12).tolist()) == {0.4, 1.6}
    big = sample_theta_two_point(100_000, 6.0, 1, rescale=False)
    assert abs(big.mean() - 1.0) < 0.01
    assert sample_theta_two_point(999, 6.0, 2).mean() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        sample_theta_two_point(10, 0.5, 0)


def test_bisbm_complete_when_P_is_ones():
    g, c1, c2 = sample_bisbm(BisbmSpec(7, 5, [0.5, 0.5], [1.0], np.ones((2, 1))), 0)
    assert g.edge_count == 35 and g.shape == (7, 5)


@pytest.mark.parametrize("method", ["dense", "skip"])
def test_bisbm_reference_spec_densities(method):
    P = 0.1 * (1.2 + 0.4 * np.eye(2))
    assert sorted(set(np.round(P.ravel(), 12))) == [0.12, 0.16]
    g, c1, c2 = sample_bisbm(BisbmSpec(1200, 1200, [0.5, 0.5], [0.5, 0.5], P), 4, method=method)
    for k in range(2):
        for l in range(2):
            edges, pairs = _block_density(g, c1, c2, k, l, square=False)
            p = P[k, l]
            assert abs(edges - pairs * p) <= 4 * np.sqrt(pairs * p * (1 - p))


def test_two_block_edge_probs():
    P = two_block_edge_probs(1000, 60, 10)
    m = 500
    assert P[0, 0] == pytest.approx(1 - (1 - 60 / m) ** 2)
    assert P[0, 1] == pytest.approx(1 - (1 - 10 / m) ** 2)
    with pytest.raises(ParameterError):
        two_block_edge_probs(10, 6, 1)


def test_equal_size_labels():
    assert np.bincount(equal_size_labels(10, 3)).tolist() == [4, 3, 3]
    assert planted_partition(2, 0.1, 0.3).tolist() == [[0.4, 0.1], [0.1, 0.4]]


def test_perturb_gamma_one_is_identity():
    c = equal_size_labels(100, 2)
    assert np.array_equal(perturb_labels(c, 1.0, 3), c)


def test_perturb_gamma_07_exact_overlap():
    c = equal_size_labels(1000, 2)
    e = perturb_labels(c, 0.7, 5)
    for k in range(2):
        assert np.sum((c == k) & (e == k)) == 350
        assert np.sum(e == k) == 500


def test_perturb_gamma_half_uncorrelated():
    c = equal_size_labels(1000, 2)
    vals = [nmi(perturb_labels(c, 0.5, s), c) for s in range(20)]
    assert np.mean(vals) < 0.01


def test_perturb_infeasible():
    c = np.array([0] * 8 + [1] * 2)
    with pytest.raises(ParameterError):
        perturb_labels(c, [0.0, 1.0], 0)


def test_perturb_to_nmi_targets():
    c = equal_size_labels(500, 2)
    assert np.array_equal(perturb_labels_to_nmi(c, 1.0, 0), c)
    e = perturb_labels_to_nmi(c, 0.3, 1)
    assert 0.28 <= nmi(e, c) <= 0.32
    e0 = perturb_labels_to_nmi(c, 0.0, 2)
    assert nmi(e0, c) <= 0.02
    with pytest.raises(ParameterError):
        perturb_labels_to_nmi(c, 1.5, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(5, 40), min_size=2, max_size=4),
       st.floats(0.5, 1.0), st.integers(0, 2**31))
def test_perturb_preserves_counts_and_overlap(sizes, gamma, seed):
    c = np.repeat(np.arange(len(sizes)), sizes)
    try:
        e = perturb_labels(c, gamma, seed)
    except ParameterError:
        moved = [s - int(np.floor(gamma * s + 1e-9)) for s in sizes]
        assert 2 * max(moved) > sum(moved)
        return
    assert np.array_equal(np.bincount(e, minlength=len(sizes)), np.bincount(c))
    for k, s in enumerate(sizes):
        assert np.sum((c == k) & (e == k)) == int(np.floor(gamma * s + 1e-9))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.0, 8.0))
def test_theta_mean_exactly_one(seed, m):
    theta = sample_theta_two_point(200, m, seed)
    assert theta.mean() == pytest.approx(1.0, abs=1e-12)
    assert np.all(theta > 0)


def test_dcsbm_skip_thinning_matches_rates():
    n, reps = 24, 400
    P = np.array([[0.3, 0.1], [0.1, 0.2]])
    labels = equal_size_labels(n, 2)
    theta = np.where(np.arange(n) % 2 == 0, 0.5, 1.5)
    spec = DcsbmSpec(n, [0.5, 0.5], P, theta)
    iu = np.triu_indices(n, 1)
    p = P[labels[iu[0]], labels[iu[1]]] * theta[iu[0]] * theta[iu[1]]
    for method in ("dense", "skip"):
        acc = np.zeros(p.size)
        for s in range(reps):
            acc += sample_dcsbm(spec, s, method=method, labels=labels)[0].to_csr().toarray()[iu]
        stat = ((acc - reps * p) ** 2 / (reps * p * (1 - p))).sum()
        assert stats.chi2.sf(stat, p.size) > 1e-3
