import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import softmax

from hybrid_ndt.core import ObservationVector
from hybrid_ndt.divergence import WeightedSquaredEuclidean
from hybrid_ndt.oda import (Annealer, TrainerConfig, TrainerState, UnassignableObservation,
                            anneal, fixed_point_oracle, free_energy, gibbs_association,
                            merge_and_prune, perturb, reheat, run_level, sa_step)


def state(mus, labels, masses=None, lam=0.5, **cfg):
    mus = np.atleast_2d(np.asarray(mus, float))
    s = TrainerState.from_codevectors(TrainerConfig(**cfg), WeightedSquaredEuclidean(
        np.ones(mus.shape[1])), mus, labels, masses)
    s.lam = lam
    return s


def v(z, label=1):
    return ObservationVector(np.atleast_1d(np.asarray(z, float)), label)


def two_clusters(n, seed, a=(0.1, 0.1), b=(0.9, 0.9), sd=0.05):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.normal(a, sd, (n // 2, 2)), rng.normal(b, sd, (n - n // 2, 2))])


# -- Gibbs associations ---------------------------------------------------------------

def test_gibbs_symmetric_pair():
    s = state([[0.0], [2.0]], [1, 1])
    np.testing.assert_allclose(gibbs_association(v([1.0]), s), [0.5, 0.5])


def test_gibbs_hand_value():
    # (1 - lam) / lam = 1, so the weights are exp(0) and exp(-ln 2)
    s = state([[0.0], [math.sqrt(math.log(2))]], [1, 1], lam=0.5)
    np.testing.assert_allclose(gibbs_association(v([0.0]), s), [2 / 3, 1 / 3], rtol=1e-12)


def test_gibbs_single_label_match():
    s = state([[0.0], [0.1], [0.2]], [2, 1, 3])
    assert list(gibbs_association(v([5.0], 1), s)) == [0.0, 1.0, 0.0]


def test_gibbs_unassignable():
    with pytest.raises(UnassignableObservation):
        gibbs_association(v([0.0], 9), state([[0.0]], [1]))


@settings(max_examples=60)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.sampled_from([1, 2])),
                min_size=1, max_size=8),
       st.tuples(st.floats(0, 1), st.floats(0, 1)), st.sampled_from([1, 2]),
       st.floats(0.01, 0.99))
def test_gibbs_is_a_distribution_over_matching_labels(protos, z, label, lam):
    mus = [p[:2] for p in protos]
    labels = [p[2] for p in protos]
    if label not in labels:
        return
    s = state(mus, labels, lam=lam)
    p = gibbs_association(v(z, label), s)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p[np.array(labels) != label] == 0.0)
    # independent evaluation of the mass-weighted Gibbs form
    d = WeightedSquaredEuclidean([1, 1]).to_many(z, np.array(mus))
    logits = np.where(np.array(labels) == label,
                      np.log(s.mass) - (1 - lam) / lam * d, -np.inf)
    np.testing.assert_allclose(p, softmax(logits), atol=1e-12)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=8,
                unique=True),
       st.tuples(st.floats(0, 1), st.floats(0, 1)))
def test_gibbs_hard_limit(mus, z):
    s = state(mus, [1] * len(mus), lam=1e-3)
    d = WeightedSquaredEuclidean([1, 1]).to_many(z, np.array(mus))
    order = np.sort(d)
    if (order[1] - order[0]) * (1 - 1e-3) / 1e-3 < 50:
        return  # near-ties stay soft at any finite temperature
    p = gibbs_association(v(z), s)
    expected = np.zeros(len(mus))
    expected[np.argmin(d)] = 1.0
    np.testing.assert_allclose(p, expected, atol=1e-12)


# -- the SA recursion --------------------------------------------------------------------

def test_sa_step_with_unit_gain_collapses_to_targets():
    s = state([[0.3, 0.3]], [1], [0.2], b0=1.0, b1=1.0)
    z = np.array([0.7, 0.1])
    sa_step(s, v(z))
    assert s.mass[0] == pytest.approx(1.0)
    np.testing.assert_allclose(s.wsum[0], z)
    np.testing.assert_allclose(s.mu[0], z)
    assert s.step == 1


def test_sa_step_label_mismatch_decays_mass_only():
    s = state([[0.2, 0.2], [0.8, 0.8]], [1, 2], [0.5, 0.5])
    beta = s.config.beta(s.step)
    mu2 = s.mu[1].copy()
    sa_step(s, v([0.1, 0.1], 1))
    assert s.mass[1] == pytest.approx(0.5 * (1 - beta))
    np.testing.assert_allclose(s.mu[1], mu2, rtol=1e-12)


def test_sa_step_frozen_label_untouched():
    s = state([[0.2, 0.2], [0.8, 0.8]], [1, 2])
    before = (s.mass.copy(), s.wsum.copy())
    sa_step(s, v([0.9, 0.9], 2), frozen_labels={2})
    sa_step(s, v([0.1, 0.1], 1), frozen_labels={2})
    assert s.mass[1] == before[0][1]
    np.testing.assert_array_equal(s.wsum[1], before[1][1])


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.sampled_from([1, 2])),
                min_size=1, max_size=40))
def test_prototype_is_weighted_sum_over_mass(stream):
    s = state([[0.2, 0.2], [0.8, 0.8], [0.5, 0.5]], [1, 2, 1])
    for x, y, c in stream:
        sa_step(s, v([x, y], c))
        live = s.mass > 0
        np.testing.assert_allclose(s.mu[live], s.wsum[live] / s.mass[live, None], rtol=1e-9)
        assert np.all(s.mass >= 0)


def test_sa_converges_to_batch_fixed_point():
    Z = two_clusters(500, 1)
    init = np.array([[0.3, 0.5], [0.6, 0.4]])
    orc = fixed_point_oracle(Z, np.ones(500, int), 0.3, init, [1, 1], mass_weighted=True)
    assert orc.converged
    s = state(init, [1, 1], lam=0.3)
    rng = np.random.default_rng(2)
    for k in rng.integers(500, size=20000):
        sa_step(s, v(Z[k]))
    assert np.max(np.abs(s.mu - orc.mu)) < 0.05


# -- batch oracle ------------------------------------------------------------------------

def test_oracle_high_temperature_mean():
    r = fixed_point_oracle([[-1.0], [1.0]], [1, 1], 0.99, [[-0.5], [0.7]], [1, 1])
    np.testing.assert_allclose(r.mu, [[0.0], [0.0]], atol=1e-8)


def test_oracle_singleton():
    r = fixed_point_oracle([[0.3, 0.4]], [1], 0.5, [[0.0, 0.0]], [1])
    np.testing.assert_allclose(r.mu, [[0.3, 0.4]])


def test_oracle_low_temperature_cluster_means():
    Z = two_clusters(200, 3)
    r = fixed_point_oracle(Z, np.ones(200, int), 0.001, [[0.2, 0.2], [0.8, 0.8]], [1, 1])
    np.testing.assert_allclose(r.mu, [Z[:100].mean(0), Z[100:].mean(0)], atol=1e-9)


def test_oracle_respects_labels():
    Z = np.array([[0.0], [1.0]])
    r = fixed_point_oracle(Z, [1, 2], 0.9, [[0.5], [0.5]], [1, 2])
    np.testing.assert_allclose(r.mu, [[0.0], [1.0]])


def test_oracle_empty_batch():
    with pytest.raises(ValueError):
        fixed_point_oracle(np.zeros((0, 2)), [], 0.5, [[0, 0]], [1])


@pytest.mark.parametrize("lam", [0.05, 0.2, 0.5])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_oracle_free_energy_nonincreasing(lam, seed):
    rng = np.random.default_rng(seed)
    Z = rng.random((60, 2))
    labels = rng.integers(1, 3, 60)
    init = rng.random((4, 2))
    r = fixed_point_oracle(Z, labels, lam, init, [1, 1, 2, 2], max_iter=200)
    assert np.all(np.diff(r.free_energy) <= 1e-9)


def test_free_energy_single_point_single_codevector():
    # F = -lam log exp(-(1-lam)/lam d) = (1 - lam) d
    assert free_energy([[1.0]], [1], [[0.0]], [1], 0.25) == pytest.approx(0.75)


# -- structural moves ----------------------------------------------------------------------

def test_perturb_keeps_original_and_adds_one_copy_per_label():
    s = state([[0.5, 0.5]], [1])
    s.known_labels = {1, 2}
    perturb(s)
    assert s.K == 3 and sorted(s.labels) == [1, 1, 2]
    np.testing.assert_array_equal(s.mu[0], [0.5, 0.5])
    offsets = np.linalg.norm(s.mu[1:] - s.mu[0], axis=1)
    np.testing.assert_allclose(offsets, s.config.perturbation_delta)


def test_perturb_cardinality():
    s = state([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]], [1, 2, 1])
    perturb(s)
    assert s.K == 9


@given(st.lists(st.floats(0.01, 1), min_size=1, max_size=5), st.integers(1, 3))
def test_perturb_conserves_mass(masses, n_labels):
    k = len(masses)
    s = state(np.linspace(0, 1, 2 * k).reshape(k, 2), [1 + i % n_labels for i in range(k)],
              masses)
    s.known_labels = set(range(1, n_labels + 1))
    before = s.total_mass()
    perturb(s)
    assert s.total_mass() == pytest.approx(before, rel=1e-12)


def test_perturb_respects_k_max(caplog):
    s = state([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]], [1, 1, 1], k_max=4)
    perturb(s)
    assert s.K == 4
    assert "k_max" in caplog.text


def test_merge_coincident():
    s = state([[0.4, 0.4], [0.4, 0.4]], [1, 1], [0.3, 0.1])
    merge_and_prune(s)
    assert s.K == 1
    np.testing.assert_allclose(s.mu[0], [0.4, 0.4])
    assert s.mass[0] == pytest.approx(0.4)


def test_no_merge_beyond_tolerance():
    s = state([[0.0, 0.0], [0.5, 0.0]], [1, 1])
    merge_and_prune(s)
    assert s.K == 2


def test_no_merge_across_labels():
    s = state([[0.4, 0.4], [0.4, 0.4]], [1, 2])
    merge_and_prune(s)
    assert s.K == 2


def test_prune_light_codevector():
    s = state([[0.0, 0.0], [0.9, 0.9]], [1, 1], [0.5, 1e-6])
    merge_and_prune(s)
    assert s.K == 1 and s.mass[0] == 0.5


def test_prune_keeps_one_per_label():
    s = state([[0.0, 0.0], [0.9, 0.9]], [1, 2], [0.5, 1e-6])
    merge_and_prune(s)
    assert sorted(s.labels) == [1, 2]


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0.002, 1)),
                min_size=1, max_size=8))
def test_merge_conserves_mass_without_pruning(cvs):
    s = state([c[:2] for c in cvs], [1] * len(cvs), [c[2] for c in cvs])
    before = s.total_mass()
    merge_and_prune(s)
    assert s.total_mass() == pytest.approx(before, rel=1e-12)


def test_prune_removes_exactly_the_pruned_mass():
    s = state([[0.0, 0.0], [0.5, 0.5], [0.9, 0.9]], [1, 1, 1], [0.4, 5e-4, 2e-4])
    merge_and_prune(s)
    assert s.total_mass() == pytest.approx(0.4)


# -- levels, schedule, reheat ----------------------------------------------------------------

def test_run_level_degenerate_stream():
    s = state([[0.3, 0.3]], [1])
    stats = run_level(s, (v([0.3, 0.3]) for _ in range(1000)))
    assert stats.converged and stats.n_obs <= s.config.probe_window


def _stream(Z, seed, n=20000):
    rng = np.random.default_rng(seed)
    return (v(Z[k]) for k in rng.integers(len(Z), size=n))


def test_run_level_splits_below_critical_temperature():
    Z = two_clusters(400, 4)
    s = state([Z.mean(0)], [1], [1.0], lam=0.05)
    perturb(s)
    run_level(s, _stream(Z, 5))
    assert s.effective_count(0.01) == 2


def test_run_level_remerges_at_high_temperature():
    Z = two_clusters(400, 4)
    s = state([Z.mean(0)], [1], [1.0], lam=0.9)
    perturb(s)
    run_level(s, _stream(Z, 5))
    assert s.K == 1


def test_run_level_exhausted_stream():
    s = state([[0.3, 0.3]], [1])
    stats = run_level(s, iter([v([0.1, 0.9]), v([0.9, 0.1])]))
    assert stats.exhausted and not stats.converged


def test_anneal_lambda_sequence_and_monotone_k():
    Z = two_clusters(400, 6, a=(0.3, 0.5), b=(0.7, 0.5))
    s = state([Z.mean(0)], [1], [1.0], lam=0.9)
    res = anneal(s, _stream(Z, 7, 200000))
    lams = [lv.lam for lv in res.levels]
    np.testing.assert_allclose(lams[:3], [0.9, 0.81, 0.729])
    np.testing.assert_allclose(np.diff(np.log(lams)), math.log(0.9))
    ks = [lv.K for lv in res.levels]
    assert ks[0] == 1 and max(ks) >= 2
    assert all(a <= b for a, b in zip(ks, ks[1:]))
    assert not res.exhausted and lams[-1] * 0.9 < s.config.lambda_min


def test_reheat_raises_lambda_by_factor():
    s = state([[0.2, 0.2]], [1], lam=0.5)
    s.step = 40
    mu = s.mu.copy()
    reheat(s, 1.1)
    assert s.lam == pytest.approx(0.55) and s.step == 0
    np.testing.assert_array_equal(s.mu, mu)


def test_reheat_clamps_at_start():
    s = state([[0.2, 0.2]], [1], lam=0.89)
    reheat(s, 1.1)
    assert s.lam == s.config.lambda_start


def test_reheat_factor_must_exceed_one():
    with pytest.raises(ValueError):
        reheat(state([[0.2, 0.2]], [1]), 1.0)


def test_annealer_reheat_resumes():
    Z = two_clusters(100, 8)
    s = state([Z.mean(0)], [1], [1.0], lam=0.9, lambda_min=0.5)
    ann = Annealer(s)
    for z in _stream(Z, 9):
        ann.feed(z)
        if ann.done:
            break
    assert ann.done
    ann.reheat(1.1)
    assert not ann.done and s.step == 0


def test_new_label_spawns_codevector():
    s = state([[0.2, 0.2]], [1], lam=0.5)
    ann = Annealer(s, perturb_first=False)
    ann.feed(v([0.8, 0.8], 2))
    assert 2 in s.known_labels and 2 in set(s.labels)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(lambda_min=0.95)
    with pytest.raises(ValueError):
        TrainerConfig(reheat_factor=1.0)
    with pytest.raises(ValueError):
        TrainerConfig(b0=0)
    assert TrainerConfig().beta(0) == pytest.approx(0.1)


def test_determinism():
    Z = two_clusters(200, 10)

    def run():
        s = state([Z.mean(0)], [1], [1.0], lam=0.9, rng_seed=3)
        anneal(s, _stream(Z, 11, 30000))
        return s

    a, b = run(), run()
    np.testing.assert_array_equal(a.mu, b.mu)
    np.testing.assert_array_equal(a.mass, b.mass)
    assert a.lam == b.lam
