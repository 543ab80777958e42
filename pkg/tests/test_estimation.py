from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonem.errors import DomainError, InfeasibleError, NumericalError, ValidationError
from photonem.estimation import (
    EMConfig,
    bootstrap_errors,
    check_compatible,
    em_reconstruct,
    em_step,
    forward_probabilities,
    kkt_residual,
    likelihood_gradient,
    linear_baseline,
    log_likelihood,
)
from photonem.quadrature import STANDARD_GRID, BinGrid, response_matrix
from photonem.simulate import bin_events, sample_gaussian_route
from photonem.states import PhotonDistribution, coherent_distribution

from helpers import em_limit, grid_search_2state, random_instance


class TestForward:
    def test_basis_vector_selects_column(self, standard_response):
        e0 = np.zeros(21)
        e0[0] = 1
        np.testing.assert_array_equal(forward_probabilities(standard_response, e0),
                                      standard_response.entries[:, 0])

    def test_normalized(self, standard_response):
        rho = np.random.default_rng(0).dirichlet(np.ones(21))
        assert forward_probabilities(standard_response, rho).sum() == pytest.approx(1, abs=1e-10)

    def test_two_term_combination(self, standard_response):
        rho = np.zeros(21)
        rho[:2] = 0.5
        a = standard_response.entries
        np.testing.assert_allclose(forward_probabilities(standard_response, rho),
                                   [(row[0] + row[1]) / 2 for row in a], atol=1e-16)

    def test_dimension_mismatch(self, standard_response):
        with pytest.raises(ValidationError):
            forward_probabilities(standard_response, np.ones(5) / 5)


class TestLogLikelihood:
    def test_single_bin(self):
        a = np.array([[1.0], [0.0]])
        assert log_likelihood([40, 0], a, [1.0]) == -40.0

    def test_exact_data_maximizes(self):
        a = np.array([[0.7, 0.2], [0.2, 0.3], [0.1, 0.5]])
        truth = np.array([0.35, 0.65])
        k = 1000 * (a @ truth)
        best = log_likelihood(k, a, truth)
        rng = np.random.default_rng(1)
        for rho in rng.dirichlet(np.ones(2), size=10_000):
            assert log_likelihood(k, a, rho) <= best + 1e-9

    def test_linear_in_counts(self, small_instance):
        a, k = small_instance
        rho = [0.3, 0.7]
        assert log_likelihood(2 * k, a, rho) == 2 * log_likelihood(k, a, rho)

    def test_zero_count_bins_ignored(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert log_likelihood([10, 0], a, [1.0, 0.0]) == -10.0

    def test_infeasible_bin_named(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(InfeasibleError, match="bin 1") as info:
            log_likelihood([10, 3], a, [1.0, 0.0])
        assert info.value.bin_index == 1


class TestGradient:
    def test_vanishes_at_exact_data(self, standard_response):
        truth = coherent_distribution(1.0, 20)
        rho = np.asarray(truth) / np.asarray(truth).sum()
        n = 1e5
        k = n * forward_probabilities(standard_response, rho)
        np.testing.assert_allclose(likelihood_gradient(k, standard_response, rho), 0, atol=1e-8 * n)

    def test_finite_differences(self):
        rng = np.random.default_rng(7)
        eps = 1e-6
        for _ in range(100):
            a, k, _ = random_instance(rng, 20, 5)
            rho = rng.dirichlet(np.ones(5)) * 0.8 + 0.04
            g = likelihood_gradient(k, a, rho)
            for m in range(5):
                e = np.zeros(5)
                e[m] = eps
                fd = (log_likelihood(k, a, rho + e) - log_likelihood(k, a, rho - e)) / (2 * eps)
                assert fd == pytest.approx(g[m], rel=1e-4, abs=1e-6)

    def test_unseen_component_is_minus_n(self):
        a = np.array([[0.5, 0.0], [0.5, 0.0], [0.0, 1.0]])
        k = np.array([10.0, 6.0, 0.0])
        assert likelihood_gradient(k, a, [0.5, 0.5])[1] == -16.0


class TestEMStep:
    def test_hand_computed_step(self, small_instance):
        a, k = small_instance
        # p = (0.45, 0.25, 0.30); rho1 = 0.5 * (0.5*A/p + 0.3*A/p + 0.2*A/p) by column
        expected = [float(Fraction(122, 225)), float(Fraction(103, 225))]
        np.testing.assert_allclose(em_step(k, a, [0.5, 0.5]), expected, rtol=0, atol=1e-15)

    def test_fixed_point_on_exact_data(self, standard_response):
        rho = coherent_distribution(1.0, 20)
        rho = PhotonDistribution(np.asarray(rho) / np.asarray(rho).sum())
        k = 1e5 * forward_probabilities(standard_response, rho)
        out = em_step(k, standard_response, rho)
        np.testing.assert_allclose(np.asarray(out), np.asarray(rho), rtol=1e-12, atol=1e-17)

    def test_monotone_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            nb, ns = rng.integers(3, 25), rng.integers(2, 8)
            a, k, _ = random_instance(rng, nb, ns, rng.integers(10, 5000))
            rho = rng.dirichlet(np.ones(ns))
            before = log_likelihood(k, a, rho)
            after = log_likelihood(k, a, em_step(k, a, rho))
            assert after >= before - 1e-9 * abs(before)

    def test_zeros_stay_zero(self, small_instance):
        a, k = small_instance
        assert em_step(k, a, [1.0, 0.0])[1] == 0.0

    def test_returns_distribution_type(self, small_instance):
        a, k = small_instance
        out = em_step(k, a, PhotonDistribution([0.5, 0.5]))
        assert isinstance(out, PhotonDistribution)

    def test_discard_mode_renormalizes(self):
        grid = BinGrid(-2, 2, 40, "discard")
        a = response_matrix(grid, 6, 0.85)
        h = bin_events(sample_gaussian_route("coherent", 1.0, 0.85, 5000, 1), grid)
        out, factor = em_step(h, a, PhotonDistribution.uniform(6), return_factor=True)
        # N counts only binned events, so the update already sums to one
        assert np.asarray(out).sum() == pytest.approx(1.0, abs=1e-14)
        assert factor == pytest.approx(1.0, abs=1e-14)
        assert a.column_sums.min() < 0.99


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 15), st.integers(2, 6))
def test_simplex_preserved(seed, n_bins, n_states):
    rng = np.random.default_rng(seed)
    a, k, _ = random_instance(rng, n_bins, n_states)
    res = em_reconstruct(k, a, EMConfig(n_states - 1, 50))
    trace = res.loglik_trace
    assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[:-1]))
    rho = np.asarray(res.estimate)
    assert np.all(rho >= 0) and abs(rho.sum() - 1) <= 1e-12


class TestReconstruct:
    def test_trace_and_iteration_count(self, small_instance):
        a, k = small_instance
        res = em_reconstruct(k, a, EMConfig(1, 25))
        assert res.iterations_run == 25 and res.loglik_trace.size == 26
        assert res.loglik_trace[-1] == res.loglik_final

    def test_exact_data_recovers_truth(self):
        a = np.array([[0.7, 0.2], [0.2, 0.3], [0.1, 0.5]])
        truth = np.array([0.3, 0.7])
        k = 1000 * (a @ truth)
        res = em_reconstruct(k, a, EMConfig(1, 1000))
        assert 0.5 * np.abs(np.asarray(res.estimate) - truth).sum() < 1e-6
        assert res.kkt_residual < 1e-10

    def test_early_stopping(self, small_instance):
        a, k = small_instance
        res = em_reconstruct(k, a, EMConfig(1, 100_000, stop_tol=1e-12))
        assert res.iterations_run < 100_000

    def test_support_never_grows(self, small_instance):
        a, k = small_instance
        res = em_reconstruct(k, a, EMConfig(1, 200, PhotonDistribution([1.0, 0.0])))
        assert np.asarray(res.estimate).tolist() == [1.0, 0.0]

    def test_nonmonotone_step_detected(self, monkeypatch, small_instance):
        import photonem.estimation as est

        real = est._em_update
        calls = {"n": 0}

        def broken(k, A, r, n, renorm):
            calls["n"] += 1
            new, ll, f = real(k, A, r, n, renorm)
            return (np.array([0.99, 0.01]) if calls["n"] == 2 else new), ll, f

        monkeypatch.setattr(est, "_em_update", broken)
        with pytest.raises(NumericalError):
            em_reconstruct(small_instance[1], small_instance[0], EMConfig(1, 10))

    def test_config_validation(self):
        with pytest.raises(DomainError):
            EMConfig(5, 0)
        with pytest.raises(DomainError):
            EMConfig(5, 10, stop_tol=-1)
        with pytest.raises(DomainError):
            EMConfig(5, 10, init=PhotonDistribution.uniform(3))


def test_brute_force_equivalence():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        a, k, _ = random_instance(rng, 3, 2, 300)
        best = grid_search_2state(a, k)
        rho = em_limit(k, a)
        assert abs(rho[0] - best) <= 2e-4


class TestKKT:
    def test_zero_at_exact_data(self):
        a = np.array([[0.7, 0.2], [0.2, 0.3], [0.1, 0.5]])
        truth = np.array([0.3, 0.7])
        assert kkt_residual(1000 * (a @ truth), a, truth) <= 1e-10

    def test_zero_component_does_not_contribute(self):
        a = np.array([[0.5, 0.0], [0.5, 0.0], [0.0, 1.0]])
        k = np.array([10.0, 6.0, 0.0])
        assert kkt_residual(k, a, [1.0, 0.0]) == 0.0

    def test_fixed_point_characterization(self, small_instance):
        a, k = small_instance
        rho = em_limit(k, a)
        nxt = em_step(k, a, rho)
        assert 0.5 * np.abs(nxt - rho).sum() < 1e-12
        assert kkt_residual(k, a, rho) < 1e-8


class TestLinearBaseline:
    def test_exact_data(self, standard_response):
        truth = np.random.default_rng(3).dirichlet(np.ones(21))
        k = 1e5 * forward_probabilities(standard_response, truth)
        bl = linear_baseline(k, standard_response)
        np.testing.assert_allclose(bl.values, truth, atol=1e-8)
        assert bl.valid

    def test_rank_deficiency(self):
        a = np.array([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(DomainError, match="singular value"):
            linear_baseline([3, 4], a)

    def test_negative_components_on_simulated_data(self, standard_response):
        hits = 0
        for seed in range(10):
            h = bin_events(sample_gaussian_route("coherent", 1.0, 0.85, 100_000, seed), STANDARD_GRID)
            bl = linear_baseline(h, standard_response)
            hits += np.any(bl.values[10:21] < 0)
            assert not bl.valid
        assert hits >= 8


class TestBootstrap:
    def test_degenerate_data_has_no_spread(self):
        a = np.array([[0.6, 0.6], [0.3, 0.3], [0.1, 0.1]])
        res = bootstrap_errors([50, 0, 0], a, EMConfig(1, 20), 10, seed=1)
        np.testing.assert_array_equal(res.std, 0.0)

    def test_deterministic(self, small_instance):
        a, k = small_instance
        cfg = EMConfig(1, 30)
        r1 = bootstrap_errors(k, a, cfg, 12, seed=5)
        r2 = bootstrap_errors(k, a, cfg, 12, seed=5)
        np.testing.assert_array_equal(r1.std, r2.std)

    def test_error_shrinks_like_inverse_root_n(self):
        grid = STANDARD_GRID
        a = response_matrix(grid, 10, 0.85)
        cfg = EMConfig(10, 300, record_trace=False)
        err = []
        for n_events, seed in ((25_000, 1), (50_000, 2)):
            h = bin_events(sample_gaussian_route("coherent", 1.0, 0.85, n_events, seed), grid)
            err.append(bootstrap_errors(h, a, cfg, 50, seed=seed).std.mean())
        assert err[0] / err[1] == pytest.approx(np.sqrt(2), rel=0.2)

    def test_too_few_resamples(self, small_instance):
        with pytest.raises(DomainError):
            bootstrap_errors(small_instance[1], small_instance[0], EMConfig(1, 5), 5, 0)


class TestCompatibility:
    def test_grid_mismatch(self):
        a = response_matrix(BinGrid(-5, 5, 50), 3, 0.85)
        h = bin_events(sample_gaussian_route("coherent", 1.0, 0.85, 100, 1), STANDARD_GRID)
        with pytest.raises(ValidationError, match="grid"):
            check_compatible(h, a)

    def test_eta_mismatch(self):
        a = response_matrix(STANDARD_GRID, 3, 0.9)
        h = bin_events(sample_gaussian_route("coherent", 1.0, 0.85, 100, 1), STANDARD_GRID)
        with pytest.raises(ValidationError, match="eta"):
            check_compatible(h, a)
