import math

import numpy as np
import pytest

from shiftcal.kabc import (
    PosteriorEmbedding,
    PriorSpec,
    build_embedding,
    embedding_distance,
    embedding_eval,
    regularization_schedule,
    sample_prior,
    simulate_pseudo_outputs,
)
from shiftcal.kern import ParamKernel
from shiftcal.sim import AssemblyLineSimulator, Dataset, LinearSimulator
from shiftcal.weights import ImportanceWeights, ordinary_weights


def make_dataset(x, y):
    return Dataset(np.asarray(x, dtype=float), np.asarray(y, dtype=float), seed=0)


class TestPriorSpec:
    def test_uniform_support_containment(self):
        prior = PriorSpec.uniform([0.0, 0.0], [1.0, 1.0])
        draws = sample_prior(prior, 500, seed=0)
        assert draws.shape == (500, 2)
        assert np.all(draws >= 0.0) and np.all(draws <= 1.0)

    def test_degenerate_normal_collapses(self):
        prior = PriorSpec.normal([2.0, -1.0], [0.0, 0.0])
        draws = sample_prior(prior, 10, seed=1)
        assert np.array_equal(draws, np.tile([2.0, -1.0], (10, 1)))

    def test_sample_variance_statistical(self):
        # per-coordinate sample variance of N(0, 5 I) draws within 10% of 5
        prior = PriorSpec.normal([0.0, 0.0], [math.sqrt(5.0)] * 2)
        draws = sample_prior(prior, 10_000, seed=2)
        var = draws.var(axis=0)
        assert np.all(np.abs(var - 5.0) < 0.5)

    def test_reproducible(self):
        prior = PriorSpec.normal([0.0], [1.0])
        assert np.array_equal(sample_prior(prior, 7, seed=3), sample_prior(prior, 7, seed=3))

    def test_log_pdf_uniform(self):
        prior = PriorSpec.uniform([0.0], [2.0])
        assert prior.log_pdf([1.0]) == pytest.approx(math.log(0.5))
        assert prior.log_pdf([3.0]) == -np.inf

    def test_log_pdf_normal_matches_formula(self):
        prior = PriorSpec.normal([1.0, 0.0], [2.0, 0.5])
        theta = np.array([0.0, 1.0])
        expected = sum(
            -0.5 * ((t - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
            for t, mu, s in zip(theta, [1.0, 0.0], [2.0, 0.5])
        )
        assert prior.log_pdf(theta) == pytest.approx(expected, rel=1e-12)

    def test_center_and_box(self):
        uni = PriorSpec.uniform([0.0, 2.0], [4.0, 6.0])
        assert np.array_equal(uni.center(), [2.0, 4.0])
        low, high = PriorSpec.normal([1.0], [2.0]).search_box(n_std=3.0)
        assert low[0] == -5.0 and high[0] == 7.0

    def test_dict_round_trip_with_var(self):
        spec = {"family": "normal", "mean": [0.0, 0.0], "var": [5.0, 5.0]}
        prior = PriorSpec.from_dict(spec)
        assert prior.std == (math.sqrt(5.0), math.sqrt(5.0))
        assert PriorSpec.from_dict(prior.to_dict()) == prior

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorSpec.uniform([1.0], [0.0])
        with pytest.raises(ValueError):
            PriorSpec.normal([0.0], [-1.0])


class TestSimulatePseudoOutputs:
    def test_zero_parameters_give_zero_outputs(self):
        pseudo = simulate_pseudo_outputs(
            LinearSimulator(), np.zeros((1, 2)), np.linspace(-1, 1, 5), seed=0
        )
        assert np.array_equal(pseudo.values, np.zeros((1, 5)))

    def test_single_draw_equals_direct_evaluation(self):
        sim = LinearSimulator()
        xs = np.array([0.0, 1.0, 2.0])
        theta = np.array([1.0, 3.0])
        pseudo = simulate_pseudo_outputs(sim, theta[None, :], xs, seed=0)
        assert np.array_equal(pseudo.values[0], sim.evaluate_many(xs, theta))

    def test_stochastic_batch_reproducible(self):
        sim = AssemblyLineSimulator()
        thetas = np.array([[2.0, 0.5, 5.0, 1.0], [3.0, 0.3, 6.0, 0.5]])
        xs = np.array([10.0, 20.0, 30.0])
        a = simulate_pseudo_outputs(sim, thetas, xs, seed=5)
        b = simulate_pseudo_outputs(sim, thetas, xs, seed=5)
        assert np.array_equal(a.values, b.values)
        c = simulate_pseudo_outputs(sim, thetas, xs, seed=6)
        assert not np.array_equal(a.values, c.values)

    def test_error_carries_context(self):
        sim = AssemblyLineSimulator()
        with pytest.raises(RuntimeError, match=r"input 1 .* draw 0"):
            simulate_pseudo_outputs(sim, np.array([[2.0, 0.5, 5.0, 1.0]]), [5.0, 0.2], seed=0)


class TestBuildEmbedding:
    def test_single_draw_scalar_weight(self):
        dataset = make_dataset([0.0, 1.0], [0.5, 0.5])
        pseudo = simulate_pseudo_outputs(LinearSimulator(), np.array([[0.0, 0.0]]), dataset.x, 0)
        eps = 0.3
        emb = build_embedding(
            pseudo, dataset, ordinary_weights(2), sigma2=1.0, sigma2_theta=1.0, epsilon=eps
        )
        k = math.exp(-(0.25 + 0.25) / 2.0)
        assert emb.weights[0] == pytest.approx(k / (1 + eps), rel=1e-12)

    def test_small_sigma_concentrates_on_matching_row(self):
        # observed outputs equal one pseudo-output row; as sigma2 -> 0 the
        # weight mass concentrates on that row
        rng = np.random.default_rng(0)
        thetas = rng.normal(size=(3, 2))
        values = rng.normal(size=(3, 4))
        dataset = make_dataset(np.arange(4), values[1])
        from shiftcal.kabc import PseudoOutputs

        pseudo = PseudoOutputs(thetas=thetas, values=values)
        emb = build_embedding(
            pseudo, dataset, ordinary_weights(4), sigma2=1e-3, sigma2_theta=1.0, epsilon=1e-6
        )
        w = emb.weights
        assert w[1] > 10 * max(abs(w[0]), abs(w[2]))

    def test_benchmark_epsilon_stays_finite(self):
        rng = np.random.default_rng(1)
        thetas = rng.normal(0, math.sqrt(5), size=(30, 2))
        xs = rng.normal(0.5, 0.5, size=20)
        dataset = make_dataset(xs, -xs + xs**3 + rng.normal(0, math.sqrt(2), 20))
        pseudo = simulate_pseudo_outputs(LinearSimulator(), thetas, xs, seed=0)
        emb = build_embedding(
            pseudo, dataset, ordinary_weights(20), sigma2=100.0, sigma2_theta=10.0, epsilon=1.0
        )
        assert np.all(np.isfinite(emb.weights))
        assert np.isfinite(emb.evaluate(np.zeros(2)))

    def test_weight_mode_reduction(self):
        # ordinary weights and importance weights of identical densities
        # give identical embeddings
        from shiftcal.weights import DensitySpec, importance_weights

        rng = np.random.default_rng(2)
        xs = rng.normal(0.5, 0.5, size=15)
        dataset = make_dataset(xs, -xs + xs**3)
        thetas = rng.normal(0, 1, size=(10, 2))
        pseudo = simulate_pseudo_outputs(LinearSimulator(), thetas, xs, seed=0)
        q = DensitySpec.normal(0.5, 0.5)
        emb_a = build_embedding(
            pseudo, dataset, ordinary_weights(15), sigma2=50.0, sigma2_theta=5.0, epsilon=0.5
        )
        emb_b = build_embedding(
            pseudo,
            dataset,
            importance_weights(xs, q, q),
            sigma2=50.0,
            sigma2_theta=5.0,
            epsilon=0.5,
        )
        assert np.array_equal(emb_a.weights, emb_b.weights)

    def test_permutation_equivariance(self):
        from shiftcal.kabc import PseudoOutputs

        rng = np.random.default_rng(3)
        thetas = rng.normal(size=(12, 2))
        values = rng.normal(size=(12, 6))
        dataset = make_dataset(np.arange(6), rng.normal(size=6))
        beta = ordinary_weights(6)
        emb = build_embedding(
            PseudoOutputs(thetas, values), dataset, beta, 5.0, 2.0, 0.1
        )
        perm = rng.permutation(12)
        emb_p = build_embedding(
            PseudoOutputs(thetas[perm], values[perm]), dataset, beta, 5.0, 2.0, 0.1
        )
        assert np.allclose(emb_p.weights, emb.weights[perm], rtol=0, atol=1e-10)
        for theta in rng.normal(size=(5, 2)):
            assert emb_p.evaluate(theta) == pytest.approx(emb.evaluate(theta), abs=1e-10)


class TestEmbeddingEval:
    def test_single_atom_maximized_at_center(self):
        atom = np.array([[0.5, -1.0]])
        emb = PosteriorEmbedding(atom, np.array([1.0]), ParamKernel(1.0))
        assert embedding_eval(emb, atom[0]) == 1.0
        assert embedding_eval(emb, [0.0, 0.0]) < 1.0

    def test_zero_weights_zero_everywhere(self):
        emb = PosteriorEmbedding(np.zeros((3, 1)), np.zeros(3), ParamKernel(1.0))
        for theta in ([0.0], [1.0], [-2.0]):
            assert embedding_eval(emb, theta) == 0.0

    def test_two_atoms_hand_sum(self):
        draws = np.array([[0.0], [2.0]])
        weights = np.array([0.3, -0.4])
        emb = PosteriorEmbedding(draws, weights, ParamKernel(2.0))
        theta = [1.0]
        expected = 0.3 * math.exp(-1 / 4) - 0.4 * math.exp(-1 / 4)
        assert embedding_eval(emb, theta) == pytest.approx(expected, rel=1e-14)

    def test_dimension_mismatch(self):
        emb = PosteriorEmbedding(np.zeros((2, 2)), np.ones(2), ParamKernel(1.0))
        with pytest.raises(ValueError):
            embedding_eval(emb, [0.0])

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        emb = PosteriorEmbedding(
            rng.normal(size=(5, 3)), rng.normal(size=5), ParamKernel(2.5), meta={"seed": 9}
        )
        path = tmp_path / "embedding.json"
        emb.to_json(path)
        back = PosteriorEmbedding.from_json(path)
        assert np.array_equal(back.draws, emb.draws)
        assert np.array_equal(back.weights, emb.weights)
        assert back.kernel.sigma2 == emb.kernel.sigma2
        assert back.meta == {"seed": 9}


class TestEmbeddingDistance:
    def test_identical_embeddings(self):
        rng = np.random.default_rng(5)
        emb = PosteriorEmbedding(rng.normal(size=(4, 2)), rng.normal(size=4), ParamKernel(1.0))
        assert embedding_distance(emb, emb) == 0.0

    def test_matches_quadratic_form(self):
        rng = np.random.default_rng(6)
        kern = ParamKernel(1.5)
        draws = rng.normal(size=(6, 2))
        wa, wb = rng.normal(size=6), rng.normal(size=6)
        a = PosteriorEmbedding(draws, wa, kern)
        b = PosteriorEmbedding(draws, wb, kern)
        gram = kern.gram(draws)
        delta = wa - wb
        expected = math.sqrt(delta @ gram @ delta)
        assert embedding_distance(a, b) == pytest.approx(expected, rel=1e-10)

    def test_bandwidth_mismatch_rejected(self):
        a = PosteriorEmbedding(np.zeros((1, 1)), np.ones(1), ParamKernel(1.0))
        b = PosteriorEmbedding(np.zeros((1, 1)), np.ones(1), ParamKernel(2.0))
        with pytest.raises(ValueError):
            embedding_distance(a, b)


class TestRegularizationSchedule:
    def test_m_one_returns_constant(self):
        assert regularization_schedule(1, b=2.0, C=0.7) == 0.7

    def test_desk_value(self):
        # direct arithmetic oracle: 512 ** (-2/9) = 2 ** (-2) = 0.25 exactly
        assert regularization_schedule(512, b=2.0, C=1.0) == pytest.approx(0.25, rel=1e-14)

    def test_large_b_limit_is_quarter_power(self):
        # exponent tends to -1/4 as b grows
        value = regularization_schedule(16, b=1e9, C=1.0)
        assert value == pytest.approx(16 ** (-0.25), rel=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            regularization_schedule(0, b=2.0, C=1.0)
        with pytest.raises(ValueError):
            regularization_schedule(10, b=1.0, C=1.0)
        with pytest.raises(ValueError):
            regularization_schedule(10, b=2.0, C=0.0)
