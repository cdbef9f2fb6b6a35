"""Exact transport, closed-form 1-D distances, and forward-image embeddings."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wkclust.ot import (
    DiscreteDistribution,
    TransportPlan,
    exact_wasserstein,
    forward_images,
    lot_distance,
    wasserstein_1d,
)

from _oracles import lp_transport, quantile_wasserstein_grid
from conftest import make_distribution


def dirac(x):
    return DiscreteDistribution(support=np.atleast_2d(np.asarray(x, dtype=float)), weights=np.array([1.0]))


class TestDiscreteDistribution:
    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(support=np.zeros((2, 1)), weights=np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            DiscreteDistribution(support=np.zeros((2, 1)), weights=np.array([1.5, -0.5]))

    def test_rejects_unnormalized_weights(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(support=np.zeros((2, 1)), weights=np.array([0.6, 0.6]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(support=np.zeros((3, 2)), weights=np.array([0.5, 0.5]))

    def test_accepts_weights_within_tolerance(self):
        w = np.array([0.5, 0.5 + 4e-10])
        d = DiscreteDistribution(support=np.zeros((2, 1)), weights=w)
        assert d.n_points == 2 and d.dim == 1


class TestExactWasserstein:
    def test_identity_is_zero_with_diagonal_plan(self, rng):
        mu = make_distribution(rng, n_points=6, dim=2)
        distance, plan = exact_wasserstein(mu, mu)
        assert distance == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(plan.weights, np.diag(mu.weights), atol=1e-15)

    def test_two_diracs_distance_is_euclidean(self):
        a = dirac([0.0, 0.0, 0.0])
        b = dirac([1.0, 2.0, 2.0])
        distance, plan = exact_wasserstein(a, b)
        assert distance == pytest.approx(3.0, abs=1e-12)
        np.testing.assert_allclose(plan.weights, [[1.0]])

    def test_split_mass_instance(self):
        # half the mass moves 0.5 left, half moves 0.5 right
        mu = DiscreteDistribution(support=np.array([[0.0], [1.0]]), weights=np.array([0.5, 0.5]))
        nu = DiscreteDistribution(support=np.array([[0.5]]), weights=np.array([1.0]))
        distance, _ = exact_wasserstein(mu, nu)
        assert distance == pytest.approx(0.5, abs=1e-12)
        assert wasserstein_1d(mu, nu) == pytest.approx(0.5, abs=1e-12)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            exact_wasserstein(dirac([0.0]), dirac([0.0, 0.0]))

    def test_matches_dense_lp_on_random_instances(self, rng):
        for _ in range(100):
            a = make_distribution(rng, dim=int(rng.integers(1, 4)))
            b = make_distribution(rng, dim=a.dim)
            distance, plan = exact_wasserstein(a, b)
            ref_distance, _ = lp_transport(a.support, a.weights, b.support, b.weights)
            assert distance == pytest.approx(ref_distance, abs=1e-8)
            assert np.max(np.abs(plan.weights.sum(axis=1) - a.weights)) < 1e-7
            assert np.max(np.abs(plan.weights.sum(axis=0) - b.weights)) < 1e-7
            assert np.min(plan.weights) >= 0.0

    def test_symmetry(self, rng):
        for _ in range(25):
            a = make_distribution(rng, dim=2)
            b = make_distribution(rng, dim=2)
            dab, _ = exact_wasserstein(a, b)
            dba, _ = exact_wasserstein(b, a)
            assert abs(dab - dba) < 1e-9

    def test_triangle_inequality(self, rng):
        for _ in range(25):
            a = make_distribution(rng, dim=2)
            b = make_distribution(rng, dim=2)
            c = make_distribution(rng, dim=2)
            dab, _ = exact_wasserstein(a, b)
            dbc, _ = exact_wasserstein(b, c)
            dac, _ = exact_wasserstein(a, c)
            assert dac <= dab + dbc + 1e-7


@st.composite
def distribution_1d(draw):
    n = draw(st.integers(min_value=1, max_value=20))
    xs = draw(
        st.lists(
            st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
            min_size=n,
            max_size=n,
        )
    )
    ws = draw(
        st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=n, max_size=n)
    )
    w = np.asarray(ws)
    return DiscreteDistribution(support=np.asarray(xs)[:, None], weights=w / w.sum())


class TestWasserstein1D:
    @settings(max_examples=60, deadline=None)
    @given(distribution_1d(), distribution_1d())
    def test_closed_form_matches_lp(self, a, b):
        closed = wasserstein_1d(a, b)
        lp, _ = exact_wasserstein(a, b)
        assert closed == pytest.approx(lp, abs=1e-7, rel=1e-7)

    def test_matches_quadrature_oracle(self, rng):
        for _ in range(10):
            a = make_distribution(rng, dim=1)
            b = make_distribution(rng, dim=1)
            got = wasserstein_1d(a, b)
            ref = quantile_wasserstein_grid(a.support, a.weights, b.support, b.weights)
            assert got == pytest.approx(ref, abs=5e-4)

    def test_rejects_multidimensional_input(self, rng):
        a = make_distribution(rng, dim=2)
        with pytest.raises(ValueError):
            wasserstein_1d(a, a)

    def test_support_order_invariance(self, rng):
        a = make_distribution(rng, n_points=7, dim=1)
        b = make_distribution(rng, n_points=5, dim=1)
        perm = rng.permutation(7)
        a_shuffled = DiscreteDistribution(support=a.support[perm], weights=a.weights[perm])
        assert wasserstein_1d(a, b) == pytest.approx(wasserstein_1d(a_shuffled, b), abs=1e-12)


class TestForwardImages:
    def test_images_of_reference_under_itself_are_its_support(self, rng):
        # distinct support points force the identity coupling
        sigma = make_distribution(rng, n_points=8, dim=2)
        _, plan = exact_wasserstein(sigma, sigma)
        images = forward_images(sigma, sigma, plan)
        np.testing.assert_allclose(images.images, sigma.support, atol=1e-12)

    def test_single_point_reference_images_the_mean(self, rng):
        sigma = dirac([0.0, 0.0])
        mu = make_distribution(rng, n_points=6, dim=2)
        _, plan = exact_wasserstein(sigma, mu)
        images = forward_images(sigma, mu, plan)
        mean = np.sum(mu.weights[:, None] * mu.support, axis=0)
        np.testing.assert_allclose(images.images[0], mean, atol=1e-12)

    def test_rejects_mismatched_plan(self, rng):
        sigma = make_distribution(rng, n_points=4, dim=2)
        mu = make_distribution(rng, n_points=5, dim=2)
        other = make_distribution(rng, n_points=6, dim=2)
        _, plan = exact_wasserstein(sigma, mu)
        with pytest.raises(ValueError):
            forward_images(sigma, other, plan)


class TestLotDistance:
    def test_matches_exact_distance_against_the_reference(self, rng):
        # with equal-size uniform supports the optimal plan is a permutation,
        # each image is a single support point, and the linear approximation
        # against sigma itself reproduces the exact distance; in general it
        # only lower-bounds it (images average the mass each row spreads out)
        n = 7
        uniform = np.full(n, 1.0 / n)
        sigma = DiscreteDistribution(support=rng.normal(size=(n, 2)), weights=uniform)
        mu = DiscreteDistribution(support=rng.normal(size=(n, 2)), weights=uniform)
        d_exact, plan_mu = exact_wasserstein(sigma, mu)
        _, plan_sigma = exact_wasserstein(sigma, sigma)
        a_mu = forward_images(sigma, mu, plan_mu)
        a_sigma = forward_images(sigma, sigma, plan_sigma)
        assert lot_distance(sigma.weights, a_mu, a_sigma) == pytest.approx(d_exact, abs=1e-9)

    def test_small_relative_error_on_general_pairs(self, rng):
        sigma = make_distribution(rng, n_points=10, dim=2)
        for _ in range(10):
            mu = make_distribution(rng, n_points=8, dim=2)
            d_exact, plan_mu = exact_wasserstein(sigma, mu)
            _, plan_sigma = exact_wasserstein(sigma, sigma)
            a_mu = forward_images(sigma, mu, plan_mu)
            a_sigma = forward_images(sigma, sigma, plan_sigma)
            approx = lot_distance(sigma.weights, a_mu, a_sigma)
            assert approx <= d_exact + 1e-9
            assert approx >= 0.5 * d_exact

    def test_zero_for_distinct_distributions_sharing_images(self):
        # a one-point reference collapses every distribution to its mean
        sigma = dirac([0.0])
        a = DiscreteDistribution(support=np.array([[-1.0], [1.0]]), weights=np.array([0.5, 0.5]))
        b = DiscreteDistribution(support=np.array([[-2.0], [2.0]]), weights=np.array([0.5, 0.5]))
        _, plan_a = exact_wasserstein(sigma, a)
        _, plan_b = exact_wasserstein(sigma, b)
        ia = forward_images(sigma, a, plan_a)
        ib = forward_images(sigma, b, plan_b)
        d_true, _ = exact_wasserstein(a, b)
        assert lot_distance(sigma.weights, ia, ib) == pytest.approx(0.0, abs=1e-12)
        assert d_true > 0.5

    def test_rejects_reference_size_mismatch(self, rng):
        sigma = make_distribution(rng, n_points=4, dim=2)
        tau = make_distribution(rng, n_points=5, dim=2)
        mu = make_distribution(rng, n_points=6, dim=2)
        _, plan_s = exact_wasserstein(sigma, mu)
        _, plan_t = exact_wasserstein(tau, mu)
        im_s = forward_images(sigma, mu, plan_s)
        im_t = forward_images(tau, mu, plan_t)
        with pytest.raises(ValueError):
            lot_distance(sigma.weights, im_s, im_t)


class TestTransportPlanValidation:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            TransportPlan(
                weights=np.array([[0.6, -0.1], [0.0, 0.5]]),
                source=np.array([0.5, 0.5]),
                target=np.array([0.6, 0.4]),
            )

    def test_rejects_bad_marginals(self):
        with pytest.raises(ValueError):
            TransportPlan(
                weights=np.array([[0.5, 0.0], [0.0, 0.5]]),
                source=np.array([0.4, 0.6]),
                target=np.array([0.5, 0.5]),
            )
