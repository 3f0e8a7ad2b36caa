import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import LinAlgError

from hmarl.gp_model import (
    BetaSchedule,
    KernelSpec,
    TransitionDataset,
    beta_value,
    gp_fit,
    gp_predict,
    gp_update,
)


def dense_kernel(kind, ls, sv, a, b):
    diff = (a[:, None, :] - b[None, :, :]) / ls
    r2 = np.sum(diff**2, axis=-1)
    if kind == "se":
        return sv * np.exp(-0.5 * r2)
    r = np.sqrt(5.0 * r2)
    return sv * (1.0 + r + r**2 / 3.0) * np.exp(-r)


def dense_posterior(kind, ls, sv, noise, x, y, xq):
    """Textbook GP posterior through a dense linear solve, one target column."""
    k = dense_kernel(kind, ls, sv, x, x) + noise * np.eye(len(x))
    ks = dense_kernel(kind, ls, sv, xq, x)
    mean = ks @ np.linalg.solve(k, y)
    var = sv - np.sum(ks * np.linalg.solve(k, ks.T).T, axis=1)
    return mean, np.sqrt(np.maximum(var, 0))


def random_problem(rng, n, d, p):
    x = rng.uniform(-1, 1, (n, d))
    y = np.sin(x @ rng.normal(size=(d, p)))
    return x, y


class TestPosteriorOracle:
    @pytest.mark.parametrize("kind", ["se", "matern52"])
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_dense_solve(self, kind, seed):
        rng = np.random.default_rng(seed)
        d, p = 5, 3
        x, y = random_problem(rng, 60, d, p)
        ls = rng.uniform(0.3, 1.5, d)
        kernel = KernelSpec(kind, tuple(ls), 0.7)
        post = gp_fit(TransitionDataset(x, y), kernel, noise_var=1e-3)
        xq = rng.uniform(-1, 1, (40, d))
        mean, std = post.predict_delta(xq)
        for c in range(p):
            m_ref, s_ref = dense_posterior(kind, ls, 0.7, 1e-3, x, y[:, c], xq)
            np.testing.assert_allclose(mean[:, c], m_ref, rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(std[:, c], s_ref, rtol=1e-8, atol=1e-12)

    def test_distinct_kernels_per_coordinate(self):
        rng = np.random.default_rng(7)
        x, y = random_problem(rng, 30, 3, 2)
        kernels = (KernelSpec("se", (0.5, 0.5, 0.5), 1.0), KernelSpec("matern52", (1.0, 0.2, 2.0), 0.3))
        post = gp_fit(TransitionDataset(x, y), kernels, noise_var=1e-2)
        xq = rng.uniform(-1, 1, (10, 3))
        mean, std = post.predict_delta(xq)
        for c, k in enumerate(kernels):
            m_ref, s_ref = dense_posterior(k.kind, np.array(k.lengthscales), k.signal_variance, 1e-2, x, y[:, c], xq)
            np.testing.assert_allclose(mean[:, c], m_ref, rtol=1e-8)
            np.testing.assert_allclose(std[:, c], s_ref, rtol=1e-8)

    def test_single_point_by_hand(self):
        # k(x, x) = 1, noise 0.25, y = 1: mean 1/1.25, variance 1 - 1/1.25
        post = gp_fit(TransitionDataset(np.zeros((1, 1)), np.ones((1, 1))), KernelSpec("se", (1.0,), 1.0), 0.25)
        mean, std = post.predict_delta(np.zeros((1, 1)))
        assert mean[0, 0] == pytest.approx(0.8, abs=1e-12)
        assert std[0, 0] ** 2 == pytest.approx(0.2, abs=1e-12)


class TestPriorAndUpdates:
    def test_empty_data_is_prior(self):
        k = KernelSpec.isotropic("se", 5, 0.5, 0.05)
        post = gp_fit(TransitionDataset.empty(5, 3), k)
        mean, std = gp_predict(post, np.array([0.1, 0.2, 0.3]), np.array([0.5, -0.5]))
        np.testing.assert_array_equal(mean, [0.1, 0.2, 0.3])
        np.testing.assert_allclose(std, np.sqrt(0.05))

    def test_zero_row_update_unchanged(self):
        rng = np.random.default_rng(0)
        x, y = random_problem(rng, 10, 2, 1)
        post = gp_fit(TransitionDataset(x, y), KernelSpec.isotropic("se", 2))
        assert gp_update(post, np.zeros((0, 2)), np.zeros((0, 1))) is post

    def test_update_equals_refit(self):
        rng = np.random.default_rng(1)
        x, y = random_problem(rng, 20, 4, 2)
        k = KernelSpec.isotropic("matern52", 4, 0.8, 0.5)
        inc = gp_update(gp_fit(TransitionDataset(x[:12], y[:12]), k), x[12:], y[12:])
        full = gp_fit(TransitionDataset(x, y), k)
        xq = rng.uniform(-1, 1, (8, 4))
        for a, b in zip(inc.predict_delta(xq), full.predict_delta(xq)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_duplicate_inputs_stable(self):
        x = np.zeros((50, 2))
        y = np.ones((50, 1))
        post = gp_fit(TransitionDataset(x, y), KernelSpec.isotropic("se", 2, 0.5, 1.0), noise_var=1e-10)
        mean, std = post.predict_delta(np.zeros((1, 2)))
        assert np.isfinite(mean).all() and np.isfinite(std).all()
        assert mean[0, 0] == pytest.approx(1.0, abs=1e-4)

    def test_dimension_errors(self):
        post = gp_fit(TransitionDataset.empty(5, 3), KernelSpec.isotropic("se", 5))
        with pytest.raises(ValueError):
            gp_predict(post, np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError):
            gp_fit(TransitionDataset.empty(4, 3), KernelSpec.isotropic("se", 5))

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            KernelSpec("rbf", (1.0,), 1.0)
        with pytest.raises(ValueError):
            KernelSpec("se", (0.0,), 1.0)
        with pytest.raises(ValueError):
            gp_fit(TransitionDataset.empty(1, 1), KernelSpec("se", (1.0,), 1.0), noise_var=0.0)
        with pytest.raises(ValueError):
            TransitionDataset(np.array([[np.nan]]), np.zeros((1, 1)))

    def test_ill_conditioned_raises(self):
        from hmarl.gp_model import _factor

        bad = -np.ones((3, 3))
        with pytest.raises(LinAlgError, match="ill-conditioned"):
            _factor(bad, 1e-12, 1.0)


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 25), st.sampled_from(["se", "matern52"]))
    def test_variance_bounded_by_prior(self, seed, n, kind):
        rng = np.random.default_rng(seed)
        x, y = random_problem(rng, n, 3, 1)
        post = gp_fit(TransitionDataset(x, y), KernelSpec.isotropic(kind, 3, 0.6, 0.4), noise_var=1e-4)
        _, std = post.predict_delta(rng.uniform(-2, 2, (20, 3)))
        assert np.all(std >= 0)
        assert np.all(std**2 <= 0.4 + 1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 20))
    def test_conditioning_never_increases_variance(self, seed, n):
        rng = np.random.default_rng(seed)
        x, y = random_problem(rng, n + 5, 2, 1)
        k = KernelSpec.isotropic("se", 2, 0.5, 1.0)
        small = gp_fit(TransitionDataset(x[:n], y[:n]), k)
        big = gp_update(small, x[n:], y[n:])
        xq = rng.uniform(-1, 1, (15, 2))
        assert np.all(big.predict_delta(xq)[1] <= small.predict_delta(xq)[1] + 1e-9)


class TestBeta:
    def test_constant(self):
        assert beta_value(BetaSchedule("constant", 2.0), 100) == 2.0

    def test_log_growth(self):
        sched = BetaSchedule("log", 1.0)
        assert beta_value(sched, 0) == pytest.approx(1.0)
        assert beta_value(sched, 100) > beta_value(sched, 10)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            BetaSchedule("constant", -1.0)
