"""Acquisition values, the q=2 closed form, Thompson sampling, and the maximizer."""

import numpy as np
import pytest

from prefbo.acquisition import (
    AcquisitionSpec,
    BaseSampleSet,
    acquisition_value_and_grad,
    eubo_closed_form_q2,
    incumbent_value,
    optimize_acquisition,
    qei_value,
    qeubo_value,
    random_query,
    thompson_query,
)
from prefbo.core import (
    BoxDomain,
    FiniteDomain,
    PreferenceDataset,
    Query,
    Response,
    append_observation,
)
from prefbo.model import Hyperparameters, fit_laplace, posterior_at


def quadratic_dataset(rng, n=12, d=2):
    ds = PreferenceDataset()
    for _ in range(n):
        pts = rng.uniform(0, 1, size=(2, d))
        u = -np.sum((pts - 0.5) ** 2, axis=1)
        ds = append_observation(ds, Query(pts), Response(int(np.argmax(u))))
    return ds


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(99)
    dom = BoxDomain(np.zeros(2), np.ones(2))
    hyper = Hyperparameters(
        lengthscales=[0.3, 0.3], outputscale=1.0, mean_const=0.0, noise_level=0.1
    )
    return fit_laplace(quadratic_dataset(rng), hyper, dom)


class TestClosedForm:
    def test_zero_mean_unit_gap_gives_phi0(self):
        # s = 1 via independent components with variance 1/2 each
        val = eubo_closed_form_q2(np.zeros(2), 0.5 * np.eye(2))
        assert val == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-12)

    def test_deterministic_max(self):
        assert eubo_closed_form_q2(np.array([3.0, 0.0]), np.zeros((2, 2))) == 3.0

    def test_swap_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            mean = rng.normal(size=2)
            a = rng.normal(size=(2, 2))
            cov = a @ a.T
            flipped_cov = cov[::-1][:, ::-1].copy()
            assert eubo_closed_form_q2(mean, cov) == pytest.approx(
                eubo_closed_form_q2(mean[::-1], flipped_cov), rel=1e-12
            )

    def test_monte_carlo_oracle(self):
        # 1e6 bivariate samples as an independent check of the formula
        rng = np.random.default_rng(11)
        mean = np.array([0.3, -0.2])
        cov = np.array([[1.2, 0.4], [0.4, 0.8]])
        samples = rng.multivariate_normal(mean, cov, size=1_000_000)
        mc = samples.max(axis=1).mean()
        assert eubo_closed_form_q2(mean, cov) == pytest.approx(mc, abs=3e-3)

    def test_non_psd_rejected(self):
        with pytest.raises(ValueError):
            eubo_closed_form_q2(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestQeuboValue:
    def test_degenerate_query_equals_posterior_mean(self, model):
        x = np.array([0.3, 0.6])
        query = np.array([x, x])
        base = BaseSampleSet.draw(128, 2, np.random.default_rng(0))
        mean = posterior_at(model, query).mean[0]
        assert qeubo_value(model, query, base) == pytest.approx(mean, abs=1e-12)

    def test_dominates_posterior_means(self, model):
        rng = np.random.default_rng(3)
        base = BaseSampleSet.draw(512, 2, rng)
        for _ in range(10):
            query = rng.uniform(0, 1, size=(2, 2))
            post = posterior_at(model, query)
            value = qeubo_value(model, query, base)
            mc_se = np.sqrt(np.max(np.diag(post.covariance)) / base.n)
            assert value >= post.mean.max() - 3 * mc_se

    def test_matches_closed_form_at_large_n(self, model):
        rng = np.random.default_rng(17)
        base = BaseSampleSet.draw(2**16, 2, rng)
        scale = np.sqrt(model.hyper.outputscale)
        for _ in range(5):
            query = rng.uniform(0, 1, size=(2, 2))
            post = posterior_at(model, query)
            exact = eubo_closed_form_q2(post.mean, post.covariance)
            assert qeubo_value(model, query, base) == pytest.approx(
                exact, abs=5e-3 * scale
            )

    def test_permutation_invariance_with_permuted_base(self, model):
        rng = np.random.default_rng(8)
        base = BaseSampleSet.draw(128, 3, rng)
        query = rng.uniform(0, 1, size=(3, 2))
        perm = np.array([2, 0, 1])
        permuted = BaseSampleSet(base.samples[:, perm])
        assert qeubo_value(model, query, base) == pytest.approx(
            qeubo_value(model, query[perm], permuted), abs=1e-12
        )

    def test_base_shape_checked(self, model):
        base = BaseSampleSet.draw(16, 3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            qeubo_value(model, np.zeros((2, 2)), base)


class TestQeiValue:
    def test_sentinel_incumbent_reduces_to_qeubo(self, model):
        rng = np.random.default_rng(5)
        base = BaseSampleSet.draw(256, 2, rng)
        query = rng.uniform(0, 1, size=(2, 2))
        sentinel = -1e6
        assert qei_value(model, query, sentinel, base) == pytest.approx(
            qeubo_value(model, query, base) - sentinel, rel=1e-12
        )

    def test_unreachable_incumbent_kills_value(self, model):
        rng = np.random.default_rng(6)
        base = BaseSampleSet.draw(256, 2, rng)
        query = rng.uniform(0, 1, size=(2, 2))
        post = posterior_at(model, query)
        incumbent = post.mean.max() + 10 * np.sqrt(np.diag(post.covariance).max())
        value = qei_value(model, query, incumbent, base)
        assert value <= 1e-3 * np.sqrt(model.hyper.outputscale)

    def test_shared_base_identity(self, model):
        rng = np.random.default_rng(7)
        base = BaseSampleSet.draw(128, 2, rng)
        for _ in range(10):
            query = rng.uniform(0, 1, size=(2, 2))
            incumbent = float(rng.normal())
            lhs = qei_value(model, query, incumbent, base)
            rhs = qeubo_value(model, query, base) - incumbent
            assert lhs >= rhs - 1e-12


class TestIncumbent:
    def test_max_of_two(self, model):
        ds = model.dataset
        means = posterior_at(model, ds.points).mean
        assert incumbent_value(model, ds) == pytest.approx(means.max(), abs=1e-12)

    def test_empty_dataset_rejected(self, model):
        with pytest.raises(ValueError):
            incumbent_value(model, PreferenceDataset())

    def test_monotone_in_point_set(self, model):
        ds = model.dataset
        bigger = append_observation(
            ds, Query([[0.51, 0.52], [0.05, 0.05]]), Response(0)
        )
        assert incumbent_value(model, bigger) >= incumbent_value(model, ds) - 1e-12


class TestGradient:
    def test_matches_central_differences(self, model):
        rng = np.random.default_rng(23)
        base = BaseSampleSet.draw(64, 2, rng)
        h = 1e-5
        checked = 0
        while checked < 20:
            query = rng.uniform(0.05, 0.95, size=(2, 2))
            value, grad = acquisition_value_and_grad(model, query, base)
            fd = np.zeros_like(grad)
            for i in range(2):
                for t in range(2):
                    up, down = query.copy(), query.copy()
                    up[i, t] += h
                    down[i, t] -= h
                    fd[i, t] = (
                        acquisition_value_and_grad(model, up, base)[0]
                        - acquisition_value_and_grad(model, down, base)[0]
                    ) / (2 * h)
            rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
            assert rel.max() <= 1e-4, f"query {query} rel err {rel.max()}"
            checked += 1

    def test_qei_gradient_matches_too(self, model):
        rng = np.random.default_rng(29)
        base = BaseSampleSet.draw(64, 2, rng)
        incumbent = 0.1
        h = 1e-5
        for _ in range(5):
            query = rng.uniform(0.05, 0.95, size=(2, 2))
            _, grad = acquisition_value_and_grad(model, query, base, incumbent)
            fd = np.zeros_like(grad)
            for i in range(2):
                for t in range(2):
                    up, down = query.copy(), query.copy()
                    up[i, t] += h
                    down[i, t] -= h
                    fd[i, t] = (
                        acquisition_value_and_grad(model, up, base, incumbent)[0]
                        - acquisition_value_and_grad(model, down, base, incumbent)[0]
                    ) / (2 * h)
            assert np.abs(grad - fd).max() <= 1e-4 * max(1.0, np.abs(fd).max())


class TestOptimizer:
    def test_monotone_mean_drives_to_upper_bound(self):
        # strongly ordered 1-d comparisons make the posterior mean increasing
        rng = np.random.default_rng(1)
        dom = BoxDomain([0.0], [1.0])
        hyper = Hyperparameters(
            lengthscales=[0.8], outputscale=1.0, mean_const=0.0, noise_level=0.05
        )
        ds = PreferenceDataset()
        grid = np.linspace(0.05, 0.95, 10)
        for lo, hi in zip(grid[:-1], grid[1:]):
            for _ in range(3):
                ds = append_observation(ds, Query([[lo], [hi]]), Response(1))
        model = fit_laplace(ds, hyper, dom)
        spec = AcquisitionSpec(kind="qeubo", q=2, mc_samples=64, restarts=8)
        query = optimize_acquisition(model, spec, ds, rng)
        assert query.points.max() >= 1.0 - 1e-2

    def test_beats_incumbent_replication(self, model):
        from prefbo.model import posterior_mean_grad

        rng = np.random.default_rng(2)
        ds = model.dataset
        spec = AcquisitionSpec(kind="qeubo", q=2, mc_samples=64, restarts=4)
        query = optimize_acquisition(model, spec, ds, rng)
        # compare against the replicated posterior-mean maximizer over a
        # fresh candidate sweep under a fresh base: statistical check only
        base = BaseSampleSet.draw(2**13, 2, np.random.default_rng(123))
        cands = np.concatenate([model.domain.sample(512, rng), ds.points])
        means, _ = posterior_mean_grad(model, cands)
        best = cands[int(np.argmax(means))]
        assert qeubo_value(model, query.points, base) >= (
            qeubo_value(model, np.array([best, best]), base) - 5e-3
        )

    def test_finite_domain_exhaustive_matches_bruteforce(self):
        rng = np.random.default_rng(10)
        points = rng.uniform(0, 1, size=(5, 2))
        dom = FiniteDomain(points)
        hyper = Hyperparameters(
            lengthscales=[0.4, 0.4], outputscale=1.0, mean_const=0.0, noise_level=0.2
        )
        ds = PreferenceDataset()
        for _ in range(6):
            idx = rng.choice(5, size=2, replace=False)
            pts = points[idx]
            u = -np.sum((pts - 0.5) ** 2, axis=1)
            ds = append_observation(ds, Query(pts), Response(int(np.argmax(u))))
        model = fit_laplace(ds, hyper, dom)
        spec = AcquisitionSpec(kind="qeubo", q=2, mc_samples=64)
        returned = optimize_acquisition(model, spec, ds, np.random.default_rng(0))

        # independent brute force over all 25 ordered pairs with the same base
        base = BaseSampleSet.draw(64, 2, np.random.default_rng(0))
        best_val = -np.inf
        for i in range(5):
            for j in range(5):
                val = qeubo_value(model, points[[i, j]], base)
                if val > best_val:
                    best_val = val
        assert qeubo_value(model, returned.points, base) == pytest.approx(
            best_val, abs=1e-12
        )

    def test_rejects_thompson_kind(self, model):
        spec = AcquisitionSpec(kind="thompson", q=2)
        with pytest.raises(ValueError):
            optimize_acquisition(model, spec, model.dataset, np.random.default_rng(0))


class TestThompson:
    def test_prior_paths_cover_candidates(self):
        # stationary prior: over 200 repetitions every candidate should win
        # at least once on a 1-d grid of 64 candidates
        dom = BoxDomain([0.0], [1.0])
        hyper = Hyperparameters(
            lengthscales=[0.05], outputscale=1.0, mean_const=0.0, noise_level=0.1
        )
        model = fit_laplace(PreferenceDataset(), hyper, dom)
        candidates = np.linspace(0, 1, 64)[:, None]
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(200):
            query = thompson_query(model, 2, candidates, rng)
            for point in query.points:
                seen.add(int(np.argmin(np.abs(candidates[:, 0] - point[0]))))
        assert len(seen) == 64

    def test_concentrates_after_consistent_comparisons(self):
        # 50 noise-free comparisons of random pairs pin down the landscape
        # around the peak; thresholds frozen from a pre-build pilot
        rng = np.random.default_rng(12)
        dom = BoxDomain([0.0], [1.0])
        hyper = Hyperparameters(
            lengthscales=[0.3], outputscale=1.0, mean_const=0.0, noise_level=0.15
        )
        peak = 0.62
        utility = lambda x: -((x - peak) ** 2)
        ds = PreferenceDataset()
        for _ in range(50):
            pts = rng.uniform(0, 1, size=(2, 1))
            best = int(np.argmax([utility(p[0]) for p in pts]))
            ds = append_observation(ds, Query(pts), Response(best))
        model = fit_laplace(ds, hyper, dom)
        candidates = np.linspace(0, 1, 101)[:, None]
        cutoff = np.quantile(np.abs(candidates[:, 0] - peak), 0.1)
        hits = total = 0
        trng = np.random.default_rng(77)
        for _ in range(100):
            query = thompson_query(model, 2, candidates, trng)
            for point in query.points:
                total += 1
                hits += abs(point[0] - peak) <= cutoff
        assert hits / total >= 0.8, f"only {hits}/{total} near the optimum"

    def test_seed_determinism(self, model):
        candidates = model.domain.sample(64, np.random.default_rng(1))
        a = thompson_query(model, 3, candidates, np.random.default_rng(5))
        b = thompson_query(model, 3, candidates, np.random.default_rng(5))
        assert np.array_equal(a.points, b.points)

    def test_empty_candidates_rejected(self, model):
        with pytest.raises(ValueError):
            thompson_query(model, 2, np.zeros((0, 2)), np.random.default_rng(0))


class TestRandomQuery:
    def test_in_bounds_and_moments(self):
        dom = BoxDomain([0.0], [1.0])
        rng = np.random.default_rng(0)
        pts = np.concatenate(
            [random_query(dom, 2, rng).points for _ in range(5000)]
        ).ravel()
        assert pts.min() >= 0 and pts.max() <= 1
        assert abs(pts.mean() - 0.5) < 0.02

    def test_seed_reproducibility(self):
        dom = BoxDomain([0.0, 0.0], [1.0, 1.0])
        a = random_query(dom, 4, np.random.default_rng(3))
        b = random_query(dom, 4, np.random.default_rng(3))
        assert np.array_equal(a.points, b.points)


class TestEarlyIterationSimilarity:
    def test_qei_and_qeubo_argmax_coincide_for_low_incumbent(self, model):
        # when the incumbent sits below the 1st percentile of every
        # candidate's best-option samples, the positive part is inactive
        # almost everywhere and both scores rank candidates identically
        rng = np.random.default_rng(404)
        base = BaseSampleSet.draw(128, 2, rng)
        candidates = [rng.uniform(0, 1, size=(2, 2)) for _ in range(40)]

        from prefbo.acquisition import _saa_row_max

        first_percentiles = [
            np.quantile(_saa_row_max(model, query, base), 0.01)
            for query in candidates
        ]
        incumbent = min(first_percentiles) - 0.05

        qeubo_vals = [qeubo_value(model, query, base) for query in candidates]
        qei_vals = [qei_value(model, query, incumbent, base) for query in candidates]
        assert int(np.argmax(qeubo_vals)) == int(np.argmax(qei_vals))


class TestSpecParsing:
    def test_qts_alias(self):
        assert AcquisitionSpec(kind="qts").kind == "thompson"

    def test_validation(self):
        with pytest.raises(ValueError):
            AcquisitionSpec(kind="mpes")
        with pytest.raises(ValueError):
            AcquisitionSpec(q=1)
        with pytest.raises(ValueError):
            AcquisitionSpec(mc_samples=0)

    def test_json_roundtrip(self):
        spec = AcquisitionSpec(kind="qei", q=4, mc_samples=64)
        assert AcquisitionSpec.from_json(spec.to_json()) == spec
