"""Gram construction, privatization, post-processing, and enumeration."""

import math

import numpy as np
import pytest

from dpms.datagen import SimStudyConfig, generate_sim_dataset
from dpms.errors import ConfigError, DegenerateResponseError, RepairFailureError
from dpms.gram import (
    GramChain,
    build_gram,
    enumerate_posterior,
    model_averaged_beta,
    model_prior_log,
    mse_of_fit,
    oracle_chain,
    pd_repair,
    privatize_gram,
    r2_clamp_counter,
    r2_gamma,
    synthetic_dataset,
    threshold_offdiagonal,
)
from dpms.linmodel import (
    CenteredData,
    GPriorSpec,
    InfoCriterionSpec,
    RegressionData,
    log_bayes_factor,
    r_squared,
    reparametrize,
)
from dpms.mechanisms import PrivacyBudget, Sensitivity


def toy_centered(n=50, p=4, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, p))
    v -= v.mean(axis=0)
    z = v @ rng.standard_normal(p) * 0.3 + rng.standard_normal(n)
    z -= z.mean()
    return CenteredData(z=z, v=v)


class TestBuildGram:
    def test_orthonormal_blocks(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((20, 3)))
        ones = np.ones(20) / math.sqrt(20)
        # Make columns orthogonal to the intercept direction as well.
        q -= np.outer(ones, ones @ q)
        q, _ = np.linalg.qr(q)
        z = np.random.default_rng(1).standard_normal(20)
        z -= q @ (q.T @ z)
        z /= np.linalg.norm(z)
        g = build_gram(CenteredData(z=z, v=q)).g
        np.testing.assert_allclose(g[:3, :3], np.eye(3), atol=1e-12)
        assert g[3, 3] == pytest.approx(1.0, abs=1e-12)

    def test_psd(self):
        g = build_gram(toy_centered()).g
        assert np.linalg.eigvalsh(g)[0] >= -1e-10 * np.trace(g)

    def test_matches_triple_loop_oracle(self):
        c = toy_centered(n=50, p=4, seed=3)
        d = np.column_stack([c.v, c.z])
        want = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                for k in range(50):
                    want[i, j] += d[k, i] * d[k, j]
        np.testing.assert_allclose(build_gram(c).g, want, atol=1e-12 * np.abs(want).max())

    def test_degenerate_response(self):
        with pytest.raises(DegenerateResponseError):
            build_gram(CenteredData(z=np.zeros(10), v=np.ones((10, 1))))


class TestPrivatizeGram:
    def test_zero_noise_hook_is_exact(self):
        gram = build_gram(toy_centered())
        chain = oracle_chain(gram)
        assert np.array_equal(chain.g_star, gram.g)

    def test_wishart_shift_is_psd_per_draw(self):
        gram = build_gram(toy_centered(p=2))
        budget = PrivacyBudget(1.0, 0.2)
        rng = np.random.default_rng(4)
        for _ in range(10):
            chain = privatize_gram(gram, budget, Sensitivity(l2=1.0), rng)
            e = chain.g_star - gram.g
            shifted = e + chain.wishart_k * 1.0 * np.eye(3)
            assert np.linalg.eigvalsh(shifted)[0] >= -1e-8 * np.trace(shifted)

    def test_laplace_entry_variance(self):
        # p=2, eps=1, per-entry sensitivity 1: scale (3*4)/2 = 6, variance 72.
        gram = build_gram(toy_centered(p=2))
        rng = np.random.default_rng(5)
        iu = np.triu_indices(3)
        entries = []
        for _ in range(10_000):
            chain = privatize_gram(gram, PrivacyBudget(1.0), Sensitivity(),
                                   rng, per_entry_sensitivity=1.0)
            entries.append((chain.g_star - gram.g)[iu])
        assert np.concatenate(entries).var() == pytest.approx(72.0, rel=0.1)

    def test_missing_sensitivity_is_config_error(self):
        gram = build_gram(toy_centered())
        with pytest.raises(ConfigError):
            privatize_gram(gram, PrivacyBudget(1.0), Sensitivity(),
                           np.random.default_rng(0))
        with pytest.raises(ConfigError):
            privatize_gram(gram, PrivacyBudget(1.0, 0.1), Sensitivity(l1=1.0),
                           np.random.default_rng(0))

    def test_default_per_entry_sensitivity_is_twice_bound_squared(self):
        gram = build_gram(toy_centered(p=1))
        chain = privatize_gram(gram, PrivacyBudget(2.0), Sensitivity(l1=0.5),
                               np.random.default_rng(0))
        # 2 * 0.5^2 = 0.5 per entry; scale = 0.5 * (2*3)/(2*2) = 0.75.
        assert chain.laplace_scale == pytest.approx(0.75)


class TestThresholdOffdiagonal:
    def _chain(self, seed=6, p=3, eps=1.0):
        gram = build_gram(toy_centered(p=p, seed=seed))
        return gram, privatize_gram(gram, PrivacyBudget(eps), Sensitivity(l1=0.5),
                                    np.random.default_rng(seed))

    def test_tiny_lambda_keeps_everything(self):
        _, chain = self._chain()
        out = threshold_offdiagonal(chain, 1e-9, np.random.default_rng(0))
        np.testing.assert_array_equal(out.g_thresh, chain.g_star)

    def test_huge_threshold_leaves_diagonal(self):
        _, chain = self._chain(eps=1e6)  # nearly noiseless, small entries
        out = threshold_offdiagonal(chain, 99.9999999, np.random.default_rng(0))
        off = out.g_thresh[~np.eye(out.g_thresh.shape[0], dtype=bool)]
        diag_preserved = np.diag(out.g_thresh) == np.diag(chain.g_star)
        assert diag_preserved.all()
        assert out.e_lambda > 0

    def test_laplace_closed_form_percentile(self):
        _, chain = self._chain()
        out = threshold_offdiagonal(chain, 99.0, np.random.default_rng(0))
        assert out.e_lambda == pytest.approx(chain.laplace_scale * math.log(100.0),
                                             rel=1e-12)

    def test_nonzero_count_monotone_in_lambda(self):
        _, chain = self._chain()
        counts = []
        for lam in (1.0, 50.0, 90.0, 99.0, 99.99):
            out = threshold_offdiagonal(chain, lam, np.random.default_rng(0))
            off = out.g_thresh[~np.eye(out.g_thresh.shape[0], dtype=bool)]
            counts.append(int(np.count_nonzero(off)))
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_wishart_percentile_via_monte_carlo(self):
        gram = build_gram(toy_centered(p=2, seed=7))
        chain = privatize_gram(gram, PrivacyBudget(1.0, 0.3), Sensitivity(l2=1.0),
                               np.random.default_rng(7))
        out = threshold_offdiagonal(chain, 95.0, np.random.default_rng(8))
        # Off-diagonal entries have variance k for unit scale: the 95th
        # percentile of the absolute value is near 1.96 sqrt(k).
        assert out.e_lambda == pytest.approx(1.96 * math.sqrt(chain.wishart_k), rel=0.05)


class TestPdRepair:
    def test_fixed_zero_on_pd_matrix_is_identity(self):
        gram = build_gram(toy_centered())
        chain = pd_repair(oracle_chain(gram), np.random.default_rng(0), r=0.0)
        np.testing.assert_array_equal(chain.g_reg, gram.g)

    def test_eigenvalue_shift_identity(self):
        base = np.diag([-2.0, 5.0])
        chain = GramChain(g_star=base, n=10, p=1, mechanism="none")
        out = pd_repair(chain, np.random.default_rng(0), r=3.0)
        assert np.linalg.eigvalsh(out.g_reg)[0] == pytest.approx(1.0, abs=1e-12)

    def test_fixed_r_that_fails_raises(self):
        base = np.diag([-2.0, 5.0])
        chain = GramChain(g_star=base, n=10, p=1, mechanism="none")
        with pytest.raises(RepairFailureError):
            pd_repair(chain, np.random.default_rng(0), r=1.0)

    def test_auto_policy_repairs_identity_gram(self):
        g = np.eye(3)
        rng = np.random.default_rng(9)
        ok = 0
        for trial in range(1000):
            chain = GramChain(g_star=g + 0.0, n=100, p=2, mechanism="laplace",
                              budget=PrivacyBudget(1.0), laplace_scale=6.0)
            noisy = chain.g_star + 6.0 * rng.laplace(size=(3, 3))
            noisy = 0.5 * (noisy + noisy.T)
            chain = GramChain(g_star=noisy, n=100, p=2, mechanism="laplace",
                              budget=PrivacyBudget(1.0), laplace_scale=6.0)
            out = pd_repair(chain, rng, n_draws=200)
            ok += np.linalg.eigvalsh(out.g_reg)[0] > 0
        assert ok == 1000


class TestSyntheticDataset:
    def test_reproduces_gram_exactly(self):
        gram = build_gram(toy_centered(p=3))
        g_reg = pd_repair(oracle_chain(gram), np.random.default_rng(0), r=0.0).g_reg
        d_star = synthetic_dataset(g_reg, 80, np.random.default_rng(1))
        err = np.abs(d_star.T @ d_star - g_reg).max()
        assert err <= 1e-8 * np.abs(g_reg).max()

    def test_columns_are_centered(self):
        gram = build_gram(toy_centered(p=3))
        d_star = synthetic_dataset(gram.g, 60, np.random.default_rng(2))
        assert np.abs(d_star.sum(axis=0)).max() <= 1e-8

    def test_row_count_does_not_change_submodel_r2(self):
        gram = build_gram(toy_centered(p=3, seed=11))
        a = synthetic_dataset(gram.g, 40, np.random.default_rng(3))
        b = synthetic_dataset(gram.g, 400, np.random.default_rng(4))
        for gamma in range(1 << 3):
            ra = r2_gamma(a.T @ a, gamma)
            rb = r2_gamma(b.T @ b, gamma)
            assert ra == pytest.approx(rb, abs=1e-9)

    def test_posterior_from_synthetic_rows_matches_released_gram(self):
        gram = build_gram(toy_centered(p=3, seed=23))
        chain = privatize_gram(gram, PrivacyBudget(5.0), Sensitivity(l1=1.0),
                               np.random.default_rng(5))
        chain = pd_repair(chain, np.random.default_rng(6))
        d_star = synthetic_dataset(chain.released, 100, np.random.default_rng(7))
        stat = GPriorSpec.sample_size()
        direct = enumerate_posterior(chain, stat)
        via_rows = enumerate_posterior(d_star.T @ d_star, stat, n=gram.n)
        np.testing.assert_allclose(via_rows.posterior, direct.posterior, atol=1e-8)
        np.testing.assert_allclose(via_rows.inclusion, direct.inclusion, atol=1e-8)

    def test_needs_enough_rows(self):
        with pytest.raises(ConfigError):
            synthetic_dataset(np.eye(4), 4, np.random.default_rng(0))


class TestR2Gamma:
    def test_null_model_is_zero(self):
        gram = build_gram(toy_centered())
        assert r2_gamma(gram.g, 0) == 0.0

    def test_full_model_matches_direct_r_squared(self):
        c = toy_centered(p=4, seed=12)
        gram = build_gram(c)
        full = (1 << 4) - 1
        assert r2_gamma(gram.g, full) == pytest.approx(r_squared(c), abs=1e-10)

    def test_single_predictor_matches_simple_regression(self):
        c = toy_centered(p=3, seed=13)
        gram = build_gram(c)
        for j in range(3):
            vj = c.v[:, j]
            want = float((vj @ c.z) ** 2 / ((vj @ vj) * (c.z @ c.z)))
            assert r2_gamma(gram.g, 1 << j) == pytest.approx(want, abs=1e-10)

    def test_clamps_and_counts_non_pd_input(self):
        r2_clamp_counter.reset()
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # w'S^{-1}w = 4 > zz = 1
        got = r2_gamma(bad, 1)
        assert got == pytest.approx(1.0 - 1e-12)
        assert r2_clamp_counter.count == 1
        r2_clamp_counter.reset()


class TestModelPrior:
    def test_hierarchical_p2_masses(self):
        masses = [math.exp(model_prior_log(g, 2, "hierarchical")) for g in range(4)]
        np.testing.assert_allclose(masses, [1 / 3, 1 / 6, 1 / 6, 1 / 3], atol=1e-12)

    def test_uniform_p3(self):
        assert math.exp(model_prior_log(5, 3, "uniform")) == pytest.approx(1 / 8)

    @pytest.mark.parametrize("kind", ["uniform", "hierarchical"])
    @pytest.mark.parametrize("p", [1, 4, 8, 12])
    def test_prior_normalizes(self, kind, p):
        total = sum(math.exp(model_prior_log(g, p, kind)) for g in range(1 << p))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestEnumeratePosterior:
    def test_posterior_normalizes(self):
        gram = build_gram(toy_centered(p=4, seed=14))
        post = enumerate_posterior(oracle_chain(gram), GPriorSpec.sample_size())
        assert post.posterior.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all((post.inclusion >= 0) & (post.inclusion <= 1))

    def test_zero_crossblock_prefers_null_under_bic(self):
        g = np.eye(4) * 10.0
        post = enumerate_posterior(g, InfoCriterionSpec.bic(), n=100)
        assert post.top_model() == 0
        np.testing.assert_allclose(post.beta_avg, 0.0, atol=1e-12)

    def test_two_model_hand_computation(self):
        c = toy_centered(p=1, seed=15)
        gram = build_gram(c)
        stat = GPriorSpec.fixed(50.0)
        post = enumerate_posterior(oracle_chain(gram), stat, "uniform")
        r2 = r_squared(c)
        lb = log_bayes_factor(r2, c.n, 1, 1, stat)
        want_alt = 1.0 / (1.0 + math.exp(-lb))
        assert post.posterior[1] == pytest.approx(want_alt, abs=1e-12)

    def test_zero_noise_pipeline_matches_raw_enumeration(self):
        rng = np.random.default_rng(16)
        n, p = 120, 4
        x = rng.standard_normal((n, p))
        beta = np.array([0.8, 0.0, -0.5, 0.0])
        y = x @ beta + rng.standard_normal(n)
        data = RegressionData(y=y, x0=np.ones((n, 1)), x=x)
        c = reparametrize(data)
        chain = pd_repair(oracle_chain(build_gram(c)), rng, r=0.0)
        stat = GPriorSpec.sample_size()
        post = enumerate_posterior(chain, stat)

        # Independent raw-data route: per-model least squares.
        logs = np.empty(1 << p)
        for gamma in range(1 << p):
            idx = [j for j in range(p) if gamma >> j & 1]
            if idx:
                vg = c.v[:, idx]
                coef = np.linalg.lstsq(vg, c.z, rcond=None)[0]
                r2 = float((c.z @ vg @ coef) / (c.z @ c.z))
                lb = log_bayes_factor(r2, n, len(idx), 1, stat)
            else:
                lb = 0.0
            logs[gamma] = model_prior_log(gamma, p, "hierarchical") + lb
        want = np.exp(logs - logs.max())
        want /= want.sum()
        np.testing.assert_allclose(post.posterior, want, atol=1e-10)

    def test_enumeration_guard(self):
        with pytest.raises(ConfigError, match="capped"):
            enumerate_posterior(np.eye(28), InfoCriterionSpec.bic(), n=100)


class TestModelAveragedBeta:
    def test_mass_on_null_gives_zero_vector(self):
        gram = build_gram(toy_centered(p=2, seed=17))
        post = enumerate_posterior(oracle_chain(gram), InfoCriterionSpec.bic())
        forced = post.__class__(
            log_marginals=post.log_marginals,
            posterior=np.array([1.0, 0.0, 0.0, 0.0]),
            inclusion=np.zeros(2), beta_avg=np.zeros(2),
            prior_kind="uniform", p=2, n=post.n,
        )
        np.testing.assert_array_equal(
            model_averaged_beta(forced, gram.g, InfoCriterionSpec.bic()), np.zeros(2)
        )

    def test_mass_on_full_model_shrinks_ols(self):
        c = toy_centered(p=2, seed=18)
        gram = build_gram(c)
        g_val = 30.0
        post = enumerate_posterior(oracle_chain(gram), GPriorSpec.fixed(g_val))
        forced = post.__class__(
            log_marginals=post.log_marginals,
            posterior=np.array([0.0, 0.0, 0.0, 1.0]),
            inclusion=np.ones(2), beta_avg=np.zeros(2),
            prior_kind="uniform", p=2, n=post.n,
        )
        got = model_averaged_beta(forced, gram.g, GPriorSpec.fixed(g_val))
        ols = np.linalg.lstsq(c.v, c.z, rcond=None)[0]
        np.testing.assert_allclose(got, g_val / (1 + g_val) * ols, atol=1e-10)

    def test_matches_four_model_brute_force(self):
        c = toy_centered(p=2, seed=19)
        gram = build_gram(c)
        stat = GPriorSpec.fixed(40.0)
        post = enumerate_posterior(oracle_chain(gram), stat, "uniform")
        shrink = 40.0 / 41.0
        want = np.zeros(2)
        for gamma, idx in [(1, [0]), (2, [1]), (3, [0, 1])]:
            vg = c.v[:, idx]
            coef = np.linalg.lstsq(vg, c.z, rcond=None)[0]
            contribution = np.zeros(2)
            contribution[idx] = shrink * coef
            want += post.posterior[gamma] * contribution
        np.testing.assert_allclose(post.beta_avg, want, atol=1e-10)


class TestMseOfFit:
    def test_exact_fit_is_zero(self):
        v = np.random.default_rng(20).standard_normal((30, 3))
        beta = np.array([1.0, -2.0, 0.5])
        assert mse_of_fit(v @ beta, v, beta) == 0.0

    def test_zero_estimate(self):
        v = np.random.default_rng(21).standard_normal((30, 2))
        beta = np.array([0.7, 0.1])
        want = float(np.sum((v @ beta) ** 2)) / 30
        assert mse_of_fit(v @ beta, v, np.zeros(2)) == pytest.approx(want, rel=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(22)
        v = rng.standard_normal((25, 3))
        beta = rng.standard_normal(3)
        bhat = rng.standard_normal(3)
        acc = 0.0
        for i in range(25):
            pred_true = sum(v[i, j] * beta[j] for j in range(3))
            pred_hat = sum(v[i, j] * bhat[j] for j in range(3))
            acc += (pred_true - pred_hat) ** 2
        assert mse_of_fit(v @ beta, v, bhat) == pytest.approx(acc / 25, rel=1e-12)


def test_scaled_gram_stabilizes_as_n_grows():
    dists = []
    for n in (500, 1000, 2000):
        d = []
        for seed in range(20):
            data_a, _, _ = generate_sim_dataset(
                SimStudyConfig(p=3, n=n, snr=1.0, n_active=2, seed=seed),
                np.random.default_rng(seed))
            data_b, _, _ = generate_sim_dataset(
                SimStudyConfig(p=3, n=2 * n, snr=1.0, n_active=2, seed=seed),
                np.random.default_rng(seed))
            ga = build_gram(reparametrize(data_a))
            gb = build_gram(reparametrize(data_b))
            d.append(np.abs(ga.g / n - gb.g / (2 * n)).max())
        dists.append(np.mean(d))
    assert dists[0] > dists[-1]
