import numpy as np
import pandas as pd
import pytest
from scipy import stats
from scipy.special import expit

from data.dataset import SurveyDataset
from data.design import build_design
from errors import DomainError
from models.fit import fit_binomial, fit_prior
from models.multinomial import (
    CategoricalResponse,
    PlMmFit,
    fit_plmm,
    multinomial_loglik,
    plmm_cell_probs,
    stick_data,
    stick_forward,
    stick_inverse,
    stick_loglik,
)
from models.spec import GibbsConfig, PlMbModelSpec, VbConfig
from sampling.rng import RngStream

FAST = GibbsConfig(burnin=10, retained=20, seed=3)


class TestStickTransform:
    def test_inverse_closes_simplex(self):
        p_tilde = np.random.default_rng(0).random((1000, 4))
        p = stick_inverse(p_tilde)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(p >= 0)

    def test_inverse_formula(self):
        p = stick_inverse([0.5, 0.4])
        np.testing.assert_allclose(p, [0.5, 0.2, 0.3])

    def test_forward_inverts(self):
        p = np.random.default_rng(1).dirichlet(np.ones(5), size=200)
        np.testing.assert_allclose(stick_inverse(stick_forward(p)), p, atol=1e-12)

    def test_exhausted_stick_maps_to_zero(self):
        np.testing.assert_allclose(stick_forward([1.0, 0.0, 0.0]), [1.0, 0.0])

    def test_forward_rejects_non_simplex(self):
        with pytest.raises(DomainError):
            stick_forward([0.5, 0.6])

    def test_inverse_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            stick_inverse([1.2])


class TestResponse:
    def test_from_labels(self):
        r = CategoricalResponse.from_labels([0, 2, 1, 2], 3)
        assert r.K == 3
        assert r.n == 4
        np.testing.assert_array_equal(r.counts.sum(axis=0), [1, 1, 2])

    def test_counts_must_match_trials(self):
        with pytest.raises(DomainError):
            CategoricalResponse([[1, 1]], [1])

    def test_needs_two_categories(self):
        with pytest.raises(DomainError):
            CategoricalResponse([[1]], [1])

    def test_stick_trials_and_inert_rows(self):
        r = CategoricalResponse.from_labels([0, 1, 2], 3)
        sticks = stick_data(r)
        np.testing.assert_array_equal(sticks[0].trials, [1, 1, 1])
        np.testing.assert_array_equal(sticks[0].successes, [1, 0, 0])
        np.testing.assert_array_equal(sticks[1].trials, [0, 1, 1])
        np.testing.assert_array_equal(sticks[1].inert, [True, False, False])


def test_likelihood_factorizes():
    gen = np.random.default_rng(2)
    for _ in range(200):
        K = int(gen.integers(2, 6))
        n = gen.integers(1, 12, size=8)
        p = gen.dirichlet(np.ones(K), size=8)
        counts = np.vstack([gen.multinomial(ni, pi) for ni, pi in zip(n, p)])
        assert stick_loglik(counts, p) == pytest.approx(multinomial_loglik(counts, p), abs=1e-10)


def _categorical_design(units, labels):
    units = units.assign(response=labels)
    ds = SurveyDataset.from_frame(units, ("sex",), family="multinomial")
    return ds, build_design(ds)


class TestFitPlmm:
    def test_two_categories_match_binomial(self, units):
        labels = np.where(units["response"] == 1, "yes", "no")
        ds, d = _categorical_design(units, labels)
        # "no" sorts first, so stick 1 models the "no" indicator
        response = CategoricalResponse(ds.category_counts(), ds.trials)
        plmm = fit_plmm(response, d, PlMbModelSpec(), gibbs=FAST, categories=ds.categories)
        direct = fit_binomial("gibbs", PlMbModelSpec(), d, response.counts[:, 0], ds.trials, gibbs=FAST)
        np.testing.assert_array_equal(plmm.sub_fits[0].draws.beta, direct.draws.beta)
        np.testing.assert_array_equal(plmm.sub_fits[0].draws.sigma2_eta, direct.draws.sigma2_eta)

    def test_two_categories_match_binomial_vb(self, units):
        labels = np.where(units["response"] == 1, "yes", "no")
        ds, d = _categorical_design(units, labels)
        response = CategoricalResponse(ds.category_counts(), ds.trials)
        vb = VbConfig(draws=30, seed=4)
        plmm = fit_plmm(response, d, engine="vb", vb=vb)
        direct = fit_binomial("vb", PlMbModelSpec(), d, response.counts[:, 0], ds.trials, vb=vb)
        np.testing.assert_array_equal(plmm.sub_fits[0].draws.eta, direct.draws.eta)

    def test_inert_rows_dropped_and_weights_shared(self, units, monkeypatch):
        labels = np.array(["a", "b", "c"])[np.arange(len(units)) % 3]
        ds, d = _categorical_design(units, labels)
        seen = []

        def spy(engine, spec, design, y, n_trials, gibbs=None, vb=None, stream=None):
            seen.append(design)
            return fit_binomial(engine, spec, design, y, n_trials, gibbs=gibbs, vb=vb, stream=stream)

        monkeypatch.setattr("models.multinomial.fit_binomial", spy)
        fit = fit_plmm(CategoricalResponse(ds.category_counts(), ds.trials), d, gibbs=FAST,
                       categories=ds.categories)
        assert len(fit.sub_fits) == 2
        assert seen[0].n == len(units)
        assert seen[1].n == int((labels != "a").sum())
        np.testing.assert_array_equal(seen[1].weights, d.weights[labels != "a"])

    def test_sticks_independent_of_worker_count(self, units):
        labels = np.array(["a", "b", "c"])[np.arange(len(units)) % 3]
        ds, d = _categorical_design(units, labels)
        response = CategoricalResponse(ds.category_counts(), ds.trials)
        serial = fit_plmm(response, d, gibbs=FAST, n_jobs=1)
        threaded = fit_plmm(response, d, gibbs=FAST, n_jobs=2)
        for a, b in zip(serial.sub_fits, threaded.sub_fits):
            np.testing.assert_array_equal(a.draws.beta, b.draws.beta)

    def test_sticks_use_distinct_streams(self, units):
        labels = np.array(["a", "b", "c"])[np.arange(len(units)) % 3]
        ds, d = _categorical_design(units, labels)
        fit = fit_plmm(CategoricalResponse(ds.category_counts(), ds.trials), d, gibbs=FAST,
                       stream=RngStream(5))
        assert not np.array_equal(fit.sub_fits[0].draws.sigma2_eta, fit.sub_fits[1].draws.sigma2_eta)

    def test_cell_probabilities_on_simplex(self, units):
        labels = np.array(["a", "b", "c", "d"])[np.arange(len(units)) % 4]
        ds, d = _categorical_design(units, labels)
        fit = fit_plmm(CategoricalResponse(ds.category_counts(), ds.trials), d, gibbs=FAST,
                       categories=ds.categories)
        probs = plmm_cell_probs(fit, d.X[:7], d.Phi[:7])
        assert probs.shape == (fit.n_draws, 7, 4)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
        assert fit.meta["category_order"] == ["a", "b", "c", "d"]

    def test_label_count_mismatch(self, units):
        labels = np.array(["a", "b", "c"])[np.arange(len(units)) % 3]
        ds, d = _categorical_design(units, labels)
        with pytest.raises(DomainError):
            fit_plmm(CategoricalResponse(ds.category_counts(), ds.trials), d, gibbs=FAST, categories=("x", "y"))

    def test_stick_without_trials_gets_prior_draws(self, units):
        labels = np.where(np.arange(len(units)) % 2 == 0, "a", "b")
        ds, d = _categorical_design(units, labels)
        first_two = np.zeros((ds.n, 4))
        first_two[np.arange(ds.n), np.arange(ds.n) % 2] = 1
        fit = fit_plmm(CategoricalResponse(first_two, ds.trials), d, gibbs=FAST)
        assert len(fit.sub_fits) == 3
        assert not fit.sub_fits[0].draws.meta.get("prior_only", False)
        assert not fit.sub_fits[1].draws.meta.get("prior_only", False)
        empty = fit.sub_fits[2]
        assert empty.draws.meta["prior_only"]
        assert empty.engine == "gibbs"
        assert empty.draws.beta.shape == (FAST.retained, d.q)
        assert empty.draws.eta.shape == (FAST.retained, d.r)
        assert np.all(empty.draws.sigma2_eta > 0)
        probs = plmm_cell_probs(fit, d.X[:5], d.Phi[:5])
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_empty_stick_vb_draw_count(self, units):
        labels = np.where(np.arange(len(units)) % 2 == 0, "a", "b")
        ds, d = _categorical_design(units, labels)
        first_two = np.zeros((ds.n, 3))
        first_two[np.arange(ds.n), np.arange(ds.n) % 2] = 1
        fit = fit_plmm(CategoricalResponse(first_two, ds.trials), d, engine="vb", vb=VbConfig(draws=15))
        empty = fit.sub_fits[1]
        assert empty.posterior is None
        assert empty.engine == "vb"
        assert empty.draws.beta.shape == (15, d.q)
        assert fit.n_draws == 15

    def test_fit_rejects_unequal_draws(self, design, dataset):
        a = fit_binomial("gibbs", PlMbModelSpec(), design, dataset.responses(), dataset.trials, gibbs=FAST)
        b = fit_binomial("gibbs", PlMbModelSpec(), design, dataset.responses(), dataset.trials,
                         gibbs=GibbsConfig(burnin=1, retained=5))
        with pytest.raises(DomainError):
            PlMmFit([a, b], ("x", "y", "z"))


def test_prior_draws_follow_the_prior(design):
    spec = PlMbModelSpec(sigma2_beta=4.0, a=3.0, b=2.0)
    fit = fit_prior("gibbs", spec, design, gibbs=GibbsConfig(burnin=1, retained=20000, seed=8))
    draws = fit.draws
    assert draws.beta.shape == (20000, design.q)
    assert stats.kstest(draws.beta[:, 0] / 2.0, "norm").pvalue > 1e-3
    assert stats.kstest(draws.sigma2_eta, stats.invgamma(spec.a, scale=spec.b).cdf).pvalue > 1e-3
    standardized = draws.eta[:, 0] / np.sqrt(draws.sigma2_eta)
    assert stats.kstest(standardized, "norm").pvalue > 1e-3
    again = fit_prior("gibbs", spec, design, gibbs=GibbsConfig(burnin=1, retained=20000, seed=8))
    np.testing.assert_array_equal(again.draws.eta, draws.eta)


def test_symmetric_three_categories_near_uniform():
    n = 600
    labels = np.array(["a", "b", "c"])[np.arange(n) % 3]
    units = pd.DataFrame({
        "unit_id": [f"u{i}" for i in range(n)], "response": labels, "trials": 1,
        "weight": 1.0, "area": "A1",
    })
    ds = SurveyDataset.from_frame(units, (), family="multinomial")
    d = build_design(ds)
    fit = fit_plmm(CategoricalResponse(ds.category_counts(), ds.trials), d,
                   gibbs=GibbsConfig(burnin=200, retained=1000, seed=2))
    p_tilde = np.stack([expit(s.draws.beta[:, 0] + s.draws.eta[:, 0]) for s in fit.sub_fits], axis=-1)
    np.testing.assert_allclose(stick_inverse(p_tilde).mean(axis=0), [1 / 3] * 3, atol=0.03)
