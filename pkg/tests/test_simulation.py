import numpy as np
import pandas as pd
import pytest

from data.synthpop import generate_population
from errors import DomainError, ReplicateOverflowError
from models.spec import GibbsConfig, VbConfig
from simulation.design import SimDesign, inclusion_probabilities, poisson_pps_sample, size_variable
from simulation.direct import DIRECT_COLUMNS, direct_estimates
from simulation.harness import (
    DIRECT,
    ORACLE,
    SUMMARY_COLUMNS,
    UNWEIGHTED,
    ScoreBoard,
    domain_truth,
    run_simulation,
    score,
)
from sampling.rng import RngStream

SMALL_POP = {"rows": 2, "cols": 3, "population_size": 3000, "covariates": {"sex": 2}, "expected_n": 300}


def _population(**overrides):
    synth = generate_population({**SMALL_POP, **overrides})
    pop = synth.population.copy()
    pop.attrs["covariates"] = synth.covariates
    return pop


class TestDesign:
    def test_size_variable(self):
        w = np.array([1.0, 2.0, 3.0, 4.0])
        h = np.array([0, 1, 0, 1])
        z = (w - w.mean()) / w.std()
        np.testing.assert_allclose(size_variable(w, h, 2.0), np.exp(z + 2.0 * (h == 0)))

    def test_constant_weights_rejected(self):
        with pytest.raises(DomainError, match="zero variance"):
            size_variable(np.ones(4), np.zeros(4))

    def test_inclusion_probabilities_capped(self):
        pi = inclusion_probabilities([1.0, 1.0, 100.0], 2.0)
        assert pi.max() == 1.0
        assert np.all(pi > 0)

    def test_inclusion_frequencies(self):
        size = np.random.default_rng(0).lognormal(0.0, 0.7, size=200)
        pi = inclusion_probabilities(size, 40)
        hits = np.zeros(200)
        reps = 10_000
        root = RngStream(1)
        for r in range(reps):
            hits[poisson_pps_sample(size, 40, root.child(r)).index] += 1
        freq = hits / reps
        se = np.sqrt(pi * (1 - pi) / reps)
        assert np.all(np.abs(freq - pi) <= 4 * se + 1e-12)

    def test_weights_are_inverse_pi(self):
        s = poisson_pps_sample(np.arange(1.0, 51.0), 10, RngStream(2))
        np.testing.assert_allclose(s.weights * s.pi, 1.0)

    def test_sim_design_validation(self):
        with pytest.raises(DomainError):
            SimDesign(replicates=0)
        with pytest.raises(DomainError):
            SimDesign(expected_n=500).check_population(100)


class TestDirect:
    def test_census_gives_population_proportion(self):
        sample = pd.DataFrame({"area": ["a", "a", "b", "b", "b"], "y": [1, 0, 1, 1, 0], "weight": 1.0, "pi": 1.0})
        out = direct_estimates(sample)
        assert list(out.columns) == DIRECT_COLUMNS
        np.testing.assert_allclose(out["weighted"], [0.5, 2 / 3])
        np.testing.assert_allclose(out["variance"], 0.0)

    def test_weighting(self):
        sample = pd.DataFrame({"area": "a", "y": [1, 0], "weight": [3.0, 1.0]})
        out = direct_estimates(sample)
        assert out.loc[0, "weighted"] == pytest.approx(0.75)
        assert out.loc[0, "unweighted"] == pytest.approx(0.5)
        assert out.loc[0, "variance"] == pytest.approx((9 * 0.0625 + 1 * 0.5625) / 16)

    def test_missing_domains_padded(self):
        sample = pd.DataFrame({"area": ["a"], "y": [1], "weight": [1.0]})
        out = direct_estimates(sample, domains=["a", "b"])
        assert out.set_index("domain").loc["b", "n"] == 0
        assert np.isnan(out.set_index("domain").loc["b", "weighted"])

    def test_overall_domain(self):
        sample = pd.DataFrame({"y": [1, 0, 0, 0], "weight": 1.0})
        out = direct_estimates(sample, domain=None)
        assert out.loc[0, "domain"] == "all"
        assert out.loc[0, "weighted"] == pytest.approx(0.25)


class TestScore:
    def test_perfect_estimator(self):
        truth = pd.Series({"a": 0.2, "b": 0.6}, name="truth")
        results = pd.DataFrame([
            {"replicate": r, "estimator": ORACLE, "domain": d, "estimate": t, "se": 0.0, "ci_low": t, "ci_high": t}
            for r in range(3) for d, t in truth.items()
        ])
        per_domain, summary = score(results, truth)
        np.testing.assert_allclose(per_domain["mse"], 0.0, atol=1e-24)
        np.testing.assert_allclose(per_domain["bias2"], 0.0, atol=1e-24)
        assert (per_domain["coverage"] == 1.0).all()
        assert list(summary.columns) == SUMMARY_COLUMNS

    def test_mse_decomposes(self):
        gen = np.random.default_rng(0)
        truth = pd.Series({"a": 0.3, "b": 0.5}, name="truth")
        rows = [
            {"replicate": r, "estimator": est, "domain": d, "estimate": t + gen.normal(0.02, 0.05),
             "se": 0.05, "ci_low": t - 0.1, "ci_high": t + 0.1}
            for r in range(40) for est in ("gibbs", DIRECT) for d, t in truth.items()
        ]
        per_domain, _ = score(pd.DataFrame(rows), truth)
        np.testing.assert_allclose(per_domain["mse"], per_domain["bias2"] + per_domain["variance"], atol=1e-12)
        assert (per_domain["mse"] >= per_domain["bias2"]).all()
        raw = pd.DataFrame(rows).merge(truth, left_on="domain", right_index=True)
        raw_mse = ((raw["estimate"] - raw["truth"]) ** 2).groupby([raw["estimator"], raw["domain"]]).mean()
        np.testing.assert_allclose(per_domain.set_index(["estimator", "domain"])["mse"], raw_mse.sort_index(), rtol=1e-10)
        gibbs = per_domain[per_domain["estimator"] == "gibbs"]
        np.testing.assert_allclose(gibbs["se_ratio"], 1.0)

    def test_failure_threshold(self):
        log = pd.DataFrame({"replicate": range(10), "status": ["ok"] * 8 + ["failed"] * 2})
        board = ScoreBoard(pd.DataFrame(), pd.DataFrame(), pd.DataFrame(), log)
        assert board.failure_rate == pytest.approx(0.2)
        board.check_failures(0.25)
        with pytest.raises(ReplicateOverflowError):
            board.check_failures(0.1)


def test_domain_truth():
    pop = pd.DataFrame({"area": ["a", "a", "b"], "outcome": [1, 0, 1], "group": ["g1", "g2", "g1"]})
    np.testing.assert_allclose(domain_truth(pop, ("area",)).to_numpy(), [0.5, 1.0])
    assert domain_truth(pop, ()).loc["all"] == pytest.approx(2 / 3)
    cat = domain_truth(pop, ("area",), outcome="categorical")
    assert set(cat.index) == {"a:g1", "a:g2", "b:g1"}


class TestRunSimulation:
    def test_binary_scoreboard(self):
        pop = _population()
        board = run_simulation(
            pop, SimDesign(expected_n=300, replicates=3, seed=4),
            engines=("gibbs", "vb", DIRECT, UNWEIGHTED, ORACLE),
            gibbs=GibbsConfig(burnin=20, retained=40), vb=VbConfig(draws=40),
        )
        assert set(board.summary["estimator"]) == {"gibbs", "vb", DIRECT, UNWEIGHTED, ORACLE}
        assert board.n_failed == 0
        oracle = board.per_domain[board.per_domain["estimator"] == ORACLE]
        np.testing.assert_allclose(oracle["mse"], 0.0, atol=1e-24)
        assert (oracle["coverage"] == 1.0).all()
        assert set(board.timings) == {"gibbs", "vb"}
        assert len(board.replicates) == 3

    def test_replicates_reproducible_across_workers(self):
        pop = _population()
        kwargs = dict(engines=("vb",), vb=VbConfig(draws=20))
        serial = run_simulation(pop, SimDesign(expected_n=300, replicates=2, seed=1), n_jobs=1, **kwargs)
        parallel = run_simulation(pop, SimDesign(expected_n=300, replicates=2, seed=1), n_jobs=2, **kwargs)
        pd.testing.assert_frame_equal(serial.results, parallel.results)

    def test_categorical_outcome(self):
        pop = _population(outcome="categorical", groups=2)
        board = run_simulation(
            pop, SimDesign(expected_n=300, replicates=2, seed=2), engines=("vb",),
            outcome="categorical", vb=VbConfig(draws=30),
        )
        vb_domains = set(board.results.loc[board.results["estimator"] == "vb", "domain"])
        assert vb_domains
        assert all(d.split(":")[-1] in {"g1", "g2"} for d in vb_domains)
        assert vb_domains <= set(domain_truth(pop, ("area",), outcome="categorical").index)

    def test_unknown_estimator(self):
        with pytest.raises(DomainError):
            run_simulation(_population(), SimDesign(expected_n=300, replicates=1), engines=("bootstrap",))

    def test_bad_domain(self):
        with pytest.raises(DomainError, match="domains"):
            run_simulation(_population(), SimDesign(expected_n=300, replicates=1), engines=(DIRECT,),
                           domains=("county",))

    def test_failed_replicates_are_logged(self, monkeypatch):
        def boom(*args, **kwargs):
            raise DomainError("no fit")

        monkeypatch.setattr("simulation.harness._fit_and_predict", boom)
        board = run_simulation(_population(), SimDesign(expected_n=300, replicates=2), engines=("gibbs",))
        assert board.n_failed == 2
        assert (board.replicates["error"] == "no fit").all()
        with pytest.raises(ReplicateOverflowError):
            board.check_failures(0.1)


@pytest.mark.slow
def test_weighting_and_models_beat_naive():
    """Under informative sampling the unweighted estimator is the most biased and the models beat direct."""
    pop = _population(rows=5, cols=6, population_size=20000, covariates={"sex": 2, "age": 4, "race": 3},
                      expected_n=2000)
    board = run_simulation(
        pop, SimDesign(expected_n=2000, replicates=25, seed=0), engines=("gibbs", "vb", DIRECT, UNWEIGHTED),
        gibbs=GibbsConfig(burnin=300, retained=500), vb=VbConfig(draws=500), n_jobs=-1,
    )
    s = board.summary.set_index("estimator")
    assert s.loc[UNWEIGHTED, "bias2"] >= 2 * s.loc[DIRECT, "bias2"]
    assert s.loc["gibbs", "mse"] < s.loc[DIRECT, "mse"]
    assert s.loc["vb", "mse"] < s.loc[DIRECT, "mse"]
    assert s.loc["gibbs", "coverage"] >= 0.85
    assert 0.75 <= s.loc["vb", "coverage"] <= s.loc["gibbs", "coverage"] + 0.05
    assert board.timings["vb"] < 0.25 * board.timings["gibbs"]
