import numpy as np
import pandas as pd
import pytest
from scipy.special import logit

from data.dataset import PopulationFrame, SurveyDataset
from data.design import build_design
from errors import DataValidationError, DomainError
from estimation.poststratify import (
    ESTIMATE_COLUMNS,
    ZERO_POPULATION,
    CategoryRatio,
    domain_draws,
    estimates_frame,
    poststratify,
    summarize_draws,
)
from models.fit import fit_binomial
from models.multinomial import CategoricalResponse, fit_plmm
from models.spec import FitDraws, GibbsConfig, PlMbModelSpec
from sampling.rng import RngStream

FAST = GibbsConfig(burnin=20, retained=50, seed=1)


def constant_fit(design, p: float, draws: int = 400) -> FitDraws:
    beta = np.zeros((draws, design.q))
    beta[:, 0] = logit(p)
    return FitDraws(beta=beta, eta=np.zeros((draws, design.r)), sigma2_eta=np.ones(draws))


@pytest.fixture
def gibbs_fit(design, dataset):
    return fit_binomial("gibbs", PlMbModelSpec(), design, dataset.responses(), dataset.trials, gibbs=FAST)


class TestSummaries:
    def test_normal_interval(self):
        s = summarize_draws(np.random.default_rng(0).standard_normal(100_000))
        assert s.ci_low == pytest.approx(-1.96, abs=0.02)
        assert s.ci_high == pytest.approx(1.96, abs=0.02)
        assert s.sd == pytest.approx(1.0, abs=0.01)

    def test_single_draw(self):
        s = summarize_draws([0.3])
        assert s.sd == 0.0
        assert s.ci_low == s.ci_high == pytest.approx(0.3)

    @pytest.mark.parametrize("level", [0.0, 1.0, 1.5])
    def test_bad_level(self, level):
        with pytest.raises(DomainError):
            summarize_draws([0.1, 0.2], level)

    def test_empty(self):
        with pytest.raises(DomainError):
            summarize_draws([])


class TestBinomial:
    def test_constant_probability(self, design, frame):
        est = poststratify(constant_fit(design, 0.3), frame, schema=design.schema)
        assert {e.level for e in est} == {"all", "area"}
        for e in est:
            assert e.point == pytest.approx(0.3, abs=1e-12)
            assert e.se == pytest.approx(0.0, abs=1e-12)
            assert e.ci_low <= e.point <= e.ci_high

    def test_aggregation_consistency(self, gibbs_fit, design, frame):
        dd = domain_draws(gibbs_fit, frame, domains=((), ("area",)), schema=design.schema)
        total = next(d for d in dd if d.level == "all")
        areas = [d for d in dd if d.level == "area"]
        weighted = sum(d.values * d.population for d in areas) / sum(d.population for d in areas)
        np.testing.assert_allclose(total.values, weighted, atol=1e-12)

    def test_nested_levels(self, gibbs_fit, design, frame):
        est = poststratify(gibbs_fit, frame, domains=(("area", "sex"), ("sex",)), schema=design.schema)
        assert {e.level for e in est} == {"area:sex", "sex"}
        labels = {e.domain for e in est if e.level == "area:sex"}
        assert f"{design.schema.areas[0]}:F" in labels

    def test_sampled_mode_moments(self, design, frame):
        N = frame.total
        dd = domain_draws(constant_fit(design, 0.4, draws=5000), frame, domains=((),),
                          mode="sampled", rng=RngStream(3), schema=design.schema)
        values = dd[0].values
        se_mean = np.sqrt(0.24 / N / values.size)
        assert abs(values.mean() - 0.4) < 4 * se_mean
        assert values.var(ddof=1) == pytest.approx(0.24 / N, rel=0.1)

    def test_sampled_mode_reproducible(self, gibbs_fit, design, frame):
        a = poststratify(gibbs_fit, frame, mode="sampled", rng=RngStream(8), schema=design.schema)
        b = poststratify(gibbs_fit, frame, mode="sampled", rng=RngStream(8), schema=design.schema)
        assert a == b

    def test_zero_population_domain(self, gibbs_fit, design, frame):
        cells = frame.cells.copy()
        target = design.schema.areas[0]
        cells.loc[cells["area"] == target, "count"] = 0
        est = poststratify(gibbs_fit, PopulationFrame(cells, ("sex",)), schema=design.schema)
        flagged = [e for e in est if e.domain == target]
        assert flagged[0].flags == ZERO_POPULATION
        assert np.isnan(flagged[0].point)
        with pytest.raises(DomainError, match="zero population"):
            poststratify(gibbs_fit, PopulationFrame(cells, ("sex",)), schema=design.schema, strict=True)

    def test_zero_count_cells_are_ignored(self, gibbs_fit, design, frame):
        extra = pd.DataFrame([{"area": "nowhere", "sex": "F", "count": 0}])
        padded = PopulationFrame(pd.concat([frame.cells, extra], ignore_index=True), ("sex",))
        base = {(e.level, e.domain): e.point for e in poststratify(gibbs_fit, frame, schema=design.schema)}
        est = poststratify(gibbs_fit, padded, schema=design.schema)
        for e in est:
            if e.domain == "nowhere":
                assert e.flags == ZERO_POPULATION
            else:
                assert e.point == pytest.approx(base[(e.level, e.domain)], abs=1e-12)

    def test_unknown_domain_column(self, gibbs_fit, design, frame):
        with pytest.raises(DataValidationError, match="domain column"):
            poststratify(gibbs_fit, frame, domains=(("county",),), schema=design.schema)

    def test_frame_schema_mismatch(self, gibbs_fit, design, frame):
        cells = frame.cells.assign(age="a1")
        with pytest.raises(DataValidationError, match="covariates"):
            poststratify(gibbs_fit, PopulationFrame(cells, ("sex", "age")), schema=design.schema)

    def test_needs_schema(self, gibbs_fit, frame):
        with pytest.raises(DomainError, match="schema"):
            poststratify(gibbs_fit, frame)

    def test_ratios_need_multinomial(self, gibbs_fit, design, frame):
        with pytest.raises(DomainError):
            poststratify(gibbs_fit, frame, schema=design.schema, ratios=[CategoryRatio("r", ("a",), ("a", "b"))])

    def test_unknown_mode(self, gibbs_fit, design, frame):
        with pytest.raises(DomainError):
            poststratify(gibbs_fit, frame, mode="median", schema=design.schema)

    def test_frame_columns(self, gibbs_fit, design, frame):
        df = estimates_frame(poststratify(gibbs_fit, frame, schema=design.schema))
        assert list(df.columns) == ESTIMATE_COLUMNS
        assert (df["n_draws"] == FAST.retained).all()


class TestMultinomial:
    @pytest.fixture
    def plmm(self, units):
        labels = np.array(["g1:0", "g1:1", "g2:0", "g2:1"])[np.arange(len(units)) % 4]
        ds = SurveyDataset.from_frame(units.assign(response=labels), ("sex",), family="multinomial")
        d = build_design(ds)
        return fit_plmm(CategoricalResponse(ds.category_counts(), ds.trials), d, gibbs=FAST,
                        categories=ds.categories)

    def test_category_shares_sum_to_one(self, plmm, frame):
        dd = domain_draws(plmm, frame, domains=(("area",),))
        by_domain = {}
        for d in dd:
            by_domain.setdefault(d.domain, []).append(d.values)
        for values in by_domain.values():
            np.testing.assert_allclose(np.sum(values, axis=0), 1.0, atol=1e-12)

    def test_ratio_quantity(self, plmm, frame):
        ratio = CategoryRatio("g1", ("g1:1",), ("g1:0", "g1:1"))
        est = poststratify(plmm, frame, domains=((),), ratios=[ratio])
        quantities = {e.quantity for e in est}
        assert quantities == {"g1:0", "g1:1", "g2:0", "g2:1", "g1"}
        g1 = next(e for e in est if e.quantity == "g1")
        assert 0 <= g1.ci_low <= g1.point <= g1.ci_high <= 1

    def test_sampled_mode(self, plmm, frame):
        ratio = CategoryRatio("g2", ("g2:1",), ("g2:0", "g2:1"))
        est = poststratify(plmm, frame, mode="sampled", rng=RngStream(0), ratios=[ratio])
        assert all(0 <= e.point <= 1 for e in est)

    def test_unknown_ratio_category(self, plmm, frame):
        with pytest.raises(DomainError, match="unknown categories"):
            poststratify(plmm, frame, ratios=[CategoryRatio("x", ("zz",), ("zz",))])


def test_ratio_numerator_must_be_in_denominator():
    with pytest.raises(DomainError):
        CategoryRatio("bad", ("a",), ("b",))
