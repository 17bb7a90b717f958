import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

from data.dataset import PopulationFrame, SurveyDataset
from data.design import build_design


def make_units(n: int = 300, n_areas: int = 6, seed: int = 0, intercept: float = -0.3,
               sex_effect: float = 0.6, area_sd: float = 0.5) -> pd.DataFrame:
    """Unit-level binary survey rows with one two-level covariate and log-normal weights."""
    gen = np.random.default_rng(seed)
    areas = np.array([f"A{k + 1}" for k in range(n_areas)])
    area_idx = gen.integers(0, n_areas, size=n)
    sex = gen.integers(0, 2, size=n)
    area_eff = area_sd * gen.standard_normal(n_areas)
    p = expit(intercept + sex_effect * sex + area_eff[area_idx])
    return pd.DataFrame({
        "unit_id": [f"u{i}" for i in range(n)],
        "response": (gen.random(n) < p).astype(int),
        "trials": 1,
        "weight": np.exp(gen.normal(2.0, 0.4, size=n)),
        "area": areas[area_idx],
        "sex": np.where(sex == 1, "F", "M"),
    })


@pytest.fixture
def make_survey():
    return make_units


@pytest.fixture
def units() -> pd.DataFrame:
    return make_units()


@pytest.fixture
def dataset(units) -> SurveyDataset:
    return SurveyDataset.from_frame(units, covariates=("sex",))


@pytest.fixture
def design(dataset):
    return build_design(dataset)


@pytest.fixture
def frame(dataset) -> PopulationFrame:
    """Every (area, sex) cell with a modest count."""
    rows = [
        {"area": a, "sex": s, "count": 50 + 10 * k}
        for k, a in enumerate(dataset.areas)
        for s in dataset.factor_levels["sex"]
    ]
    return PopulationFrame(cells=pd.DataFrame(rows), covariates=("sex",))
