import numpy as np
import pytest
from scipy.stats import ks_2samp

from errors import DomainError
from sampling.polya_gamma import PgParams, pg_mean, pg_mean_array, sample_pg, sample_pg_array
from sampling.rng import RngStream


def _within_4se(draws, expected):
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) < 4 * se + 1e-12


class TestMean:
    def test_closed_form(self):
        assert pg_mean(PgParams(2.0, 1.0)) == pytest.approx(np.tanh(0.5), rel=1e-12)

    def test_zero_tilt_limit(self):
        assert pg_mean(PgParams(3.0, 0.0)) == pytest.approx(0.75)
        np.testing.assert_allclose(pg_mean_array(3.0, 1e-8), 0.75, rtol=1e-12)

    def test_even_in_tilt(self):
        np.testing.assert_allclose(pg_mean_array(1.7, -2.3), pg_mean_array(1.7, 2.3))


class TestSampler:
    def test_mean_of_pg_2_1(self):
        draws = sample_pg(PgParams(2.0, 1.0), RngStream(1), size=200_000)
        assert draws.mean() == pytest.approx(0.4621, abs=5e-3)

    @pytest.mark.parametrize("b", [0.5, 1.0, 1.7, 2.0, 5.0])
    @pytest.mark.parametrize("c", [0.0, 0.5, -2.0, 10.0])
    def test_moment_grid(self, b, c):
        draws = sample_pg(PgParams(b, c), RngStream(7, 0, (int(b * 10), int(c * 10) + 100)), size=20_000)
        assert np.all(draws > 0)
        _within_4se(draws, pg_mean(PgParams(b, c)))

    @pytest.mark.slow
    @pytest.mark.parametrize("b", [0.5, 1.0, 1.7, 2.0, 5.0])
    @pytest.mark.parametrize("c", [0.0, 0.5, -0.5, 2.0, -2.0, 10.0, -10.0])
    def test_moment_grid_full(self, b, c):
        draws = sample_pg(PgParams(b, c), RngStream(11, 0, (int(b * 10), int(c * 10) + 100)), size=100_000)
        _within_4se(draws, pg_mean(PgParams(b, c)))

    def test_symmetric_in_tilt(self):
        neg = sample_pg(PgParams(1.7, -2.3), RngStream(2), size=50_000)
        pos = sample_pg(PgParams(1.7, 2.3), RngStream(3), size=50_000)
        assert ks_2samp(neg, pos).pvalue > 0.01

    def test_additive_in_shape(self):
        c = 1.5
        summed = (sample_pg(PgParams(0.7, c), RngStream(4), size=50_000)
                  + sample_pg(PgParams(1.6, c), RngStream(5), size=50_000))
        direct = sample_pg(PgParams(2.3, c), RngStream(6), size=50_000)
        assert ks_2samp(summed, direct).pvalue > 0.01

    def test_scalar_draw(self):
        assert isinstance(sample_pg(PgParams(1.0, 0.3), RngStream(0)), float)

    def test_reproducible(self):
        b = np.array([0.4, 1.0, 3.2])
        c = np.array([0.0, -1.0, 4.0])
        np.testing.assert_array_equal(sample_pg_array(b, c, RngStream(9)), sample_pg_array(b, c, RngStream(9)))

    def test_accepts_numpy_generator(self):
        draws = sample_pg_array(np.ones(5), np.zeros(5), np.random.default_rng(0))
        assert draws.shape == (5,)


class TestValidation:
    @pytest.mark.parametrize("b", [0.0, -1.0, np.inf])
    def test_bad_shape(self, b):
        with pytest.raises(DomainError):
            PgParams(b, 0.0)

    def test_bad_tilt(self):
        with pytest.raises(DomainError):
            PgParams(1.0, np.nan)

    def test_mismatched_vectors(self):
        with pytest.raises(DomainError):
            sample_pg_array(np.ones(3), np.zeros(2), RngStream(0))

    def test_bad_truncation(self):
        with pytest.raises(DomainError):
            sample_pg_array(np.full(2, 0.5), np.zeros(2), RngStream(0), truncation=0)
