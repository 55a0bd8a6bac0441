import numpy as np
import pytest

from torus_nf.fitting import (
    fit_exponential_tail,
    fit_log_linear,
    select_power_degree,
)
from torus_nf.utils import NumericError, ValidationError


@pytest.fixture()
def t():
    return np.linspace(0.0, 10.0, 201)


class TestTailFit:
    def test_recovers_exact_tail(self, t):
        """"""
        y = 1.5 + 0.3 * np.exp(-2.0 * (t - 4.0))
        fit = fit_exponential_tail(t, y, window=(4.0, 8.0))
        assert fit.limit == pytest.approx(1.5, abs=1e-8)
        assert fit.amplitude == pytest.approx(0.3, abs=1e-6)
        assert fit.rate == pytest.approx(2.0, rel=1e-6)
        assert fit.residual < 1e-9
        assert fit.window == pytest.approx((4.0, 8.0))
        assert fit.n_points == 81

    def test_complex_components(self, t):
        """"""
        limit = np.array([1 + 2j, -0.5j])
        y = limit[None, :] + np.outer(np.exp(-3.0 * t), [0.1, 0.2j])
        fit = fit_exponential_tail(t, y, window=(2.0, 6.0))
        assert fit.limit.shape == (2,)
        np.testing.assert_allclose(fit.limit, limit, atol=1e-8)
        assert fit.rate == pytest.approx(3.0, rel=1e-5)

    def test_to_dict(self, t):
        """"""
        fit = fit_exponential_tail(t, 1 + np.exp(-t), window=(1.0, 5.0))
        data = fit.to_dict()
        assert data["window"] == pytest.approx([1.0, 5.0])
        assert set(data) == {
            "limit",
            "amplitude",
            "rate",
            "residual",
            "window",
            "condition",
            "n_points",
        }

    def test_errors(self, t):
        """"""
        with pytest.raises(ValidationError):
            fit_exponential_tail(t, np.ones_like(t), window=(4.0, 4.1))
        with pytest.raises(ValidationError):
            fit_exponential_tail(t, np.ones_like(t), rate_bounds=(2.0, 1.0))

        y = np.ones_like(t)
        y[5] = np.nan
        with pytest.raises(NumericError):
            fit_exponential_tail(t, y)


class TestLogLinear:
    def test_slope(self, t):
        """"""
        y = 2.0 * np.exp(-1.5 * t)
        fit = fit_log_linear(t, y, window=(1.0, 9.0))
        assert fit.slope == pytest.approx(-1.5)
        assert fit.intercept == pytest.approx(np.log(2.0))
        assert fit.log_coeff == 0.0
        assert fit.residual < 1e-12

    def test_log_term(self, t):
        """"""
        y = t ** 2 * np.exp(-t)
        fit = fit_log_linear(t, y, window=(1.0, 9.0), log_term=True)
        assert fit.slope == pytest.approx(-1.0, abs=1e-9)
        assert fit.log_coeff == pytest.approx(2.0, abs=1e-9)

        with pytest.raises(ValidationError):
            fit_log_linear(t, y + 1, log_term=True)

    def test_nonpositive(self, t):
        """"""
        with pytest.raises(NumericError):
            fit_log_linear(t, -np.ones_like(t))

    @pytest.mark.parametrize("degree", [0, 1])
    def test_select_power_degree(self, t, degree):
        """"""
        y = 0.5 * t ** degree * np.exp(-2.0 * t)
        d, fit = select_power_degree(t, y, window=(2.0, 8.0))
        assert d == degree
        assert fit.slope == pytest.approx(-2.0, abs=1e-8)
