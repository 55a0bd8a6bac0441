import math

import numpy as np
import pytest

from torus_nf.initial_data import beltrami, random_small
from torus_nf.multiindex import MultiIndex
from torus_nf.normal_form import (
    ExpansionCache,
    NormalState,
    WeightSchedule,
    clear_window,
    degree_bound_holds,
    expansion,
    extract_normalization,
    gauge,
    gauge_table,
    homogeneous_part,
    homology_residual,
    initial_state_from_xi,
    product_bound_holds,
    q_n,
    random_normal_state,
    s_ext,
    s_normal,
    sinorm,
    smoothing_bound_holds,
    star_norm,
)
from torus_nf.solver import evolve, heat_flow
from torus_nf.spectral import SpectralField, bilinear_B, get_lattice
from torus_nf.utils import LatticeMismatchError, ValidationError


@pytest.fixture()
def xi(lattice3):
    return random_normal_state(lattice3, 0.05, seed=8, decay=0.5)


class TestNormalState:
    def test_components(self, lattice3, xi):
        """"""
        assert xi.support() == (1, 2, 3)
        assert xi.max_shell == 3
        norms = xi.component_norms()
        assert norms[1] == pytest.approx(0.05)
        assert norms[2] == pytest.approx(0.025)
        assert norms[3] == pytest.approx(0.0125)

        rebuilt = NormalState.from_components(lattice3, xi.components())
        assert rebuilt.digest() == xi.digest()

    def test_from_components_errors(self, lattice3, field3):
        """"""
        with pytest.raises(ValidationError):
            NormalState.from_components(lattice3, {1: field3})

        other = random_small(get_lattice(3, 2), seed=0, shells=[1])
        with pytest.raises(LatticeMismatchError):
            NormalState.from_components(lattice3, {1: other})

    def test_serialization(self, xi):
        """"""
        data = xi.to_dict()
        assert [c["shell"] for c in data["components"]] == [1, 2, 3]
        assert NormalState.from_dict(data).digest() == xi.digest()

        with pytest.raises(ValidationError):
            NormalState.from_dict({"dim": 3})

    def test_arithmetic(self, xi):
        """"""
        assert (xi - xi).norm() == 0
        assert (2 * xi).norm() == pytest.approx(2 * xi.norm())
        np.testing.assert_allclose(
            xi.stokes(1.0).component(3).amplitudes,
            3 * xi.component(3).amplitudes,
        )


class TestWeights:
    def test_default(self):
        """"""
        weights = WeightSchedule.default(8)
        assert len(weights) == 8
        assert weights.rho(1) == 1.0
        assert weights.rho(2) == pytest.approx(math.exp(-8) / 16)
        assert weights.validate() == []
        # deep levels are only representable as logarithms
        assert weights.rho(8) == 0.0
        assert np.isfinite(weights.log_rho[-1])

        with pytest.raises(ValidationError):
            weights.rho(9)

    def test_violations(self):
        """"""
        weights = WeightSchedule.from_values(
            [1, 1, 1], [2, 1, 1], [1, 0.5, 0.25]
        )
        violations = weights.validate()
        assert any(v.startswith("gamma_1") for v in violations)
        assert any("rho_2" in v for v in violations)

        weights = WeightSchedule.from_values([1, 1], [1, 1], [1, 0])
        assert "rho_2 is not positive" in weights.validate()

    def test_from_config(self):
        """"""
        default = WeightSchedule.default(4)
        same = WeightSchedule.from_config(
            {"kappa": None, "gamma": None, "rho": None}, 4
        )
        np.testing.assert_array_equal(same.log_rho, default.log_rho)

        custom = WeightSchedule.from_config({"kappa": [0.5] * 4}, 4)
        assert custom.log_kappa[0] == pytest.approx(math.log(0.5))
        np.testing.assert_allclose(custom.log_gamma, default.log_gamma)

    def test_star_norm(self, lattice3, xi):
        """"""
        weights = WeightSchedule.default(3)
        first = NormalState.from_components(lattice3, {1: xi.component(1)})
        assert star_norm(first, weights) == pytest.approx(0.05)

        expected = sum(
            weights.rho(m) * xi.component(m).norm(alpha=0.5) for m in (1, 2, 3)
        )
        assert star_norm(xi, weights) == pytest.approx(expected)
        assert star_norm(
            [xi.component(m) for m in (1, 2, 3)], weights
        ) == pytest.approx(expected)

        with pytest.raises(ValidationError):
            star_norm(xi, WeightSchedule.default(2))


class TestExpansion:
    def test_first_levels(self, xi):
        """"""
        q1 = q_n(xi, 1, ExpansionCache())
        assert q1.degree == 0
        np.testing.assert_allclose(
            q1.evaluate(0.0).amplitudes, xi.component(1).amplitudes
        )
        assert degree_bound_holds(xi, 3, ExpansionCache())

    def test_cache(self, xi):
        """"""
        cache = ExpansionCache(max_entries=2)
        q3 = q_n(xi, 3, cache)
        # q_3 needs q_1 and q_2, the oldest entry was evicted
        assert len(cache) == 2
        assert q_n(xi, 3, cache) is q3

        # a fresh cache is filled, not bypassed
        fresh = ExpansionCache()
        q_n(xi, 2, fresh)
        assert len(fresh) == 2
        assert ExpansionCache().q(xi, 1) is not None

        cache.clear()
        assert len(cache) == 0
        with pytest.raises(ValidationError):
            cache.q(xi, 0)

    def test_initial_state(self, xi):
        """"""
        cache = ExpansionCache()
        u1 = initial_state_from_xi(xi, 1, cache)
        np.testing.assert_allclose(u1.amplitudes, xi.component(1).amplitudes)

        # q_m(0) carries the shell data ξ_m on shell m
        for m in (2, 3):
            step = initial_state_from_xi(xi, m, cache) - (
                initial_state_from_xi(xi, m - 1, cache)
            )
            np.testing.assert_allclose(
                step.shell_project(m).amplitudes,
                xi.component(m).amplitudes,
                atol=1e-15,
            )

    def test_s_normal(self, xi):
        """"""
        cache = ExpansionCache()
        start = s_normal(xi, 0.0, cache=cache)
        np.testing.assert_allclose(
            start.field.amplitudes, xi.field.amplitudes, atol=1e-15
        )

        # flow property of the normal form
        a = s_normal(s_normal(xi, 0.3, cache=cache), 0.4, cache=cache)
        b = s_normal(xi, 0.7, cache=cache)
        np.testing.assert_allclose(
            a.field.amplitudes, b.field.amplitudes, atol=1e-11
        )

    def test_s_ext(self, lattice3, xi):
        """"""
        u = random_small(lattice3, 0.1, seed=1)
        level = s_ext([u], 0.5, 1, dt=0.05)[0]
        np.testing.assert_allclose(
            level.amplitudes, heat_flow(u, 0.5).amplitudes, atol=1e-14
        )

        # the levels q_n(t) e^{-nt} solve the extended system
        cache = ExpansionCache()
        levels = [q_n(xi, n, cache).evaluate(0.0) for n in (1, 2, 3)]
        out = s_ext(levels, [0.25, 0.5], 3, dt=0.01)
        U = expansion(xi, 3, cache)
        for t, state in zip((0.25, 0.5), out):
            for n in (1, 2, 3):
                expected = U.term(n).evaluate(t) * math.exp(-n * t)
                np.testing.assert_allclose(
                    state[n - 1].amplitudes, expected.amplitudes, atol=1e-9
                )

        with pytest.raises(ValidationError):
            s_ext([], 0.5, 1)
        with pytest.raises(ValidationError):
            s_ext([u, u], 0.5, 1)

    def test_clear_window(self):
        """"""
        times = np.linspace(0.0, 14.0, 281)
        values = 1e-3 * np.exp(-4 * times)
        floor = 1e-20 * np.exp(-times)

        # values reach 1e3 * floor at t = 14 ln(10) / 3 ~ 10.745
        t0, t1 = clear_window(times, values, floor, (8.0, 14.0))
        assert t1 == pytest.approx(10.70)
        assert t0 == pytest.approx(6.70)
        assert values[times <= t1][-1] >= 1e3 * floor[times <= t1][-1]

        # a negligible floor leaves the window alone
        assert clear_window(times, values, 1e-60 * floor, (8.0, 14.0)) == (
            8.0,
            14.0,
        )


class TestNormalization:
    def test_beltrami(self, lattice3):
        """"""
        u0 = beltrami(lattice3, shell=2, sign=1, amplitude=0.1, seed=4)
        traj = evolve(u0, 3.0, dt=0.05, stride=2)

        # u(t) = e^{-2t} u0, so the normal form is u0 on shell 2
        result = extract_normalization(
            traj, 2, windows={1: (1.0, 3.0), 2: (1.0, 3.0)}
        )
        assert result.xi.component(1).norm() < 1e-12
        np.testing.assert_allclose(
            result.xi.component(2).amplitudes, u0.amplitudes, atol=1e-12
        )
        assert [fit["shell"] for fit in result.fits] == [1, 2]
        assert all(fit["reliable"] for fit in result.fits)

    def test_window_after_end(self, lattice3):
        """"""
        u0 = beltrami(lattice3, shell=1, amplitude=0.1)
        traj = evolve(u0, 1.0, dt=0.05, stride=2)
        with pytest.raises(ValidationError):
            extract_normalization(traj, 1)


class TestGauges:
    def test_table_matches_enumeration(self, xi):
        """"""
        table = gauge_table(xi, 3, 6)
        for d in range(1, 4):
            for n in range(d, 7):
                assert table[d, n] == pytest.approx(
                    gauge(xi, d, n), rel=1e-12, abs=1e-300
                )

    def test_sinorm(self, xi):
        """"""
        index = MultiIndex({1: 2, 3: 1})
        assert sinorm(xi, index) == pytest.approx(0.05 ** 2 * 0.0125)

    def test_bounds(self, xi):
        """"""
        assert product_bound_holds(xi, max_total=4, max_weight=6)
        assert smoothing_bound_holds(xi, 0.5, 1.0, max_order=4, max_weight=6)


class TestHomology:
    def test_residual(self, lattice3):
        """"""
        xi = random_normal_state(
            lattice3, 0.05, seed=21, shells=[1, 2, 3], decay=0.5
        )
        assert homology_residual(xi, 2) < 1e-6

        with pytest.raises(ValidationError):
            homology_residual(xi, 1)

    def test_homogeneous_part(self, xi):
        """"""

        def F(state):
            return bilinear_B(state.field, state.field) + 3.0 * state.field

        quadratic, condition = homogeneous_part(F, xi, 2, 2)
        assert isinstance(quadratic, SpectralField)
        np.testing.assert_allclose(
            quadratic.amplitudes,
            bilinear_B(xi.field, xi.field).amplitudes,
            atol=1e-13,
        )
        linear, _ = homogeneous_part(F, xi, 1, 2)
        np.testing.assert_allclose(
            linear.amplitudes, 3.0 * xi.field.amplitudes, atol=1e-13
        )
        assert condition > 1

        with pytest.raises(ValidationError):
            homogeneous_part(F, xi, 3, 2)

    def test_zero_state(self, lattice3):
        """"""
        xi = NormalState(SpectralField.zeros(lattice3))
        assert homology_residual(xi, 2) == 0.0
