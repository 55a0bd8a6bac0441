import numpy as np
import pytest

from torus_nf.asymptotics import (
    default_window,
    dirichlet_limit,
    helicity_report,
    manifold_membership,
    phi_from_trajectory,
    phi_functional,
)
from torus_nf.initial_data import (
    beltrami,
    invariant_family,
    m_perp,
    random_small,
)
from torus_nf.solver import evolve
from torus_nf.spectral import SpectralField
from torus_nf.utils import NumericError, ValidationError


@pytest.fixture()
def beltrami_traj(lattice3):
    u0 = beltrami(lattice3, shell=2, sign=1, amplitude=0.1, seed=4)
    return evolve(u0, 3.0, dt=0.05, stride=2)


class TestDirichletLimit:
    def test_beltrami(self, beltrami_traj):
        """"""
        series = dirichlet_limit(beltrami_traj)
        assert series.matched == 2
        assert series.limit == pytest.approx(2.0, abs=1e-10)
        assert series.monotone
        assert not series.nonmonotone_tail
        assert series.to_dict()["distance"] < 1e-10

    def test_generic_data(self, lattice3):
        """"""
        u0 = random_small(lattice3, 0.01, seed=11)
        traj = evolve(u0, 8.0, dt=0.05, stride=2)
        series = dirichlet_limit(traj)
        assert series.matched == 1
        assert abs(series.limit - 1) < series.tolerance
        # λ - 1 decays like |R_2 u|² / |R_1 u|²
        assert series.rate == pytest.approx(2.0, abs=0.3)

    def test_vanishing(self, lattice3):
        """"""
        traj = evolve(SpectralField.zeros(lattice3), 1.0, dt=0.1, stride=1)
        with pytest.raises(NumericError):
            dirichlet_limit(traj)

    def test_default_window(self):
        """"""
        assert default_window(10.0) == pytest.approx((6.0, 9.5))


class TestMembership:
    def test_single_shell(self, beltrami_traj):
        """"""
        member = manifold_membership(beltrami_traj, 2)
        assert member.member
        assert member.evidence[0]["identically_zero"]

        member = manifold_membership(beltrami_traj, 3)
        assert not member.member
        assert member.to_dict()["evidence"][1]["shell"] == 2

        with pytest.raises(ValidationError):
            manifold_membership(beltrami_traj, 0)

    def test_phi(self, lattice3):
        """"""
        u0 = invariant_family(
            lattice3, k=(1, 1, 0), profile={1: 0.1}, direction=(0, 0, 1)
        )
        traj = evolve(u0, 3.0, dt=0.05, stride=2)

        # B vanishes along the flow, so Φ_2 reduces to the shell projection
        phi = phi_from_trajectory(traj, 2)
        np.testing.assert_allclose(phi.value.amplitudes, u0.amplitudes)
        assert phi.tail == 0.0
        assert phi.to_dict()["norm"] == pytest.approx(0.1)

        phi = phi_from_trajectory(traj, 1)
        assert phi.value.is_zero()

        with pytest.raises(ValidationError):
            phi_from_trajectory(traj, 3)

    def test_phi_functional(self, lattice3):
        """"""
        u0 = invariant_family(
            lattice3, k=(1, 1, 0), profile={1: 0.1}, direction=(0, 0, 1)
        )
        phi = phi_functional(u0, 2, T_max=2.0, dt=0.05, stride=2)
        np.testing.assert_allclose(phi.value.amplitudes, u0.amplitudes)
        assert phi.T_max == pytest.approx(2.0)

        # the integral has not converged by T_max
        u0 = random_small(lattice3, 0.1, seed=5)
        with pytest.raises(NumericError):
            phi_functional(u0, 1, T_max=2.0, dt=0.05, stride=2)


class TestHelicity:
    def test_beltrami(self, beltrami_traj):
        """"""
        report = helicity_report(beltrami_traj)
        assert not report.identically_zero
        assert report.alpha0["value"] == pytest.approx(np.sqrt(2))
        assert report.h0["value"] == pytest.approx(2.0)
        assert report.degree == 0
        assert report.decay_exponent == pytest.approx(4.0, rel=1e-6)
        assert report.cauchy_schwarz_excess <= 1e-15
        assert report.alpha_bound == pytest.approx(np.sqrt(2))

    def test_zero_helicity(self, lattice3, lattice2):
        """"""
        u0 = m_perp(lattice3, amplitude=0.1, seed=1)
        report = helicity_report(evolve(u0, 1.0, dt=0.1, stride=1))
        assert report.identically_zero
        assert report.alpha0 is None

        u0 = random_small(lattice2, 0.1, seed=1)
        report = helicity_report(evolve(u0, 1.0, dt=0.1, stride=1))
        assert report.identically_zero
        assert report.to_dict()["max_helicity"] == 0.0
