import numpy as np
import pandas as pd
import pytest

from torus_nf.initial_data import random_small
from torus_nf.solver import (
    SERIES_COLUMNS,
    Trajectory,
    central_derivative,
    energy_checks,
    evolve,
    heat_flow,
    richardson_check,
    step_ifrk4,
)
from torus_nf.spectral import SpectralField
from torus_nf.utils import ValidationError


@pytest.fixture()
def traj(lattice3):
    u0 = random_small(lattice3, 0.1, seed=7)
    return evolve(u0, 1.0, dt=0.01, stride=10, metadata={"seed": 7})


class TestIFRK4:
    def test_single_mode_is_heat_flow(self, lattice3):
        """"""
        u = SpectralField.from_modes(lattice3, {(1, 1, 0): [1, -1, 0]})
        for _ in range(10):
            u = step_ifrk4(u, 0.05)
        expected = heat_flow(
            SpectralField.from_modes(lattice3, {(1, 1, 0): [1, -1, 0]}), 0.5
        )
        np.testing.assert_allclose(
            u.amplitudes, expected.amplitudes, rtol=1e-13, atol=1e-15
        )
        assert u.norm() == pytest.approx(np.sqrt(2) * np.exp(-1.0))

    def test_central_derivative(self):
        """"""
        dt = 0.01
        t = np.arange(20) * dt
        np.testing.assert_allclose(
            central_derivative(t ** 3, dt), 3 * t[2:-2] ** 2, atol=1e-12
        )

    @pytest.mark.slow
    def test_richardson_order(self, lattice3):
        """"""
        u0 = random_small(lattice3, 0.5, seed=3)
        report = richardson_check(u0, 0.4, 0.1)
        assert report["difference_dt2"] < report["difference_dt"]
        assert 3.3 < report["order"] < 4.7


class TestEvolve:
    def test_snapshots(self, traj, lattice3):
        """"""
        assert len(traj) == 11
        assert traj.t_end == pytest.approx(1.0)
        assert traj.snapshot_dt == pytest.approx(0.1)
        assert list(traj.series.columns) == SERIES_COLUMNS
        assert len(traj.series) == 101
        assert traj.metadata == {"seed": 7, "T": 1.0}
        assert traj.initial.lattice is lattice3

    def test_energy_checks(self, traj):
        """"""
        report = energy_checks(traj)
        assert report["n_steps"] == 100
        assert report["energy_residual"] < 1e-7
        assert report["midpoint_residual"] < 1e-3
        assert report["helicity_residual"] < 1e-6
        assert report["monotone"]
        # |u(t)| <= e^{-t} |u0| since the lowest Stokes eigenvalue is 1
        assert report["decay_ratio_max"] == pytest.approx(1.0)
        assert report["decay_ratio_min"] <= 1.0

    def test_zero_data(self, lattice3):
        """"""
        traj = evolve(SpectralField.zeros(lattice3), 0.1, dt=0.01, stride=5)
        assert traj.state(-1).is_zero()
        assert energy_checks(traj)["energy_residual"] == 0.0

    @pytest.mark.parametrize(
        "T,dt,stride", [(1.0, 0.3, 1), (1.0, 0.1, 3), (-1.0, 0.1, 1),
                        (1.0, 0.1, 0)],
    )
    def test_bad_steps(self, field3, T, dt, stride):
        """"""
        with pytest.raises(ValidationError):
            evolve(field3, T, dt=dt, stride=stride)


class TestTrajectory:
    def test_window_and_shift(self, traj):
        """"""
        idx = traj.window(0.25, 0.6)
        np.testing.assert_array_equal(idx, [3, 4, 5, 6])

        shifted = traj.shift(0.5)
        assert len(shifted) == 6
        assert shifted.times[0] == 0.0
        assert shifted.metadata["shifted_by"] == 0.5
        np.testing.assert_array_equal(
            shifted.initial.amplitudes, traj.state(5).amplitudes
        )
        assert shifted.series["t"].iloc[0] == pytest.approx(0.0)

        with pytest.raises(ValidationError):
            traj.shift(0.55)

    def test_save_load(self, traj, tmp_path):
        """"""
        traj.save(tmp_path / "trajectory")
        assert (tmp_path / "trajectory" / "manifest.json").exists()
        assert (tmp_path / "trajectory" / "states" / "0010.json").exists()

        loaded = Trajectory.load(tmp_path / "trajectory")
        assert loaded.lattice is traj.lattice
        assert loaded.dt == traj.dt
        assert loaded.stride == traj.stride
        np.testing.assert_allclose(loaded.times, traj.times)
        np.testing.assert_allclose(loaded.states, traj.states, atol=1e-15)
        pd.testing.assert_frame_equal(loaded.series, traj.series)

    def test_invalid(self, lattice3, traj):
        """"""
        with pytest.raises(ValidationError):
            Trajectory(
                lattice3, [0.0, 1.0], traj.states[:1], traj.series, 0.01, 1
            )
        with pytest.raises(ValidationError):
            Trajectory(
                lattice3, [1.0, 0.0], traj.states[:2], traj.series, 0.01, 1
            )
