import numpy as np
import pytest

from torus_nf.initial_data import (
    KINDS,
    beltrami,
    build,
    invariant_family,
    m_perp,
    random_small,
)
from torus_nf.solver import evolve, heat_flow
from torus_nf.spectral import bilinear_B, get_lattice, helicity
from torus_nf.utils import ValidationError, dump_json


class TestConstructors:
    def test_random_small(self, lattice3):
        """"""
        u = random_small(lattice3, 0.05, seed=3)
        assert u.norm() == pytest.approx(0.05)
        assert u.max_divergence() < 1e-14
        assert u.digest() == random_small(lattice3, 0.05, seed=3).digest()
        assert u.digest() != random_small(lattice3, 0.05, seed=4).digest()

        v = random_small(lattice3, 0.05, seed=3, shells=[2])
        assert v.support() == (2,)

        with pytest.raises(ValidationError):
            random_small(lattice3, 0.0)
        with pytest.raises(ValidationError):
            random_small(get_lattice(2, 5), shells=[3])

    def test_beltrami(self, lattice3, lattice2):
        """"""
        u = beltrami(lattice3, shell=1, sign=-1, amplitude=0.2)
        assert u.norm() == pytest.approx(0.2)
        assert u.support() == (1,)
        assert helicity(u) == pytest.approx(-0.04)

        with pytest.raises(ValidationError):
            beltrami(lattice2)
        with pytest.raises(ValidationError):
            beltrami(lattice3, sign=2)
        with pytest.raises(ValidationError):
            beltrami(get_lattice(3, 10), shell=7)

    def test_invariant_family(self, lattice3):
        """"""
        u = invariant_family(
            lattice3, k=(1, 0, 0), profile={1: 0.1}, direction=(0, 1, 0)
        )
        assert bilinear_B(u, u).is_zero()

        # the nonlinearity vanishes along the whole flow
        traj = evolve(u, 0.5, dt=0.01, stride=50)
        np.testing.assert_allclose(
            traj.state(-1).amplitudes,
            heat_flow(u, 0.5).amplitudes,
            rtol=1e-12,
            atol=1e-16,
        )

        # second harmonic of (1, -1, 0) has |k|² = 8
        with pytest.raises(ValidationError):
            invariant_family(lattice3)
        with pytest.raises(ValidationError):
            invariant_family(lattice3, k=(1, 0, 0), direction=(1, 0, 0))

    def test_m_perp(self, lattice3):
        """"""
        a = np.array([1.0, 1.0, 1.0])
        u = m_perp(lattice3, direction=a, amplitude=0.1, seed=2)
        assert u.norm() == pytest.approx(0.1)
        assert helicity(u) == pytest.approx(0.0, abs=1e-15)
        active = np.abs(u.amplitudes).sum(axis=1) > 0
        assert np.allclose(u.lattice.wavevectors[active] @ a, 0)

        with pytest.raises(ValidationError):
            m_perp(lattice3, direction=(1, 1, 1), shells=[1])


class TestBuild:
    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "random_small", "amplitude": 0.05},
            {"kind": "beltrami", "shell": 2},
            {"kind": "invariant_family", "k": [0, 1, 0],
             "direction": [1, 0, 0], "profile": {1: [0.1, 0.05]}},
            {"kind": "m_perp"},
            {"kind": "helical", "k": [1, 1, 0], "alpha": 0.5},
        ],
    )
    def test_kinds(self, spec):
        """"""
        u = build(spec, 3, 3, seed=1)
        assert u.lattice == get_lattice(3, 3)
        assert not u.is_zero()
        assert u.max_divergence() < 1e-13

    def test_seed(self):
        """"""
        spec = {"kind": "random_small"}
        assert build(spec, 3, 3, seed=1).digest() == (
            build(spec, 3, 3, seed=1).digest()
        )
        # an explicit seed in the spec wins
        assert build(dict(spec, seed=5), 3, 3, seed=1).digest() == (
            build(spec, 3, 3, seed=5).digest()
        )

    def test_from_file(self, field3, tmp_path):
        """"""
        path = dump_json(field3.to_dict(), tmp_path / "u0.json")
        u = build({"kind": "file", "path": str(path)}, 3, 3)
        assert u.digest() == field3.digest()

    def test_errors(self):
        """"""
        assert "random_small" in KINDS
        with pytest.raises(ValidationError):
            build({"kind": "vortex"}, 3, 3)
        with pytest.raises(ValidationError):
            build({"kind": "file"}, 3, 3)
        with pytest.raises(ValidationError):
            build({"kind": "beltrami", "radius": 1}, 3, 3)
