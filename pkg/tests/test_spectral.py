import numpy as np
import pytest

from torus_nf.initial_data import beltrami, helical, random_small
from torus_nf.spectral import (
    ScalarField,
    SpectralField,
    bilinear_B,
    curl,
    dirichlet_quotient,
    enstrophy,
    from_physical,
    get_lattice,
    helical_basis,
    helicity,
    inner,
    is_representable,
    leray_project,
    norms,
    shell_project,
    stokes_apply,
    to_physical,
)
from torus_nf.utils import LatticeMismatchError, ValidationError


class TestLattice:
    def test_constructor(self, lattice3, lattice2):
        """"""
        assert lattice3.shells == (1, 2, 3)
        assert lattice3.size == 13
        assert lattice3.is_representable(2)

        # shell 3 is not a sum of two squares
        assert lattice2.shells == (1, 2, 4, 5)
        assert lattice2.size == 10
        assert not lattice2.is_representable(3)

        with pytest.raises(ValidationError):
            get_lattice(4, 3)
        with pytest.raises(ValidationError):
            get_lattice(3, 0)

    def test_is_representable(self):
        """"""
        assert is_representable(3, 3)
        assert not is_representable(3, 2)
        assert not is_representable(7, 3)
        assert is_representable(8, 2)

    def test_index(self, lattice3):
        """"""
        idx, conj = lattice3.index((1, 0, 0))
        assert not conj
        assert lattice3.index((-1, 0, 0)) == (idx, True)

        with pytest.raises(KeyError):
            lattice3.index((2, 0, 0))

    def test_caching(self):
        """"""
        assert get_lattice(3, 3) is get_lattice(3, 3)
        assert get_lattice(3, 3) == get_lattice(3, 3)
        assert get_lattice(3, 3) != get_lattice(2, 3)


class TestSpectralField:
    def test_constructor(self, lattice3):
        """"""
        with pytest.raises(ValidationError):
            SpectralField(lattice3, np.zeros((2, 3)))

        u = SpectralField.zeros(lattice3)
        assert u.is_zero()
        assert u.norm() == 0

        # amplitudes are read-only
        with pytest.raises(ValueError):
            u.amplitudes[0, 0] = 1.0

    def test_from_modes(self, lattice3):
        """"""
        u = SpectralField.from_modes(lattice3, {(0, 0, -1): [1j, 0, 0]})
        idx, _ = lattice3.index((0, 0, 1))
        np.testing.assert_allclose(u.amplitudes[idx], [-1j, 0, 0])

        # projection removes the component along k
        u = SpectralField.from_modes(
            lattice3, {(1, 0, 0): [1, 1, 0]}, project=True
        )
        assert u.max_divergence() == 0
        assert u.norm() == pytest.approx(1.0)

    def test_norms(self, lattice3):
        """"""
        u = SpectralField.from_modes(lattice3, {(1, 1, 0): [1, -1, 0]})
        assert u.norm() == pytest.approx(np.sqrt(2))
        assert u.norm(alpha=0.5) == pytest.approx(2.0)
        assert norms(u, (0.0, 0.5)) == pytest.approx(
            np.sqrt(2) * np.exp(0.5 * np.sqrt(2))
        )
        assert enstrophy(u) == pytest.approx(4.0)
        assert dirichlet_quotient(u) == pytest.approx(2.0)

        with pytest.raises(ValidationError):
            norms(u, (-1.0, 0.0))

    def test_arithmetic(self, lattice3, field3):
        """"""
        assert (field3 - field3).is_zero()
        assert (2 * field3).norm() == pytest.approx(2.0)
        assert inner(field3, field3) == pytest.approx(1.0)
        assert (field3 / 4).norm() == pytest.approx(0.25)

        other = random_small(get_lattice(3, 2), seed=1)
        with pytest.raises(LatticeMismatchError):
            field3 + other

    def test_stokes_and_shells(self, field3, lattice3):
        """"""
        total = sum(
            (shell_project(field3, m) for m in lattice3.shells),
            SpectralField.zeros(lattice3),
        )
        np.testing.assert_allclose(total.amplitudes, field3.amplitudes)

        Au = stokes_apply(field3)
        assert Au.inner(field3) == pytest.approx(enstrophy(field3))
        assert shell_project(field3, 7).is_zero()

    def test_serialization(self, field3, lattice3):
        """"""
        data = field3.to_dict()
        assert data["dim"] == 3
        assert len(data["modes"]) == lattice3.size

        u = SpectralField.from_dict(data)
        assert u.digest() == field3.digest()

        # lattice mismatch
        with pytest.raises(LatticeMismatchError):
            SpectralField.from_dict(data, lattice=get_lattice(3, 2))

        # mode outside the truncation
        bad = dict(data, modes=[{"k": [2, 0, 0], "re": [0, 1, 0],
                                 "im": [0, 0, 0]}])
        with pytest.raises(ValidationError):
            SpectralField.from_dict(bad)

        # negative half-space representative
        bad = dict(data, modes=[{"k": [-1, 0, 0], "re": [0, 1, 0],
                                 "im": [0, 0, 0]}])
        with pytest.raises(ValidationError):
            SpectralField.from_dict(bad)

        # divergence
        bad = dict(data, modes=[{"k": [1, 0, 0], "re": [1, 0, 0],
                                 "im": [0, 0, 0]}])
        with pytest.raises(ValidationError):
            SpectralField.from_dict(bad)

        with pytest.raises(ValidationError):
            SpectralField.from_dict({"dim": 3})

    def test_physical_grid(self, field3, lattice3):
        """"""
        values = to_physical(field3, 8)
        assert values.shape == (3, 8, 8, 8)
        assert np.isrealobj(values)

        back = from_physical(values, lattice3)
        np.testing.assert_allclose(
            back.amplitudes, field3.amplitudes, atol=1e-14
        )

        with pytest.raises(ValidationError):
            to_physical(field3, 2)


class TestOperators:
    def test_leray(self, lattice3, rng):
        """"""
        raw = rng.standard_normal((lattice3.size, 3)) + 0j
        v = SpectralField(lattice3, raw)
        u = leray_project(v)
        assert u.max_divergence() < 1e-14
        np.testing.assert_allclose(
            leray_project(u).amplitudes, u.amplitudes, atol=1e-15
        )

    def test_bilinear_antisymmetry(self, lattice3):
        """"""
        for seed in range(5):
            u = random_small(lattice3, 1.0, seed=seed)
            v = random_small(lattice3, 1.0, seed=seed + 100)
            w = random_small(lattice3, 1.0, seed=seed + 200)
            assert abs(inner(bilinear_B(u, v), v)) < 1e-13
            assert inner(bilinear_B(u, v), w) == pytest.approx(
                -inner(bilinear_B(u, w), v), abs=1e-13
            )

    def test_bilinear_divergence_free(self, field3):
        """"""
        assert bilinear_B(field3, field3).max_divergence() < 1e-13

    def test_beltrami(self, lattice3):
        """"""
        for sign in (1, -1):
            u = beltrami(lattice3, shell=2, sign=sign, amplitude=1.0, seed=3)
            np.testing.assert_allclose(
                curl(u).amplitudes,
                sign * np.sqrt(2) * u.amplitudes,
                atol=1e-14,
            )
            assert helicity(u) == pytest.approx(sign * np.sqrt(2))
            # single-shell Beltrami fields are steady states of the
            # nonlinearity
            assert bilinear_B(u, u).norm() < 1e-14

    def test_helical_basis(self):
        """"""
        k = np.array([1, 1, 0])
        hp, hm = helical_basis(k)
        for h, sign in ((hp, 1), (hm, -1)):
            np.testing.assert_allclose(
                1j * np.cross(k, h), sign * np.sqrt(2) * h, atol=1e-15
            )
            assert np.vdot(h, h).real == pytest.approx(1.0)
        assert abs(np.vdot(hp, hm)) < 1e-15

        with pytest.raises(ValidationError):
            helical_basis([1, 0])

    def test_helical_mixture(self, lattice3):
        """"""
        k = (1, 1, 0)
        for alpha in (-1.0, 0.0, 0.3 * np.sqrt(2)):
            u = helical(lattice3, k=k, alpha=alpha, amplitude=1.0)
            assert helicity(u) == pytest.approx(alpha, abs=1e-14)

        with pytest.raises(ValidationError):
            helical(lattice3, k=k, alpha=2.0)

    def test_2d(self, lattice2):
        """"""
        u = random_small(lattice2, 1.0, seed=0)
        assert isinstance(curl(u), ScalarField)
        assert curl(u).norm() == pytest.approx(u.norm(alpha=0.5))
        assert helicity(u) == 0.0
        assert abs(inner(bilinear_B(u, u), u)) < 1e-14
