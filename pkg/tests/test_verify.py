import math

import pytest

from torus_nf.config import ConfigParser, RunConfig
from torus_nf.verify import (
    CHECKS,
    CONTRACTION_BOUND,
    EXPECTED_TIGHT_FAILURES,
    Verifier,
    compare,
)
from torus_nf.utils import ValidationError


@pytest.fixture()
def verifier(parser_default):
    run = RunConfig(lambda_max=3, dt=0.01, stride=10, seed=1)
    return Verifier(run, parser_default.get_tolerances())


class TestCompare:
    def test_headroom(self):
        """"""
        result = compare(
            "x",
            {"error": 1e-10, "slope": 4.5, "ok": True},
            {"error": ("max", 1e-8), "slope": ("min", 4.0)},
        )
        assert result.passed
        assert result.headroom["error"] == pytest.approx(2.0)
        assert result.headroom["slope"] == pytest.approx(0.5)
        assert result.limits["error"] == ["max", 1e-8]

    def test_failures(self):
        """"""
        assert not compare("x", {"e": 1.0}, {"e": ("max", 0.5)}).passed
        assert not compare("x", {"ok": False}, {}).passed
        result = compare("x", {"e": 0.0}, {"e": ("max", 1.0)})
        assert result.passed
        assert math.isinf(result.headroom["e"])


class TestVerifier:
    def test_registry(self):
        """"""
        for name in EXPECTED_TIGHT_FAILURES:
            assert name in CHECKS
        assert "weights" in CHECKS
        assert "poincare_dulac" in CHECKS

    def test_unknown_check(self, verifier):
        """"""
        with pytest.raises(ValidationError):
            verifier.run_checks(["everything"])

    def test_weights(self, verifier):
        """"""
        report = verifier.run_checks(["weights"])
        assert report["passed"]
        assert report["failed"] == []
        assert report["checks"]["weights"]["metrics"]["conforming"]

    def test_bad_weights(self, parser_default):
        """"""
        run = RunConfig(lambda_max=3)
        verifier = Verifier(
            run,
            parser_default.get_tolerances(0.001),
            settings={"homology_samples": 1},
            weights={"gamma": [2.0, 1.0, 1.0]},
            tolerance_scale=0.001,
        )
        report = verifier.run_checks(["weights", "homology"])
        assert report["failed"][0] == "weights"
        assert report["expected_failures"] == ["homology"]
        assert "weights" in report["unexpected_failures"]

    def test_tolerance_scale(self, parser_default):
        """"""
        tolerances = parser_default.get_tolerances(0.5)
        defaults = parser_default.get_tolerances()
        assert tolerances["conjugacy"] == 0.5 * defaults["conjugacy"]
        # margins are not scaled
        assert tolerances["expansion_margin"] == defaults["expansion_margin"]

    def test_poincare_dulac(self, verifier):
        """"""
        report = verifier.run_checks(["poincare_dulac"])
        assert report["passed"], report["checks"]["poincare_dulac"]

    @pytest.mark.slow
    def test_solver_checks(self, parser_default):
        """"""
        verifier = Verifier(RunConfig(seed=1), parser_default.get_tolerances())
        report = verifier.run_checks(
            ["energy_equality", "invariant_family", "helicity"]
        )
        assert report["passed"], report["failed"]


@pytest.fixture(scope="module")
def default_verifier():
    """ Verifier on the default run, shared so trajectories are reused. """
    parser = ConfigParser(ignore_user=True)
    yield Verifier(parser.get_run_config(), parser.get_tolerances())


@pytest.mark.slow
class TestAcceptance:
    def test_expansion_residual(self, default_verifier):
        """"""
        report = default_verifier.run_checks(["expansion_residual"])
        check = report["checks"]["expansion_residual"]
        assert report["passed"], check
        margin = default_verifier.tol["expansion_margin"]
        for N in (1, 2, 3):
            exponent = check["metrics"].get(f"exponent_{N}_H")
            assert exponent is None or exponent <= -(N + margin)

    def test_round_trip(self, default_verifier):
        """"""
        report = default_verifier.run_checks(["round_trip"])
        assert report["passed"], report["checks"]["round_trip"]

    def test_commutative_diagram(self, default_verifier):
        """"""
        report = default_verifier.run_checks(["commutative_diagram"])
        check = report["checks"]["commutative_diagram"]
        assert report["passed"], check
        assert "extended_sum" in check["metrics"]

    def test_dirichlet_quotient(self, default_verifier):
        """"""
        report = default_verifier.run_checks(["dirichlet_quotient"])
        metrics = report["checks"]["dirichlet_quotient"]["metrics"]
        assert report["passed"], metrics
        # m_perp has no shell-1 modes, so the quotient tends to 2
        assert metrics["m_perp_matched"]
        assert metrics["beltrami_matched"]

    def test_homology(self, default_verifier):
        """"""
        report = default_verifier.run_checks(["homology"])
        check = report["checks"]["homology"]
        assert report["passed"], check
        assert check["metrics"]["residual_3"] <= default_verifier.tol["homology_3"]

    def test_contraction(self, default_verifier):
        """"""
        report = default_verifier.run_checks(["contraction"])
        check = report["checks"]["contraction"]
        assert report["passed"], check
        assert 0 < check["metrics"]["ratio"] <= CONTRACTION_BOUND * (
            1 + default_verifier.tol["contraction"]
        )
