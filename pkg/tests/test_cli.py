import pytest
from click.testing import CliRunner

from torus_nf.cli import torusnf
from torus_nf.solver import Trajectory
from torus_nf.utils import load_json


@pytest.fixture()
def runner():
    return CliRunner()


class TestSimulate:
    def test_simulate(self, runner, config_dir, tmp_path):
        """"""
        folder = tmp_path / "simulate"
        result = runner.invoke(
            torusnf,
            f"simulate -c {config_dir}/config_tiny.json -f {folder} -v",
        )
        assert result.exit_code == 0, result.output

        for name in (
            "manifest.json",
            "report.json",
            "config.yaml",
            "torusnf.simulate.log",
        ):
            assert (folder / name).exists()

        manifest = load_json(folder / "manifest.json")
        assert manifest["command"] == "simulate"
        assert manifest["config"]["dim"] == 2
        assert set(manifest["stages"]) >= {"integrate", "save"}
        checksums = manifest["stages"]["save"]["checksums"]
        assert "trajectory/series.csv" in checksums
        assert "trajectory/manifest.json" in checksums

        report = load_json(folder / "report.json")
        assert report["lattice"] == {"dim": 2, "lambda_max": 2, "size": 4}
        assert report["energy_checks"]["monotone"]

        traj = Trajectory.load(folder / "trajectory")
        assert traj.t_end == pytest.approx(0.5)

    def test_overrides(self, runner, config_dir, tmp_path):
        """"""
        folder = tmp_path / "simulate"
        result = runner.invoke(
            torusnf,
            f"simulate -c {config_dir}/config_tiny.json -f {folder} "
            f"--t-end 0.2 --seed 3 --richardson",
        )
        assert result.exit_code == 0, result.output

        manifest = load_json(folder / "manifest.json")
        assert manifest["config"]["T"] == 0.2
        assert manifest["seed"] == 3
        assert "richardson" in load_json(folder / "report.json")

    def test_reproducible(self, runner, config_dir, tmp_path):
        """"""
        checksums = []
        for name in ("a", "b"):
            folder = tmp_path / name
            runner.invoke(
                torusnf,
                f"simulate -c {config_dir}/config_tiny.json -f {folder}",
            )
            manifest = load_json(folder / "manifest.json")
            checksums.append(manifest["stages"]["save"]["checksums"])
        assert checksums[0] == checksums[1]

    def test_user_config_folder(self, runner, tmp_path):
        """"""
        # folder from the user config defaults, relative to TORUSNF_OUT
        result = runner.invoke(torusnf, "simulate --t-end 0.1")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "simulate" / "manifest.json").exists()

    def test_several_configs(self, runner, config_dir, tmp_path):
        """"""
        configs = (
            f"-c {config_dir}/config_tiny.json -c {config_dir}/config.yaml"
        )
        result = runner.invoke(torusnf, f"simulate {configs}")
        assert result.exit_code == 2

        result = runner.invoke(
            torusnf, f"simulate {configs} -f {tmp_path} --t-end 0.1"
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "config_tiny" / "manifest.json").exists()
        assert (tmp_path / "config" / "manifest.json").exists()

    def test_invalid_config(self, runner, config_dir, tmp_path):
        """"""
        result = runner.invoke(
            torusnf,
            f"simulate -c {config_dir}/config_unknown_key.yaml -f {tmp_path}",
        )
        assert result.exit_code == 2
        assert "lambda_mx" in result.output

        result = runner.invoke(
            torusnf,
            f"simulate -c {config_dir}/config_tiny.json -f {tmp_path} "
            f"--dt 0.3",
        )
        assert result.exit_code == 2


class TestDiagnose:
    def test_diagnose(self, runner, config_dir, tmp_path):
        """"""
        result = runner.invoke(
            torusnf,
            f"diagnose -c {config_dir}/config_invariant.yaml -f {tmp_path}",
        )
        assert result.exit_code == 0, result.output

        report = load_json(tmp_path / "report.json")
        assert report["dirichlet"]["matched"] == 1
        assert not report["membership"]["2"]["member"]
        assert report["phi"]["1"]["tail"] == 0.0
        assert report["helicity"]["identically_zero"]


class TestNormalize:
    def test_normalize(self, runner, config_dir, tmp_path):
        """"""
        config = config_dir / "config_beltrami.yaml"
        result = runner.invoke(
            torusnf, f"simulate -c {config} -f {tmp_path / 'simulate'}"
        )
        assert result.exit_code == 0, result.output

        folder = tmp_path / "normalize"
        result = runner.invoke(
            torusnf,
            f"normalize -c {config} -f {folder} "
            f"-t {tmp_path / 'simulate'} --no-diagram",
        )
        assert result.exit_code == 0, result.output

        report = load_json(folder / "report.json")
        assert report["component_norms"]["2"] == pytest.approx(0.1)
        assert [fit["shell"] for fit in report["fits"]] == [1, 2]
        assert "diagram" not in report
        assert (folder / "xi.json").exists()


class TestPdnf:
    def test_system_file(self, runner, test_data_dir, tmp_path):
        """"""
        result = runner.invoke(
            torusnf,
            f"pdnf {test_data_dir}/resonant_system.json -f {tmp_path}",
        )
        assert result.exit_code == 0, result.output

        report = load_json(tmp_path / "report.json")
        # degree from the user config
        assert report["D"] == 3
        assert report["dimension"] == 2
        assert report["conjugacy"]["residual"] < 1e-12
        assert report["flow"]["passed"]
        assert (tmp_path / "normal_form.json").exists()

    def test_arguments(self, runner, test_data_dir, tmp_path):
        """"""
        result = runner.invoke(torusnf, f"pdnf -f {tmp_path}")
        assert result.exit_code == 2

        result = runner.invoke(
            torusnf,
            f"pdnf {test_data_dir}/resonant_system.json --nse -f {tmp_path}",
        )
        assert result.exit_code == 2

        result = runner.invoke(
            torusnf, f"pdnf {tmp_path}/missing.json -f {tmp_path}/pdnf",
        )
        assert result.exit_code == 2

    def test_nse_too_large(self, runner, tmp_path):
        """"""
        result = runner.invoke(
            torusnf, f"pdnf --nse --lambda-max 3 -D 2 -f {tmp_path}"
        )
        assert result.exit_code == 2
        assert "SizeError" in result.output


class TestVerify:
    def test_weights(self, runner, config_dir, tmp_path):
        """"""
        result = runner.invoke(
            torusnf,
            f"verify -c {config_dir}/config_tiny.json -f {tmp_path} "
            f"--only weights -s 0.001",
        )
        assert result.exit_code == 0, result.output
        report = load_json(tmp_path / "report.json")
        assert report["passed"]
        assert report["tolerance_scale"] == 0.001
        assert list(report["checks"]) == ["weights"]

    def test_bad_weights(self, runner, config_dir, tmp_path):
        """"""
        result = runner.invoke(
            torusnf,
            f"verify -c {config_dir}/config_bad_weights.yaml -f {tmp_path} "
            f"--only weights",
        )
        assert result.exit_code == 1
        report = load_json(tmp_path / "report.json")
        assert report["unexpected_failures"] == ["weights"]
        assert report["checks"]["weights"]["details"]["violations"]

    def test_unknown_check(self, runner, tmp_path):
        """"""
        result = runner.invoke(
            torusnf, f"verify -f {tmp_path} --only everything"
        )
        assert result.exit_code == 2


class TestShowConfig:
    def test_show_config(self, runner, config_dir):
        """"""
        result = runner.invoke(torusnf, "show_config run")
        assert result.exit_code == 0, result.output
        assert "lambda_max: 3" in result.output
        assert "tolerances" not in result.output

        result = runner.invoke(
            torusnf, f"show_config -c {config_dir}/config_override.yaml"
        )
        assert result.exit_code == 0, result.output
        assert "kind: beltrami" in result.output
        assert "energy_residual: 1.0e-06" in result.output

    def test_errors(self, runner, config_dir):
        """"""
        result = runner.invoke(torusnf, "show_config nothing")
        assert result.exit_code == 2

        result = runner.invoke(
            torusnf, f"show_config -c {config_dir}/config_unknown_key.yaml"
        )
        assert result.exit_code == 2

    def test_version(self, runner):
        """"""
        result = runner.invoke(torusnf, "--version")
        assert result.exit_code == 0
        assert "version" in result.output
