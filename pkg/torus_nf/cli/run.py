""""""
import dataclasses
import multiprocessing as mp
import sys
from pathlib import Path

import click
import multiprocessing_logging
from blessed import Terminal

from torus_nf import APP_INFO
from torus_nf.cli.utils import (
    add_file_handler,
    init_logger,
    raise_error,
    remove_handlers,
    status_line,
)
from torus_nf.config import ConfigParser, save_config
from torus_nf.initial_data import build as build_initial_data
from torus_nf.normal_form import SMALL_DATA_AMPLITUDE
from torus_nf.solver import Trajectory, evolve
from torus_nf.utils import (
    StageTimer,
    TorusNFError,
    dump_json,
    file_checksum,
    prepare_folder,
)


@dataclasses.dataclass
class RunManifest:
    """ Provenance of a command run. """

    command: str
    config: dict
    command_config: dict
    seed: int
    stages: dict = dataclasses.field(default_factory=dict)
    app_info: dict = dataclasses.field(default_factory=lambda: dict(APP_INFO))
    small_data_amplitude: float = SMALL_DATA_AMPLITUDE

    def to_dict(self):
        return dataclasses.asdict(self)


class CommandRun:
    """ Config, output folder, log file and manifest of one command run.

    Usage::

        with CommandRun("simulate", verbose, config_file, folder, **opts) as r:
            with r.stage("integrate"):
                traj = evolve(...)
            r.write("integrate", "report.json", report)

    Errors derived from TorusNFError are turned into a ClickException with
    the error's exit code. The manifest is written when the block exits
    without an error.
    """

    def __init__(
        self,
        command,
        verbosity=0,
        config_file=None,
        folder=None,
        initial_data=None,
        **overrides,
    ):
        self.command = command
        self.term = Terminal()
        self.logger, self.file_handler = init_logger(
            command,
            verbosity=verbosity,
            stream=sys.stdout,
            temp_file_handler=True,
            return_file_handler=True,
        )

        try:
            self._parse_config(config_file, folder, initial_data, overrides)
        except TorusNFError as e:
            remove_handlers()
            raise_error(str(e), self.logger, e.exit_code)
        except click.ClickException:
            remove_handlers()
            raise

        self.timer = StageTimer()
        self.files = {}

    def _parse_config(self, config_file, folder, initial_data, overrides):
        parser = ConfigParser(config_file)
        with parser:
            self.parser = parser
            self.run = parser.get_run_config(
                initial_data=initial_data, **overrides
            )
            self.settings = parser.get_command_config(self.command)
            self.folder = parser.get_folder(
                self.command, folder, seed=self.run.seed
            )
            self.policy = parser.get_policy(self.command)

    def __enter__(self):
        try:
            self.folder = prepare_folder(self.folder, self.policy)
        except TorusNFError as e:
            remove_handlers()
            raise_error(str(e), self.logger, e.exit_code)
        self.file_handler = add_file_handler(
            self.command, self.folder, replace=self.file_handler
        )
        self.logger.debug(f"Output folder: {self.folder}")
        save_config(self.folder, self.parser.resolved())
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        try:
            if exc_type is None:
                self.write_manifest()
            elif isinstance(exc_val, TorusNFError):
                self.logger.debug(exc_val, exc_info=True)
                raise_error(
                    f"{type(exc_val).__name__}: {exc_val}",
                    self.logger,
                    exc_val.exit_code,
                )
        finally:
            remove_handlers()

    def stage(self, name):
        """ Timed stage. """
        return self.timer(name)

    def write(self, stage, name, data):
        """ Write JSON output of a stage. """
        filepath = dump_json(data, self.folder / name)
        self.record(stage, filepath)
        return filepath

    def record(self, stage, *filepaths):
        """ Register output files of a stage for the manifest. """
        for filepath in filepaths:
            filepath = Path(filepath)
            if filepath.is_dir():
                self.files.setdefault(stage, []).extend(
                    sorted(p for p in filepath.rglob("*") if p.is_file())
                )
            else:
                self.files.setdefault(stage, []).append(filepath)

    def write_manifest(self):
        stages = {}
        for stage in dict.fromkeys(list(self.timer.times) + list(self.files)):
            stages[stage] = {
                "wall_time": self.timer.times.get(stage),
                "checksums": {
                    str(p.relative_to(self.folder)): file_checksum(p)
                    for p in self.files.get(stage, [])
                },
            }
        manifest = RunManifest(
            command=self.command,
            config=self.run.to_dict(),
            command_config=self.settings,
            seed=self.run.seed,
            stages=stages,
        )
        dump_json(manifest.to_dict(), self.folder / "manifest.json")
        self.logger.debug(f"Saved manifest to {self.folder}")

    def initial_data(self):
        """ Initial data of the run config. """
        return build_initial_data(
            self.run.initial_data,
            self.run.dim,
            self.run.lambda_max,
            seed=self.run.seed,
            order=self.run.order,
        )

    def trajectory(self, path=None, progress=True):
        """ Load a saved trajectory or integrate the configured data. """
        if path is not None:
            path = Path(path)
            if (path / "trajectory").is_dir():
                path = path / "trajectory"
            with self.stage("load"):
                traj = Trajectory.load(path)
            self.logger.info(f"Loaded {traj!r} from {path}")
            return traj

        u0 = self.initial_data()
        self.logger.info(
            f"Integrating {self.run.initial_data['kind']} data on "
            f"{u0.lattice} up to T={self.run.T:g}"
        )
        with self.stage("integrate"):
            return evolve(
                u0,
                self.run.T,
                dt=self.run.dt,
                stride=self.run.stride,
                progress=progress,
                metadata={"initial_data": self.run.initial_data},
            )

    def report(self, name, passed, expected=False):
        """ Log a colored PASS/FAIL line. """
        self.logger.info(status_line(self.term, name, passed, expected))


def run_parallel(func, kwargs_list, n_proc=1):
    """ Call ``func(**kwargs)`` for each entry, in a process pool if
    ``n_proc`` > 1.

    Returns a list with None for successful calls and ``(exit_code,
    message)`` for failed ones.
    """
    if n_proc <= 1 or len(kwargs_list) == 1:
        return [_call_kwargs(func, kwargs) for kwargs in kwargs_list]

    multiprocessing_logging.install_mp_handler()
    try:
        with mp.Pool(min(n_proc, len(kwargs_list))) as pool:
            return pool.starmap(
                _call_kwargs, [(func, kwargs) for kwargs in kwargs_list]
            )
    finally:
        multiprocessing_logging.uninstall_mp_handler()


def _call_kwargs(func, kwargs):
    try:
        func(**kwargs)
    except click.ClickException as e:
        return e.exit_code, e.format_message()
    except TorusNFError as e:
        return e.exit_code, str(e)
    return None


def run_configs(func, config_files, folder, jobs=1, **kwargs):
    """ Run ``func`` once per config file.

    A single (or no) config file runs in this process and writes to
    ``folder``. Several config files need ``folder``; each run writes to a
    sub-folder named after its config file.
    """
    if len(config_files) <= 1:
        func(
            config_file=config_files[0] if config_files else None,
            folder=folder,
            **kwargs,
        )
        return

    if folder is None:
        raise_error("Several config files require --folder", exit_code=2)

    kwargs_list = [
        dict(config_file=f, folder=Path(folder) / Path(f).stem, **kwargs)
        for f in config_files
    ]
    results = run_parallel(func, kwargs_list, jobs)
    failed = [
        (kwargs["config_file"], result)
        for kwargs, result in zip(kwargs_list, results)
        if result is not None
    ]
    if failed:
        raise_error(
            "; ".join(f"{f}: {msg}" for f, (_, msg) in failed),
            exit_code=max(code for _, (code, _) in failed),
        )
