""""""
import dataclasses
import datetime
import logging
import os
from collections import OrderedDict
from copy import deepcopy
from pathlib import Path

import yaml
from confuse import (
    ConfigReadError,
    ConfigTypeError,
    Configuration,
    Dumper,
    NotFoundError,
)

from torus_nf.utils import ValidationError, to_builtin

APPNAME = "torusnf"

OUT_ENV = "TORUSNF_OUT"

# sections whose keys must all be known to the default config
STRICT_SECTIONS = ("run", "tolerances", "weights")

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class RunConfig:
    """ Parameters of a single run. """

    dim: int = 3
    lambda_max: int = 10
    dt: float = 1e-3
    T: float = 15.0
    stride: int = 10
    order: int = 4
    seed: int = 0
    fit_window: list = None
    windows: dict = None
    delta_min: float = 0.5
    remainder_dt: float = 5e-3
    expand_orders: list = dataclasses.field(default_factory=lambda: [1, 2, 3])
    expand_window: list = dataclasses.field(default_factory=lambda: [8.0, 14.0])
    gevrey: list = dataclasses.field(default_factory=lambda: [1.0, 0.1])
    initial_data: dict = dataclasses.field(
        default_factory=lambda: {"kind": "random_small", "amplitude": 0.1}
    )

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.dim not in (2, 3):
            raise ValidationError(f"dim must be 2 or 3, got {self.dim}")
        for name in ("lambda_max", "stride", "order"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(
                    f"{name} must be a positive integer, got {value}"
                )
        for name in ("dt", "T", "delta_min", "remainder_dt"):
            if not getattr(self, name) > 0:
                raise ValidationError(
                    f"{name} must be positive, got {getattr(self, name)}"
                )
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer")
        for name in ("fit_window", "expand_window"):
            window = getattr(self, name)
            if window is not None and (
                len(window) != 2 or not 0 <= window[0] < window[1]
            ):
                raise ValidationError(f"Invalid {name} {window}")
        if len(self.gevrey) != 2 or min(self.gevrey) < 0:
            raise ValidationError(f"Invalid Gevrey exponents {self.gevrey}")
        if not isinstance(self.initial_data, dict) or (
            "kind" not in self.initial_data
        ):
            raise ValidationError("initial_data needs a 'kind' entry")
        if any(int(n) < 1 for n in self.expand_orders):
            raise ValidationError(f"Invalid orders {self.expand_orders}")

    def extraction_windows(self):
        """ Per-level extraction windows with integer keys. """
        if not self.windows:
            return None
        return {int(j): tuple(w) for j, w in self.windows.items()}

    def to_dict(self):
        return to_builtin(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(
                f"Unknown run config keys: {', '.join(sorted(unknown))}"
            )
        try:
            return cls(**deepcopy(dict(data)))
        except TypeError as e:
            raise ValidationError(str(e))


class ConfigParser:
    """ Parser for application config. """

    def __init__(self, config_file=None, ignore_user=False):
        """ Constructor. """
        try:
            self.config = Configuration(APPNAME, "torus_nf", read=False)
        except ConfigReadError as e:
            from torus_nf.cli.utils import raise_error

            raise_error(str(e), logger)

        if config_file is not None:
            if Path(config_file).suffix in (".yaml", ".yml", ".json"):
                self.config_file = Path(config_file)
            else:
                self.config_file = (
                    Path(self.config.config_dir()) / f"{config_file}.yaml"
                )
            if not self.config_file.exists():
                raise ValidationError(f"No such config file: {config_file}")
            self.config.set_file(self.config_file)
            logger.debug(f"Loaded configuration from {self.config_file}")
        else:
            self.config_file = None

        # ignore user config if config file provided or explicitly ignored
        if config_file is not None or ignore_user:
            self.config.read(user=False)
        else:
            self.config.read()

        self.check_unknown_keys()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):

        if exc_type is not None:
            from torus_nf.cli.utils import raise_error

            logger.debug(exc_val, exc_info=True)
            raise_error(
                f"Could not parse configuration ({exc_type.__name__}): "
                f"{exc_val}",
                logger,
                exit_code=getattr(exc_val, "exit_code", 2),
            )

    @classmethod
    def config_dir(cls):
        """ Directory for user configuration. """
        return Configuration(APPNAME, "torus_nf").config_dir()

    def check_unknown_keys(self):
        """ Reject keys in strict sections that the defaults do not define. """
        defaults = Configuration(APPNAME, "torus_nf", read=False)
        defaults.read(user=False)
        for section in STRICT_SECTIONS:
            known = set(defaults[section].keys())
            try:
                given = set(self.config[section].keys())
            except (ConfigTypeError, NotFoundError):
                continue
            unknown = given - known
            if unknown:
                raise ValidationError(
                    f"Unknown keys in section '{section}': "
                    f"{', '.join(sorted(unknown))}"
                )

    def _get_config(self, category, *subkeys, datatype=None):
        """ Get config value. """
        value = self.config[category]
        for key in subkeys:
            value = value[key]

        # raise error if value isn't defined anywhere
        if not value.exists():
            raise NotFoundError(
                f"{'.'.join([category] + list(subkeys))} not found"
            )

        if datatype is None:
            try:
                # if dict, merge data from all config sources
                return to_plain(value.flatten())
            except ConfigTypeError:
                # not a dict, just return the value
                return value.get()
        else:
            return value.get(datatype)

    def get_command_config(self, command, *subkeys, datatype=None):
        """ Get configuration for a CLI command. """
        return self._get_config("commands", command, *subkeys,
                                datatype=datatype)

    def get_run_config(self, **overrides):
        """ RunConfig from the ``run`` section, with non-None overrides. """
        data = self._get_config("run")
        # initial data specs replace each other, they are not merged
        data["initial_data"] = to_plain(
            self.config["run"]["initial_data"].get()
        )
        if overrides.get("initial_data"):
            data["initial_data"] = overrides["initial_data"]
        overrides.pop("initial_data", None)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)

    def get_tolerances(self, scale=1.0):
        """ Acceptance tolerances; absolute ones multiplied by ``scale``. """
        tolerances = self._get_config("tolerances")
        return {
            k: (v * scale if not k.endswith("_margin") else v)
            for k, v in tolerances.items()
        }

    def get_weights(self):
        try:
            return self._get_config("weights")
        except NotFoundError:
            return {}

    def get_folder(self, command, folder=None, **metadata):
        """ Resolve folder for command. """
        if folder is not None:
            return Path(folder)

        out = Path(os.environ.get(OUT_ENV, Path.cwd()))
        try:
            folder = self.get_command_config(command, "folder", datatype=str)
        except NotFoundError:
            return out / command

        try:
            folder = folder.format(
                out=out,
                cwd=Path.cwd(),
                cfgd=Path(self.config_file or self.config.config_dir()).parent,
                today=datetime.datetime.today(),
                name=command,
                **metadata,
            )
        except KeyError as e:
            raise ValidationError(
                f"Format spec in commands.{command}.folder requires {e}"
            )
        return Path(folder).expanduser()

    def get_policy(self, command, policy=None):
        """ Get policy for command. """
        try:
            return policy or self.get_command_config(
                command, "policy", datatype=str
            )
        except NotFoundError:
            return "overwrite"

    def resolved(self):
        """ Merged configuration as a plain dict. """
        return to_plain(flatten(self.config))


def flatten(view):
    """ Flatten config view into nested OrderedDicts. """
    od = OrderedDict()
    for key, subview in view.items():
        try:
            od[key] = flatten(subview)
        except ConfigTypeError:
            od[key] = subview.get()

    return od


def to_plain(value):
    """ Convert nested OrderedDicts into dicts. """
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [to_plain(v) for v in value]
    return value


def save_config(folder, config, name="config"):
    """ Save configuration to yaml file. """
    if isinstance(config, Configuration):
        config = to_plain(flatten(config))

    # save to folder
    with open(Path(folder) / f"{name}.yaml", "w") as f:
        yaml.dump(to_builtin(config), f, Dumper, default_flow_style=False)

    logger.debug(f"Saved {name}.yaml to {folder}")

    return Path(folder) / f"{name}.yaml"
