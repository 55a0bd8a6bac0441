""""""
import hashlib
import json
import logging
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class TorusNFError(Exception):
    """ Base class for errors raised by ``torus_nf``. """

    exit_code = 1


class ValidationError(TorusNFError, ValueError):
    """ Invalid input data, configuration or file. """

    exit_code = 2


class LatticeMismatchError(ValidationError):
    """ Fields defined on different truncations were combined. """


class SizeError(ValidationError):
    """ Problem size beyond what the dense algorithms support. """


class NumericError(TorusNFError, ArithmeticError):
    """ A computation produced an unusable result. """

    exit_code = 3


def to_builtin(obj):
    """ Convert numpy scalars/arrays and paths to JSON-compatible types. """
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        obj = float(obj)
        if not np.isfinite(obj):
            return repr(obj)
        return obj
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj):
    """ Serialize to a deterministic JSON string. """
    return json.dumps(to_builtin(obj), sort_keys=True, indent=2) + "\n"


def dump_json(obj, filepath):
    """ Write JSON file with sorted keys and round-trip floats. """
    filepath = Path(filepath)
    with open(filepath, "w") as f:
        f.write(dumps_json(obj))

    logger.debug(f"Saved {filepath.name} to {filepath.parent}")

    return filepath


def load_json(filepath):
    """ Read a JSON file, raising ValidationError on malformed content. """
    try:
        with open(filepath) as f:
            return json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"No such file: {filepath}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"Malformed JSON in {filepath}: {e}")


def file_checksum(filepath):
    """ sha256 hex digest of a file. """
    h = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def folder_checksums(folder, pattern="**/*"):
    """ Checksums of all files in a folder, keyed by relative path. """
    folder = Path(folder)
    return {
        str(p.relative_to(folder)): file_checksum(p)
        for p in sorted(folder.glob(pattern))
        if p.is_file()
        and p.relative_to(folder) != Path("manifest.json")
        and p.suffix != ".log"
    }


def prepare_folder(folder, policy="overwrite"):
    """ Create the output folder according to the folder policy.

    Parameters
    ----------
    folder : str or pathlib.Path
        Target folder.

    policy : str, default "overwrite"
        "here" writes into ``folder`` but refuses to overwrite existing run
        data, "overwrite" deletes existing contents first, "new_folder"
        creates a numbered sub-folder (000, 001, ...).

    Returns
    -------
    folder : pathlib.Path
        The folder to write to.
    """
    folder = Path(folder).expanduser()

    if policy == "new_folder":
        folder.mkdir(parents=True, exist_ok=True)
        idx = 0
        while (folder / f"{idx:03d}").exists():
            idx += 1
        folder = folder / f"{idx:03d}"
        folder.mkdir()
    elif policy == "overwrite":
        if folder.exists():
            shutil.rmtree(folder)
        folder.mkdir(parents=True)
    elif policy == "here":
        if (folder / "manifest.json").exists():
            raise ValidationError(
                f"{folder} already contains a run, choose the 'overwrite' or "
                f"'new_folder' policy"
            )
        folder.mkdir(parents=True, exist_ok=True)
    else:
        raise ValidationError(f"Unsupported folder policy: {policy}")

    logger.debug(f"Writing to {folder} (policy: {policy})")

    return folder


class StageTimer:
    """ Wall times of named stages. """

    def __init__(self):
        self.times = {}

    @contextmanager
    def __call__(self, stage):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.times[stage] = time.perf_counter() - start
            logger.debug(f"Stage '{stage}' took {self.times[stage]:.3f}s")
