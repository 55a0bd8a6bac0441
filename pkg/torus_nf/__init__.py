""" ``torus_nf`` """
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("torus-nf")
except PackageNotFoundError:
    __version__ = "0.0.0"

APP_INFO = {"name": "torus-nf", "version": __version__}
