from importlib import metadata

try:
    __version__ = metadata.version("semsmooth")
except metadata.PackageNotFoundError:  # pragma: no cover
    # running from a source checkout, e.g. via run-semsmooth.py
    __version__ = "0.1.0"

__version_info__ = tuple(int(x) for x in __version__.split("."))
