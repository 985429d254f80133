"""Show long command output through a pager."""

import os
import pydoc
import sys
from typing import Optional

LESS_ENV = "SEMSMOOTH_LESS"

# F: quit if the text fits on one screen, X: keep the text on screen after quitting,
# M: verbose prompt, K: quit on ^C
DEFAULT_LESS_OPTIONS = "FXMK"


def less_options() -> str:
    return os.getenv(LESS_ENV, DEFAULT_LESS_OPTIONS)


def page(text: str, enabled: Optional[bool] = False) -> None:
    """Print `text`, through a pager if enabled and stdout is a terminal."""
    if enabled and sys.stdout.isatty():
        os.environ["LESS"] = less_options()
        pydoc.pager(text)
    else:
        print(text)
