"""Exceptions raised by semsmooth.

Every exception derives from the closest builtin as well, so callers who don't care about
semsmooth specifics can catch e.g. ``ValueError``. The ``exit_code`` attribute is what the
command line tool exits with when the exception reaches it. Text input files are read through
`numbered_lines`, which reports bytes that aren't UTF-8 as `FormatError`.
"""

from pathlib import Path
from typing import Iterator, Optional, Union


class SemSmoothError(Exception):
    exit_code = 1


class ConfigError(SemSmoothError, ValueError):
    "A configuration value is out of range or inconsistent with others."

    exit_code = 1


class ContractError(SemSmoothError, ValueError):
    "A function was called in violation of its preconditions."

    exit_code = 1


class FormatError(SemSmoothError, ValueError):
    "An input file doesn't follow its documented format."

    exit_code = 2

    def __init__(
        self,
        message: str,
        *,
        path: Optional[Union[str, Path]] = None,
        lineno: Optional[int] = None,
    ):
        self.path = path
        self.lineno = lineno
        location = ""
        if path is not None:
            location = str(path)
        if lineno is not None:
            location = f"{location}:{lineno}" if location else f"line {lineno}"
        super().__init__(f"{location}: {message}" if location else message)


class VocabularyError(SemSmoothError, LookupError):
    "A token isn't part of the vocabulary."

    exit_code = 2

    def __str__(self):
        # LookupError would otherwise render the message quoted like a key
        return str(self.args[0]) if self.args else ""


class BoundsError(SemSmoothError, IndexError):
    "An index is outside of the vocabulary."

    exit_code = 2


class NumericError(SemSmoothError, ArithmeticError):
    "A computation produced non-finite values."

    exit_code = 3

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            details = ", ".join(f"{key}={value!r}" for key, value in diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


def numbered_lines(path: Union[str, Path]) -> Iterator[tuple[int, str]]:
    """Yield ``(lineno, line)`` of a UTF-8 text file, line endings stripped.

    :raises FormatError: on a line which isn't valid UTF-8
    """
    path = Path(path)
    with path.open("rb") as fp:
        for lineno, raw in enumerate(fp, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(
                    f"Invalid UTF-8 at byte {exc.start}", path=path, lineno=lineno
                ) from None
            yield lineno, line.rstrip("\r\n")
