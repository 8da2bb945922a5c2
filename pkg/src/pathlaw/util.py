"""Shared utilities for pathlaw."""

import logging
import re
import subprocess
from pathlib import Path

from pathlaw import __version__

log = logging.getLogger("pathlaw")

EXPERIMENT_ID_PATTERN = re.compile(r"^[A-Z][A-Z0-9_]*$")


class PathlawError(Exception):
    """Base class for every error raised by pathlaw."""


class ConfigError(PathlawError, ValueError):
    """Invalid grid, experiment spec or run configuration."""


class DomainError(PathlawError, ValueError):
    """A mathematical precondition does not hold."""


class UnsupportedInput(PathlawError, TypeError):
    """Input of a kind the operation does not accept (e.g. weighted pools for KS)."""


class NumericOverflow(PathlawError, OverflowError):
    """An exponential left the double-precision range.

    Attributes:
        node: grid node index where the overflow occurred (None if not node-bound)
        path_index: index of the offending path within the batch or experiment
    """

    def __init__(self, message: str, node: int | None = None, path_index: int | None = None):
        super().__init__(message)
        self.node = node
        self.path_index = path_index

    def __reduce__(self):
        # keep node/path_index across process boundaries
        return (type(self), (str(self.args[0]), self.node, self.path_index))

    def with_offset(self, offset: int) -> "NumericOverflow":
        """Return a copy whose path_index is shifted by *offset*."""
        index = None if self.path_index is None else self.path_index + offset
        return NumericOverflow(str(self.args[0]), node=self.node, path_index=index)

    def __str__(self) -> str:
        parts = [str(self.args[0])]
        if self.path_index is not None:
            parts.append(f"path {self.path_index}")
        if self.node is not None:
            parts.append(f"node {self.node}")
        return " at ".join(parts) if len(parts) > 1 else parts[0]


def validate_experiment_id(experiment_id: str) -> bool:
    """Validate an experiment identifier against the registry naming pattern.

    Args:
        experiment_id: String to validate

    Returns:
        True if experiment_id matches ^[A-Z][A-Z0-9_]*$, False otherwise
    """
    if not experiment_id:
        return False
    if not EXPERIMENT_ID_PATTERN.match(experiment_id):
        log.warning("Invalid experiment id: %s", experiment_id)
        return False
    return True


def build_id() -> str:
    """Return a git-describe style identifier of the running code."""
    source_dir = Path(__file__).resolve().parent
    try:
        result = subprocess.run(  # nosec B603 B607
            ["git", "describe", "--always", "--dirty"],
            cwd=source_dir,
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return f"pathlaw {__version__}"
    described = result.stdout.strip()
    if result.returncode != 0 or not described:
        return f"pathlaw {__version__}"
    return f"pathlaw {__version__} ({described})"
