"""Shared exception hierarchy."""
from __future__ import annotations


class RecapError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RecapError):
    """A caller-supplied value violates an operation's precondition."""


class ConfigurationError(RecapError):
    """A config value or backend wiring is inconsistent (e.g. dimension mismatch)."""


class DataError(RecapError):
    """A dataset artifact (manifest, results file, references) is unusable."""


class ManifestError(DataError):
    """Manifest validation failed; carries every problem found in one pass."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("manifest validation failed:\n" + "\n".join(f"  - {p}" for p in self.problems))


class GenerationError(RecapError):
    """Caption generation aborted for one video."""
