"""Exception types shared across pipeline stages and the CLI.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, and I/O problems (plain OSError) exit 3.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class UsageError(PipelineError):
    """Bad command line: unknown subcommand, unknown flag, missing argument."""


class DataError(PipelineError):
    """Input data that violates a documented contract."""


class JsonlError(DataError):
    """A JSONL record that cannot be parsed or validated.

    The message always names the file and the 1-based line number so a bad
    record in a multi-gigabyte corpus can be found directly.
    """

    def __init__(self, path: object, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ConfigError(DataError):
    """Invalid configuration value or unknown configuration key."""


class ShardFormatError(DataError):
    """A shard file that violates the container format."""


class TokenizeError(DataError):
    """Tokenization failed for a specific document."""

    def __init__(self, doc_id: str, message: str) -> None:
        super().__init__(f"document {doc_id!r}: {message}")
        self.doc_id = doc_id
