"""Exception types and the non-fatal diagnostic record shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass


class Mv3KitError(Exception):
    """Base class for every error raised by this package."""


class MissingManifest(Mv3KitError):
    pass


class MalformedArchive(Mv3KitError):
    pass


class ManifestParseError(Mv3KitError):
    pass


class WrongVersion(Mv3KitError):
    pass


class MalformedUrl(Mv3KitError):
    pass


class MetadataError(Mv3KitError):
    """Raised when a labels/metadata CSV cannot be used."""


@dataclass(frozen=True)
class Diagnostic:
    """A recoverable problem noticed while processing input.

    Loading and lexing are total: instead of raising, they append one of
    these to a caller-supplied list.
    """

    code: str
    message: str
    file: str | None = None
    line: int | None = None

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "file": self.file, "line": self.line}
