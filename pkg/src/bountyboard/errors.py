"""Exception types shared across the package.

Everything raised on purpose derives from BountyError so callers can catch
platform errors without swallowing programming mistakes.
"""

from __future__ import annotations


class BountyError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# tabular data
# ---------------------------------------------------------------------------

class SchemaError(BountyError):
    """Schema definition violates its own invariants."""


class CsvError(BountyError):
    """Base class for CSV ingestion failures."""


class MissingColumn(CsvError):
    def __init__(self, column: str):
        super().__init__(f"missing column: {column}")
        self.column = column


class UnexpectedColumn(CsvError):
    def __init__(self, column: str):
        super().__init__(f"unexpected column: {column}")
        self.column = column


class DuplicateHeader(CsvError):
    def __init__(self, column: str):
        super().__init__(f"duplicate header: {column}")
        self.column = column


class TypeMismatch(CsvError):
    """A cell value does not conform to its feature's kind/allowed values."""

    def __init__(self, row: int, column: str, detail: str = ""):
        msg = f"type mismatch at row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.row = row
        self.column = column


class LabelOutOfRange(CsvError):
    def __init__(self, row: int, value: float, lo: float, hi: float):
        super().__init__(
            f"label {value!r} at row {row} outside range [{lo!r}, {hi!r}]"
        )
        self.row = row
        self.value = value


class BadWeights(BountyError):
    """Split weights are not positive or do not sum to 1."""


class LengthMismatch(BountyError):
    """Vectors that must be aligned have different lengths."""


class EmptyInput(BountyError):
    """An operation that needs at least one element got none."""


class EmptyGroup(BountyError):
    """A group mask selects zero rows (weight 0 on this sample)."""


class HiddenDataAccess(BountyError):
    """A guarded dataset (hidden validation/test split) was read."""


# ---------------------------------------------------------------------------
# model format
# ---------------------------------------------------------------------------

class PredicateSyntaxError(BountyError):
    """Malformed predicate text or expression tree."""

    def __init__(self, message: str, location: str):
        super().__init__(f"{message} (at {location})")
        self.location = location


class BundleParseError(BountyError):
    """Structurally malformed bundle document."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{message} (at {location})" if location else message)
        self.location = location


class VersionUnsupported(BundleParseError):
    def __init__(self, version):
        super().__init__(f"unsupported format_version: {version!r}")
        self.version = version


class BundleTooLarge(BountyError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"bundle is {size} bytes, limit {limit}")
        self.size = size
        self.limit = limit


class BundleValidationError(BountyError):
    """One or more validation issues; carries the exhaustive list."""

    def __init__(self, issues):
        super().__init__("; ".join(str(i) for i in issues))
        self.issues = list(issues)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

class EmptyDataset(BountyError):
    """A trainer was given a dataset with zero rows."""


class SingularSystem(BountyError):
    """Normal equations are rank-deficient and no ridge was requested."""


# ---------------------------------------------------------------------------
# pointer decision list
# ---------------------------------------------------------------------------

class BadTarget(BountyError):
    """Repair target version does not precede the current version."""


class UnknownVersion(BountyError):
    def __init__(self, version):
        super().__init__(f"unknown version: {version!r}")
        self.version = version


# ---------------------------------------------------------------------------
# competition / server
# ---------------------------------------------------------------------------

class UnknownTeam(BountyError):
    def __init__(self, team):
        super().__init__(f"unknown team: {team!r}")
        self.team = team


class DuplicateTeam(BountyError):
    def __init__(self, team):
        super().__init__(f"team already registered: {team!r}")
        self.team = team


class RateLimited(BountyError):
    """Daily submission quota exhausted; reset_at is the next UTC midnight."""

    def __init__(self, reset_at):
        super().__init__(f"daily submission limit reached; resets at {reset_at}")
        self.reset_at = reset_at


class CompetitionFrozen(BountyError):
    """Submissions are closed by the organizer."""


class QueueFull(BountyError):
    """Admission queue reached its configured depth limit."""


class AuthError(BountyError):
    """Missing, malformed, revoked, or wrong credential."""


class BadSpec(BountyError):
    """Synthetic task or scenario specification is inconsistent."""
