"""Exception types shared across the package."""


class OdcubeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(OdcubeError, ValueError):
    """Input violates a documented precondition (bad coordinates, empty list, ...)."""


class UnsupportedLevel(OdcubeError, ValueError):
    """The requested geographic level cannot serve this operation (e.g. no geometry loaded)."""


class UnknownUnit(OdcubeError, KeyError):
    """A unit id is not registered at the level it was looked up at."""

    def __str__(self) -> str:  # KeyError quotes its arg; keep plain messages
        return Exception.__str__(self)


class InvalidLevelPair(OdcubeError, ValueError):
    """Rollup target level is not strictly coarser than the source level."""


class MalformedSdmRow(OdcubeError, ValueError):
    """A social-distancing row cannot be turned into flow records; the row is skippable."""


class MalformedDestinationMap(MalformedSdmRow):
    """The destination map text is not parseable or contains invalid ids/counts."""


class MalformedDate(MalformedSdmRow):
    """The row's start timestamp is not a parseable ISO-8601 instant."""


class MixedDataset(OdcubeError, ValueError):
    """A record stream mixes event-derived and device-panel flows."""


class InvalidPeriod(OdcubeError, ValueError):
    """A time period has end before start."""


class UnsupportedDirection(OdcubeError, ValueError):
    """The direction mode is not defined for this query type."""
