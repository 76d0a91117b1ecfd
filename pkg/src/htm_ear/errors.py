"""Exception hierarchy shared by every htm_ear module."""


class HtmEarError(Exception):
    """Base class for all library errors."""


class EmptyText(HtmEarError, ValueError):
    pass


class DimensionMismatch(HtmEarError, ValueError):
    pass


class DuplicateId(HtmEarError, KeyError):
    pass


class UnknownId(HtmEarError, KeyError):
    pass


class NotAtCapacity(HtmEarError, RuntimeError):
    pass


class DuplicateFact(HtmEarError, KeyError):
    pass


class InvalidScenario(HtmEarError, ValueError):
    pass


class MalformedLine(HtmEarError, ValueError):
    pass


class FileUnreadable(HtmEarError, OSError):
    pass


class EmptyCohort(HtmEarError, ValueError):
    pass


class MissingRun(HtmEarError, LookupError):
    pass


class MissingInput(HtmEarError, FileNotFoundError):
    pass
