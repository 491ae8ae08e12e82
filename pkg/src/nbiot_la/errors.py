"""Exception hierarchy shared by the link-adaptation modules."""


class LinkAdaptationError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LinkAdaptationError, ValueError):
    pass


class UnknownCell(LinkAdaptationError, KeyError):
    """Requested (itbs, ru_slot_count) is not a column of the resource table."""


class TbsTooLarge(LinkAdaptationError, ValueError):
    pass


class MissingGridRow(LinkAdaptationError, KeyError):
    """A tabulated BLER oracle has no curve for the requested (tbs, itbs, nr)."""


class EmptyCandidates(LinkAdaptationError):
    """No (itbs, nr) tuple reaches the target BLER."""


class NoFeasibleRow(LinkAdaptationError):
    pass


class MissingKey(LinkAdaptationError, KeyError):
    pass


class NonConvergence(LinkAdaptationError):
    pass


class NonTermination(LinkAdaptationError):
    """A session hit its safety cap on transmissions."""


class ParseError(LinkAdaptationError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
