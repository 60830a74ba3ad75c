"""Exception types shared across the pipeline."""


class PlantFaultError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PlantFaultError):
    """Invalid configuration: bad lag window, duplicate channel names, etc."""


class IngestError(PlantFaultError):
    """A row in an input file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class SkipFault(PlantFaultError):
    """No model can be trained for this (plant, fault type); skip it."""


class InvariantError(PlantFaultError):
    """An internal consistency check failed."""
