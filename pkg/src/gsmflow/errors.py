"""Exception types raised across the package."""


class GSMFlowError(Exception):
    """Base class for all package errors."""


class DimensionError(GSMFlowError, ValueError):
    pass


class DomainError(GSMFlowError, ValueError):
    pass


class ContractError(GSMFlowError, ValueError):
    pass


class ParseError(GSMFlowError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class IntegrityError(GSMFlowError, ValueError):
    pass


class ConfigError(GSMFlowError, ValueError):
    pass


class UnsupportedOperationError(GSMFlowError):
    pass


class TrainingError(GSMFlowError, RuntimeError):
    pass
