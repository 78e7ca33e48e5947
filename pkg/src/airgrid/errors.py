class AirgridError(Exception):
    """Base class for all package errors."""


class ParseError(AirgridError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(AirgridError, ValueError):
    pass


class OutOfDomainError(AirgridError, ValueError):
    pass


class MissingDataError(AirgridError, ValueError):
    pass


class AssemblyError(AirgridError):
    def __init__(self, message: str, feature_index: int):
        self.feature_index = feature_index
        super().__init__(message)


class DecodeError(AirgridError):
    pass


class IncompatibleError(AirgridError):
    pass


class ConfigError(AirgridError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
