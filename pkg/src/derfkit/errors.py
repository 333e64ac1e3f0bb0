class DerfkitError(Exception):
    """Base class for all library errors."""


class ShapeError(DerfkitError, ValueError):
    pass


class ContractError(DerfkitError):
    """A documented precondition of an operation was violated."""


class FileFormatError(ContractError):
    """A dataset or checkpoint file is truncated or has the wrong layout."""


class ParameterError(DerfkitError, ValueError):
    pass


class EvaluationError(DerfkitError):
    """A function produced a non-finite value inside its probe range."""


class OptimizationError(DerfkitError):
    pass


class ConfigError(DerfkitError, ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownFunctionError(DerfkitError, KeyError):
    def __init__(self, name, suggestion=None):
        self.name = name
        self.suggestion = suggestion
        msg = f"unknown function {name!r}"
        if suggestion:
            msg += f"; did you mean: {suggestion}?"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]
