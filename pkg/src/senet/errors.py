"""Exception hierarchy. Every error raised on bad input derives from ``SenetError``."""


class SenetError(ValueError):
    pass


class InvalidDimensionError(SenetError):
    pass


class InvalidParameterError(SenetError):
    pass


class InvalidPenaltyError(SenetError):
    pass


class DegenerateFeatureError(SenetError):
    def __init__(self, column, name=None):
        label = name if name is not None else f"column {column}"
        super().__init__(f"feature {label} is constant and cannot be standardized")
        self.column = column


class InvalidResponseError(SenetError):
    pass


class NonUniqueSolutionError(SenetError):
    pass


class SingularSystemError(SenetError):
    pass


class SizeLimitError(SenetError):
    pass


class InitialEstimatorError(SenetError):
    pass


class DataFormatError(SenetError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
