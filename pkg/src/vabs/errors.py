"""Exception hierarchy shared across the package."""


class VabsError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VabsError, ValueError):
    pass


class InputError(VabsError, ValueError):
    pass


class ContractViolation(VabsError):
    pass


class DegenerateInputError(VabsError, ValueError):
    pass


class InvalidActionError(VabsError):
    pass


class GenerationError(VabsError):
    pass


class ReplayError(VabsError):
    def __init__(self, index, message):
        super().__init__(f"step {index}: {message}")
        self.index = index


class SearchExhaustedError(VabsError):
    """Raised when every candidate of a layer was dropped.

    ``best`` carries the best node seen before the beam emptied.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TemplateError(VabsError, KeyError):
    def __init__(self, placeholder):
        super().__init__(placeholder)
        self.placeholder = placeholder

    def __str__(self):
        return f"missing binding for placeholder {{{self.placeholder}}}"


class TransportError(VabsError):
    pass


class CapabilityError(VabsError):
    pass


class ProposalParseError(VabsError):
    def __init__(self, message, raw_text=""):
        super().__init__(message)
        self.raw_text = raw_text


class DatasetParseError(VabsError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
