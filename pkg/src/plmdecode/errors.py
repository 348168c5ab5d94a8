"""Exception types shared across the toolkit."""


class PLMError(Exception):
    """Base class for all toolkit errors."""


class InvalidLanguageError(PLMError, ValueError):
    pass


class FormatError(PLMError, ValueError):
    """Malformed or incompatible file / in-memory format."""


class LexiconParseError(FormatError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OOVError(PLMError, KeyError):
    def __init__(self, word):
        self.word = word
        super().__init__(word)

    def __str__(self):
        return f"out-of-vocabulary word {self.word!r}"


class ConfigError(PLMError, ValueError):
    pass


class NumericFailure(PLMError, ArithmeticError):
    """Non-finite values appeared in a forward pass or during training.

    ``block`` names the offending parameter block (or ``"loss"``);
    ``last_good`` holds the most recent finite parameters when training
    was interrupted.
    """

    def __init__(self, message, block=None, last_good=None):
        self.block = block
        self.last_good = last_good
        super().__init__(message if block is None else f"{message} [{block}]")


class EnumerationTooLarge(PLMError, RuntimeError):
    pass
