"""Exception hierarchy - every error knows the CLI exit code it maps to"""

from typing import Any, Dict, Optional


class EHNetError(Exception):
    """Base error for the package"""

    exit_code: int = 2

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.message, "error_type": type(self).__name__, **self.context}


class ConfigurationError(EHNetError):
    """Invalid configuration: bad values, non-COLA window/hop, broken dimension chain"""


class InputDataError(EHNetError, ValueError):
    """Input arrays or files violate an operation's preconditions"""


class DegenerateSourceError(EHNetError):
    """A source signal has zero power or is empty"""


class CorpusAbortError(EHNetError):
    """Too many manifest records were skipped"""


class CheckpointError(EHNetError):
    """Checkpoint file is malformed or does not match its architecture"""


class NumericError(EHNetError, ArithmeticError):
    """Non-finite values appeared in the forward pass, the loss or the gradients"""

    exit_code = 3


def exit_code_for(error: Optional[BaseException]) -> int:
    """Map an exception to the CLI exit code"""
    if error is None:
        return 0
    if isinstance(error, EHNetError):
        return error.exit_code
    return 2
