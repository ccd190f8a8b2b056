"""
Exceptions Module
Error types raised by the hedging engines and the model codec.

Every error subclasses ValueError so callers can keep treating
"bad input or refused computation" as a ValueError.
"""

from typing import Optional


class MvhError(ValueError):
    """Base class for all errors raised by the package"""


class ModelFormatError(MvhError):
    """The model file cannot be read or is not a well-formed model document"""


class ModelValidationError(MvhError):
    """The model parsed but violates the event-tree invariants"""

    def __init__(self, report):
        self.report = report
        messages = '; '.join(report.messages()[:5])
        super().__init__(f'invalid model: {messages}')


class UnknownFixtureError(MvhError):
    """Requested builtin fixture does not exist"""


class UnknownClaimError(MvhError):
    """Requested claim label is not part of the model"""


class OracleSizeError(MvhError):
    """Tree too large for the dense reference solver"""


class PipelineRefusal(MvhError):
    """
    A standing hypothesis needed by a computation does not hold.

    Args:
        hypothesis: One of 'H2', 'H3', 'Qstar_equivalent'
        reason: Human readable diagnostic
    """

    def __init__(self, hypothesis: str, reason: str, node_id: Optional[str] = None):
        self.hypothesis = hypothesis
        self.reason = reason
        self.node_id = node_id
        super().__init__(f'{hypothesis}: {reason}')
