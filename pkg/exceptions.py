"""
Exception types shared across the toolkit

The experiment runner maps ConfigValidationError to exit code 2 and
NumericalDiagnosticError to exit code 3.
"""

from typing import Any, Dict, Optional


class IdPriorsError(Exception):
    """Base class for toolkit errors"""


class DomainError(IdPriorsError, ValueError):
    """Argument outside the domain of a density, sampler or rate"""


class ConfigValidationError(IdPriorsError, ValueError):
    """Experiment configuration failed validation"""

    def __init__(self, message: str, errors: Optional[list] = None):
        super().__init__(message)
        self.errors = errors or []


class NumericalDiagnosticError(IdPriorsError, RuntimeError):
    """A numerical guard tripped; results would not be trustworthy"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EvidenceUnderflowError(NumericalDiagnosticError):
    pass


class UnreliableEstimateError(NumericalDiagnosticError):
    pass


class FactorizationError(NumericalDiagnosticError):
    pass


class ZeroAcceptanceError(NumericalDiagnosticError):
    pass
