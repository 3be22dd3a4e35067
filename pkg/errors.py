"""
Erreurs du modèle et codes de sortie de la ligne de commande
"""

from enum import Enum
from typing import Optional


class ExitCode(Enum):
    OK = 0
    UNEXPECTED = 1
    USAGE = 2
    CONFIG = 3
    SCHEMA = 4
    SAMPLER = 5
    FIT = 6
    NUMERICAL = 7


class HailModelError(Exception):
    """Erreur de base du modèle"""
    kind = "error"
    exit_code = ExitCode.UNEXPECTED


class UsageError(HailModelError):
    """Commande ou option invalide"""
    kind = "usage"
    exit_code = ExitCode.USAGE


class ConfigError(HailModelError):
    kind = "config"
    exit_code = ExitCode.CONFIG


class SchemaError(HailModelError):
    """Violation de schéma d'un fichier CSV"""
    kind = "schema"
    exit_code = ExitCode.SCHEMA

    def __init__(self, message: str, column: Optional[str] = None, line: Optional[int] = None):
        location = []
        if column is not None:
            location.append(f"colonne '{column}'")
        if line is not None:
            location.append(f"ligne {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.column = column
        self.line = line


class SupportError(HailModelError):
    """Observation hors du support de la loi"""
    kind = "support"
    exit_code = ExitCode.NUMERICAL


class SingularCovarianceError(HailModelError):
    kind = "singular_covariance"
    exit_code = ExitCode.NUMERICAL


class NonFiniteError(HailModelError):
    """Log-postérieure non finie; `term` nomme le terme fautif"""
    kind = "non_finite"
    exit_code = ExitCode.NUMERICAL

    def __init__(self, term: str, value: float):
        super().__init__(f"terme non fini '{term}' = {value}")
        self.term = term
        self.value = value


class SamplerError(HailModelError):
    kind = "sampler"
    exit_code = ExitCode.SAMPLER


class FitError(HailModelError):
    kind = "fit"
    exit_code = ExitCode.FIT
