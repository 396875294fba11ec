"""Stream runtime verification with nested monitors and dynamic,
optionally retroactive, parametrization."""

__version__ = "0.1.0"

from .engine import Monitor, Poison, StepOutput, UNAVAIL, freeze, start, thaw
from .functions import FuncDef, Registry, builtin_registry, register_function
from .logstore import Event, FileBackedLogStore, InMemoryLogStore
from .offline import run_offline
from .specmodel import (
    Specification,
    SpecValidationError,
    ValidatedSpec,
    desugar,
    diagnose,
    validate,
)

__all__ = [
    "Monitor",
    "Poison",
    "StepOutput",
    "UNAVAIL",
    "freeze",
    "start",
    "thaw",
    "FuncDef",
    "Registry",
    "builtin_registry",
    "register_function",
    "Event",
    "FileBackedLogStore",
    "InMemoryLogStore",
    "run_offline",
    "Specification",
    "SpecValidationError",
    "ValidatedSpec",
    "desugar",
    "diagnose",
    "validate",
    "__version__",
]
