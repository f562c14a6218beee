"""Modular symbolic execution for a small MIR-like language with separation-logic contracts."""

from .errors import VerificationError
from .executor import VerificationResult, verify_function, verify_program
from .frontend import (
    ParseError,
    SourceFile,
    parse_assertion,
    parse_program,
    print_program,
)

__all__ = [
    "ParseError",
    "SourceFile",
    "VerificationError",
    "VerificationResult",
    "parse_assertion",
    "parse_program",
    "print_program",
    "verify_function",
    "verify_program",
]
__version__ = "0.1.0"
