"""Verification failures raised by the symbolic engine.

Every failure the engine can report is a subclass of :class:`VerificationError`.
The executor catches them per path and records them in the verification
result; ``kind`` is the stable name used in reports.
"""

from __future__ import annotations


class VerificationError(Exception):
    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    @property
    def kind(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}" if self.detail else self.kind


class MissingChunk(VerificationError):
    """No heap chunk matches a required pattern."""

    def __init__(self, pred: str, args: str = "", detail: str = ""):
        self.pred = pred
        self.args = args
        super().__init__(detail or f"{pred}({args})")


class UnprovenFact(VerificationError):
    pass


class InsufficientFraction(VerificationError):
    def __init__(self, pred: str, detail: str = ""):
        self.pred = pred
        super().__init__(detail or pred)


class FractionOverflow(VerificationError):
    pass


class PoisonRead(VerificationError):
    pass


class UnboundLocal(VerificationError):
    pass


class UnboundName(VerificationError):
    pass


class UnknownUpdate(VerificationError):
    pass


class UndefinedPredicate(VerificationError):
    pass


class MissingToken(VerificationError):
    pass


class MissingNaToken(VerificationError):
    pass


class LeakedChunks(VerificationError):
    def __init__(self, chunks):
        self.chunks = tuple(chunks)
        super().__init__(", ".join(str(c) for c in self.chunks))


class UnsupportedType(VerificationError):
    pass


class NonTermination(VerificationError):
    pass


class PathLimitExceeded(VerificationError):
    pass
