"""n-optimal matrices of partitions of the natural numbers, built on demand."""
from .codec import DomainError, StageId, UsageError
from .matrix import BlockRef, MatrixState, Verdict

__all__ = ["BlockRef", "DomainError", "MatrixState", "StageId", "UsageError", "Verdict"]
