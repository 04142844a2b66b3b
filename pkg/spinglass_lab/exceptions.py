# spinglass_lab/exceptions.py

from typing import Any


class LabError(Exception):
    """
    Base error for every failure raised by the lab.

    Carries a numeric status code (also used as the CLI exit code) and a
    human readable detail naming the offending field or value.
    """

    status_code: int = 1

    def __init__(self, detail: str, status_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if status_code is not None:
            self.status_code = status_code

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "detail": self.detail}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(status_code={self.status_code}, detail={self.detail!r})"


class InvalidInput(LabError):
    """Precondition or validation failure."""

    status_code = 2


class NumericalFailure(LabError):
    """Nonfinite values, non-convergence, grid underspan or factorization breakdown."""

    status_code = 3
