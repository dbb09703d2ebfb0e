from __future__ import annotations

from typing import Any


class SpinsurfError(Exception):
    """Base error; `exit_code` is what the CLI exits with."""

    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context = context

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{key}={value!r}" for key, value in self.context.items())
        return f"{base} ({details})"


class ConfigInvalid(SpinsurfError):
    exit_code = 2


class DegenerateChart(SpinsurfError):
    exit_code = 3


class OutsideTube(SpinsurfError):
    exit_code = 3


class UnsupportedChart(SpinsurfError):
    exit_code = 3


class GridTooCoarse(SpinsurfError):
    exit_code = 4


class NonPeriodicMismatch(SpinsurfError):
    exit_code = 4


class NonHermitianInput(SpinsurfError):
    exit_code = 4


class ConvergenceFailure(SpinsurfError):
    exit_code = 4


class UnknownCase(SpinsurfError):
    exit_code = 4


class AcceptanceFailure(SpinsurfError):
    exit_code = 5
