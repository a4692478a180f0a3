"""Error type shared by every stage of the forecasting pipeline."""

from __future__ import annotations


class KpiError(Exception):
    """A failure carrying a stable machine-readable ``code``.

    ``stage`` is filled in by the pipeline runner so callers can tell which
    step (cleaning, split/window, training, ...) raised.
    """

    def __init__(self, code: str, message: str = "", stage: str | None = None):
        self.code = code
        self.message = message
        self.stage = stage
        super().__init__(str(self))

    def __str__(self) -> str:
        prefix = f"[{self.stage}] " if self.stage else ""
        return f"{prefix}{self.code}: {self.message}" if self.message else f"{prefix}{self.code}"

    def with_stage(self, stage: str) -> "KpiError":
        return KpiError(self.code, self.message, stage)
