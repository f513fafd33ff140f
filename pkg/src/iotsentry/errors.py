"""Exception hierarchy.

Every error carries a short ``code`` (e.g. ``MALFORMED_HEADER``) and the
module it came from, so the CLI can print ``trace_ingest.MALFORMED_HEADER``
and map each class to a stable exit status.
"""

from __future__ import annotations


class SentryError(Exception):
    module = "iotsentry"
    exit_code = 1

    def __init__(self, code: str, message: str = "", **context):
        self.code = code
        self.context = context
        self.message = message or code
        super().__init__(self.message)

    @property
    def qualified_code(self) -> str:
        return f"{self.module}.{self.code}"


class TraceError(SentryError):
    module = "trace_ingest"
    exit_code = 3


class EventError(SentryError):
    module = "event_engine"
    exit_code = 4


class ModelError(SentryError):
    module = "anomaly_models"
    exit_code = 5


class InteractionError(SentryError):
    module = "interaction_core"
    exit_code = 6


class RollbackError(SentryError):
    module = "rollback_engine"
    exit_code = 7


class ScenarioError(SentryError):
    module = "sim_harness"
    exit_code = 8


class BenchError(SentryError):
    module = "cli_bench"
    exit_code = 9
