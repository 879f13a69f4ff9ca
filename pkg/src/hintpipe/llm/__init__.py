from .tokens import count_tokens
from .strictjson import ParseFailure, SchemaViolation, parse_strict_json
from .backends import (
    Backend,
    BackendError,
    CallRecord,
    CompletionRequest,
    CompletionResult,
    HttpBackend,
    RetriesExhausted,
    RuleBasedBackend,
    ScriptedBackend,
    ScriptedQueueUnderflow,
)

__all__ = [
    "count_tokens",
    "parse_strict_json",
    "ParseFailure",
    "SchemaViolation",
    "Backend",
    "BackendError",
    "CallRecord",
    "CompletionRequest",
    "CompletionResult",
    "ScriptedBackend",
    "RuleBasedBackend",
    "HttpBackend",
    "ScriptedQueueUnderflow",
    "RetriesExhausted",
]
