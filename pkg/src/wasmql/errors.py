"""Exception hierarchy shared across the engine."""


class WasmqlError(Exception):
    """Base class for all user-facing errors."""


class SchemaError(WasmqlError):
    """Invalid schema or duplicate/unknown table."""


class CsvError(WasmqlError):
    """CSV ingestion failure; carries a 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class PlanError(WasmqlError):
    """Type or structure error in an expression or plan."""


class SqlError(WasmqlError):
    """SQL parse error; carries a byte offset into the statement."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"at offset {offset}: {message}")
        self.offset = offset


class CodegenError(WasmqlError):
    """Invalid request to a code emitter."""


class WasmValidationError(WasmqlError):
    """A produced module failed validation."""


class Trap(WasmqlError):
    """Runtime trap raised while executing a module."""


class EngineError(WasmqlError):
    """Engine adapter failure (missing engine, protocol error, ...)."""


class CapacityError(WasmqlError):
    """Memory planning could not fit the query into linear memory."""
