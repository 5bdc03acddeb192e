"""Schemas and columnar, memory-resident tables.

Tables are fixed-width and null-free: one contiguous little-endian buffer
per column.  CHAR(n) values are zero-padded to n bytes.  Synthetic data
comes from a counter-based SplitMix64 stream so identical (schema, spec,
seed) always produce identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CsvError, SchemaError


class TypeKind(Enum):
    INT32 = "INT32"
    INT64 = "INT64"
    FLOAT64 = "FLOAT64"
    BOOL = "BOOL"
    CHAR = "CHAR"


@dataclass(frozen=True)
class DataType:
    kind: TypeKind
    length: int = 0  # CHAR only

    def __post_init__(self):
        if self.kind is TypeKind.CHAR and not (1 <= self.length <= 256):
            raise SchemaError(f"CHAR length must be in 1..=256, got {self.length}")
        if self.kind is not TypeKind.CHAR and self.length:
            raise SchemaError(f"{self.kind.value} takes no length")

    @property
    def width(self) -> int:
        return _WIDTHS[self.kind] if self.kind is not TypeKind.CHAR else self.length

    @property
    def is_numeric(self) -> bool:
        return self.kind in (TypeKind.INT32, TypeKind.INT64, TypeKind.FLOAT64)

    def __str__(self) -> str:
        if self.kind is TypeKind.CHAR:
            return f"CHAR({self.length})"
        return self.kind.value


_WIDTHS = {TypeKind.INT32: 4, TypeKind.INT64: 8, TypeKind.FLOAT64: 8, TypeKind.BOOL: 1}

INT32 = DataType(TypeKind.INT32)
INT64 = DataType(TypeKind.INT64)
FLOAT64 = DataType(TypeKind.FLOAT64)
BOOL = DataType(TypeKind.BOOL)


def char(n: int) -> DataType:
    return DataType(TypeKind.CHAR, n)


I32_MIN, I32_MAX = -(1 << 31), (1 << 31) - 1
I64_MIN, I64_MAX = -(1 << 63), (1 << 63) - 1


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[tuple[str, DataType], ...]

    def __post_init__(self):
        if not self.columns:
            raise SchemaError(f"table {self.name!r} has no columns")
        names = [c for c, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column name in table {self.name!r}")

    def column_index(self, name: str) -> int:
        for i, (c, _) in enumerate(self.columns):
            if c == name:
                return i
        raise SchemaError(f"no column {name!r} in table {self.name!r}")

    def column_type(self, name: str) -> DataType:
        return self.columns[self.column_index(name)][1]

    @property
    def row_width(self) -> int:
        return sum(t.width for _, t in self.columns)


def schema(name: str, cols: list[tuple[str, DataType]]) -> TableSchema:
    return TableSchema(name, tuple(cols))


class Table:
    """Columnar table: one bytearray per column, row_count fixed-width values each."""

    def __init__(self, schema: TableSchema):
        self.schema = schema
        self.row_count = 0
        self.columns: list[bytearray] = [bytearray() for _ in schema.columns]

    def check(self) -> None:
        for buf, (name, dtype) in zip(self.columns, self.schema.columns):
            if len(buf) != self.row_count * dtype.width:
                raise SchemaError(
                    f"column {name!r}: buffer {len(buf)} bytes != "
                    f"{self.row_count} rows x {dtype.width}"
                )

    def append_row(self, values: list) -> None:
        for buf, (name, dtype), v in zip(self.columns, self.schema.columns, values):
            buf += encode_value(dtype, v)
        self.row_count += 1

    def value(self, col: int, row: int) -> object:
        dtype = self.schema.columns[col][1]
        w = dtype.width
        return decode_value(dtype, self.columns[col][row * w : (row + 1) * w])

    def column_values(self, col: int) -> list:
        """Decode a whole column; numeric columns go through numpy for speed."""
        dtype = self.schema.columns[col][1]
        buf = bytes(self.columns[col])
        kind = dtype.kind
        if kind is TypeKind.INT32:
            return np.frombuffer(buf, "<i4").tolist()
        if kind is TypeKind.INT64:
            return np.frombuffer(buf, "<i8").tolist()
        if kind is TypeKind.FLOAT64:
            return np.frombuffer(buf, "<f8").tolist()
        if kind is TypeKind.BOOL:
            return [b != 0 for b in buf]
        n = dtype.length
        return [buf[i : i + n] for i in range(0, len(buf), n)]

    def rows(self) -> list[tuple]:
        cols = [self.column_values(i) for i in range(len(self.columns))]
        return list(zip(*cols)) if cols else []


def encode_value(dtype: DataType, v) -> bytes:
    kind = dtype.kind
    if kind is TypeKind.INT32:
        return struct.pack("<i", v)
    if kind is TypeKind.INT64:
        return struct.pack("<q", v)
    if kind is TypeKind.FLOAT64:
        return struct.pack("<d", v)
    if kind is TypeKind.BOOL:
        return b"\x01" if v else b"\x00"
    raw = v if isinstance(v, bytes) else str(v).encode()
    if len(raw) > dtype.length:
        raise ValueError(f"CHAR({dtype.length}) overflow: {raw!r}")
    return raw.ljust(dtype.length, b"\x00")


def decode_value(dtype: DataType, raw: bytes):
    kind = dtype.kind
    if kind is TypeKind.INT32:
        return struct.unpack("<i", raw)[0]
    if kind is TypeKind.INT64:
        return struct.unpack("<q", raw)[0]
    if kind is TypeKind.FLOAT64:
        return struct.unpack("<d", raw)[0]
    if kind is TypeKind.BOOL:
        return raw[0] != 0
    return bytes(raw)


# --- synthetic data -------------------------------------------------------

@dataclass(frozen=True)
class UniformInt:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise SchemaError(f"UNIFORM_INT requires lo <= hi, got {self.lo} > {self.hi}")


@dataclass(frozen=True)
class UniformFloat01:
    pass


@dataclass(frozen=True)
class Sequential:
    pass


@dataclass(frozen=True)
class Const:
    value: object = 0


Distribution = UniformInt | UniformFloat01 | Sequential | Const


@dataclass(frozen=True)
class GenSpec:
    rows: int
    dists: tuple[Distribution, ...]
    seed: int = 0


_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(counters: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over a uint64 counter array."""
    z = counters
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _column_stream(seed: int, col: int, n: int) -> np.ndarray:
    base = _splitmix64(np.array([np.uint64((seed ^ 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)], np.uint64))[0]
    start = base + np.uint64(col + 1) * _SM_GAMMA
    counters = start + np.arange(1, n + 1, dtype=np.uint64) * _SM_GAMMA
    return _splitmix64(counters)


def _render_column(dtype: DataType, dist: Distribution, seed: int, col: int, n: int) -> bytes:
    kind = dtype.kind
    if isinstance(dist, Const):
        return encode_value(dtype, dist.value) * n
    if isinstance(dist, Sequential):
        vals = np.arange(n, dtype=np.int64)
    elif isinstance(dist, UniformFloat01):
        if kind is not TypeKind.FLOAT64:
            raise SchemaError("UNIFORM_FLOAT01 requires a FLOAT64 column")
        u = _column_stream(seed, col, n)
        return ((u >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)).tobytes()
    else:  # UniformInt
        u = _column_stream(seed, col, n)
        span = np.uint64(dist.hi - dist.lo + 1)
        vals = (u % span).astype(np.int64) + dist.lo

    if kind is TypeKind.INT32:
        if isinstance(dist, UniformInt) and not (I32_MIN <= dist.lo and dist.hi <= I32_MAX):
            raise SchemaError("UNIFORM_INT range exceeds INT32")
        return vals.astype("<i4").tobytes()
    if kind is TypeKind.INT64:
        return vals.astype("<i8").tobytes()
    if kind is TypeKind.FLOAT64:
        return vals.astype("<f8").tobytes()
    if kind is TypeKind.BOOL:
        return (vals & 1).astype("u1").tobytes()
    # CHAR: decimal rendering, zero-padded to the column width
    out = bytearray()
    for v in vals.tolist():
        out += encode_value(dtype, str(v))
    return bytes(out)


# --- catalog ---------------------------------------------------------------

TableHandle = str


class Catalog:
    """Registry of loaded tables. Tables are immutable once loaded."""

    def __init__(self):
        self._tables: dict[str, Table] = {}

    def define_table(self, schema: TableSchema) -> TableHandle:
        if schema.name in self._tables:
            raise SchemaError(f"table {schema.name!r} already defined")
        self._tables[schema.name] = Table(schema)
        return schema.name

    def table(self, handle: TableHandle) -> Table:
        try:
            return self._tables[handle]
        except KeyError:
            raise SchemaError(f"unknown table {handle!r}") from None

    def tables(self) -> list[str]:
        return list(self._tables)

    def ingest_csv(self, handle: TableHandle, text: str, header: bool = False) -> int:
        table = self.table(handle)
        schema = table.schema
        appended = 0
        lines = text.split("\n")
        start = 1 if header else 0
        for lineno, line in enumerate(lines[start:], start + 1):
            if line == "" and lineno == len(lines):  # trailing newline
                break
            fields = line.split(",")
            if len(fields) != len(schema.columns):
                raise CsvError(lineno, f"expected {len(schema.columns)} fields, got {len(fields)}")
            values = []
            for raw, (name, dtype) in zip(fields, schema.columns):
                values.append(_parse_field(raw, name, dtype, lineno))
            table.append_row(values)
            appended += 1
        table.check()
        return appended

    def to_csv(self, handle: TableHandle, header: bool = False) -> str:
        table = self.table(handle)
        out = []
        if header:
            out.append(",".join(c for c, _ in table.schema.columns))
        cols = [table.column_values(i) for i in range(len(table.columns))]
        for r in range(table.row_count):
            out.append(",".join(_format_field(col[r], dtype)
                                for col, (_, dtype) in zip(cols, table.schema.columns)))
        return "\n".join(out) + "\n" if out else ""

    def generate_table(self, schema: TableSchema, spec: GenSpec) -> TableHandle:
        if len(spec.dists) != len(schema.columns):
            raise SchemaError(
                f"spec has {len(spec.dists)} distributions for {len(schema.columns)} columns"
            )
        handle = self.define_table(schema)
        table = self.table(handle)
        for i, ((_, dtype), dist) in enumerate(zip(schema.columns, spec.dists)):
            table.columns[i] = bytearray(_render_column(dtype, dist, spec.seed, i, spec.rows))
        table.row_count = spec.rows
        table.check()
        return handle


def _parse_field(raw: str, name: str, dtype: DataType, lineno: int):
    kind = dtype.kind
    try:
        if kind is TypeKind.INT32:
            v = int(raw)
            if not I32_MIN <= v <= I32_MAX:
                raise ValueError("out of INT32 range")
            return v
        if kind is TypeKind.INT64:
            v = int(raw)
            if not I64_MIN <= v <= I64_MAX:
                raise ValueError("out of INT64 range")
            return v
        if kind is TypeKind.FLOAT64:
            return float(raw)
        if kind is TypeKind.BOOL:
            low = raw.strip().lower()
            if low in ("true", "1"):
                return True
            if low in ("false", "0"):
                return False
            raise ValueError(f"bad BOOL literal {raw!r}")
        data = raw.encode()
        if len(data) > dtype.length:
            raise ValueError(f"CHAR({dtype.length}) overflow")
        return data
    except ValueError as e:
        raise CsvError(lineno, f"column {name!r}: {e}") from None


def _format_field(v, dtype: DataType) -> str:
    kind = dtype.kind
    if kind is TypeKind.FLOAT64:
        return repr(v)  # shortest round-trip form
    if kind is TypeKind.BOOL:
        return "true" if v else "false"
    if kind is TypeKind.CHAR:
        return v.rstrip(b"\x00").decode()
    return str(v)
