"""Physical plans and typed scalar expressions.

Expression nodes carry a `dtype` annotation filled in by `typecheck`; the
annotation is excluded from equality so structurally equal trees compare
equal whether or not they have been checked.

Integer arithmetic wraps (two's complement, 32 or 64 bits per the node
type).  Integer division by zero and INT_MIN/-1 are errors in both
executors.  There is no implicit int<->float coercion; CHAR literals widen
(zero-padded) to the width of the CHAR operand they are compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .catalog import (BOOL, Catalog, DataType, FLOAT64, INT32, INT64,
                      TableSchema, TypeKind, char)
from .errors import PlanError

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("<", "<=", "=", "!=", ">=", ">")
LOGIC_OPS = ("AND", "OR", "NOT")


@dataclass(eq=True)
class ColumnRef:
    table: str | None
    column: str
    dtype: DataType | None = field(default=None, compare=False)


@dataclass(eq=True)
class Literal:
    dtype_in: DataType
    value: object
    dtype: DataType | None = field(default=None, compare=False)


@dataclass(eq=True)
class Arith:
    op: str
    left: "Expr"
    right: "Expr"
    dtype: DataType | None = field(default=None, compare=False)


@dataclass(eq=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"
    dtype: DataType | None = field(default=None, compare=False)


@dataclass(eq=True)
class Logic:
    op: str
    operands: tuple["Expr", ...]
    dtype: DataType | None = field(default=None, compare=False)


Expr = ColumnRef | Literal | Arith | Cmp | Logic


class AggKind(Enum):
    COUNT_STAR = "COUNT_STAR"
    SUM = "SUM"
    MIN = "MIN"
    MAX = "MAX"
    AVG = "AVG"


@dataclass(eq=True)
class AggFn:
    kind: AggKind
    arg: Expr | None = None

    def result_type(self) -> DataType:
        if self.kind is AggKind.COUNT_STAR:
            return INT64
        at = self.arg.dtype
        if self.kind is AggKind.AVG:
            return FLOAT64
        if self.kind is AggKind.SUM:
            return INT64 if at.kind in (TypeKind.INT32, TypeKind.INT64) else FLOAT64
        return at  # MIN/MAX


@dataclass(eq=True)
class SortKey:
    expr: Expr
    desc: bool = False


@dataclass
class Scan:
    table: str


@dataclass
class Filter:
    pred: Expr
    child: "PlanNode"


@dataclass
class Project:
    exprs: list[Expr]
    child: "PlanNode"
    names: list[str] | None = None


@dataclass
class HashGroupBy:
    keys: list[Expr]
    aggs: list[AggFn]
    child: "PlanNode"


@dataclass
class HashJoin:
    # conjunction of equalities: build_keys[i] = probe_keys[i]
    build_keys: list[Expr]
    probe_keys: list[Expr]
    build: "PlanNode"
    probe: "PlanNode"


@dataclass
class Sort:
    keys: list[SortKey]
    child: "PlanNode"


PlanNode = Scan | Filter | Project | HashGroupBy | HashJoin | Sort


class CheapnessClass(Enum):
    CHEAP = "CHEAP"
    COSTLY = "COSTLY"


# CHAR comparisons longer than one machine word count as costly.
COSTLY_CHAR_BYTES = 8


# --- typecheck --------------------------------------------------------------

class Scope:
    """Resolution context: an ordered list of column descriptors."""

    def __init__(self, columns: list[tuple[str | None, str, DataType]]):
        self.columns = columns

    @classmethod
    def of_schemas(cls, schemas: list[TableSchema]) -> "Scope":
        cols = []
        for s in schemas:
            for name, dtype in s.columns:
                cols.append((s.name, name, dtype))
        return cls(cols)

    def resolve(self, table: str | None, column: str) -> DataType:
        hits = [d for t, c, d in self.columns
                if c == column and (table is None or t == table)]
        if not hits:
            raise PlanError(f"unresolved column {_qual(table, column)}")
        if len(hits) > 1 and table is None:
            raise PlanError(f"ambiguous column {column!r}")
        return hits[0]


def _qual(table: str | None, column: str) -> str:
    return f"{table}.{column}" if table else column


def typecheck(expr: Expr, scope: Scope | list[TableSchema]) -> DataType:
    """Annotate every node with its resolved type and return the root type."""
    if isinstance(scope, list):
        scope = Scope.of_schemas(scope)
    return _check(expr, scope)


def _check(expr: Expr, scope: Scope) -> DataType:
    if isinstance(expr, ColumnRef):
        expr.dtype = scope.resolve(expr.table, expr.column)
    elif isinstance(expr, Literal):
        expr.dtype = expr.dtype_in
    elif isinstance(expr, Arith):
        lt, rt = _check(expr.left, scope), _check(expr.right, scope)
        expr.dtype = _arith_type(expr, lt, rt)
    elif isinstance(expr, Cmp):
        lt, rt = _check(expr.left, scope), _check(expr.right, scope)
        _cmp_operands(expr, lt, rt)
        expr.dtype = BOOL
    elif isinstance(expr, Logic):
        if expr.op == "NOT" and len(expr.operands) != 1:
            raise PlanError("NOT takes one operand")
        if expr.op in ("AND", "OR") and len(expr.operands) < 2:
            raise PlanError(f"{expr.op} takes at least two operands")
        for op in expr.operands:
            if _check(op, scope) != BOOL:
                raise PlanError(f"{expr.op} operand is not BOOL")
        expr.dtype = BOOL
    else:
        raise PlanError(f"unknown expression node {expr!r}")
    return expr.dtype


_INTS = (TypeKind.INT32, TypeKind.INT64)


def _arith_type(expr: Arith, lt: DataType, rt: DataType) -> DataType:
    if expr.op not in ARITH_OPS:
        raise PlanError(f"unknown arithmetic operator {expr.op!r}")
    for t in (lt, rt):
        if not t.is_numeric:
            raise PlanError(f"arithmetic over {t}")
    if lt.kind in _INTS and rt.kind in _INTS:
        return INT64 if TypeKind.INT64 in (lt.kind, rt.kind) else INT32
    if lt == FLOAT64 and rt == FLOAT64:
        return FLOAT64
    raise PlanError(f"type mismatch: {lt} {expr.op} {rt} (no implicit int/float coercion)")


def _cmp_operands(expr: Cmp, lt: DataType, rt: DataType) -> None:
    if expr.op not in CMP_OPS:
        raise PlanError(f"unknown comparison operator {expr.op!r}")
    if lt.kind in _INTS and rt.kind in _INTS:
        return  # mixed int widths widen at codegen
    if lt.kind is TypeKind.CHAR and rt.kind is TypeKind.CHAR and lt.length != rt.length:
        # a CHAR literal widens to the column width it is compared against
        widened = char(max(lt.length, rt.length))
        for side in (expr.left, expr.right):
            if isinstance(side, Literal) and side.dtype.length < widened.length:
                if len(_char_bytes(side.value)) > widened.length:
                    raise PlanError("CHAR literal longer than compared column")
                side.dtype = widened
                return
        raise PlanError(f"type mismatch: {lt} {expr.op} {rt}")
    if lt != rt:
        raise PlanError(f"type mismatch: {lt} {expr.op} {rt}")


def _char_bytes(v) -> bytes:
    return v if isinstance(v, bytes) else str(v).encode()


def walk(expr: Expr):
    yield expr
    if isinstance(expr, Arith) or isinstance(expr, Cmp):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Logic):
        for op in expr.operands:
            yield from walk(op)


def column_refs(expr: Expr) -> list[ColumnRef]:
    return [n for n in walk(expr) if isinstance(n, ColumnRef)]


def classify_predicate(pred: Expr) -> CheapnessClass:
    """COSTLY iff the predicate compares CHAR values wider than one word."""
    for node in walk(pred):
        if isinstance(node, Cmp):
            t = node.left.dtype
            if t is None:
                raise PlanError("classify_predicate requires a typechecked predicate")
            if t.kind is TypeKind.CHAR and t.length > COSTLY_CHAR_BYTES:
                return CheapnessClass.COSTLY
    return CheapnessClass.COSTLY if False else CheapnessClass.CHEAP


# --- plan validation --------------------------------------------------------

@dataclass(frozen=True)
class OutputColumn:
    table: str | None
    name: str
    dtype: DataType


def _scope_of(cols: list[OutputColumn]) -> Scope:
    return Scope([(c.table, c.name, c.dtype) for c in cols])


def output_columns(plan: PlanNode, catalog: Catalog) -> list[OutputColumn]:
    """Validate the plan and compute its output column list."""
    if isinstance(plan, Scan):
        schema = catalog.table(plan.table).schema
        return [OutputColumn(schema.name, n, t) for n, t in schema.columns]

    if isinstance(plan, Filter):
        cols = output_columns(plan.child, catalog)
        if typecheck(plan.pred, _scope_of(cols)) != BOOL:
            raise PlanError("filter predicate is not BOOL")
        return cols

    if isinstance(plan, Project):
        cols = output_columns(plan.child, catalog)
        scope = _scope_of(cols)
        out = []
        for i, e in enumerate(plan.exprs):
            t = typecheck(e, scope)
            name = plan.names[i] if plan.names else _expr_name(e, i)
            out.append(OutputColumn(None, name, t))
        _unique_names(out)
        return out

    if isinstance(plan, HashGroupBy):
        cols = output_columns(plan.child, catalog)
        scope = _scope_of(cols)
        out = []
        for i, k in enumerate(plan.keys):
            t = typecheck(k, scope)
            if isinstance(k, ColumnRef):
                out.append(OutputColumn(k.table, k.column, t))
            else:
                out.append(OutputColumn(None, _expr_name(k, i), t))
        for i, agg in enumerate(plan.aggs):
            if agg.kind is AggKind.COUNT_STAR:
                if agg.arg is not None:
                    raise PlanError("COUNT(*) takes no argument")
            else:
                if agg.arg is None:
                    raise PlanError(f"{agg.kind.value} needs an argument")
                at = typecheck(agg.arg, scope)
                if not at.is_numeric:
                    raise PlanError(f"{agg.kind.value} over non-numeric type {at}")
            out.append(OutputColumn(None, _agg_name(agg, i), agg.result_type()))
        _unique_names(out)
        return out

    if isinstance(plan, HashJoin):
        bcols = output_columns(plan.build, catalog)
        pcols = output_columns(plan.probe, catalog)
        if len(plan.build_keys) != len(plan.probe_keys) or not plan.build_keys:
            raise PlanError("join needs one or more key equalities")
        bscope, pscope = _scope_of(bcols), _scope_of(pcols)
        for bk, pk in zip(plan.build_keys, plan.probe_keys):
            bt = typecheck(bk, bscope)
            pt = typecheck(pk, pscope)
            if bt != pt and not (bt.kind in _INTS and pt.kind in _INTS):
                raise PlanError(f"join key type mismatch: {bt} vs {pt}")
        out = bcols + pcols
        return out

    if isinstance(plan, Sort):
        cols = output_columns(plan.child, catalog)
        scope = _scope_of(cols)
        if not plan.keys or len(plan.keys) > 16:
            raise PlanError("sort needs 1..16 keys")
        for k in plan.keys:
            t = typecheck(k.expr, scope)
            if t == BOOL:
                raise PlanError("BOOL sort keys are not supported")
        return cols

    raise PlanError(f"unknown plan node {plan!r}")


def _unique_names(cols: list[OutputColumn]) -> None:
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise PlanError(f"duplicate output column name in {names}")


def _expr_name(e: Expr, i: int) -> str:
    if isinstance(e, ColumnRef):
        return e.column
    return f"col{i}"


def _agg_name(agg: AggFn, i: int) -> str:
    if agg.kind is AggKind.COUNT_STAR:
        return "count" if i == 0 else f"count{i}"
    base = agg.kind.value.lower()
    if isinstance(agg.arg, ColumnRef):
        return f"{base}_{agg.arg.column}"
    return f"{base}{i}"


def validate(plan: PlanNode, catalog: Catalog) -> TableSchema:
    """Validate and return the result-set schema."""
    cols = output_columns(plan, catalog)
    names: list[str] = []
    for c in cols:
        name = c.name
        if names.count(name) or [x for x in cols if x.name == name and x is not c]:
            name = _qual(c.table, c.name).replace(".", "_")
        names.append(name)
    if len(set(names)) != len(names):
        names = [f"{n}_{i}" if names.count(n) > 1 else n for i, n in enumerate(names)]
    return TableSchema("result", tuple((n, c.dtype) for n, c in zip(names, cols)))


def children(plan: PlanNode) -> list[PlanNode]:
    if isinstance(plan, Scan):
        return []
    if isinstance(plan, HashJoin):
        return [plan.build, plan.probe]
    return [plan.child]


def plan_nodes(plan: PlanNode):
    yield plan
    for c in children(plan):
        yield from plan_nodes(c)


# --- text form --------------------------------------------------------------
#
# One node per line, children indented two spaces; HashJoin's build child
# comes first.  Expressions use infix syntax with mandatory parens around
# binary operations:
#
#   Project exprs=[R.x, (R.x + R.y)]
#     Filter pred=((R.val < 3.14) AND (R.x != 0:i64))
#       Scan table=R
#
# Literal syntax: INT32 `42`, INT64 `42:i64`, FLOAT64 `3.14` (always with
# '.' or exponent), BOOL `TRUE`/`FALSE`, CHAR `'abc'` (width = byte length,
# or `'abc':char8` to pad).

def format_expr(e: Expr) -> str:
    if isinstance(e, ColumnRef):
        return _qual(e.table, e.column)
    if isinstance(e, Literal):
        return _format_literal(e)
    if isinstance(e, Arith):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, Cmp):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, Logic):
        if e.op == "NOT":
            return f"(NOT {format_expr(e.operands[0])})"
        return "(" + f" {e.op} ".join(format_expr(o) for o in e.operands) + ")"
    raise PlanError(f"cannot format {e!r}")


def _format_literal(e: Literal) -> str:
    t = e.dtype_in
    if t.kind is TypeKind.INT32:
        return str(e.value)
    if t.kind is TypeKind.INT64:
        return f"{e.value}:i64"
    if t.kind is TypeKind.FLOAT64:
        s = repr(float(e.value))
        return s if ("." in s or "e" in s or "inf" in s or "nan" in s) else s + ".0"
    if t.kind is TypeKind.BOOL:
        return "TRUE" if e.value else "FALSE"
    raw = e.value if isinstance(e.value, bytes) else str(e.value).encode()
    text = raw.decode()
    lit = "'" + text.replace("'", "''") + "'"
    if t.length != len(raw):
        lit += f":char{t.length}"
    return lit


def format_agg(a: AggFn) -> str:
    if a.kind is AggKind.COUNT_STAR:
        return "COUNT(*)"
    return f"{a.kind.value}({format_expr(a.arg)})"


def format_plan(plan: PlanNode, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(plan, Scan):
        return f"{pad}Scan table={plan.table}"
    if isinstance(plan, Filter):
        head = f"{pad}Filter pred={format_expr(plan.pred)}"
        return head + "\n" + format_plan(plan.child, indent + 1)
    if isinstance(plan, Project):
        head = f"{pad}Project exprs=[{', '.join(map(format_expr, plan.exprs))}]"
        if plan.names:
            head += f" names=[{', '.join(plan.names)}]"
        return head + "\n" + format_plan(plan.child, indent + 1)
    if isinstance(plan, HashGroupBy):
        head = (f"{pad}HashGroupBy keys=[{', '.join(map(format_expr, plan.keys))}]"
                f" aggs=[{', '.join(map(format_agg, plan.aggs))}]")
        return head + "\n" + format_plan(plan.child, indent + 1)
    if isinstance(plan, HashJoin):
        conds = ", ".join(f"{format_expr(b)} = {format_expr(p)}"
                          for b, p in zip(plan.build_keys, plan.probe_keys))
        head = f"{pad}HashJoin on=[{conds}]"
        return (head + "\n" + format_plan(plan.build, indent + 1)
                + "\n" + format_plan(plan.probe, indent + 1))
    if isinstance(plan, Sort):
        keys = ", ".join(format_expr(k.expr) + (" DESC" if k.desc else " ASC")
                         for k in plan.keys)
        return f"{pad}Sort keys=[{keys}]" + "\n" + format_plan(plan.child, indent + 1)
    raise PlanError(f"cannot format {plan!r}")


def parse_plan(text: str) -> PlanNode:
    """Parse the text form produced by format_plan."""
    lines = [l for l in text.split("\n") if l.strip()]
    node, rest = _parse_plan_lines(lines, 0)
    if rest != len(lines):
        raise PlanError(f"trailing plan lines at {rest}")
    return node


def _indent_of(line: str) -> int:
    return (len(line) - len(line.lstrip())) // 2


def _parse_plan_lines(lines: list[str], pos: int) -> tuple[PlanNode, int]:
    from .exprparse import parse_agg_text, parse_expr_text, parse_sort_keys_text

    line = lines[pos].strip()
    depth = _indent_of(lines[pos])
    kind, _, args = line.partition(" ")

    def child(n: int = 1) -> tuple[list[PlanNode], int]:
        kids, p = [], pos + 1
        for _ in range(n):
            if p >= len(lines) or _indent_of(lines[p]) != depth + 1:
                raise PlanError(f"expected child node after line {pos + 1}")
            k, p = _parse_plan_lines(lines, p)
            kids.append(k)
        return kids, p

    if kind == "Scan":
        return Scan(_kv(args, "table")), pos + 1
    if kind == "Filter":
        (c,), p = child()
        return Filter(parse_expr_text(_kv(args, "pred")), c), p
    if kind == "Project":
        (c,), p = child()
        exprs = [parse_expr_text(s) for s in _split_list(_kv(args, "exprs"))]
        names = _split_list(_kv(args, "names")) if " names=[" in " " + args else None
        return Project(exprs, c, names), p
    if kind == "HashGroupBy":
        (c,), p = child()
        keys = [parse_expr_text(s) for s in _split_list(_kv(args, "keys"))]
        aggs = [parse_agg_text(s) for s in _split_list(_kv(args, "aggs"))]
        return HashGroupBy(keys, aggs, c), p
    if kind == "HashJoin":
        (b, pr), p = child(2)
        bk, pk = [], []
        for cond in _split_list(_kv(args, "on")):
            l, _, r = cond.partition(" = ")
            bk.append(parse_expr_text(l))
            pk.append(parse_expr_text(r))
        return HashJoin(bk, pk, b, pr), p
    if kind == "Sort":
        (c,), p = child()
        return Sort(parse_sort_keys_text(_kv(args, "keys")), c), p
    raise PlanError(f"unknown plan node kind {kind!r} at line {pos + 1}")


def _kv(args: str, key: str) -> str:
    marker = key + "="
    i = args.find(marker)
    if i < 0:
        raise PlanError(f"missing {key}= in {args!r}")
    rest = args[i + len(marker):]
    if rest.startswith("["):
        depth = 0
        for j, ch in enumerate(rest):
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
                if depth == 0:
                    return rest[1:j]
        raise PlanError(f"unbalanced [ in {args!r}")
    return rest.split(" ", 1)[0]


def _split_list(body: str) -> list[str]:
    """Split a bracketed list body on top-level commas."""
    items, depth, start = [], 0, 0
    in_str = False
    for i, ch in enumerate(body):
        if in_str:
            if ch == "'":
                in_str = False
            continue
        if ch == "'":
            in_str = True
        elif ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == "," and depth == 0:
            items.append(body[start:i].strip())
            start = i + 1
    tail = body[start:].strip()
    if tail:
        items.append(tail)
    return items
