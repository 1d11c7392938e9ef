"""SQL-ish statement surface over encrypted tables.

Exactly four statement shapes are understood, one per protocol
operation; anything else is a syntax error with a position:

    SELECT DISTINCT T.y FROM T WHERE T.x = w            distinct search
    SELECT T.y FROM T WHERE T.x = w                     keyword search
    SELECT T2.y FROM T1 JOIN T2 ON T1.z = T2.z
        WHERE T1.x = w                                  two-stage join
    INSERT INTO T (T.x, T.y) VALUE (w, v)               add
    DELETE FROM T WHERE T.x = w AND T.y = v             delete all copies

Each registered (table, keyword column, value column) triple owns one
encrypted index plus a client-side quantity vector: per keyword, the
live copy-count of every value.  Distinct queries come from the index
alone; plain keyword queries re-expand the distinct set through the
quantity vector (order and multiplicity never leave the client); joins
run the keyword query twice, feeding stage-one values into stage two.
Deleting a pair removes every copy, matching the delete protocol.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import client as cl
from .client import ClientConfig, ClientState, UnknownKeywordError

SYN_INS = "ins"
SYN_DEL = "del"
SYN_DSRCH = "Dsrch"
SYN_SRCH = "srch"
SYN_JOIN = "join"

ORDER_LEX = "lexicographic"
ORDER_NUMERIC = "numeric"


class StatementError(ValueError):
    """Syntax error; carries the byte offset of the offending token."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class QueryError(RuntimeError):
    """Semantic failure: unknown table/columns, bad value for the order."""


class IntegrityError(QueryError):
    """Client quantity vector disagrees with the encrypted index."""


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    \s*(?:
      (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    | (?P<int>\d+)
    | (?P<string>'[^']*')
    | (?P<sym>[(),=])
    )""", re.VERBOSE)

_KEYWORDS = {"select", "distinct", "from", "where", "insert", "into",
             "value", "values", "delete", "and", "join", "on"}


@dataclass(frozen=True)
class _Token:
    kind: str       # kw | ident | lit | sym
    text: str
    value: bytes | None
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:].lstrip()
            if not rest:
                break
            at = len(text) - len(rest)
            if rest.startswith("'"):
                raise StatementError("unterminated string literal", at)
            raise StatementError(f"unexpected character {rest[0]!r}", at)
        if m.group("ident"):
            word = m.group("ident")
            kind = "kw" if word.lower() in _KEYWORDS else "ident"
            tokens.append(_Token(kind, word, None, m.start("ident")))
        elif m.group("int"):
            tokens.append(_Token("lit", m.group("int"),
                                 m.group("int").encode(), m.start("int")))
        elif m.group("string"):
            raw = m.group("string")
            tokens.append(_Token("lit", raw, raw[1:-1].encode(),
                                 m.start("string")))
        else:
            tokens.append(_Token("sym", m.group("sym"), None, m.start("sym")))
        pos = m.end()
    tokens.append(_Token("end", "", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, want: str):
        tok = self.peek()
        got = repr(tok.text) if tok.kind != "end" else "end of statement"
        raise StatementError(f"expected {want}, got {got}", tok.position)

    def keyword(self, *words: str) -> str:
        tok = self.peek()
        if tok.kind == "kw" and tok.text.lower() in words:
            self.next()
            return tok.text.lower()
        self.fail("/".join(w.upper() for w in words))

    def ident(self) -> str:
        tok = self.peek()
        if tok.kind == "ident":
            return self.next().text
        self.fail("an identifier")

    def literal(self) -> bytes:
        tok = self.peek()
        if tok.kind == "lit":
            return self.next().value
        self.fail("a literal (quoted string or integer)")

    def sym(self, ch: str):
        tok = self.peek()
        if tok.kind == "sym" and tok.text == ch:
            self.next()
            return
        self.fail(repr(ch))

    def end(self):
        if self.peek().kind != "end":
            self.fail("end of statement")


@dataclass(frozen=True)
class QueryPlan:
    """(syn, m) pair: operation name plus its argument shape."""

    syn: str
    m: tuple


def plan(statement: str) -> QueryPlan:
    p = _Parser(statement)
    head = p.peek()
    if head.kind != "kw":
        p.fail("SELECT, INSERT or DELETE")
    word = head.text.lower()
    if word == "select":
        return _plan_select(p)
    if word == "insert":
        return _plan_insert(p)
    if word == "delete":
        return _plan_delete(p)
    p.fail("SELECT, INSERT or DELETE")


def _plan_select(p: _Parser) -> QueryPlan:
    p.keyword("select")
    distinct = False
    if p.peek().kind == "kw" and p.peek().text.lower() == "distinct":
        p.next()
        distinct = True
    out_col = p.ident()
    p.keyword("from")
    table = p.ident()
    if not distinct and p.peek().kind == "kw" \
            and p.peek().text.lower() == "join":
        p.next()
        table2 = p.ident()
        p.keyword("on")
        left = p.ident()
        p.sym("=")
        right = p.ident()
        p.keyword("where")
        kw_col = p.ident()
        p.sym("=")
        w = p.literal()
        p.end()
        return QueryPlan(SYN_JOIN, (table, table2,
                                    (kw_col, w, left),
                                    (right, b"0", out_col)))
    p.keyword("where")
    kw_col = p.ident()
    p.sym("=")
    w = p.literal()
    p.end()
    syn = SYN_DSRCH if distinct else SYN_SRCH
    return QueryPlan(syn, (table, (kw_col, w, out_col)))


def _plan_insert(p: _Parser) -> QueryPlan:
    p.keyword("insert")
    p.keyword("into")
    table = p.ident()
    p.sym("(")
    kw_col = p.ident()
    p.sym(",")
    val_col = p.ident()
    p.sym(")")
    p.keyword("value", "values")
    p.sym("(")
    w = p.literal()
    p.sym(",")
    v = p.literal()
    p.sym(")")
    p.end()
    return QueryPlan(SYN_INS, (table, (kw_col, w, val_col, v)))


def _plan_delete(p: _Parser) -> QueryPlan:
    p.keyword("delete")
    p.keyword("from")
    table = p.ident()
    p.keyword("where")
    kw_col = p.ident()
    p.sym("=")
    w = p.literal()
    p.keyword("and")
    val_col = p.ident()
    p.sym("=")
    v = p.literal()
    p.end()
    return QueryPlan(SYN_DEL, (table, (kw_col, w, val_col, v)))


def _lit(value: bytes) -> str:
    text = value.decode("utf-8", errors="replace")
    return text if text.isdigit() else f"'{text}'"


def unparse(query: QueryPlan) -> str:
    """Canonical statement text; plan(unparse(q)) == q for valid plans."""
    if query.syn == SYN_DSRCH:
        t, (kc, w, vc) = query.m
        return f"SELECT DISTINCT {vc} FROM {t} WHERE {kc} = {_lit(w)}"
    if query.syn == SYN_SRCH:
        t, (kc, w, vc) = query.m
        return f"SELECT {vc} FROM {t} WHERE {kc} = {_lit(w)}"
    if query.syn == SYN_INS:
        t, (kc, w, vc, v) = query.m
        return (f"INSERT INTO {t} ({kc}, {vc}) "
                f"VALUE ({_lit(w)}, {_lit(v)})")
    if query.syn == SYN_DEL:
        t, (kc, w, vc, v) = query.m
        return (f"DELETE FROM {t} WHERE {kc} = {_lit(w)} "
                f"AND {vc} = {_lit(v)}")
    if query.syn == SYN_JOIN:
        t1, t2, (kc, w, jc1), (jc2, _, vc) = query.m
        return (f"SELECT {vc} FROM {t1} JOIN {t2} ON {jc1} = {jc2} "
                f"WHERE {kc} = {_lit(w)}")
    raise ValueError(f"unknown plan kind {query.syn!r}")


# -- registry and execution -------------------------------------------------

@dataclass(frozen=True)
class TableConfig:
    table: str
    keyword_column: str
    value_column: str
    value_order: str = ORDER_LEX
    bf_n: int = 2 ** 20
    bf_p: float = 1e-5
    d_max: int = 1000

    def __post_init__(self):
        if self.value_order not in (ORDER_LEX, ORDER_NUMERIC):
            raise ValueError(
                f"value_order must be {ORDER_LEX!r} or {ORDER_NUMERIC!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.table, self.keyword_column, self.value_column)

    def manifest_line(self) -> str:
        return (f"{self.table} {self.keyword_column} {self.value_column} "
                f"{self.value_order} {self.bf_n} {self.bf_p:g} {self.d_max}")


def parse_manifest_line(line: str) -> TableConfig:
    parts = line.split()
    if len(parts) != 7:
        raise ValueError(f"manifest line needs 7 fields, got {len(parts)}: "
                         f"{line!r}")
    return TableConfig(parts[0], parts[1], parts[2], parts[3],
                       int(parts[4]), float(parts[5]), int(parts[6]))


@dataclass
class TableInstance:
    config: TableConfig
    state: ClientState
    # per keyword: value -> live copy count (the quantity vector)
    qvec: dict[bytes, dict[bytes, int]] = field(default_factory=dict)

    def ordered(self, counts: dict[bytes, int]) -> list[bytes]:
        if self.config.value_order == ORDER_NUMERIC:
            try:
                return sorted(counts, key=lambda v: int(v.decode("ascii")))
            except (UnicodeDecodeError, ValueError) as exc:
                raise QueryError(
                    f"non-numeric value in numeric-ordered column "
                    f"{self.config.value_column}: {exc}") from exc
        return sorted(counts)


class Registry:
    """All registered encrypted indexes, addressable by column triple."""

    def __init__(self):
        self.instances: dict[tuple[str, str, str], TableInstance] = {}

    def register(self, config: TableConfig,
                 sigma_depth: int = 20,
                 revoke_p: float = 1e-3) -> TableInstance:
        if config.key in self.instances:
            raise QueryError(f"instance already registered: {config.key}")
        state, _ = cl.setup(ClientConfig(
            bf_n=config.bf_n, bf_p=config.bf_p, d_max=config.d_max,
            revoke_p=revoke_p, sigma_depth=sigma_depth))
        instance = TableInstance(config, state)
        self.instances[config.key] = instance
        return instance

    def add_instance(self, instance: TableInstance) -> None:
        self.instances[instance.config.key] = instance

    def instance_for(self, table: str, keyword_column: str,
                     value_column: str) -> TableInstance:
        key = (table, keyword_column, value_column)
        instance = self.instances.get(key)
        if instance is None:
            known = ", ".join("/".join(k) for k in self.instances) or "none"
            raise QueryError(
                f"no index registered for {'/'.join(key)} (registered: {known})")
        return instance

    def manifest(self) -> str:
        lines = [inst.config.manifest_line()
                 for inst in self.instances.values()]
        return "\n".join(lines) + ("\n" if lines else "")


def _distinct(instance: TableInstance, keyword: bytes, edb) -> set[bytes]:
    try:
        return cl.search(instance.state, keyword, edb)
    except UnknownKeywordError:
        return set()


def _expanded(instance: TableInstance, keyword: bytes, edb) -> list[bytes]:
    distinct = _distinct(instance, keyword, edb)
    counts = instance.qvec.get(keyword, {})
    if set(counts) != distinct:
        raise IntegrityError(
            f"quantity vector disagrees with index for keyword {keyword!r}: "
            f"{sorted(counts)} vs {sorted(distinct)}")
    out = []
    for v in instance.ordered(counts):
        out.extend([v] * counts[v])
    return out


def execute(registry: Registry, query: QueryPlan, edb):
    """Run one plan; returns set (Dsrch), list (srch/join) or None."""
    if query.syn == SYN_INS:
        table, (kw_col, w, val_col, v) = query.m
        instance = registry.instance_for(table, kw_col, val_col)
        cl.update(instance.state, cl.ADD, w, v, edb)
        counts = instance.qvec.setdefault(w, {})
        counts[v] = counts.get(v, 0) + 1
        return None
    if query.syn == SYN_DEL:
        table, (kw_col, w, val_col, v) = query.m
        instance = registry.instance_for(table, kw_col, val_col)
        cl.update(instance.state, cl.DELETE, w, v, edb)
        counts = instance.qvec.get(w)
        if counts is not None:
            counts.pop(v, None)
        return None
    if query.syn == SYN_DSRCH:
        table, (kw_col, w, val_col) = query.m
        return _distinct(registry.instance_for(table, kw_col, val_col), w, edb)
    if query.syn == SYN_SRCH:
        table, (kw_col, w, val_col) = query.m
        return _expanded(registry.instance_for(table, kw_col, val_col), w, edb)
    if query.syn == SYN_JOIN:
        t1, t2, (kw_col, w, join_col), (join_col2, _, val_col) = query.m
        stage1 = _expanded(registry.instance_for(t1, kw_col, join_col), w, edb)
        stage2_instance = registry.instance_for(t2, join_col2, val_col)
        out: list[bytes] = []
        for link in stage1:
            out.extend(_expanded(stage2_instance, link, edb))
        return out
    raise ValueError(f"unknown plan kind {query.syn!r}")


def exec_statement(registry: Registry, statement: str, edb):
    return execute(registry, plan(statement), edb)
