"""Recursive-descent parser for the recursive WITH dialect.

Grammar (keywords case-insensitive, identifiers folded to lower case)::

    statement   := with_query | select
    with_query  := WITH name '(' names ')' AS '(' branch {union branch}
                   [MAXRECURSION int] ')' select
    union       := UNION ALL | UNION BY UPDATE names
    branch      := '(' select [computed] ')' | select [computed]
    computed    := COMPUTED BY definition {[','] definition}
    definition  := name '(' names ')' AS (select | '(' select ')')
    select      := SELECT ('*' | item {',' item}) [FROM source {',' source}]
                   [WHERE expr] [GROUP BY expr {',' expr}]
    item        := VALUES '(' expr {',' expr} ')' | expr [AS name]
    source      := name [[AS] name] | '(' select ')' [AS] name
"""

from __future__ import annotations

from ..errors import ParseError
from ..expr import Binary, Call, Column, Expr, Literal, Unary, Window
from .ast import Branch, ComputedBy, Select, SelectItem, Statement, SubqueryRef, TableRef, UnionOp, WithQuery
from .lexer import Token, tokenize

_CMP = ("=", "<>", "<", "<=", ">", ">=")


class Parser:
    def __init__(self, src: str):
        self.tokens = tokenize(src)
        self.i = 0

    # token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def _describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "keyword" and self.tok.value in words

    def at_sym(self, *syms: str) -> bool:
        return self.tok.kind == "symbol" and self.tok.value in syms

    def next(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            raise self.error(f"expected {word.upper()}, found {self._describe(self.tok)}")
        return self.next()

    def expect_sym(self, sym: str) -> Token:
        if not self.at_sym(sym):
            raise self.error(f"expected {sym!r}, found {self._describe(self.tok)}")
        return self.next()

    def ident(self, what: str = "identifier") -> str:
        tok = self.tok
        if tok.kind == "ident":
            self.i += 1
            return tok.value
        if tok.kind == "keyword":
            raise self.error(f"reserved word {tok.text.upper()!r} cannot be used as {what}")
        raise self.error(f"expected {what}, found {self._describe(tok)}")

    def ident_list(self, what: str = "column name") -> tuple[str, ...]:
        names = [self.ident(what)]
        while self.at_sym(","):
            self.next()
            names.append(self.ident(what))
        return tuple(names)

    # statements ---------------------------------------------------------

    def statement(self) -> Statement:
        stmt = self.with_query() if self.at_kw("with") else self.select()
        if self.at_sym(";"):
            self.next()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self._describe(self.tok)} after end of statement")
        return stmt

    def with_query(self) -> WithQuery:
        start = self.expect_kw("with")
        name = self.ident("relation name")
        self.expect_sym("(")
        columns = self.ident_list()
        self.expect_sym(")")
        self.expect_kw("as")
        self.expect_sym("(")
        branches = [self.branch()]
        unions = []
        while self.at_kw("union"):
            unions.append(self.union_op())
            branches.append(self.branch())
        max_rec = None
        if self.at_kw("maxrecursion"):
            self.next()
            tok = self.tok
            if tok.kind != "int" or tok.value < 1:
                raise self.error("MAXRECURSION expects a positive integer")
            self.next()
            max_rec = tok.value
        self.expect_sym(")")
        final = self.select()
        return WithQuery(name, columns, tuple(branches), tuple(unions), max_rec, final, pos=start.pos)

    def union_op(self) -> UnionOp:
        start = self.expect_kw("union")
        if self.at_kw("all"):
            self.next()
            return UnionOp("all", pos=start.pos)
        if self.at_kw("by"):
            self.next()
            self.expect_kw("update")
            return UnionOp("update", self.ident_list("key attribute"), pos=start.pos)
        raise self.error("expected ALL or BY UPDATE after UNION")

    def branch(self) -> Branch:
        start = self.tok
        if self.at_sym("(") and self.peek().kind == "keyword" and self.peek().value == "select":
            self.next()
            query = self.select()
            computed = self.computed_by()
            self.expect_sym(")")
        else:
            query = self.select()
            computed = self.computed_by()
        return Branch(query, computed, pos=start.pos)

    def computed_by(self) -> tuple[ComputedBy, ...]:
        if not self.at_kw("computed"):
            return ()
        self.next()
        self.expect_kw("by")
        defs = [self.definition()]
        while True:
            if self.at_sym(","):
                self.next()
                defs.append(self.definition())
            elif self.tok.kind == "ident" and self.peek().kind == "symbol" and self.peek().value == "(":
                defs.append(self.definition())
            else:
                break
        return tuple(defs)

    def definition(self) -> ComputedBy:
        start = self.tok
        name = self.ident("relation name")
        self.expect_sym("(")
        cols = self.ident_list()
        self.expect_sym(")")
        self.expect_kw("as")
        if self.at_sym("("):
            self.next()
            query = self.select()
            self.expect_sym(")")
        else:
            query = self.select()
        return ComputedBy(name, cols, query, pos=start.pos)

    def select(self) -> Select:
        start = self.expect_kw("select")
        star = False
        items: list[SelectItem] = []
        if self.at_sym("*"):
            self.next()
            star = True
        else:
            items.extend(self.item())
            while self.at_sym(","):
                self.next()
                items.extend(self.item())
        sources = []
        if self.at_kw("from"):
            self.next()
            sources.append(self.source())
            while self.at_sym(","):
                self.next()
                sources.append(self.source())
        where = None
        if self.at_kw("where"):
            self.next()
            where = self.expr()
        group = []
        if self.at_kw("group"):
            self.next()
            self.expect_kw("by")
            group.append(self.expr())
            while self.at_sym(","):
                self.next()
                group.append(self.expr())
        if star and not sources:
            raise self.error("SELECT * needs a FROM clause", start)
        return Select(tuple(items), star, tuple(sources), where, tuple(group), pos=start.pos)

    def item(self) -> list[SelectItem]:
        start = self.tok
        if self.at_kw("values"):
            self.next()
            self.expect_sym("(")
            out = [SelectItem(self.expr(), pos=start.pos)]
            while self.at_sym(","):
                self.next()
                out.append(SelectItem(self.expr(), pos=self.tok.pos))
            self.expect_sym(")")
            return out
        e = self.expr()
        alias = None
        if self.at_kw("as"):
            self.next()
            alias = self.ident("column alias")
        return [SelectItem(e, alias, pos=start.pos)]

    def source(self):
        start = self.tok
        if self.at_sym("("):
            self.next()
            query = self.select()
            self.expect_sym(")")
            if self.at_kw("as"):
                self.next()
            return SubqueryRef(query, self.ident("derived table alias"), pos=start.pos)
        name = self.ident("relation name")
        alias = None
        if self.at_kw("as"):
            self.next()
            alias = self.ident("alias")
        elif self.tok.kind == "ident" and not (self.peek().kind == "symbol" and self.peek().value in ("(", ".")):
            alias = self.next().value
        return TableRef(name, alias, pos=start.pos)

    # expressions --------------------------------------------------------

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.at_kw("or"):
            self.next()
            left = Binary("or", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.at_kw("and"):
            self.next()
            left = Binary("and", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.at_kw("not"):
            self.next()
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        if self.at_sym(*_CMP):
            op = self.next().value
            left = Binary(op, left, self.additive())
            if self.at_sym(*_CMP):
                raise self.error("comparisons cannot be chained; use parentheses")
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.at_sym("+", "-"):
            op = self.next().value
            left = Binary(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.at_sym("*", "/"):
            op = self.next().value
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.at_sym("-"):
            self.next()
            return Unary("-", self.unary())
        if self.at_sym("+"):
            self.next()
            return self.unary()
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind in ("int", "real", "string"):
            self.next()
            return Literal(tok.value)
        if self.at_sym("("):
            self.next()
            e = self.expr()
            self.expect_sym(")")
            return e
        if tok.kind == "ident":
            self.next()
            if self.at_sym("("):
                return self.call(tok.value)
            if self.at_sym("."):
                self.next()
                return Column(self.ident("column name"), tok.value)
            return Column(tok.value)
        if tok.kind == "keyword":
            raise self.error(f"reserved word {tok.text.upper()!r} cannot be used as an expression")
        raise self.error(f"expected an expression, found {self._describe(tok)}")

    def call(self, name: str) -> Expr:
        self.expect_sym("(")
        star = False
        args: list[Expr] = []
        if self.at_sym("*"):
            self.next()
            star = True
        elif not self.at_sym(")"):
            args.append(self.expr())
            while self.at_sym(","):
                self.next()
                args.append(self.expr())
        self.expect_sym(")")
        call = Call(name, tuple(args), star)
        if self.at_kw("over"):
            self.next()
            self.expect_sym("(")
            parts: list[Expr] = []
            if self.at_kw("partition"):
                self.next()
                self.expect_kw("by")
                parts.append(self.expr())
                while self.at_sym(","):
                    self.next()
                    parts.append(self.expr())
            self.expect_sym(")")
            return Window(call, tuple(parts))
        return call


def parse(src: str) -> Statement:
    """Parse one statement: a recursive WITH query or a plain SELECT."""
    return Parser(src).statement()


def parse_select(src: str) -> Select:
    stmt = parse(src)
    if not isinstance(stmt, Select):
        raise ParseError("expected a SELECT statement", 1, 1)
    return stmt


def parse_expression(src: str) -> Expr:
    p = Parser(src)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p._describe(p.tok)} after expression")
    return e
