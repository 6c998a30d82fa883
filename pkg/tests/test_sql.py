from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emsql.engine import evaluate
from emsql.errors import ArityMismatch, ParseError, UnknownFunction, ValidationError
from emsql.models.base import script_text
from emsql.relation import Relation
from emsql.sql import ast
from emsql.sql.lexer import tokenize
from emsql.sql.lower import DEFAULT_MAX_RECURSION, compile_script, lower
from emsql.sql.parser import parse, parse_expression
from emsql.sql.printer import format_expr, pretty_print
from emsql.sql.validate import validate

CORPUS = ["transitive_closure.sql", "gmm_1d.sql", "gmm.sql", "mlr.sql", "moe.sql"]

COUNTER = "with R(n) as ((select 0) union all (select n+1 from R)) select * from R"


class TestLexer:
    def test_comments_and_case(self):
        toks = tokenize("SELECT x -- trailing\nFrom T")
        assert [t.value for t in toks if t.kind != "eof"] == ["select", "x", "from", "t"]

    def test_numbers(self):
        kinds = [(t.kind, t.value) for t in tokenize("1 2.5 1e-3 .5")][:-1]
        assert kinds == [("int", 1), ("real", 2.5), ("real", 1e-3), ("real", 0.5)]

    def test_bad_character_has_position(self):
        with pytest.raises(ParseError) as ei:
            tokenize("select\n  x # y")
        assert (ei.value.line, ei.value.column) == (2, 5)


class TestParser:
    def test_closure_script(self):
        q = parse(script_text("transitive_closure.sql"))
        assert isinstance(q, ast.WithQuery)
        assert q.union_mode.mode == "all"
        assert q.computed_by == ()
        assert q.name == "tc" and q.columns == ("f", "t")

    def test_one_dimensional_gmm_script(self):
        q = parse(script_text("gmm_1d.sql"))
        assert q.union_mode == ast.UnionOp("update", ("k",))
        assert [cb.name for cb in q.computed_by] == ["r", "n", "c"]
        assert q.max_recursion == 10

    def test_counter(self):
        q = parse(COUNTER)
        assert q.max_recursion is None
        assert len(q.initial_branches) == 1 and len(q.recursive_branches) == 1

    def test_keywords_case_insensitive(self):
        assert parse(COUNTER.upper().replace("R(N)", "R(n)")) == parse(COUNTER)

    @pytest.mark.parametrize(
        "src, where",
        [
            ("select from t", (1, 8)),
            ("with r(a) as ((select 1) union (select 2)) select * from r", (1, 32)),
            ("select a from t where", (1, 22)),
            ("select a,\nfrom t", (2, 1)),
        ],
    )
    def test_syntax_error_position(self, src, where):
        with pytest.raises(ParseError) as ei:
            parse(src)
        assert (ei.value.line, ei.value.column) == where

    def test_reserved_word_misuse(self):
        with pytest.raises(ParseError, match="reserved word 'SELECT'"):
            parse("select select from t")

    def test_chained_comparison_rejected(self):
        with pytest.raises(ParseError):
            parse("select a from t where 1 < a < 3")


class TestRoundTrip:
    @pytest.mark.parametrize("name", CORPUS)
    def test_corpus_fixed_point(self, name):
        once = parse(script_text(name))
        text = pretty_print(once)
        assert parse(text) == once
        assert pretty_print(parse(text)) == text

    def test_negative_operands_survive(self):
        for src in ["a - -b", "-(-a)", "a - (b - c)", "(a + b) * c", "-a * b", "a / (b * c)"]:
            e = parse_expression(src)
            assert parse_expression(format_expr(e)) == e

    @given(st.recursive(
        st.sampled_from(["a", "b", "1", "2.5", "x.y"]),
        lambda sub: st.tuples(sub, st.sampled_from(["+", "-", "*", "/"]), sub).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
        | sub.map(lambda s: f"-({s})")
        | st.tuples(sub, sub).map(lambda t: f"pow({t[0]}, {t[1]})"),
        max_leaves=8,
    ))
    def test_random_expressions(self, src):
        e = parse_expression(src)
        assert parse_expression(format_expr(e)) == e


def code_of(src, base=None):
    with pytest.raises(ValidationError) as ei:
        validate(parse(src), base)
    return ei.value.code, ei.value.name


class TestValidator:
    def test_gmm_graph(self):
        g = validate(parse(script_text("gmm_1d.sql")))
        assert g.order == ("r", "n", "c")
        assert g.sources("r") == {"gmm", "x"}
        assert g.sources("n") == {"r", "x"}
        assert g.sources("c") == {"r", "x", "n"}
        assert g.sources("gmm.next") == {"n", "c"}
        assert g.sources("gmm") == {"gmm.next", "init_para"}

    def test_multiple_union_by_update(self):
        src = "with r(a) as ((select 1) union by update a (select a from r) union by update a (select a from r)) select * from r"
        assert code_of(src) == ("MultipleUnionByUpdate", "r")

    def test_update_mixed_with_union_all(self):
        src = "with r(a) as ((select 1) union all (select a from r) union by update a (select a from r)) select * from r"
        assert code_of(src)[0] == "MultipleUnionByUpdate"

    def test_recursive_computed_by(self):
        src = "with r(a) as ((select 1) union by update a (select a from t computed by t(a) as select a from t)) select * from r"
        assert code_of(src) == ("RecursiveComputedBy", "t")

    def test_computed_by_reading_recursive_relation_is_allowed(self):
        src = "with r(a) as ((select 1) union by update a (select a from t computed by t(a) as select a from r)) select * from r"
        validate(parse(src))

    def test_cyclic_computed_by(self):
        src = (
            "with r(a) as ((select 1) union by update a (select a from u computed by "
            "t(a) as select a from u u(a) as select a from t)) select * from r"
        )
        assert code_of(src)[0] == "CyclicComputedBy"

    def test_unknown_relation(self):
        assert code_of(script_text("transitive_closure.sql"), base=["x"]) == ("UnknownRelation", "e")

    def test_update_key_not_in_columns(self):
        src = "with r(a) as ((select 1) union by update b (select a from r)) select * from r"
        assert code_of(src) == ("UpdateKeyNotInColumns", "b")

    def test_missing_initial_query(self):
        assert code_of("with r(a) as ((select a from r) union all (select a from r)) select * from r")[0] == "MissingInitialQuery"

    def test_column_count(self):
        assert code_of("with r(a, b) as ((select 1) union all (select a, b from r)) select * from r")[0] == "ColumnCountMismatch"

    def test_window_in_final_query(self):
        src = "with r(a) as ((select 1) union all (select a + 1 from r where a < 3)) select sum(a) over (partition by a) from r"
        assert code_of(src)[0] == "WindowNotAllowed"

    def test_known_tables_pass(self):
        validate(parse(script_text("gmm.sql")), base_tables=["x", "init_para"])


class TestLowering:
    def test_default_bound(self):
        assert compile_script(COUNTER).max_recursion == DEFAULT_MAX_RECURSION == 100

    def test_temporaries_in_dependency_order(self):
        plan = compile_script(script_text("gmm.sql"))
        assert [t.name for t in plan.temporaries] == ["r", "n", "c"]
        assert plan.mode == "update" and plan.key == ("k",)

    def test_unknown_function(self):
        with pytest.raises(UnknownFunction):
            compile_script("select frob(a) from t")

    def test_arity(self):
        with pytest.raises(ArityMismatch):
            compile_script("select norm(a) from t")

    def test_window_denominators(self):
        rows = Relation.from_rows(["id", "w"], [(1, 0.2), (1, 0.3), (2, 1.0)])
        out, _ = evaluate(compile_script("select id, w, sum(w) over (partition by id) as d from t"), {"t": rows})
        assert sorted((i, round(d, 12)) for i, _, d in out.rows()) == [(1, 0.5), (1, 0.5), (2, 1.0)]

    @given(st.lists(st.tuples(st.integers(0, 6), st.floats(0.01, 100.0)), min_size=1, max_size=100))
    def test_window_normalization_matches_two_pass(self, data):
        rel = Relation.from_rows(["id", "w"], [(i, w) for i, w in data])
        out, _ = evaluate(compile_script("select id, w / sum(w) over (partition by id) as p from t"), {"t": rel})
        totals = {}
        for i, w in data:
            totals[i] = totals.get(i, 0.0) + w
        expect = sorted((i, w / totals[i]) for i, w in data)
        got = sorted(out.rows())
        assert [g[0] for g in got] == [e[0] for e in expect]
        assert np.allclose([g[1] for g in got], [e[1] for e in expect], rtol=1e-12)

    def test_closure_plan_shape(self):
        plan = lower(parse(script_text("transitive_closure.sql")))
        assert len(plan.init) == 1 and len(plan.step) == 1
        assert plan.mode == "all" and plan.temporaries == []
