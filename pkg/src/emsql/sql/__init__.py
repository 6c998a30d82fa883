"""Frontend for the recursive WITH dialect: parsing, printing, validation, lowering."""

from .ast import Branch, ComputedBy, Select, SelectItem, SubqueryRef, TableRef, UnionOp, WithQuery
from .lower import DEFAULT_MAX_RECURSION, LogicalPlan, compile_script, lower, lower_select
from .parser import parse, parse_expression, parse_select
from .printer import format_expr, pretty_print
from .validate import DependencyGraph, validate

__all__ = [
    "Branch",
    "ComputedBy",
    "DEFAULT_MAX_RECURSION",
    "DependencyGraph",
    "LogicalPlan",
    "Select",
    "SelectItem",
    "SubqueryRef",
    "TableRef",
    "UnionOp",
    "WithQuery",
    "compile_script",
    "format_expr",
    "lower",
    "lower_select",
    "parse",
    "parse_expression",
    "parse_select",
    "pretty_print",
    "validate",
]
