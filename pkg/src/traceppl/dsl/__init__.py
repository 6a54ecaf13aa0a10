"""Tilde-notation model language: lexer, parser, AST and printer."""

from . import ast
from .lexer import Token, lex
from .parser import BUILTINS, DISTRIBUTION_NAMES, parse_expr, parse_file, parse_model
from .printer import format_expr, pretty_print

__all__ = ["ast", "Token", "lex", "parse_model", "parse_file", "parse_expr",
           "pretty_print", "format_expr", "BUILTINS", "DISTRIBUTION_NAMES"]
