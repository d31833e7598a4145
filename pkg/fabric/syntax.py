"""Surface syntax of the extended λ-calculus: terms, parser, printer, node costs.

Accepted forms: ``(λx.E)``, ``(M N)``, ``(γ I.T)``, ``(δ+ a.b)``, ``(δ* a.b)``,
``(δ> L.R)``, ``(δ< L.R)``, ``(δ== L.R)``, ``∅``, integers and alphabetic names.
ASCII aliases: ``\\`` for λ, ``/g`` for γ, ``/d`` for δ, ``null`` for ∅.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

from django.db import models

from .errors import ParseError, ValueRangeError

DEFAULT_VALUE_WIDTH = 8
# Internal binder labels carry a "~N" suffix; the tilde never parses, so they
# cannot collide with user names.
LABEL_SEPARATOR = "~"


class ArithOp(models.TextChoices):
    ADD = "+", "Add"
    MULT = "*", "Mult"
    GREAT_ZERO = ">", "GreatZero"
    LESS_ZERO = "<", "LessZero"
    EQUAL_ZERO = "==", "EqualZero"


COMPARISON_OPS = frozenset({ArithOp.GREAT_ZERO, ArithOp.LESS_ZERO, ArithOp.EQUAL_ZERO})
OP_ALIASES = {"+": ArithOp.ADD, "*": ArithOp.MULT, "×": ArithOp.MULT, ">": ArithOp.GREAT_ZERO,
              "<": ArithOp.LESS_ZERO, "==": ArithOp.EQUAL_ZERO, "=": ArithOp.EQUAL_ZERO}


@dataclass(frozen=True)
class Name:
    value: int | str

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, int)


@dataclass(frozen=True)
class Function:
    binder: str
    body: "Term"


@dataclass(frozen=True)
class Application:
    operator: "Term"
    operand: "Term"


@dataclass(frozen=True)
class NullTail:
    pass


@dataclass(frozen=True)
class ListCell:
    item: "Term"
    tail: Union["ListCell", NullTail]


@dataclass(frozen=True)
class Arith:
    op: ArithOp
    left: "Term"
    right: "Term"

    @property
    def is_comparison(self) -> bool:
        return self.op in COMPARISON_OPS


@dataclass(frozen=True)
class GoTo:
    target: "Term"


Term = Union[Name, Function, Application, ListCell, NullTail, Arith, GoTo]
NULL_TAIL = NullTail()


def value_range(width: int) -> tuple[int, int]:
    half = 1 << (width - 1)
    return -half, half - 1


def base_label(label: str) -> str:
    return label.split(LABEL_SEPARATOR, 1)[0]


def make_label(base: str, serial: int) -> str:
    return f"{base_label(base)}{LABEL_SEPARATOR}{serial}"


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lambda>λ|\\)
  | (?P<gamma>γ|/g)
  | (?P<delta>δ|/d)
  | (?P<null>∅)
  | (?P<int>-?\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>==|=|\+|\*|×|>|<)
  | (?P<punct>[().])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        value = match.group()
        if kind == "punct":
            kind = value
        elif kind == "name" and value == "null":
            kind = "null"
        if kind != "ws":
            tokens.append(_Token(kind, value, pos))
        pos = match.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, value_width: int):
        self.tokens = _tokenize(text)
        self.index = 0
        self.low, self.high = value_range(value_width)
        self.value_width = value_width

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def peek(self, offset: int = 1) -> _Token:
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        token = self.current
        self.index += 1
        return token

    def expect(self, kind: str, what: str) -> _Token:
        if self.current.kind != kind:
            found = self.current.text or "end of input"
            raise ParseError(f"expected {what}, found {found!r}", self.current.pos)
        return self.advance()

    def parse(self) -> Term:
        term = self.term()
        if self.current.kind != "eof":
            raise ParseError(f"unexpected {self.current.text!r}", self.current.pos)
        return term

    def term(self) -> Term:
        if self.current.kind == "lambda":
            self.advance()
            binder = self.expect("name", "binder name")
            self.expect(".", "'.' after binder")
            return Function(binder.text, self.term())
        return self.application()

    def application(self) -> Term:
        term = self.atom()
        while True:
            kind = self.current.kind
            if kind == "lambda":
                return Application(term, self.term())
            if kind not in ("name", "int", "null", "("):
                return term
            term = Application(term, self.atom())

    def atom(self) -> Term:
        token = self.current
        if token.kind == "name":
            self.advance()
            return Name(token.text)
        if token.kind == "int":
            self.advance()
            return Name(self.numeral(token))
        if token.kind == "null":
            raise ParseError("∅ may only end a list or stand as a list item", token.pos)
        if token.kind == "(":
            self.advance()
            if self.current.kind == "gamma":
                return self.list_cell()
            if self.current.kind == "delta":
                return self.arith()
            inner = self.term()
            self.expect(")", "')'")
            return inner
        found = token.text or "end of input"
        raise ParseError(f"expected an expression, found {found!r}", token.pos)

    def numeral(self, token: _Token) -> int:
        value = int(token.text)
        if not self.low <= value <= self.high:
            raise ValueRangeError(
                f"literal {value} does not fit {self.value_width}-bit two's complement", token.pos
            )
        return value

    def list_cell(self) -> ListCell:
        self.advance()
        if self.current.kind == "null":
            self.advance()
            item: Term = NULL_TAIL
        else:
            item = self.term()
        self.expect(".", "'.' between list item and tail")
        tail = self.list_tail()
        self.expect(")", "')' closing list")
        return ListCell(item, tail)

    def list_tail(self) -> ListCell | NullTail:
        token = self.current
        if token.kind == "null" or (token.kind == "int" and int(token.text) == 0):
            self.advance()
            return NULL_TAIL
        if token.kind == "(" and self.peek().kind == "gamma":
            self.advance()
            return self.list_cell()
        raise ParseError("list tail must be a list or NULL", token.pos)

    def arith(self) -> Arith:
        delta = self.advance()
        if self.current.kind != "op":
            raise ParseError("δ-expression is missing its operator", delta.pos)
        op = OP_ALIASES[self.advance().text]
        if self.current.kind in (")", ".", "eof"):
            raise ParseError("δ-expression is missing an operand", self.current.pos)
        left = self.term()
        if self.current.kind != ".":
            raise ParseError("δ-expression is missing an operand", self.current.pos)
        self.advance()
        if self.current.kind in (")", "eof"):
            raise ParseError("δ-expression is missing an operand", self.current.pos)
        right = self.term()
        self.expect(")", "')' closing δ-expression")
        return Arith(op, left, right)


def parse(text: str, *, value_width: int = DEFAULT_VALUE_WIDTH) -> Term:
    return _Parser(text, value_width).parse()


# --- printer -----------------------------------------------------------------

def print_term(term: Term) -> str:
    if isinstance(term, Name):
        return str(term.value)
    if isinstance(term, NullTail):
        return "∅"
    if isinstance(term, Function):
        return f"(λ{term.binder}.{print_term(term.body)})"
    if isinstance(term, Application):
        return f"({print_term(term.operator)} {print_term(term.operand)})"
    if isinstance(term, ListCell):
        return f"(γ {print_term(term.item)}.{print_term(term.tail)})"
    if isinstance(term, Arith):
        return f"(δ{term.op.value} {print_term(term.left)}.{print_term(term.right)})"
    if isinstance(term, GoTo):
        return print_term(term.target)
    raise TypeError(f"not a term: {term!r}")


# --- static properties -------------------------------------------------------

def count_nodes(term: Term) -> int:
    """Fabric node cost; a function pays for itself and its binder name node."""
    if isinstance(term, NullTail):
        return 0
    if isinstance(term, Name):
        return 1
    if isinstance(term, Function):
        return 2 + count_nodes(term.body)
    if isinstance(term, Application):
        return 1 + count_nodes(term.operator) + count_nodes(term.operand)
    if isinstance(term, ListCell):
        return 1 + count_nodes(term.item) + count_nodes(term.tail)
    if isinstance(term, Arith):
        return 1 + count_nodes(term.left) + count_nodes(term.right)
    if isinstance(term, GoTo):
        return 1 + count_nodes(term.target)
    raise TypeError(f"not a term: {term!r}")


def iter_subterms(term: Term) -> Iterator[Term]:
    stack = [term]
    while stack:
        current = stack.pop()
        yield current
        if isinstance(current, Function):
            stack.append(current.body)
        elif isinstance(current, Application):
            stack.extend((current.operand, current.operator))
        elif isinstance(current, ListCell):
            stack.extend((current.tail, current.item))
        elif isinstance(current, Arith):
            stack.extend((current.right, current.left))
        elif isinstance(current, GoTo):
            stack.append(current.target)


def free_names(term: Term) -> set[str]:
    if isinstance(term, Name):
        return set() if term.is_numeric else {term.value}
    if isinstance(term, Function):
        return free_names(term.body) - {term.binder}
    if isinstance(term, Application):
        return free_names(term.operator) | free_names(term.operand)
    if isinstance(term, ListCell):
        return free_names(term.item) | free_names(term.tail)
    if isinstance(term, Arith):
        return free_names(term.left) | free_names(term.right)
    if isinstance(term, GoTo):
        return free_names(term.target)
    return set()


def contains_list(term: Term) -> bool:
    return any(isinstance(sub, ListCell) for sub in iter_subterms(term))


def strip_labels(term: Term) -> Term:
    """Drop internal ``~N`` suffixes everywhere (exact inverse of compile-time labelling)."""
    if isinstance(term, Name):
        return term if term.is_numeric else Name(base_label(term.value))
    if isinstance(term, Function):
        return Function(base_label(term.binder), strip_labels(term.body))
    if isinstance(term, Application):
        return Application(strip_labels(term.operator), strip_labels(term.operand))
    if isinstance(term, ListCell):
        return ListCell(strip_labels(term.item), strip_labels(term.tail))
    if isinstance(term, Arith):
        return Arith(term.op, strip_labels(term.left), strip_labels(term.right))
    if isinstance(term, GoTo):
        return GoTo(strip_labels(term.target))
    return term


def tidy_names(term: Term) -> Term:
    """Give bound variables readable names without changing the term's meaning."""
    return _tidy(term, {}, frozenset(free_names(term)))


def _tidy(term: Term, renames: dict[str, str], taken: frozenset[str]) -> Term:
    if isinstance(term, Name):
        if term.is_numeric:
            return term
        return Name(renames.get(term.value, term.value))
    if isinstance(term, Function):
        base = base_label(term.binder)
        candidate = base
        serial = 1
        while candidate in taken:
            candidate = f"{base}{serial}"
            serial += 1
        inner = dict(renames)
        inner[term.binder] = candidate
        return Function(candidate, _tidy(term.body, inner, taken | {candidate}))
    if isinstance(term, Application):
        return Application(_tidy(term.operator, renames, taken), _tidy(term.operand, renames, taken))
    if isinstance(term, ListCell):
        return ListCell(_tidy(term.item, renames, taken), _tidy(term.tail, renames, taken))
    if isinstance(term, Arith):
        return Arith(term.op, _tidy(term.left, renames, taken), _tidy(term.right, renames, taken))
    if isinstance(term, GoTo):
        return _tidy(term.target, renames, taken)
    return term


# --- list depths -------------------------------------------------------------

class DepthOrigin(models.TextChoices):
    INNERMOST = "innermost", "Innermost cell is depth 0"
    OUTERMOST = "outermost", "First written cell is depth 0"


def chain_cells(head: ListCell) -> list[ListCell]:
    cells = []
    current: Term = head
    while isinstance(current, ListCell):
        cells.append(current)
        current = current.tail
    return cells


def cell_depth(index: int, length: int, origin: str) -> int:
    """Depth of the cell at ``index`` (0 = chain head) in a chain of ``length`` cells."""
    if origin == DepthOrigin.OUTERMOST:
        return index
    return length - 1 - index
