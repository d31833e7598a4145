"""Reference evaluator: normal-order reduction with δ-rules and list activation.

The fabric is checked against this module. It also provides the Church
expansion used for the alternative node counts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from django.conf import settings

from .errors import ChurchEncodingError, ConfigError, InvalidDeltaOperand, StepBudgetExceeded
from .syntax import (
    DEFAULT_VALUE_WIDTH,
    Application,
    Arith,
    ArithOp,
    DepthOrigin,
    Function,
    GoTo,
    ListCell,
    Name,
    NullTail,
    Term,
    cell_depth,
    chain_cells,
    contains_list,
    count_nodes,
    free_names,
    make_label,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    value_width: int = DEFAULT_VALUE_WIDTH
    activated_depth: Optional[int] = None
    depth_origin: str = DepthOrigin.INNERMOST
    max_steps: int = 10000
    name_seed: int = 0

    def __post_init__(self):
        if self.value_width < 2:
            raise ConfigError(f"value width must be at least 2 bits, got {self.value_width}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be at least 1, got {self.max_steps}")
        if self.activated_depth is not None and self.activated_depth < 0:
            raise ConfigError(f"activated depth must be non-negative, got {self.activated_depth}")
        if self.depth_origin not in DepthOrigin.values:
            raise ConfigError(f"unknown depth origin {self.depth_origin!r}")

    @classmethod
    def from_settings(cls, **overrides) -> "EvalConfig":
        values = {
            "value_width": settings.FABRIC_VALUE_WIDTH,
            "depth_origin": settings.FABRIC_DEPTH_ORIGIN,
            "max_steps": settings.FABRIC_MAX_STEPS,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass(frozen=True)
class EvalResult:
    normal_form: Term
    steps: int
    suspended: bool


def wrap(value: int, width: int) -> int:
    """Two's complement wrap of ``value`` to ``width`` bits."""
    modulus = 1 << width
    half = modulus >> 1
    return (value + half) % modulus - half


def compare_selects_left(op: str, value: int) -> bool:
    if op == ArithOp.GREAT_ZERO:
        return value > 0
    if op == ArithOp.LESS_ZERO:
        return value < 0
    return value == 0


class _Reducer:
    def __init__(self, cfg: EvalConfig):
        self.cfg = cfg
        self.steps = 0
        self.serial = cfg.name_seed

    def tick(self):
        self.steps += 1
        if self.steps > self.cfg.max_steps:
            raise StepBudgetExceeded(self.cfg.max_steps)

    def fresh(self, base: str) -> str:
        self.serial += 1
        return make_label(base, self.serial)

    def active_item(self, head: ListCell) -> Optional[Term]:
        if self.cfg.activated_depth is None:
            return None
        cells = chain_cells(head)
        for index, cell in enumerate(cells):
            if cell_depth(index, len(cells), self.cfg.depth_origin) == self.cfg.activated_depth:
                return cell.item
        return None

    def whnf(self, term: Term) -> Term:
        while True:
            if isinstance(term, GoTo):
                term = term.target
            elif isinstance(term, ListCell):
                item = self.active_item(term)
                if item is None:
                    return term
                self.tick()
                term = item
            elif isinstance(term, Application):
                head = self.whnf(term.operator)
                if isinstance(head, Function):
                    self.tick()
                    term = self.substitute(head.body, head.binder, term.operand)
                elif isinstance(head, Arith) and head.is_comparison:
                    ancestor = self.normalize(term.operand)
                    if isinstance(ancestor, Name) and ancestor.is_numeric:
                        self.tick()
                        term = head.left if compare_selects_left(head.op, ancestor.value) else head.right
                    elif isinstance(ancestor, Name):
                        # symbolic ancestor: no rule applies yet
                        return Application(head, ancestor)
                    else:
                        raise InvalidDeltaOperand(
                            f"comparison δ{head.op.value} applied to a non-name ancestor"
                        )
                else:
                    return Application(head, term.operand)
            elif isinstance(term, Arith) and not term.is_comparison:
                left = self.normalize(term.left)
                right = self.normalize(term.right)
                if not (isinstance(left, Name) and left.is_numeric
                        and isinstance(right, Name) and right.is_numeric):
                    raise InvalidDeltaOperand(f"δ{term.op.value} needs two numeric names")
                self.tick()
                if term.op == ArithOp.ADD:
                    return Name(wrap(left.value + right.value, self.cfg.value_width))
                return Name(wrap(left.value * right.value, self.cfg.value_width))
            else:
                return term

    def normalize(self, term: Term) -> Term:
        term = self.whnf(term)
        if isinstance(term, Function):
            return Function(term.binder, self.normalize(term.body))
        if isinstance(term, Application):
            if isinstance(term.operator, Arith) and term.operator.is_comparison:
                # stuck on a symbolic ancestor; branches stay unevaluated
                return term
            return Application(self.normalize(term.operator), self.normalize(term.operand))
        if isinstance(term, Arith):
            return Arith(term.op, self.normalize(term.left), self.normalize(term.right))
        return term

    def substitute(self, term: Term, name: str, value: Term) -> Term:
        if isinstance(term, Name):
            return value if term.value == name else term
        if isinstance(term, Function):
            if term.binder == name:
                return term
            if term.binder in free_names(value):
                renamed = self.fresh(term.binder)
                body = self.substitute(term.body, term.binder, Name(renamed))
                return Function(renamed, self.substitute(body, name, value))
            return Function(term.binder, self.substitute(term.body, name, value))
        if isinstance(term, Application):
            return Application(self.substitute(term.operator, name, value),
                               self.substitute(term.operand, name, value))
        if isinstance(term, ListCell):
            return ListCell(self.substitute(term.item, name, value),
                            self.substitute(term.tail, name, value))
        if isinstance(term, Arith):
            return Arith(term.op, self.substitute(term.left, name, value),
                         self.substitute(term.right, name, value))
        if isinstance(term, GoTo):
            return GoTo(self.substitute(term.target, name, value))
        return term


def reduce(term: Term, cfg: Optional[EvalConfig] = None) -> EvalResult:
    cfg = cfg or EvalConfig()
    reducer = _Reducer(cfg)
    normal_form = reducer.normalize(term)
    suspended = cfg.activated_depth is not None and contains_list(normal_form)
    logger.debug("oracle_done steps=%d suspended=%s", reducer.steps, suspended)
    return EvalResult(normal_form=normal_form, steps=reducer.steps, suspended=suspended)


# --- Church encodings --------------------------------------------------------

def church_numeral(value: int) -> Function:
    if value < 0:
        raise ChurchEncodingError(f"negative numeral {value} has no Church encoding")
    body: Term = Name("x")
    for _ in range(value):
        body = Application(Name("f"), body)
    return Function("f", Function("x", body))


CHURCH_PLUS = Function("m", Function("n", Function("f", Function("x", Application(
    Application(Name("m"), Name("f")),
    Application(Application(Name("n"), Name("f")), Name("x")),
)))))
CHURCH_MULT = Function("m", Function("n", Function("f", Application(
    Name("m"), Application(Name("n"), Name("f")),
))))


def church_expand(term: Term) -> Term:
    if isinstance(term, Name):
        return church_numeral(term.value) if term.is_numeric else term
    if isinstance(term, Function):
        return Function(term.binder, church_expand(term.body))
    if isinstance(term, Application):
        return Application(church_expand(term.operator), church_expand(term.operand))
    if isinstance(term, Arith):
        if term.op == ArithOp.ADD:
            combinator = CHURCH_PLUS
        elif term.op == ArithOp.MULT:
            combinator = CHURCH_MULT
        else:
            raise ChurchEncodingError(f"comparison δ{term.op.value} has no Church encoding")
        return Application(Application(combinator, church_expand(term.left)), church_expand(term.right))
    if isinstance(term, (ListCell, NullTail)):
        raise ChurchEncodingError("lists have no Church encoding")
    if isinstance(term, GoTo):
        return church_expand(term.target)
    raise TypeError(f"not a term: {term!r}")


def alt_node_count(term: Term) -> int:
    return count_nodes(church_expand(term))


# --- α-equivalence -----------------------------------------------------------

def alpha_equal(a: Term, b: Term) -> bool:
    return _alpha(a, b, {}, {}, 0)


def _alpha(a: Term, b: Term, left: dict, right: dict, level: int) -> bool:
    if isinstance(a, GoTo):
        return _alpha(a.target, b, left, right, level)
    if isinstance(b, GoTo):
        return _alpha(a, b.target, left, right, level)
    if type(a) is not type(b):
        return False
    if isinstance(a, Name):
        if a.is_numeric or b.is_numeric:
            return a.value == b.value
        bound_a, bound_b = left.get(a.value), right.get(b.value)
        if bound_a is None and bound_b is None:
            return a.value == b.value
        return bound_a == bound_b
    if isinstance(a, Function):
        return _alpha(a.body, b.body, {**left, a.binder: level}, {**right, b.binder: level}, level + 1)
    if isinstance(a, Application):
        return (_alpha(a.operator, b.operator, left, right, level)
                and _alpha(a.operand, b.operand, left, right, level))
    if isinstance(a, ListCell):
        return _alpha(a.item, b.item, left, right, level) and _alpha(a.tail, b.tail, left, right, level)
    if isinstance(a, Arith):
        return (a.op == b.op and _alpha(a.left, b.left, left, right, level)
                and _alpha(a.right, b.right, left, right, level))
    return True
