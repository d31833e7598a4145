"""Binary key tables and the frames carried on the parent/left/right buses."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from django.db import models


class ExpressionKind(models.IntegerChoices):
    FREE = 0, "Free"
    NAME = 1, "Name"
    FUNCTION = 2, "Function"
    APPLICATION = 3, "Application"
    LIST = 4, "List"
    ADD = 5, "Add"
    MULT = 6, "Mult"
    GREAT_ZERO = 7, "GreatZero"
    LESS_ZERO = 8, "LessZero"
    EQUAL_ZERO = 9, "EqualZero"
    GOTO = 10, "GoTo"


# ReturnExpression must stay at 2: a list emitting depth word 2 aliases it.
class Opcode(models.IntegerChoices):
    NOP = 0, "Nop"
    NULLIFICATION = 1, "Nullification"
    RETURN_EXPRESSION = 2, "ReturnExpression"
    UPDATE_EXPRESSION = 3, "UpdateExpression"
    UPDATE_CHILD_LEFT = 4, "UpdateChildLeft"
    UPDATE_CHILD_RIGHT = 5, "UpdateChildRight"
    COMPARE_VALUE = 6, "CompareValue"
    DESCENDANT_TRANSFORMATION = 7, "DescendantTransformation"
    ANCESTOR_TRANSFORMATION = 8, "AncestorTransformation"
    IMMEDIATE_RESOLUTION = 9, "ImmediateResolution"
    ACTIVATE_DEPTH = 10, "ActivateDepth"
    UPDATE_DEPTH = 11, "UpdateDepth"
    ADD_BOTTOM_NODE = 12, "AddBottomNode"
    REMOVE_BOTTOM_NODE = 13, "RemoveBottomNode"


class ClusterMode(models.TextChoices):
    PAPER_FAITHFUL = "paper_faithful", "Depth shares the instruction word"
    DEDICATED_DEPTH = "dedicated_depth", "Separate depth field"


ARITHMETIC_KINDS = frozenset({ExpressionKind.ADD, ExpressionKind.MULT})
COMPARISON_KINDS = frozenset({ExpressionKind.GREAT_ZERO, ExpressionKind.LESS_ZERO, ExpressionKind.EQUAL_ZERO})
LIST_OPCODES = frozenset({Opcode.ACTIVATE_DEPTH, Opcode.UPDATE_DEPTH, Opcode.ADD_BOTTOM_NODE,
                          Opcode.REMOVE_BOTTOM_NODE})
# Travel child to parent; everything else travels parent to child.
UPWARD_OPCODES = frozenset({Opcode.ANCESTOR_TRANSFORMATION, Opcode.IMMEDIATE_RESOLUTION})


class Gate(enum.IntEnum):
    """Reduction permission travelling down a branch; larger values are stricter."""

    FREE = 0
    HOLD_BETA = 1
    FREEZE = 2


def normalize_mode(value: str) -> str:
    """Accept ``paper-faithful`` spellings from the command line."""
    return value.replace("-", "_").lower()


def decode_word(word: int) -> Optional[Opcode]:
    try:
        return Opcode(word)
    except ValueError:
        return None


@dataclass(frozen=True)
class InstructionFrame:
    """One instruction word plus its operand.

    ``origin`` names the node a reply belongs to: the application for the β messages,
    the requested node for ReturnExpression. ``binder`` is the label CompareValue matches.
    In paper_faithful mode a list puts its depth in ``opcode`` as a bare word.
    """

    opcode: Opcode
    operand: int = 0
    depth: Optional[int] = None
    origin: int = 0
    binder: Optional[str] = None

    @property
    def is_bare_word(self) -> bool:
        return not self.operand and not self.origin and self.binder is None and self.depth is None

    def target_depth(self, mode: str) -> int:
        if mode == ClusterMode.PAPER_FAITHFUL or self.depth is None:
            return self.operand
        return self.depth


@dataclass(frozen=True)
class ExpressionFrame:
    rsf: int = 0
    rdf: int = 0
    kind: ExpressionKind = ExpressionKind.FREE
    payload: int = 0
    label: Optional[str] = None
    clp: int = 0
    crp: int = 0

    @property
    def is_numeric_name(self) -> bool:
        return self.kind == ExpressionKind.NAME and self.label is None

    @property
    def is_symbolic_name(self) -> bool:
        return self.kind == ExpressionKind.NAME and self.label is not None


EMPTY_EXPRESSION = ExpressionFrame()


@dataclass(frozen=True)
class BusFrame:
    """Everything one node drives onto one edge during a tick.

    Upward frames use ``expression`` (resolve status and kind as seen by the parent),
    ``quiet``, ``settled``, ``idle`` and ``depth``. Downward frames use ``gate``,
    ``ancestor`` (only on an application's left edge) and ``chain_depth`` (only on a
    list's tail edge). ``instruction`` travels in either direction.

    ``quiet`` means the branch is frozen with nothing in flight, ``settled`` the same
    without the freeze, ``idle`` that the sender itself handled no instruction lately.
    """

    sender: int
    instruction: Optional[InstructionFrame] = None
    peb: Optional[ExpressionFrame] = None
    expression: ExpressionFrame = EMPTY_EXPRESSION
    gate: Gate = Gate.FREE
    ancestor: Optional[ExpressionFrame] = None
    chain_depth: Optional[int] = None
    depth: Optional[int] = None
    quiet: bool = False
    settled: bool = False
    idle: bool = False
    goto_target: int = 0

    def with_instruction(self, instruction: Optional[InstructionFrame],
                         peb: Optional[ExpressionFrame] = None) -> "BusFrame":
        return replace(self, instruction=instruction, peb=peb)


# A missing parent frame freezes the receiver until its new parent speaks.
MISSING_PARENT = BusFrame(sender=-1, gate=Gate.FREEZE)
MISSING_CHILD = BusFrame(sender=-1)


def render_frame(frame: BusFrame) -> str:
    parts = []
    if frame.instruction is not None:
        opcode = decode_word(frame.instruction.opcode)
        name = opcode.label if opcode is not None else str(int(frame.instruction.opcode))
        parts.append(f"ins={name}:{frame.instruction.operand}")
        if frame.instruction.depth is not None:
            parts.append(f"d={frame.instruction.depth}")
    expression = frame.expression
    if expression.kind != ExpressionKind.FREE or expression.rsf:
        parts.append(f"exp={ExpressionKind(expression.kind).label}")
        parts.append(f"rsf={expression.rsf}")
    if frame.gate != Gate.FREE:
        parts.append(f"gate={frame.gate.name}")
    if frame.ancestor is not None:
        parts.append(f"anc={ExpressionKind(frame.ancestor.kind).label}")
    if frame.depth is not None:
        parts.append(f"depth={frame.depth}")
    if frame.quiet:
        parts.append("quiet")
    if frame.settled:
        parts.append("settled")
    return " ".join(parts) or "-"
