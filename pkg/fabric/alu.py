"""Cluster-wide ALU: a LIFO request stack in front of one arithmetic unit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from django.db import models

from .errors import AluQueueOverflow
from .oracle import wrap

logger = logging.getLogger(__name__)


class AluOp(models.TextChoices):
    ADD = "add", "Add"
    MULT = "mult", "Mult"
    CMP_GT0 = "cmp_gt0", "CmpGT0"
    CMP_LT0 = "cmp_lt0", "CmpLT0"
    CMP_EQ0 = "cmp_eq0", "CmpEQ0"


@dataclass(frozen=True)
class AluRequest:
    uni: int
    a: int
    b: int
    opcode: AluOp

    def __post_init__(self):
        if self.uni == 0:
            raise ValueError("ALU requests must come from a node (uni 0 is NULL)")


@dataclass(frozen=True)
class AluResult:
    uni: int
    value: int
    truth: bool


@dataclass
class AluState:
    capacity: int
    value_width: int = 8
    # top of the stack is the end of the list
    queue: list[AluRequest] = field(default_factory=list)
    result_out: Optional[AluResult] = None
    request_signal: bool = False

    @property
    def idle(self) -> bool:
        return not self.queue and self.result_out is None


def compute(opcode: str, a: int, b: int = 0, width: int = 8) -> AluResult:
    """Evaluate one operation; comparisons test ``a`` against zero."""
    if opcode == AluOp.ADD:
        value = wrap(a + b, width)
    elif opcode == AluOp.MULT:
        value = wrap(a * b, width)
    elif opcode == AluOp.CMP_GT0:
        value = int(a > 0)
    elif opcode == AluOp.CMP_LT0:
        value = int(a < 0)
    elif opcode == AluOp.CMP_EQ0:
        value = int(a == 0)
    else:
        raise ValueError(f"unknown ALU opcode {opcode!r}")
    return AluResult(uni=0, value=value, truth=bool(value))


def request(state: AluState, req: AluRequest) -> AluState:
    if len(state.queue) >= state.capacity:
        raise AluQueueOverflow(req.uni, state.capacity)
    state.queue.append(req)
    state.request_signal = True
    return state


def alu_tick(state: AluState) -> Optional[AluResult]:
    state.result_out = None
    if state.request_signal:
        state.request_signal = False
        return None
    if not state.queue:
        return None
    req = state.queue.pop()
    result = compute(req.opcode, req.a, req.b, state.value_width)
    state.result_out = AluResult(uni=req.uni, value=result.value, truth=result.truth)
    logger.debug("alu_deliver uni=%d op=%s value=%d", req.uni, req.opcode, result.value)
    return state.result_out


def cancel(state: AluState, uni: int):
    """Drop everything addressed to a node that was just nullified."""
    state.queue = [req for req in state.queue if req.uni != uni]
    if state.result_out is not None and state.result_out.uni == uni:
        state.result_out = None
