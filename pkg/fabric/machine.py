"""Synchronous tick engine for one cluster.

Every tick has two phases. In phase A each node reads only the frames latched at the
end of the previous tick plus its own registers, and produces outgoing frames and a
list of effects. In phase B the effects commit in node order against the live graph,
the ALU advances one step, and the new frames are latched onto every edge that
survived the commit. Frames on edges created or reshaped by the commit are dropped,
so a receiver sees "missing" for one tick (rsf 0, not quiet, parent gate FREEZE).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from django.db import models

from . import alu as alu_unit
from .alu import AluOp, AluRequest, AluResult, AluState
from .buses import (
    ARITHMETIC_KINDS,
    COMPARISON_KINDS,
    EMPTY_EXPRESSION,
    LIST_OPCODES,
    MISSING_CHILD,
    MISSING_PARENT,
    UPWARD_OPCODES,
    BusFrame,
    ClusterMode,
    ExpressionFrame,
    ExpressionKind,
    Gate,
    InstructionFrame,
    Opcode,
    decode_word,
    render_frame,
)
from .compiler import (
    OP_BY_KIND,
    ClusterConfig,
    NodeGraph,
    allocate,
    commit_node,
    place,
    release,
    term_at,
)
from .errors import AluQueueOverflow, ClusterLimitExceeded, GraphIntegrityError
from .oracle import compare_selects_left
from .syntax import (
    NULL_TAIL,
    Application,
    Arith,
    DepthOrigin,
    Function,
    ListCell,
    Name,
    Term,
    contains_list,
    count_nodes,
    tidy_names,
)

logger = logging.getLogger(__name__)

CONTROLLER = 0
ALU_COMPARE = {
    ExpressionKind.GREAT_ZERO: AluOp.CMP_GT0,
    ExpressionKind.LESS_ZERO: AluOp.CMP_LT0,
    ExpressionKind.EQUAL_ZERO: AluOp.CMP_EQ0,
}
ALU_ARITH = {ExpressionKind.ADD: AluOp.ADD, ExpressionKind.MULT: AluOp.MULT}
CMP_OP = {
    ExpressionKind.GREAT_ZERO: ">",
    ExpressionKind.LESS_ZERO: "<",
    ExpressionKind.EQUAL_ZERO: "==",
}


class Phase(enum.IntEnum):
    """Values of the per-node phase register outside list edits."""

    IDLE = 0
    # application
    ARMED = 1
    BROADCAST = 2
    SPLICE = 3
    RETIRE = 4
    # comparison, branch chosen
    KEEP_LEFT = 5
    KEEP_RIGHT = 6


LIST_EDIT = 1


class RunStatus(models.TextChoices):
    RESOLVED = "resolved", "Resolved"
    SUSPENDED = "suspended", "Suspended"
    COLLISION = "collision", "Collision"
    BUDGET_EXHAUSTED = "budget_exhausted", "Budget exhausted"
    FAULT = "fault", "Fault"
    STALLED = "stalled", "Stalled"


@dataclass(frozen=True)
class CollisionEntry:
    tick: int
    kind: str
    nodes: tuple[int, ...]
    detail: str

    def __str__(self):
        nodes = ",".join(str(uni) for uni in self.nodes)
        return f"tick {self.tick} {self.kind} [{nodes}] {self.detail}"


@dataclass
class ClusterState:
    graph: NodeGraph
    cfg: ClusterConfig
    alu: AluState
    tick: int = 0
    inputs: dict[int, dict[str, BusFrame]] = field(default_factory=dict)
    pending_outputs: dict[int, dict[str, BusFrame]] = field(default_factory=dict)
    collision_log: list[CollisionEntry] = field(default_factory=list)
    instruction_inbox: list[tuple[InstructionFrame, Optional[ExpressionFrame]]] = field(default_factory=list)
    held: dict[int, tuple[InstructionFrame, Optional[ExpressionFrame]]] = field(default_factory=dict)
    awaiting: set[int] = field(default_factory=set)
    last_instruction: dict[int, int] = field(default_factory=dict)
    # ReturnExpression replies seen by the controller: (responder, origin, frame)
    returned: list[tuple[int, int, ExpressionFrame]] = field(default_factory=list)
    # binder occurrences found by CompareValue: uni -> (application, parent)
    marks: dict[int, tuple[int, int]] = field(default_factory=dict)
    # functions that acknowledged a DescendantTransformation: application -> (function, holder)
    redexes: dict[int, tuple[int, int]] = field(default_factory=dict)
    peak_nodes: int = 0
    fault: bool = False
    reading: bool = False
    readback_ticks: int = 0
    trace_enabled: bool = False
    trace_lines: list[str] = field(default_factory=list)
    shared_logged: set[int] = field(default_factory=set)
    misread_logged: set[int] = field(default_factory=set)

    @classmethod
    def create(cls, graph: NodeGraph, cfg: ClusterConfig, *, trace: bool = False) -> "ClusterState":
        state = cls(graph=graph, cfg=cfg,
                    alu=AluState(capacity=cfg.alu_queue_capacity, value_width=cfg.value_width),
                    trace_enabled=trace)
        state.peak_nodes = graph.allocated_count()
        return state

    def log_collision(self, kind: str, nodes: Iterable[int], detail: str):
        entry = CollisionEntry(self.tick, kind, tuple(nodes), detail)
        self.collision_log.append(entry)
        logger.info("collision tick=%d kind=%s nodes=%s detail=%s", self.tick, kind,
                    ",".join(map(str, entry.nodes)), detail)

    def trace(self, line: str):
        if self.trace_enabled:
            self.trace_lines.append(line)


@dataclass(frozen=True)
class RunResult:
    final_term: Optional[Term]
    ticks: int
    peak_nodes: int
    status: RunStatus
    collision_log: tuple[CollisionEntry, ...]
    readback_ticks: int = 0
    trace: tuple[str, ...] = ()


@dataclass(frozen=True)
class NodeInputs:
    parent: BusFrame
    left: Optional[BusFrame]
    right: Optional[BusFrame]


def node_inputs(state: ClusterState, uni: int) -> NodeInputs:
    node = state.graph[uni]
    latched = state.inputs.get(uni, {})
    return NodeInputs(
        parent=latched.get("parent", MISSING_PARENT),
        left=latched.get("clp", MISSING_CHILD) if node.clp else None,
        right=latched.get("crp", MISSING_CHILD) if node.crp else None,
    )


def handled_instruction(state: ClusterState, uni: int, inputs: NodeInputs) -> bool:
    """An instruction reached this node this tick or the one before, or sits in its hold register.

    A node in this window may not rewire the edges the instruction is travelling on.
    """
    if uni in state.held or inputs.parent.instruction is not None:
        return True
    return state.tick - state.last_instruction.get(uni, -10) <= 1


def is_busy(state: ClusterState, uni: int, inputs: NodeInputs) -> bool:
    node = state.graph[uni]
    if node.kind == ExpressionKind.FREE:
        return True
    if node.phase > 0 or uni in state.awaiting:
        return True
    return handled_instruction(state, uni, inputs)


# --- list depths ---------------------------------------------------------------

def reported_depth(state: ClusterState, frame: Optional[BusFrame]) -> Optional[int]:
    """The depth a list child drives upward, from whichever field the bus layout uses."""
    if frame is None:
        return None
    if state.cfg.mode != ClusterMode.PAPER_FAITHFUL:
        return frame.depth
    word = frame.instruction
    if word is None or frame.peb is not None or not word.is_bare_word:
        return None
    return int(word.opcode)


def inner_depth(state: ClusterState, uni: int, inputs: NodeInputs) -> Optional[int]:
    """Tail side: an absent child reads as depth zero."""
    if not state.graph[uni].crp:
        return 0
    return reported_depth(state, inputs.right)


def outer_depth(inputs: NodeInputs) -> Optional[int]:
    parent = inputs.parent
    if parent.sender < 0:
        return None
    if parent.chain_depth is None:
        return 0
    if parent.chain_depth < 0:
        return None
    return parent.chain_depth


def own_depth(state: ClusterState, uni: int, inputs: NodeInputs) -> Optional[int]:
    if state.cfg.depth_origin == DepthOrigin.OUTERMOST:
        return outer_depth(inputs)
    return inner_depth(state, uni, inputs)


# --- default outputs -----------------------------------------------------------

def default_outputs(state: ClusterState, uni: int, inputs: NodeInputs) -> dict[str, BusFrame]:
    """Frames a node drives with no instruction in flight, keyed by edge."""
    node = state.graph[uni]
    kind = node.kind
    parent, left, right = inputs.parent, inputs.left, inputs.right
    gate_in = parent.gate
    children = [frame for frame in (left, right) if frame is not None]
    busy = is_busy(state, uni, inputs)
    quiet = gate_in == Gate.FREEZE and not busy and all(f.quiet for f in children)
    # a child GoTo still waiting for its splice counts as activity
    settled = not busy and all(f.settled and not f.goto_target for f in children)
    depth = None
    word = None
    goto_target = 0
    down_left = BusFrame(uni, gate=gate_in)
    down_right = BusFrame(uni, gate=gate_in)

    if kind == ExpressionKind.NAME:
        expression = replace(node.frame(), rsf=1)
    elif kind == ExpressionKind.FUNCTION:
        body_rsf = right.expression.rsf if right is not None else 1
        expression = replace(node.frame(), rsf=body_rsf)
    elif kind == ExpressionKind.APPLICATION:
        operator = left.expression if left is not None else EMPTY_EXPRESSION
        operand = right.expression if right is not None else EMPTY_EXPRESSION
        holding = node.phase > 0 or (operator.kind == ExpressionKind.FUNCTION and gate_in == Gate.FREE)
        child_gate = Gate.FREEZE if holding else gate_in
        # a pending redex, a list with no active item, an undecided comparison
        if operator.kind in (ExpressionKind.FUNCTION, ExpressionKind.LIST) or operator.kind in COMPARISON_KINDS:
            rsf = 0
        else:
            rsf = operator.rsf & operand.rsf
        expression = replace(node.frame(), rsf=rsf)
        down_left = BusFrame(uni, gate=child_gate, ancestor=operand)
        down_right = BusFrame(uni, gate=child_gate)
    elif kind == ExpressionKind.LIST:
        inner = inner_depth(state, uni, inputs)
        outer = outer_depth(inputs)
        depth = inner + 1 if inner is not None else None
        if node.rsf:
            expression = left.expression if left is not None else ExpressionFrame(rsf=1)
            down_left = BusFrame(uni, gate=gate_in, ancestor=parent.ancestor)
        else:
            if right is not None:
                expression = right.expression
            else:
                expression = ExpressionFrame(rsf=int(not busy), kind=ExpressionKind.LIST)
            down_left = BusFrame(uni, gate=Gate.FREEZE)
        down_right = BusFrame(uni, gate=gate_in, ancestor=parent.ancestor,
                              chain_depth=outer + 1 if outer is not None else -1)
        if state.cfg.mode == ClusterMode.PAPER_FAITHFUL:
            # the depth rides in the instruction word
            word = InstructionFrame(depth) if depth is not None else None
            depth = None
    elif kind in ARITHMETIC_KINDS:
        expression = ExpressionFrame(rsf=0, kind=kind)
        child_gate = max(gate_in, Gate.HOLD_BETA)
        down_left = BusFrame(uni, gate=child_gate)
        down_right = BusFrame(uni, gate=child_gate)
    elif kind in COMPARISON_KINDS:
        if node.rdf == 0:
            expression = ExpressionFrame(rsf=0, rdf=0, kind=kind)
            down_left = BusFrame(uni, gate=Gate.FREEZE)
            down_right = BusFrame(uni, gate=Gate.FREEZE)
        else:
            rsf = all(frame.expression.rsf for frame in children)
            expression = replace(node.frame(), rsf=int(rsf), rdf=1)
    elif kind == ExpressionKind.GOTO:
        expression = left.expression if left is not None else EMPTY_EXPRESSION
        depth = left.depth if left is not None else None
        # rdf pins a GoTo left in front of a list operator
        goto_target = 0 if node.rdf else node.clp
        down_left = BusFrame(uni, gate=gate_in, ancestor=parent.ancestor, chain_depth=parent.chain_depth)
    else:
        expression = EMPTY_EXPRESSION
        quiet = settled = False

    frames = {"parent": BusFrame(uni, instruction=word, expression=expression, quiet=quiet, settled=settled,
                                 idle=not handled_instruction(state, uni, inputs), depth=depth,
                                 goto_target=goto_target)}
    if node.clp:
        frames["clp"] = down_left
    if node.crp:
        frames["crp"] = down_right
    return frames


# --- commit effects ------------------------------------------------------------

@dataclass
class CommitContext:
    reshaped: set[int] = field(default_factory=set)
    writes: dict[tuple[int, str], int] = field(default_factory=dict)

    def claim(self, state: ClusterState, uni: int, register: str, owner: int) -> bool:
        key = (uni, register)
        holder = self.writes.get(key)
        if holder is not None and holder != owner:
            state.log_collision("data", (holder, owner, uni), f"conflicting writes to {register} of node {uni}")
            return False
        self.writes[key] = owner
        return True


def free_node(state: ClusterState, ctx: CommitContext, uni: int):
    alu_unit.cancel(state.alu, uni)
    state.held.pop(uni, None)
    state.awaiting.discard(uni)
    state.marks.pop(uni, None)
    state.redexes.pop(uni, None)
    release(state.graph, uni)
    ctx.reshaped.add(uni)


def free_subtree(state: ClusterState, ctx: CommitContext, uni: int):
    for member in state.graph.subtree(uni):
        free_node(state, ctx, member)


def copy_subtree(state: ClusterState, ctx: CommitContext, uni: int, renames: dict[str, str]) -> int:
    """Duplicate a subtree, giving every function inside it a fresh binder label."""
    graph = state.graph
    source = graph[uni]
    new = allocate(graph)
    target = graph[new]
    target.kind = source.kind
    target.payload = source.payload
    target.rsf = source.rsf
    target.rdf = source.rdf
    target.label = source.label
    if source.kind == ExpressionKind.FUNCTION:
        target.label = graph.fresh_label(source.label)
        renames = {**renames, source.label: target.label}
    elif source.kind == ExpressionKind.NAME and source.label is not None:
        target.label = renames.get(source.label, source.label)
    commit_node(graph, new)
    ctx.reshaped.add(new)
    target.clp = copy_subtree(state, ctx, source.clp, renames) if source.clp else 0
    target.crp = copy_subtree(state, ctx, source.crp, renames) if source.crp else 0
    return new


def slot_of(graph: NodeGraph, parent: int, child: int) -> Optional[str]:
    """Which pointer of ``parent`` holds ``child``; the controller's pointer is ``root``."""
    if parent == CONTROLLER:
        return "root" if graph.root == child else None
    if parent < 0 or not graph.is_allocated(parent):
        return None
    node = graph[parent]
    if node.clp == child:
        return "clp"
    if node.crp == child:
        return "crp"
    return None


@dataclass(frozen=True)
class Effect:
    issuer: int

    def apply(self, state: ClusterState, ctx: CommitContext):
        raise NotImplementedError


@dataclass(frozen=True)
class SetPhase(Effect):
    uni: int
    phase: int

    def apply(self, state, ctx):
        if state.graph.is_allocated(self.uni):
            state.graph[self.uni].phase = self.phase


@dataclass(frozen=True)
class SetRsf(Effect):
    uni: int
    rsf: int

    def apply(self, state, ctx):
        if state.graph.is_allocated(self.uni) and ctx.claim(state, self.uni, "rsf", self.issuer):
            state.graph[self.uni].rsf = self.rsf


@dataclass(frozen=True)
class SetRdf(Effect):
    uni: int
    rdf: int

    def apply(self, state, ctx):
        if state.graph[self.uni].kind in COMPARISON_KINDS:
            state.graph[self.uni].rdf = self.rdf


@dataclass(frozen=True)
class SetSlot(Effect):
    uni: int
    slot: str
    value: int

    def apply(self, state, ctx):
        if state.graph.is_allocated(self.uni) and ctx.claim(state, self.uni, self.slot, self.issuer):
            setattr(state.graph[self.uni], self.slot, self.value)


@dataclass(frozen=True)
class Adopt(Effect):
    uni: int
    peb: ExpressionFrame

    def apply(self, state, ctx):
        if not state.graph.is_allocated(self.uni) or self.peb.kind == ExpressionKind.FREE:
            return
        if ctx.claim(state, self.uni, "exp", self.issuer):
            state.graph[self.uni].adopt(self.peb)
            commit_node(state.graph, self.uni)
            ctx.reshaped.add(self.uni)


@dataclass(frozen=True)
class UpdateItem(Effect):
    uni: int
    item: int

    def apply(self, state, ctx):
        node = state.graph[self.uni]
        if node.kind != ExpressionKind.LIST or not ctx.claim(state, self.uni, "clp", self.issuer):
            return
        old, node.clp = node.clp, self.item
        if old and old != self.item:
            free_subtree(state, ctx, old)


@dataclass(frozen=True)
class Nullify(Effect):
    uni: int

    def apply(self, state, ctx):
        graph = state.graph
        if not graph.is_allocated(self.uni):
            return
        for parent, slot in graph.parent_slots().get(self.uni, []):
            graph.set_slot(parent, slot, 0)
        free_subtree(state, ctx, self.uni)


@dataclass(frozen=True)
class Hold(Effect):
    uni: int
    instruction: InstructionFrame
    peb: Optional[ExpressionFrame]

    def apply(self, state, ctx):
        if state.graph.is_allocated(self.uni):
            state.held[self.uni] = (self.instruction, self.peb)


@dataclass(frozen=True)
class Unhold(Effect):
    uni: int

    def apply(self, state, ctx):
        state.held.pop(self.uni, None)


@dataclass(frozen=True)
class AddBottomStart(Effect):
    uni: int
    instruction: InstructionFrame
    peb: Optional[ExpressionFrame]

    def apply(self, state, ctx):
        node = state.graph[self.uni]
        if node.kind != ExpressionKind.LIST or node.crp:
            return
        try:
            new = allocate(state.graph)
        except ClusterLimitExceeded as exc:
            state.fault = True
            state.log_collision("fault", (self.uni,), str(exc))
            return
        ctx.reshaped.add(new)
        node.crp = new
        node.phase = 1
        state.held[self.uni] = (self.instruction, self.peb)


@dataclass(frozen=True)
class NoteInstruction(Effect):
    uni: int

    def apply(self, state, ctx):
        state.last_instruction[self.uni] = state.tick


@dataclass(frozen=True)
class PopInbox(Effect):
    def apply(self, state, ctx):
        if state.instruction_inbox:
            state.instruction_inbox.pop(0)


@dataclass(frozen=True)
class ReturnToController(Effect):
    responder: int
    origin: int
    frame: ExpressionFrame

    def apply(self, state, ctx):
        if state.reading:
            state.returned.append((self.responder, self.origin, self.frame))


@dataclass(frozen=True)
class Misread(Effect):
    """A non-list node took a list depth word for ReturnExpression."""

    source: int

    def apply(self, state, ctx):
        if self.issuer in state.misread_logged:
            return
        state.misread_logged.add(self.issuer)
        state.log_collision("readback", (self.issuer, self.source),
                            f"depth word from list {self.source} read as ReturnExpression by node {self.issuer}")


@dataclass(frozen=True)
class RecordCollision(Effect):
    kind: str
    nodes: tuple[int, ...]
    detail: str
    fatal: bool = False

    def apply(self, state, ctx):
        state.log_collision(self.kind, self.nodes, self.detail)
        if self.fatal:
            state.fault = True


@dataclass(frozen=True)
class AluSubmit(Effect):
    request: AluRequest

    def apply(self, state, ctx):
        if not state.graph.is_allocated(self.request.uni) or self.request.uni in ctx.reshaped:
            return
        try:
            alu_unit.request(state.alu, self.request)
        except AluQueueOverflow as exc:
            logger.warning("alu_overflow uni=%d capacity=%d", exc.uni, exc.capacity)
            state.log_collision("alu_overflow", (exc.uni,), str(exc))
            return
        state.awaiting.add(self.request.uni)
        req = self.request
        state.trace(f"{state.tick} ALU {AluOp(req.opcode).label} {req.a} {req.b} <- {req.uni}")


@dataclass(frozen=True)
class Mark(Effect):
    """A name matched the binder carried by CompareValue."""

    application: int
    parent: int

    def apply(self, state, ctx):
        if state.graph[self.issuer].kind == ExpressionKind.NAME:
            state.marks[self.issuer] = (self.application, self.parent)


@dataclass(frozen=True)
class RegisterRedex(Effect):
    """A function acknowledged the DescendantTransformation sent by ``application``."""

    application: int
    holder: int

    def apply(self, state, ctx):
        if state.graph[self.issuer].kind == ExpressionKind.FUNCTION:
            state.redexes[self.application] = (self.issuer, self.holder)


@dataclass(frozen=True)
class Decide(Effect):
    uni: int
    truth: bool

    def apply(self, state, ctx):
        state.awaiting.discard(self.uni)
        node = state.graph[self.uni]
        if node.kind in COMPARISON_KINDS:
            node.phase = Phase.KEEP_LEFT if self.truth else Phase.KEEP_RIGHT
            state.trace(f"{state.tick} {self.uni} {Opcode.IMMEDIATE_RESOLUTION.label} keep "
                        f"{'left' if self.truth else 'right'}")


@dataclass(frozen=True)
class BecomeGoTo(Effect):
    """A decided comparison drops the other branch and forwards to the one it keeps."""

    uni: int

    def apply(self, state, ctx):
        node = state.graph[self.uni]
        if node.kind not in COMPARISON_KINDS or node.phase not in (Phase.KEEP_LEFT, Phase.KEEP_RIGHT):
            return
        keep, drop = (node.clp, node.crp) if node.phase == Phase.KEEP_LEFT else (node.crp, node.clp)
        if drop:
            free_subtree(state, ctx, drop)
        node.kind = ExpressionKind.GOTO
        node.clp, node.crp = keep, 0
        node.rsf = node.rdf = 0
        node.phase = Phase.IDLE
        ctx.reshaped.add(self.uni)
        state.trace(f"{state.tick} {self.uni} GoTo keep={keep}")


@dataclass(frozen=True)
class Retire(Effect):
    """An application consumed by the comparison in its operator position."""

    parent: int

    def apply(self, state, ctx):
        graph = state.graph
        app = self.issuer
        node = graph[app]
        slot = slot_of(graph, self.parent, app)
        if node.kind != ExpressionKind.APPLICATION:
            state.log_collision("stale", (app,), f"node {app} is no longer an application")
            return
        if slot is None:
            # the parent was spliced away this tick; retry once the new parent is latched
            return
        operator = node.clp
        if node.crp:
            free_subtree(state, ctx, node.crp)
        graph.set_slot(self.parent, slot, operator)
        free_node(state, ctx, app)
        state.trace(f"{state.tick} {app} {Opcode.IMMEDIATE_RESOLUTION.label} retired, parent {self.parent} "
                    f"now points at {operator}")


@dataclass(frozen=True)
class Deliver(Effect):
    uni: int
    result: AluResult

    def apply(self, state, ctx):
        graph = state.graph
        node = graph[self.uni]
        state.awaiting.discard(self.uni)
        if node.kind in COMPARISON_KINDS:
            Decide(self.issuer, self.uni, self.result.truth).apply(state, ctx)
            return
        if node.kind not in ARITHMETIC_KINDS:
            return
        for child in (node.clp, node.crp):
            if child:
                free_subtree(state, ctx, child)
        node.kind = ExpressionKind.NAME
        node.payload = self.result.value
        node.label = None
        node.clp = node.crp = 0
        node.rsf, node.rdf = 1, 0
        ctx.reshaped.add(self.uni)


@dataclass(frozen=True)
class Splice(Effect):
    parent: int
    slot: str
    goto: int

    def apply(self, state, ctx):
        graph = state.graph
        if graph.get_slot(self.parent, self.slot) != self.goto or graph[self.goto].kind != ExpressionKind.GOTO:
            return
        graph.set_slot(self.parent, self.slot, graph[self.goto].clp)
        free_node(state, ctx, self.goto)


@dataclass(frozen=True)
class Beta(Effect):
    """Final splice of a β-reduction.

    The function, its holder and the binder occurrences were found over the buses and
    reported their parents; this commit rewires those pointers and frees the redex.
    """

    parent: int

    def apply(self, state, ctx):
        graph = state.graph
        app = self.issuer
        node = graph[app]
        redex = state.redexes.get(app)
        parent_slot = slot_of(graph, self.parent, app)
        if node.kind == ExpressionKind.APPLICATION and redex is not None and parent_slot is None:
            # the parent was spliced away this tick; retry once the new parent is latched
            return
        state.redexes.pop(app, None)
        marked = sorted((uni, owner) for uni, (origin, owner) in state.marks.items() if origin == app)
        for uni, _ in marked:
            del state.marks[uni]
        node.phase = Phase.IDLE
        if node.kind != ExpressionKind.APPLICATION or redex is None:
            state.log_collision("stale", (app,), f"application {app} has no acknowledged function")
            return
        function, holder = redex
        holder_slot = slot_of(graph, holder, function)
        occurrence_slots = [(owner, slot_of(graph, owner, uni)) for uni, owner in marked]
        if (graph[function].kind != ExpressionKind.FUNCTION or holder_slot is None
                or any(slot is None for _, slot in occurrence_slots)):
            state.log_collision("stale", (app, function), f"redex of application {app} changed during the broadcast")
            return

        binder, body, argument = graph[function].clp, graph[function].crp, node.crp
        label = graph[function].label
        occurrences = [uni for uni, _ in marked]
        bridged = holder != app and graph[holder].kind == ExpressionKind.LIST
        copies_needed = max(len(occurrences) - 1, 0) * len(graph.subtree(argument))
        retired = 2 + len(occurrences) + (0 if bridged else 1)
        if copies_needed > graph.free_count() + retired:
            required = graph.allocated_count() - retired + copies_needed
            state.fault = True
            state.log_collision("fault", (app, function), str(ClusterLimitExceeded(required, graph.size)))
            return

        operator = node.clp
        # retire the redex first so its nodes are free for the copies
        for uni in occurrences + [binder, function]:
            free_node(state, ctx, uni)
        if not bridged:
            free_node(state, ctx, app)
        new_body = body
        if occurrences:
            values = [argument] + [copy_subtree(state, ctx, argument, {}) for _ in occurrences[1:]]
            for (owner, slot), value in zip(occurrence_slots, values):
                if owner == function:
                    new_body = value
                else:
                    graph.set_slot(owner, slot, value)
        else:
            free_subtree(state, ctx, argument)
        if holder == app:
            graph.set_slot(self.parent, parent_slot, new_body)
        else:
            graph.set_slot(holder, holder_slot, new_body)
            if bridged:
                # the application stays behind as a pinned GoTo in front of the list
                node.kind = ExpressionKind.GOTO
                node.crp = 0
                node.rsf, node.rdf = 0, 1
                ctx.reshaped.add(app)
            else:
                graph.set_slot(self.parent, parent_slot, operator)
        state.trace(f"{state.tick} {app}→{function} {Opcode.IMMEDIATE_RESOLUTION.label} "
                    f"{label} arg={argument} copies={max(len(occurrences) - 1, 0)}")


# --- instruction dispatch ------------------------------------------------------

def _forward(state: ClusterState, uni: int, frames: dict[str, BusFrame], slots: Iterable[str],
             instruction: InstructionFrame, peb: Optional[ExpressionFrame], effects: list[Effect]):
    for slot in slots:
        if slot not in frames:
            continue
        if frames[slot].instruction is not None:
            effects.append(RecordCollision(uni, "data", (uni, frames[slot].sender),
                                           f"two instructions on the {slot} edge of node {uni}"))
            continue
        frames[slot] = frames[slot].with_instruction(instruction, peb)


def _send_up(state: ClusterState, uni: int, frames: dict[str, BusFrame], instruction: InstructionFrame,
             peb: Optional[ExpressionFrame], effects: list[Effect]) -> bool:
    """Drive ``instruction`` on the parent edge; a list's depth word gives way."""
    current = frames["parent"].instruction
    if current is not None and not (current.is_bare_word and frames["parent"].peb is None):
        effects.append(RecordCollision(uni, "data", (uni,), f"two instructions on the parent edge of node {uni}"))
        return False
    frames["parent"] = frames["parent"].with_instruction(instruction, peb)
    return True


def dispatch_instruction(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                         instruction: InstructionFrame, peb: Optional[ExpressionFrame],
                         effects: list[Effect]):
    """Apply one instruction arriving from the parent side (or resumed from the hold register)."""
    node = state.graph[uni]
    opcode = instruction.opcode
    if opcode == Opcode.NOP:
        return
    if decode_word(opcode) is None or opcode in UPWARD_OPCODES:
        effects.append(RecordCollision(uni, "unknown_opcode", (uni,),
                                       f"opcode {int(opcode)} is not accepted on the bus"))
        return
    if opcode in LIST_OPCODES:
        if node.kind == ExpressionKind.LIST:
            _list_instruction(state, uni, inputs, frames, instruction, peb, effects)
        else:
            _forward(state, uni, frames, ("clp", "crp"), instruction, peb, effects)
        return
    if opcode == Opcode.DESCENDANT_TRANSFORMATION:
        _descendant_transformation(state, uni, inputs, frames, instruction, effects)
        return
    if opcode == Opcode.COMPARE_VALUE:
        _compare_value(state, uni, inputs, frames, instruction, effects)
        return

    if instruction.operand != uni:
        _forward(state, uni, frames, ("clp", "crp"), instruction, peb, effects)
        return
    if opcode == Opcode.NULLIFICATION:
        effects.append(Nullify(uni, uni))
    elif opcode == Opcode.UPDATE_EXPRESSION and peb is not None:
        effects.append(Adopt(uni, uni, peb))
    elif opcode == Opcode.UPDATE_CHILD_LEFT and peb is not None:
        effects.append(SetSlot(uni, uni, "clp", peb.clp))
    elif opcode == Opcode.UPDATE_CHILD_RIGHT and peb is not None:
        effects.append(SetSlot(uni, uni, "crp", peb.crp))
    elif opcode == Opcode.RETURN_EXPRESSION:
        _return_expression(state, uni, inputs, frames, instruction, effects)


def _descendant_transformation(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                               instruction: InstructionFrame, effects: list[Effect]):
    node = state.graph[uni]
    if node.kind == ExpressionKind.FUNCTION:
        compare = InstructionFrame(Opcode.COMPARE_VALUE, operand=instruction.operand, origin=instruction.origin,
                                   binder=node.label)
        _forward(state, uni, frames, ("crp",), compare, None, effects)
        _send_up(state, uni, frames, InstructionFrame(Opcode.ANCESTOR_TRANSFORMATION, operand=instruction.origin),
                 None, effects)
        effects.append(RegisterRedex(uni, instruction.origin, inputs.parent.sender))
    elif node.kind == ExpressionKind.GOTO:
        _forward(state, uni, frames, ("clp",), instruction, None, effects)
    elif node.kind == ExpressionKind.LIST:
        _forward(state, uni, frames, ("clp",) if node.rsf else ("crp",), instruction, None, effects)
    else:
        effects.append(RecordCollision(uni, "stale", (instruction.origin, uni),
                                       f"{ExpressionKind(node.kind).label} node {uni} cannot take a "
                                       f"DescendantTransformation"))


def _compare_value(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                   instruction: InstructionFrame, effects: list[Effect]):
    node = state.graph[uni]
    if node.kind == ExpressionKind.NAME:
        if node.label is not None and node.label == instruction.binder:
            effects.append(Mark(uni, instruction.origin, inputs.parent.sender))
    elif node.kind == ExpressionKind.FUNCTION:
        _forward(state, uni, frames, ("crp",), instruction, None, effects)
    elif node.kind == ExpressionKind.GOTO:
        _forward(state, uni, frames, ("clp",), instruction, None, effects)
    else:
        _forward(state, uni, frames, ("clp", "crp"), instruction, None, effects)


def _return_expression(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                       instruction: InstructionFrame, effects: list[Effect]):
    """The addressed node answers with its registers; a list hands the request to what it stands for."""
    node = state.graph[uni]
    if node.kind == ExpressionKind.LIST:
        right = inputs.right
        if node.rsf and node.clp:
            target = node.clp
        elif not node.rsf and right is not None and right.expression.kind != ExpressionKind.LIST:
            target = node.crp
        else:
            target = 0
        if target:
            _forward(state, uni, frames, ("clp" if target == node.clp else "crp",),
                     replace(instruction, operand=target), None, effects)
            return
    reply = InstructionFrame(Opcode.RETURN_EXPRESSION, operand=uni, origin=instruction.origin)
    _send_up(state, uni, frames, reply, node.frame(), effects)


def _list_instruction(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                      instruction: InstructionFrame, peb: Optional[ExpressionFrame], effects: list[Effect]):
    node = state.graph[uni]
    opcode = instruction.opcode
    depth = own_depth(state, uni, inputs)
    inner = inner_depth(state, uni, inputs)
    wanted = instruction.target_depth(state.cfg.mode)

    if opcode == Opcode.ACTIVATE_DEPTH:
        if depth is None:
            effects.append(Hold(uni, uni, instruction, peb))
            return
        effects.append(SetRsf(uni, uni, int(depth == wanted)))
        _forward(state, uni, frames, ("clp", "crp"), instruction, peb, effects)
    elif opcode == Opcode.UPDATE_DEPTH:
        if depth is None:
            effects.append(Hold(uni, uni, instruction, peb))
        elif depth == wanted and peb is not None:
            effects.append(UpdateItem(uni, uni, peb.clp))
        else:
            _forward(state, uni, frames, ("crp",), instruction, peb, effects)
    elif opcode == Opcode.ADD_BOTTOM_NODE:
        if node.crp == 0:
            effects.append(AddBottomStart(uni, uni, instruction, peb))
        else:
            _forward(state, uni, frames, ("crp",), instruction, peb, effects)
    elif opcode == Opcode.REMOVE_BOTTOM_NODE:
        if inner is None:
            effects.append(Hold(uni, uni, instruction, peb))
        elif inner == 1:
            _forward(state, uni, frames, ("crp",), InstructionFrame(Opcode.NULLIFICATION, node.crp), None, effects)
            effects.append(Hold(uni, uni, instruction, peb))
            effects.append(SetPhase(uni, uni, LIST_EDIT))
        elif inner > 1:
            _forward(state, uni, frames, ("crp",), instruction, peb, effects)


def _resume_held(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                 effects: list[Effect]):
    instruction, peb = state.held[uni]
    node = state.graph[uni]
    effects.append(Unhold(uni, uni))
    if node.phase == LIST_EDIT and instruction.opcode == Opcode.ADD_BOTTOM_NODE:
        update = InstructionFrame(Opcode.UPDATE_EXPRESSION, node.crp)
        body = peb if peb is not None else ExpressionFrame(kind=ExpressionKind.LIST)
        _forward(state, uni, frames, ("crp",), update, body, effects)
        effects.append(SetPhase(uni, uni, Phase.IDLE))
    elif node.phase == LIST_EDIT and instruction.opcode == Opcode.REMOVE_BOTTOM_NODE:
        effects.append(SetSlot(uni, uni, "crp", 0))
        effects.append(SetPhase(uni, uni, Phase.IDLE))
    else:
        dispatch_instruction(state, uni, inputs, frames, instruction, peb, effects)


def _relay_upward(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                  effects: list[Effect]):
    """Pass child-to-parent words on: β acknowledgements first, then ReturnExpression replies."""
    node = state.graph[uni]
    children = [(slot, frame) for slot, frame in (("clp", inputs.left), ("crp", inputs.right))
                if frame is not None and frame.instruction is not None]
    for slot, child in children:
        word = child.instruction
        if word.opcode not in UPWARD_OPCODES or child.peb is not None or word.is_bare_word:
            continue
        if node.kind == ExpressionKind.APPLICATION and slot == "clp" and (
                word.opcode == Opcode.IMMEDIATE_RESOLUTION or word.operand == uni):
            continue
        effects.append(NoteInstruction(uni, uni))
        _send_up(state, uni, frames, word, None, effects)
    for slot, child in children:
        word = child.instruction
        if word.opcode != Opcode.RETURN_EXPRESSION or child.peb is None:
            continue
        current = frames["parent"].instruction
        if not word.origin and current is not None and not current.is_bare_word:
            continue
        _send_up(state, uni, frames, word, child.peb, effects)
    if node.kind == ExpressionKind.LIST or state.cfg.mode != ClusterMode.PAPER_FAITHFUL:
        return
    for slot, child in children:
        word = child.instruction
        if child.peb is None and word.is_bare_word and decode_word(word.opcode) == Opcode.RETURN_EXPRESSION:
            # a depth word of 2 decodes as ReturnExpression: answer with our own contents
            if frames["parent"].instruction is None:
                frames["parent"] = frames["parent"].with_instruction(
                    InstructionFrame(Opcode.RETURN_EXPRESSION, operand=uni), node.frame())
            if state.reading and uni not in state.misread_logged:
                effects.append(Misread(uni, child.sender))
            return


# --- arithmetic and reduction decisions ----------------------------------------

def arithmetic_fire(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                    effects: list[Effect]):
    node = state.graph[uni]
    kind = node.kind
    parent = inputs.parent
    if kind in COMPARISON_KINDS:
        if node.phase in (Phase.KEEP_LEFT, Phase.KEEP_RIGHT):
            if not handled_instruction(state, uni, inputs):
                effects.append(BecomeGoTo(uni, uni))
            return
        if parent.sender >= 0:
            wanted_rdf = 0 if parent.ancestor is not None else 1
            if node.rdf != wanted_rdf:
                effects.append(SetRdf(uni, uni, wanted_rdf))
                return

    if uni in state.awaiting:
        result = state.alu.result_out
        if result is not None and result.uni == uni:
            effects.append(Deliver(uni, uni, result))
            if kind in COMPARISON_KINDS:
                _send_up(state, uni, frames, InstructionFrame(Opcode.IMMEDIATE_RESOLUTION, operand=uni), None,
                         effects)
        return
    if parent.gate == Gate.FREEZE or handled_instruction(state, uni, inputs):
        return

    if kind in ARITHMETIC_KINDS:
        if inputs.left is None or inputs.right is None:
            effects.append(RecordCollision(uni, "fault", (uni,), "arithmetic node with an empty operand", True))
            return
        a, b = inputs.left.expression, inputs.right.expression
        if not (a.rsf and b.rsf):
            return
        if a.is_numeric_name and b.is_numeric_name:
            effects.append(AluSubmit(uni, AluRequest(uni, a.payload, b.payload, ALU_ARITH[kind])))
        elif a.kind != ExpressionKind.NAME or b.kind != ExpressionKind.NAME:
            effects.append(RecordCollision(uni, "fault", (uni,),
                                           f"{ExpressionKind(kind).label} operand is not a name", True))
    elif kind in COMPARISON_KINDS and node.rdf == 0:
        ancestor = parent.ancestor
        if ancestor is None or not ancestor.rsf:
            return
        if ancestor.is_numeric_name:
            if state.cfg.local_compare:
                effects.append(Decide(uni, uni, compare_selects_left(CMP_OP[kind], ancestor.payload)))
                _send_up(state, uni, frames, InstructionFrame(Opcode.IMMEDIATE_RESOLUTION, operand=uni), None,
                         effects)
            else:
                effects.append(AluSubmit(uni, AluRequest(uni, ancestor.payload, 0, ALU_COMPARE[kind])))
        elif not ancestor.is_symbolic_name:
            effects.append(RecordCollision(uni, "fault", (uni,),
                                           f"comparison ancestor is a {ExpressionKind(ancestor.kind).label}", True))


def _application_step(state: ClusterState, uni: int, inputs: NodeInputs, frames: dict[str, BusFrame],
                      effects: list[Effect]):
    node = state.graph[uni]
    left, right, parent = inputs.left, inputs.right, inputs.parent
    operator = left.expression if left is not None else EMPTY_EXPRESSION
    heard = left.instruction if left is not None else None
    phase = node.phase

    if phase == Phase.IDLE:
        if (heard is not None and heard.opcode == Opcode.IMMEDIATE_RESOLUTION and left.peb is None
                and not heard.is_bare_word):
            effects.append(SetPhase(uni, uni, Phase.RETIRE))
        elif operator.kind == ExpressionKind.FUNCTION and parent.gate == Gate.FREE:
            effects.append(SetPhase(uni, uni, Phase.ARMED))
    elif phase == Phase.ARMED:
        if parent.gate != Gate.FREE or operator.kind != ExpressionKind.FUNCTION:
            effects.append(SetPhase(uni, uni, Phase.IDLE))
        elif (not handled_instruction(state, uni, inputs) and left.quiet
              and right is not None and right.quiet):
            broadcast = InstructionFrame(Opcode.DESCENDANT_TRANSFORMATION, operand=node.crp, origin=uni)
            _forward(state, uni, frames, ("clp",), broadcast, None, effects)
            effects.append(SetPhase(uni, uni, Phase.BROADCAST))
    elif phase == Phase.BROADCAST:
        if heard is not None and heard.opcode == Opcode.ANCESTOR_TRANSFORMATION and heard.operand == uni:
            effects.append(SetPhase(uni, uni, Phase.SPLICE))
    elif phase == Phase.SPLICE:
        if (parent.sender >= 0 and not handled_instruction(state, uni, inputs)
                and left is not None and left.quiet and right is not None and right.quiet):
            effects.append(Beta(uni, parent.sender))
    elif phase == Phase.RETIRE:
        if parent.sender >= 0 and not handled_instruction(state, uni, inputs):
            effects.append(Retire(uni, parent.sender))


def _splice_step(state: ClusterState, uni: int, inputs: NodeInputs, effects: list[Effect]):
    if inputs.parent.gate == Gate.FREEZE or state.graph[uni].phase or handled_instruction(state, uni, inputs):
        return
    for slot, frame in (("clp", inputs.left), ("crp", inputs.right)):
        if frame is not None and frame.goto_target and frame.sender > 0 and frame.idle:
            effects.append(Splice(uni, uni, slot, frame.sender))


def step_node(state: ClusterState, uni: int) -> tuple[dict[str, BusFrame], list[Effect]]:
    """Phase A for one node: pure with respect to the cluster state."""
    inputs = node_inputs(state, uni)
    frames = default_outputs(state, uni, inputs)
    effects: list[Effect] = []
    node = state.graph[uni]
    instruction = inputs.parent.instruction
    if instruction is not None:
        effects.append(NoteInstruction(uni, uni))
    if uni in state.held and instruction is None:
        _resume_held(state, uni, inputs, frames, effects)
    elif instruction is not None:
        dispatch_instruction(state, uni, inputs, frames, instruction, inputs.parent.peb, effects)
    _relay_upward(state, uni, inputs, frames, effects)
    if node.kind == ExpressionKind.APPLICATION:
        _application_step(state, uni, inputs, frames, effects)
    elif node.kind in ARITHMETIC_KINDS or node.kind in COMPARISON_KINDS:
        arithmetic_fire(state, uni, inputs, frames, effects)
    if node.kind != ExpressionKind.FREE:
        _splice_step(state, uni, inputs, effects)
    return frames, effects


def controller_step(state: ClusterState) -> tuple[dict[str, BusFrame], list[Effect]]:
    root_frame = state.inputs.get(CONTROLLER, {}).get("root", MISSING_CHILD)
    down = BusFrame(CONTROLLER, gate=Gate.FREE)
    effects: list[Effect] = []
    if state.instruction_inbox:
        instruction, peb = state.instruction_inbox[0]
        down = down.with_instruction(instruction, peb)
        effects.append(PopInbox(CONTROLLER))
    word = root_frame.instruction
    # bare words from the root are list depths; only replies carry a PEB
    if word is not None and word.opcode == Opcode.RETURN_EXPRESSION and root_frame.peb is not None:
        effects.append(ReturnToController(CONTROLLER, word.operand, word.origin, root_frame.peb))
    if (root_frame.goto_target and root_frame.sender > 0 and root_frame.idle
            and not state.instruction_inbox):
        effects.append(Splice(CONTROLLER, CONTROLLER, "root", root_frame.sender))
    return {"root": down}, effects


# --- tick ----------------------------------------------------------------------

def _edges(graph: NodeGraph) -> set[tuple[int, str, int]]:
    return {(parent, slot, child)
            for child, entries in graph.parent_slots().items()
            for parent, slot in entries}


def _phase_a(state: ClusterState, order: Optional[Iterable[int]] = None):
    units = list(order) if order is not None else state.graph.allocated()
    outputs: dict[int, dict[str, BusFrame]] = {}
    effects: list[Effect] = []
    outputs[CONTROLLER], controller_effects = controller_step(state)
    effects.extend(controller_effects)
    for uni in units:
        if not state.graph.is_allocated(uni):
            continue
        outputs[uni], node_effects = step_node(state, uni)
        effects.extend(node_effects)
    # commit order is by issuer, whatever order phase A visited nodes in
    effects.sort(key=lambda effect: effect.issuer)
    return outputs, effects


def _latch(state: ClusterState, outputs: dict[int, dict[str, BusFrame]], before: set, reshaped: set[int]):
    latched: dict[int, dict[str, BusFrame]] = {}
    for parent, slot, child in _edges(state.graph):
        if (parent, slot, child) not in before or parent in reshaped or child in reshaped:
            continue
        down = outputs.get(parent, {}).get(slot)
        up = outputs.get(child, {}).get("parent")
        if down is not None:
            latched.setdefault(child, {})["parent"] = down
        if up is not None:
            latched.setdefault(parent, {})[slot] = up
    state.inputs = latched


def _trace_frames(state: ClusterState, outputs: dict[int, dict[str, BusFrame]], edges: set):
    previous = state.pending_outputs
    for parent, slot, child in sorted(edges):
        down = outputs.get(parent, {}).get(slot)
        up = outputs.get(child, {}).get("parent")
        if down is not None and (down.instruction is not None or previous.get(parent, {}).get(slot) != down):
            state.trace(f"{state.tick} {parent}→{child} down {render_frame(down)}")
        if up is not None and (up.instruction is not None or previous.get(child, {}).get("parent") != up):
            state.trace(f"{state.tick} {child}→{parent} up {render_frame(up)}")


def _check_sharing(state: ClusterState):
    for child, entries in state.graph.parent_slots().items():
        if len(entries) > 1 and child not in state.shared_logged:
            state.shared_logged.add(child)
            parents = tuple(parent for parent, _ in entries)
            state.log_collision("data", parents + (child,), f"node {child} has {len(entries)} parents")


def tick(state: ClusterState, order: Optional[Iterable[int]] = None) -> ClusterState:
    state.tick += 1
    before = _edges(state.graph)
    outputs, effects = _phase_a(state, order)
    if state.trace_enabled:
        _trace_frames(state, outputs, before)
    ctx = CommitContext()
    for effect in effects:
        effect.apply(state, ctx)
    delivered = alu_unit.alu_tick(state.alu)
    if delivered is not None:
        state.trace(f"{state.tick} ALU -> {delivered.uni} {delivered.value}")
    _check_sharing(state)
    _latch(state, outputs, before, ctx.reshaped)
    state.pending_outputs = outputs
    state.peak_nodes = max(state.peak_nodes, state.graph.allocated_count())
    return state


def settle(state: ClusterState, limit: Optional[int] = None):
    """Power-on: propagate frames without committing anything until the buses are stable."""
    limit = limit or 2 * state.graph.size + 4
    edges = _edges(state.graph)
    for _ in range(limit):
        outputs, _effects = _phase_a(state)
        previous = state.inputs
        _latch(state, outputs, edges, set())
        state.pending_outputs = outputs
        if state.inputs == previous:
            return


def fingerprint(state: ClusterState) -> tuple:
    graph = state.graph
    registers = tuple((node.kind, node.payload, node.label, node.clp, node.crp, node.rsf, node.rdf, node.phase)
                      for node in graph.nodes)
    inputs = tuple(sorted((uni, tuple(sorted(frames.items()))) for uni, frames in state.inputs.items()))
    recent = tuple(sorted(uni for uni, seen in state.last_instruction.items() if state.tick - seen <= 1))
    return (graph.root, registers, inputs, tuple(state.alu.queue), state.alu.result_out,
            tuple(sorted(state.held.items())), tuple(sorted(state.awaiting)), len(state.instruction_inbox),
            recent, tuple(sorted(state.marks.items())), tuple(sorted(state.redexes.items())))


def is_resolved(state: ClusterState) -> bool:
    root_frame = state.inputs.get(CONTROLLER, {}).get("root")
    if root_frame is None or not root_frame.expression.rsf:
        return False
    if not root_frame.settled or root_frame.goto_target:
        return False
    if state.instruction_inbox or state.held or state.awaiting or not state.alu.idle:
        return False
    return not any(state.graph[uni].phase for uni in state.graph.allocated())


# --- controller API ------------------------------------------------------------

def make_instruction(cfg: ClusterConfig, opcode: Opcode, depth: int = 0, operand: int = 0) -> InstructionFrame:
    """Build a frame the way the configured bus layout carries list depths."""
    if opcode in (Opcode.ACTIVATE_DEPTH, Opcode.UPDATE_DEPTH):
        if cfg.mode == ClusterMode.PAPER_FAITHFUL:
            return InstructionFrame(opcode, operand=depth)
        return InstructionFrame(opcode, operand=operand, depth=depth)
    return InstructionFrame(opcode, operand=operand)


def inject(state: ClusterState, frame: InstructionFrame, peb: Optional[ExpressionFrame] = None,
           item: Optional[Term] = None) -> ClusterState:
    """Queue a controller instruction for the root's parent bus.

    For AddBottomNode and UpdateDepth an ``item`` term is placed into free nodes first
    and the PEB points at it.
    """
    if item is not None:
        item_root = place(state.graph, item) if count_nodes(item) else 0
        peb = ExpressionFrame(kind=ExpressionKind.LIST, clp=item_root)
        state.peak_nodes = max(state.peak_nodes, state.graph.allocated_count())
    state.instruction_inbox.append((frame, peb))
    return state


# --- readback ------------------------------------------------------------------

def _request(state: ClusterState, uni: int, conflicting: set[int]) -> Optional[tuple[int, ExpressionFrame]]:
    """Send ReturnExpression for ``uni`` and tick until the reply reaches the controller."""
    inject(state, InstructionFrame(Opcode.RETURN_EXPRESSION, operand=uni, origin=uni))
    state.returned.clear()
    for _ in range(4 * state.graph.size + 8):
        tick(state)
        state.readback_ticks += 1
        replies, state.returned = state.returned, []
        answer = None
        for responder, origin, frame in replies:
            if origin == uni and answer is None:
                answer = (responder, frame)
            elif responder not in conflicting:
                conflicting.add(responder)
                state.log_collision("readback", (uni, responder),
                                    f"conflicting ReturnExpression from node {responder} while reading node {uni}")
        if answer is not None:
            return answer
    state.log_collision("readback", (uni,), f"no reply to ReturnExpression for node {uni}")
    return None


def _read(state: ClusterState, uni: int, on_path: frozenset[int], conflicting: set[int]) -> Term:
    graph = state.graph
    if uni == 0:
        return NULL_TAIL
    if uni in on_path:
        raise GraphIntegrityError(f"cycle detected at node {uni}")
    if not (0 < uni <= graph.size) or graph[uni].kind == ExpressionKind.FREE:
        raise GraphIntegrityError(f"dangling pointer to node {uni}")
    answer = _request(state, uni, conflicting)
    if answer is None:
        return term_at(graph, uni, collapse_lists=True, on_path=on_path)
    responder, frame = answer
    path = on_path | {uni, responder}

    def child(pointer: int) -> Term:
        return _read(state, pointer, path, conflicting)

    kind = frame.kind
    if kind == ExpressionKind.NAME:
        return Name(frame.label if frame.label is not None else frame.payload)
    if kind == ExpressionKind.FUNCTION:
        return Function(frame.label, child(frame.crp))
    if kind == ExpressionKind.APPLICATION:
        return Application(child(frame.clp), child(frame.crp))
    if kind == ExpressionKind.LIST:
        return ListCell(child(frame.clp), child(frame.crp))
    if kind in OP_BY_KIND:
        return Arith(OP_BY_KIND[kind], child(frame.clp), child(frame.crp))
    if kind == ExpressionKind.GOTO:
        return child(frame.clp)
    raise GraphIntegrityError(f"node {responder} answered with kind {kind}")


def readback_live(state: ClusterState) -> Term:
    """Rebuild the result one ReturnExpression at a time over the root bus.

    Every reply costs real ticks, counted in ``readback_ticks``; replies that do not
    belong to the outstanding request are logged as collisions.
    """
    state.reading = True
    try:
        return tidy_names(_read(state, state.graph.root, frozenset(), set()))
    finally:
        state.reading = False


# --- run -----------------------------------------------------------------------

def run(graph: NodeGraph, cfg: Optional[ClusterConfig] = None, *, trace: bool = False) -> RunResult:
    cfg = cfg or ClusterConfig()
    state = ClusterState.create(graph, cfg, trace=trace)
    settle(state)
    if cfg.activated_depth is not None:
        inject(state, make_instruction(cfg, Opcode.ACTIVATE_DEPTH, depth=cfg.activated_depth))

    status = RunStatus.BUDGET_EXHAUSTED
    previous = fingerprint(state)
    while state.tick < cfg.max_ticks:
        tick(state)
        if state.fault:
            status = RunStatus.FAULT
            break
        if is_resolved(state):
            status = RunStatus.RESOLVED
            break
        current = fingerprint(state)
        if current == previous:
            status = RunStatus.STALLED
            break
        previous = current

    ticks = state.tick
    final_term: Optional[Term] = None
    collisions_before = len(state.collision_log)
    try:
        if status in (RunStatus.RESOLVED, RunStatus.STALLED):
            final_term = readback_live(state)
        else:
            final_term = tidy_names(term_at(state.graph, state.graph.root, collapse_lists=True))
    except GraphIntegrityError as exc:
        state.log_collision("readback", (state.graph.root,), str(exc))
    if status == RunStatus.RESOLVED:
        if state.collision_log:
            status = RunStatus.COLLISION
        elif cfg.activated_depth is not None and final_term is not None and contains_list(final_term):
            status = RunStatus.SUSPENDED
    logger.info("run_done ticks=%d readback_ticks=%d peak_nodes=%d status=%s readback_collisions=%d", ticks,
                state.readback_ticks, state.peak_nodes, status, len(state.collision_log) - collisions_before)
    return RunResult(
        final_term=final_term,
        ticks=ticks,
        peak_nodes=state.peak_nodes,
        status=status,
        collision_log=tuple(state.collision_log),
        readback_ticks=state.readback_ticks,
        trace=tuple(state.trace_lines),
    )
