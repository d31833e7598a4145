"""Lower terms onto a fixed cluster of nodes, and read them back."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

from django.conf import settings

from .buses import COMPARISON_KINDS, ClusterMode, ExpressionFrame, ExpressionKind, normalize_mode
from .errors import ClusterLimitExceeded, ConfigError, GraphIntegrityError
from .syntax import (
    DEFAULT_VALUE_WIDTH,
    NULL_TAIL,
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
    count_nodes,
    make_label,
    strip_labels,
)

logger = logging.getLogger(__name__)

KIND_BY_OP = {
    ArithOp.ADD: ExpressionKind.ADD,
    ArithOp.MULT: ExpressionKind.MULT,
    ArithOp.GREAT_ZERO: ExpressionKind.GREAT_ZERO,
    ArithOp.LESS_ZERO: ExpressionKind.LESS_ZERO,
    ArithOp.EQUAL_ZERO: ExpressionKind.EQUAL_ZERO,
}
OP_BY_KIND = {kind: op for op, kind in KIND_BY_OP.items()}


@dataclass(frozen=True)
class ClusterConfig:
    nodes_per_cluster: int = 16
    id_width: int = 4
    value_width: int = DEFAULT_VALUE_WIDTH
    mode: str = ClusterMode.DEDICATED_DEPTH
    alu_queue_capacity: Optional[int] = None
    max_ticks: int = 1000
    local_compare: bool = False
    depth_origin: str = DepthOrigin.INNERMOST
    activated_depth: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(str(self.mode)))
        if self.alu_queue_capacity is None or self.alu_queue_capacity == 0:
            object.__setattr__(self, "alu_queue_capacity", self.nodes_per_cluster)
        if self.nodes_per_cluster < 1:
            raise ConfigError("a cluster needs at least one node")
        # uni n travels as n - 1 on the wire, so 2**id_width nodes fit
        if self.nodes_per_cluster > 1 << self.id_width:
            raise ConfigError(f"{self.nodes_per_cluster} nodes do not fit {self.id_width}-bit ids")
        if self.value_width < 2:
            raise ConfigError(f"value width must be at least 2 bits, got {self.value_width}")
        if self.alu_queue_capacity < 1:
            raise ConfigError("ALU queue capacity must be at least 1")
        if self.max_ticks < 1:
            raise ConfigError("max_ticks must be at least 1")
        if self.mode not in ClusterMode.values:
            raise ConfigError(f"unknown cluster mode {self.mode!r}")
        if self.depth_origin not in DepthOrigin.values:
            raise ConfigError(f"unknown depth origin {self.depth_origin!r}")
        if self.activated_depth is not None and self.activated_depth < 0:
            raise ConfigError("activated depth must be non-negative")

    @classmethod
    def from_settings(cls, **overrides) -> "ClusterConfig":
        values = {
            "nodes_per_cluster": settings.FABRIC_NODES_PER_CLUSTER,
            "id_width": settings.FABRIC_ID_WIDTH,
            "value_width": settings.FABRIC_VALUE_WIDTH,
            "mode": settings.FABRIC_MODE,
            "alu_queue_capacity": settings.FABRIC_ALU_QUEUE_CAPACITY,
            "max_ticks": settings.FABRIC_MAX_TICKS,
            "local_compare": settings.FABRIC_LOCAL_COMPARE,
            "depth_origin": settings.FABRIC_DEPTH_ORIGIN,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass
class NodeState:
    uni: int
    kind: ExpressionKind = ExpressionKind.FREE
    payload: int = 0
    label: Optional[str] = None
    clp: int = 0
    crp: int = 0
    rsf: int = 0
    rdf: int = 0
    phase: int = 0

    def clear(self):
        self.kind = ExpressionKind.FREE
        self.payload = 0
        self.label = None
        self.clp = self.crp = self.rsf = self.rdf = self.phase = 0

    def frame(self) -> ExpressionFrame:
        return ExpressionFrame(rsf=self.rsf, rdf=self.rdf, kind=self.kind, payload=self.payload,
                               label=self.label, clp=self.clp, crp=self.crp)

    def adopt(self, peb: ExpressionFrame):
        self.kind = ExpressionKind(peb.kind)
        self.payload = peb.payload
        self.label = peb.label
        self.clp = peb.clp
        self.crp = peb.crp
        self.rsf = peb.rsf
        self.rdf = peb.rdf


@dataclass
class NodeGraph:
    size: int
    nodes: list[NodeState] = field(default_factory=list)
    root: int = 0
    label_serial: int = 0
    # allocated but not yet typed (AddBottomNode between its two phases)
    reserved: set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.nodes:
            self.nodes = [NodeState(uni) for uni in range(self.size + 1)]

    def __getitem__(self, uni: int) -> NodeState:
        return self.nodes[uni]

    def is_allocated(self, uni: int) -> bool:
        if uni in self.reserved:
            return True
        return 0 < uni <= self.size and self.nodes[uni].kind != ExpressionKind.FREE

    def allocated(self) -> list[int]:
        return [uni for uni in range(1, self.size + 1) if self.is_allocated(uni)]

    def allocated_count(self) -> int:
        return len(self.allocated())

    def free_count(self) -> int:
        return self.size - self.allocated_count()

    def fresh_label(self, base: str) -> str:
        self.label_serial += 1
        return make_label(base, self.label_serial)

    def children(self, uni: int) -> Iterator[tuple[str, int]]:
        node = self.nodes[uni]
        if node.clp:
            yield "clp", node.clp
        if node.crp:
            yield "crp", node.crp

    def parent_slots(self) -> dict[int, list[tuple[int, str]]]:
        """Map child uni to every (parent uni, slot) pointing at it; the root's parent is 0."""
        slots: dict[int, list[tuple[int, str]]] = {}
        if self.root:
            slots.setdefault(self.root, []).append((0, "root"))
        for uni in self.allocated():
            for slot, child in self.children(uni):
                slots.setdefault(child, []).append((uni, slot))
        return slots

    def set_slot(self, parent: int, slot: str, value: int):
        if parent == 0:
            self.root = value
        else:
            setattr(self.nodes[parent], slot, value)

    def get_slot(self, parent: int, slot: str) -> int:
        if parent == 0:
            return self.root
        return getattr(self.nodes[parent], slot)

    def subtree(self, uni: int) -> list[int]:
        seen = []
        stack = [uni]
        while stack:
            current = stack.pop()
            if not current or current in seen:
                continue
            seen.append(current)
            stack.extend(child for _, child in self.children(current))
        return seen


def allocate(graph: NodeGraph) -> int:
    for uni in range(1, graph.size + 1):
        if not graph.is_allocated(uni):
            graph.reserved.add(uni)
            return uni
    raise ClusterLimitExceeded(graph.allocated_count() + 1, graph.size)


def release(graph: NodeGraph, uni: int):
    graph.reserved.discard(uni)
    graph.nodes[uni].clear()


def commit_node(graph: NodeGraph, uni: int):
    """A reserved node becomes an ordinary allocated node once it has a kind."""
    if graph.nodes[uni].kind != ExpressionKind.FREE:
        graph.reserved.discard(uni)


def _emit(graph: NodeGraph, term: Term, scope: dict[str, str], operator_slot: bool = False) -> int:
    if isinstance(term, NullTail):
        return 0
    uni = allocate(graph)
    node = graph[uni]
    if isinstance(term, Name):
        node.kind = ExpressionKind.NAME
        node.rsf = 1
        if term.is_numeric:
            node.payload = term.value
        else:
            node.label = scope.get(term.value, term.value)
    elif isinstance(term, Function):
        label = graph.fresh_label(term.binder)
        node.kind = ExpressionKind.FUNCTION
        node.label = label
        binder = allocate(graph)
        graph[binder].kind = ExpressionKind.NAME
        graph[binder].label = label
        graph[binder].rsf = 1
        commit_node(graph, binder)
        node.clp = binder
        node.crp = _emit(graph, term.body, {**scope, term.binder: label})
    elif isinstance(term, Application):
        node.kind = ExpressionKind.APPLICATION
        node.clp = _emit(graph, term.operator, scope, operator_slot=True)
        node.crp = _emit(graph, term.operand, scope)
    elif isinstance(term, ListCell):
        node.kind = ExpressionKind.LIST
        node.clp = _emit(graph, term.item, scope)
        node.crp = _emit(graph, term.tail, scope)
    elif isinstance(term, Arith):
        node.kind = KIND_BY_OP[term.op]
        if node.kind in COMPARISON_KINDS and not operator_slot:
            node.rdf = 1
        node.clp = _emit(graph, term.left, scope)
        node.crp = _emit(graph, term.right, scope)
    elif isinstance(term, GoTo):
        node.kind = ExpressionKind.GOTO
        node.clp = _emit(graph, term.target, scope)
    else:
        raise TypeError(f"not a term: {term!r}")
    commit_node(graph, uni)
    return uni


def place(graph: NodeGraph, term: Term) -> int:
    """Emit ``term`` into free nodes of an existing graph without attaching it."""
    needed = count_nodes(term)
    if needed > graph.free_count():
        raise ClusterLimitExceeded(graph.allocated_count() + needed, graph.size)
    return _emit(graph, term, {})


def compile(term: Term, cfg: Optional[ClusterConfig] = None) -> NodeGraph:
    cfg = cfg or ClusterConfig()
    needed = count_nodes(term)
    if needed > cfg.nodes_per_cluster:
        raise ClusterLimitExceeded(needed, cfg.nodes_per_cluster)
    if isinstance(term, NullTail):
        raise GraphIntegrityError("an empty expression has no root node")
    graph = NodeGraph(size=cfg.nodes_per_cluster)
    graph.root = _emit(graph, term, {})
    logger.debug("compiled nodes=%d root=%d", graph.allocated_count(), graph.root)
    return graph


# --- readback ----------------------------------------------------------------

def term_at(graph: NodeGraph, uni: int, *, collapse_lists: bool = False,
            on_path: frozenset[int] = frozenset()) -> Term:
    """Rebuild the term rooted at ``uni``.

    With ``collapse_lists`` an active list chain reads as its active item and GoTo
    nodes read as their targets, which is how the live fabric presents them.
    """
    if uni == 0:
        return NULL_TAIL
    if uni in on_path:
        raise GraphIntegrityError(f"cycle detected at node {uni}")
    if not (0 < uni <= graph.size) or graph[uni].kind == ExpressionKind.FREE:
        raise GraphIntegrityError(f"dangling pointer to node {uni}")
    node = graph[uni]
    path = on_path | {uni}

    def child(pointer: int) -> Term:
        return term_at(graph, pointer, collapse_lists=collapse_lists, on_path=path)

    kind = node.kind
    if kind == ExpressionKind.NAME:
        return Name(node.label if node.label is not None else node.payload)
    if kind == ExpressionKind.FUNCTION:
        binder = graph[node.clp] if node.clp else None
        if binder is None or binder.kind != ExpressionKind.NAME:
            raise GraphIntegrityError(f"function node {uni} has no binder name node")
        return Function(binder.label, child(node.crp))
    if kind == ExpressionKind.APPLICATION:
        return Application(child(node.clp), child(node.crp))
    if kind == ExpressionKind.LIST:
        if collapse_lists:
            active = active_cell(graph, uni)
            if active:
                return term_at(graph, graph[active].clp, collapse_lists=True, on_path=path | {active})
        return ListCell(child(node.clp), child(node.crp))
    if kind in OP_BY_KIND:
        return Arith(OP_BY_KIND[kind], child(node.clp), child(node.crp))
    if kind == ExpressionKind.GOTO:
        target = child(node.clp)
        return target if collapse_lists else GoTo(target)
    raise GraphIntegrityError(f"node {uni} has unknown kind {kind}")


def chain_of(graph: NodeGraph, head: int) -> list[int]:
    cells = []
    current = head
    while current and graph[current].kind == ExpressionKind.LIST and current not in cells:
        cells.append(current)
        current = graph[current].crp
    return cells


def active_cell(graph: NodeGraph, head: int) -> int:
    for cell in chain_of(graph, head):
        if graph[cell].rsf:
            return cell
    return 0


def readback_static(graph: NodeGraph) -> Term:
    return strip_labels(term_at(graph, graph.root))


def dump(graph: NodeGraph) -> str:
    lines = []
    for uni in graph.allocated():
        node = graph[uni]
        payload = node.label if node.label is not None else node.payload
        lines.append(
            f"{uni} {ExpressionKind(node.kind).label} {payload} {node.clp} {node.crp} {node.rsf} {node.rdf}"
        )
    return "\n".join(lines)
