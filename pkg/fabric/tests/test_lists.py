from django.test import SimpleTestCase

from fabric.buses import Opcode
from fabric.compiler import ClusterConfig, chain_of, compile, readback_static
from fabric.machine import ClusterState, RunStatus, inject, make_instruction, run, settle, tick
from fabric.oracle import EvalConfig, reduce
from fabric.syntax import DepthOrigin, ListCell, Name, NULL_TAIL, parse

ROW_10 = "(λf.f)(γ a.(γ b.∅))"
ROW_11 = "(λf.f)(γ (δ+ 3.3).(γ (δ* 3.3).∅))"
ROW_12 = "(γ (λf.f).(γ (λf.e).∅)) a"


def simulate(text, depth, origin=DepthOrigin.OUTERMOST, **overrides):
    cfg = ClusterConfig(activated_depth=depth, depth_origin=origin, **overrides)
    return run(compile(parse(text), cfg), cfg)


def chain_text(length):
    items = "abcde"[:length]
    text = "∅"
    for item in reversed(items):
        text = f"(γ {item}.{text})"
    return text


def powered_chain(length, **overrides):
    cfg = ClusterConfig(**overrides)
    state = ClusterState.create(compile(parse(chain_text(length)), cfg), cfg)
    settle(state)
    return state


def drain(state, ticks=40):
    for _ in range(ticks):
        tick(state)
    return state


class PublishedListRowTests(SimpleTestCase):
    def test_rows_select_the_addressed_item(self):
        cases = [
            (ROW_10, 0, Name("a")),
            (ROW_10, 1, Name("b")),
            (ROW_11, 0, Name(6)),
            (ROW_11, 1, Name(9)),
            (ROW_12, 0, Name("a")),
            (ROW_12, 1, Name("e")),
        ]
        published_ticks = {ROW_10: 17, ROW_11: 24}
        for text, depth, expected in cases:
            with self.subTest(text=text, depth=depth):
                result = simulate(text, depth)
                self.assertEqual(result.status, RunStatus.RESOLVED)
                self.assertEqual(result.final_term, expected)
                self.assertLessEqual(result.ticks, 4 * published_ticks.get(text, 17 if depth else 6))

    def test_innermost_origin_counts_from_the_tail(self):
        self.assertEqual(simulate(ROW_10, 1, DepthOrigin.INNERMOST).final_term, Name("a"))
        self.assertEqual(simulate(ROW_10, 0, DepthOrigin.INNERMOST).final_term, Name("b"))

    def test_invalid_depth_suspends(self):
        result = simulate(ROW_10, 5)
        self.assertEqual(result.status, RunStatus.SUSPENDED)
        self.assertEqual(result.final_term, ListCell(Name("a"), ListCell(Name("b"), NULL_TAIL)))
        oracle = reduce(parse(ROW_10), EvalConfig(activated_depth=5, depth_origin=DepthOrigin.OUTERMOST))
        self.assertTrue(oracle.suspended)

    def test_lists_start_inactive(self):
        graph = compile(parse(ROW_10))
        self.assertTrue(all(graph[cell].rsf == 0 for cell in chain_of(graph, graph[graph.root].crp)))


class ActivateDepthTests(SimpleTestCase):
    def test_at_most_one_active_cell(self):
        for origin in DepthOrigin.values:
            for length in range(1, 6):
                for depth in range(length + 1):
                    with self.subTest(origin=origin, length=length, depth=depth):
                        state = powered_chain(length, depth_origin=origin)
                        inject(state, make_instruction(state.cfg, Opcode.ACTIVATE_DEPTH, depth=depth))
                        drain(state)
                        cells = chain_of(state.graph, state.graph.root)
                        active = [index for index, cell in enumerate(cells) if state.graph[cell].rsf]
                        if depth >= length:
                            self.assertEqual(active, [])
                        elif origin == DepthOrigin.OUTERMOST:
                            self.assertEqual(active, [depth])
                        else:
                            self.assertEqual(active, [length - 1 - depth])

    def test_paper_faithful_layout_activates_the_same_cell(self):
        state = powered_chain(3, mode="paper_faithful")
        inject(state, make_instruction(state.cfg, Opcode.ACTIVATE_DEPTH, depth=2))
        drain(state)
        cells = chain_of(state.graph, state.graph.root)
        self.assertEqual([state.graph[cell].rsf for cell in cells], [1, 0, 0])


class ChainEditTests(SimpleTestCase):
    def test_add_then_remove_bottom_restores_the_chain(self):
        for length in range(1, 5):
            with self.subTest(length=length):
                state = powered_chain(length)
                original = readback_static(state.graph)
                inject(state, make_instruction(state.cfg, Opcode.ADD_BOTTOM_NODE), item=Name("z"))
                drain(state)
                cells = chain_of(state.graph, state.graph.root)
                self.assertEqual(len(cells), length + 1)
                self.assertEqual(state.graph[state.graph[cells[-1]].clp].label, "z")

                inject(state, make_instruction(state.cfg, Opcode.REMOVE_BOTTOM_NODE))
                drain(state)
                self.assertEqual(readback_static(state.graph), original)
                self.assertEqual(state.graph.allocated_count(), 2 * length)
                self.assertEqual(state.collision_log, [])

    def test_update_depth_replaces_the_item(self):
        state = powered_chain(2)
        inject(state, make_instruction(state.cfg, Opcode.UPDATE_DEPTH, depth=0), item=Name(7))
        drain(state)
        self.assertEqual(readback_static(state.graph), parse("(γ a.(γ 7.∅))"))
        self.assertEqual(state.graph.allocated_count(), 4)
