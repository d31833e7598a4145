from django.test import SimpleTestCase

from fabric.alu import AluOp, AluRequest, AluState, alu_tick, cancel, compute, request
from fabric.errors import AluQueueOverflow


def truncate(value, width):
    value &= (1 << width) - 1
    return value - (1 << width) if value >> (width - 1) else value


class ComputeTests(SimpleTestCase):
    def test_four_bit_add_and_mult_match_truncation(self):
        for a in range(-8, 8):
            for b in range(-8, 8):
                self.assertEqual(compute(AluOp.ADD, a, b, 4).value, truncate(a + b, 4))
                self.assertEqual(compute(AluOp.MULT, a, b, 4).value, truncate(a * b, 4))

    def test_comparison_trichotomy(self):
        for a in range(-8, 8):
            truths = [compute(op, a, width=4).truth for op in (AluOp.CMP_GT0, AluOp.CMP_LT0, AluOp.CMP_EQ0)]
            self.assertEqual(sum(truths), 1, a)

    def test_published_values(self):
        self.assertEqual(compute(AluOp.ADD, 1, 1).value, 2)
        self.assertEqual(compute(AluOp.MULT, 3, 3).value, 9)
        self.assertEqual(compute(AluOp.ADD, 127, 1).value, -128)

    def test_unknown_opcode(self):
        with self.assertRaises(ValueError):
            compute("shift", 1, 1)


class QueueTests(SimpleTestCase):
    def test_request_is_served_the_tick_after_submission(self):
        state = AluState(capacity=4)
        request(state, AluRequest(5, 1, 1, AluOp.ADD))
        self.assertIsNone(alu_tick(state))
        result = alu_tick(state)
        self.assertEqual((result.uni, result.value), (5, 2))
        self.assertEqual(state.result_out, result)
        alu_tick(state)
        self.assertTrue(state.idle)

    def test_service_order_is_last_in_first_out(self):
        for length in range(1, 9):
            state = AluState(capacity=8)
            for uni in range(1, length + 1):
                request(state, AluRequest(uni, uni, 0, AluOp.ADD))
            served = []
            alu_tick(state)
            for _ in range(length):
                served.append(alu_tick(state).uni)
            self.assertEqual(served, list(range(length, 0, -1)))

    def test_continuous_requests_starve_the_stack(self):
        state = AluState(capacity=16)
        for uni in range(1, 6):
            request(state, AluRequest(uni, 1, 1, AluOp.ADD))
            self.assertIsNone(alu_tick(state))
        self.assertEqual(len(state.queue), 5)

    def test_overflow(self):
        state = AluState(capacity=1)
        request(state, AluRequest(1, 1, 1, AluOp.ADD))
        with self.assertRaises(AluQueueOverflow):
            request(state, AluRequest(2, 1, 1, AluOp.ADD))

    def test_cancel_drops_pending_work(self):
        state = AluState(capacity=4)
        request(state, AluRequest(3, 1, 1, AluOp.ADD))
        request(state, AluRequest(4, 2, 2, AluOp.ADD))
        cancel(state, 4)
        alu_tick(state)
        self.assertEqual(alu_tick(state).uni, 3)

    def test_null_node_cannot_request(self):
        with self.assertRaises(ValueError):
            AluRequest(0, 1, 1, AluOp.ADD)

    def test_idle_tracks_queue_and_output(self):
        state = AluState(capacity=2)
        self.assertTrue(state.idle)
        request(state, AluRequest(3, 2, 2, AluOp.MULT))
        self.assertFalse(state.idle)
        alu_tick(state)
        alu_tick(state)
        self.assertFalse(state.idle)
        alu_tick(state)
        self.assertTrue(state.idle)
