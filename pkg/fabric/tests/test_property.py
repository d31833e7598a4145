import logging
import random
from collections import Counter

from django.test import SimpleTestCase

from fabric.buses import ClusterMode, Opcode
from fabric.compiler import ClusterConfig, chain_of, compile, readback_static
from fabric.errors import EvaluationError
from fabric.machine import (
    CONTROLLER,
    ClusterState,
    RunStatus,
    fingerprint,
    inject,
    make_instruction,
    reported_depth,
    run,
    settle,
    tick,
)
from fabric.oracle import EvalConfig, alpha_equal, reduce
from fabric.syntax import (
    NULL_TAIL,
    Application,
    Arith,
    ArithOp,
    Function,
    ListCell,
    Name,
    count_nodes,
    free_names,
    parse,
    print_term,
)

logger = logging.getLogger(__name__)

CASES = 1000
SEED = 20240611
SYMBOLS = "abcde"


def build_list(items):
    tail = NULL_TAIL
    for item in reversed(items):
        tail = ListCell(item, tail)
    return tail


class TermGenerator:
    """Random closed-enough terms that fit one 16-node cluster."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def number(self):
        return Name(self.rng.randint(-8, 8))

    def symbol(self):
        return Name(self.rng.choice(SYMBOLS))

    def arithmetic(self, depth=2):
        if depth == 0 or self.rng.random() < 0.4:
            return self.number()
        op = self.rng.choice((ArithOp.ADD, ArithOp.MULT))
        return Arith(op, self.arithmetic(depth - 1), self.arithmetic(depth - 1))

    def comparator(self):
        return self.rng.choice((ArithOp.LESS_ZERO, ArithOp.EQUAL_ZERO, ArithOp.GREAT_ZERO))

    def comparison(self):
        left, right = (Name(symbol) for symbol in self.rng.sample(SYMBOLS, 2))
        return Application(Arith(self.comparator(), left, right), self.arithmetic(1))

    def redex(self):
        """A small β-redex whose result is a symbol."""
        if self.rng.random() < 0.5:
            return Application(Function("y", Name("y")), self.symbol())
        return Application(Function("y", self.symbol()), self.number())

    def beta(self):
        body_op = self.rng.choice((ArithOp.ADD, ArithOp.MULT))
        shape = self.rng.randrange(3)
        if shape == 0:
            body = Arith(body_op, Name("x"), self.number())
        elif shape == 1:
            body = Arith(body_op, Name("x"), Name("x"))
        else:
            body = Name("x")
        return Application(Function("x", body), self.arithmetic(1))

    def listing(self):
        items = [self.rng.choice((self.number, self.arithmetic))() for _ in range(self.rng.randint(2, 3))]
        return Application(Function("f", Name("f")), build_list(items)), self.rng.randrange(len(items))

    def list_operator(self):
        functions = [
            Function("x", Name("x")),
            Function("x", Arith(ArithOp.ADD, Name("x"), self.number())),
            Function("x", self.symbol()),
        ]
        self.rng.shuffle(functions)
        items = functions[:2]
        return Application(build_list(items), self.number()), self.rng.randrange(len(items))

    def branch_redex(self):
        """β-redexes waiting in the branches of an applied comparison."""
        return Application(Arith(self.comparator(), self.redex(), self.redex()), self.number())

    def nested(self):
        shape = self.rng.randrange(3)
        if shape == 0:
            # the body applies its argument, so one β feeds another
            increment = Function("x", Arith(ArithOp.ADD, Name("x"), self.number()))
            return Application(Function("f", Application(Name("f"), self.number())), increment)
        if shape == 1:
            body = Application(Arith(self.comparator(), self.symbol(), self.symbol()), Name("x"))
            return Application(Function("x", body), self.arithmetic(1))
        return Application(Function("x", Arith(ArithOp.MULT, Name("x"), self.number())),
                           Arith(ArithOp.ADD, self.number(), self.number()))

    def case(self):
        """Return ``(term, activated_depth)``."""
        while True:
            kind = self.rng.choice(("arithmetic", "comparison", "beta", "listing", "list_operator",
                                    "branch_redex", "nested"))
            if kind in ("listing", "list_operator"):
                term, depth = getattr(self, kind)()
            else:
                term, depth = getattr(self, kind)(), None
            if count_nodes(term) <= 16:
                return term, depth


class NaiveReducer:
    """Leftmost-outermost β with capture-avoiding substitution, nothing else."""

    def __init__(self, fuel=200):
        self.fuel = fuel
        self.serial = 0

    def substitute(self, term, name, value):
        if isinstance(term, Name):
            return value if term.value == name else term
        if isinstance(term, Application):
            return Application(self.substitute(term.operator, name, value),
                               self.substitute(term.operand, name, value))
        if term.binder == name:
            return term
        if term.binder in free_names(value):
            self.serial += 1
            fresh = f"{term.binder}{self.serial}"
            body = self.substitute(term.body, term.binder, Name(fresh))
            return Function(fresh, self.substitute(body, name, value))
        return Function(term.binder, self.substitute(term.body, name, value))

    def step(self, term):
        if isinstance(term, Application):
            if isinstance(term.operator, Function):
                return self.substitute(term.operator.body, term.operator.binder, term.operand)
            reduced = self.step(term.operator)
            if reduced is not None:
                return Application(reduced, term.operand)
            reduced = self.step(term.operand)
            return Application(term.operator, reduced) if reduced is not None else None
        if isinstance(term, Function):
            reduced = self.step(term.body)
            return Function(term.binder, reduced) if reduced is not None else None
        return None

    def normalize(self, term):
        for _ in range(self.fuel):
            reduced = self.step(term)
            if reduced is None:
                return term
            term = reduced
        return None


def pure_terms(rng, count):
    """Applications of small combinators to symbols."""
    combinators = [
        "λx.x",
        "λx.λy.x",
        "λx.λy.y",
        "λf.λx.f x",
        "λx.λy.y x",
        "λf.λg.λx.f (g x)",
    ]
    terms = []
    while len(terms) < count:
        term = parse(rng.choice(combinators))
        for _ in range(rng.randint(1, 3)):
            operand = parse(rng.choice(combinators)) if rng.random() < 0.3 else Name(rng.choice(SYMBOLS))
            term = Application(term, operand)
        if count_nodes(term) <= 16:
            terms.append(term)
    return terms


class OracleAgreementTests(SimpleTestCase):
    def test_resolved_runs_match_the_reference_evaluator(self):
        generator = TermGenerator(random.Random(SEED))
        statuses = Counter()
        compared = 0
        for index in range(CASES):
            term, depth = generator.case()
            cfg = ClusterConfig(activated_depth=depth, max_ticks=400)
            result = run(compile(term, cfg), cfg)
            statuses[result.status] += 1
            if result.status != RunStatus.RESOLVED:
                continue
            try:
                expected = reduce(term, EvalConfig(activated_depth=depth)).normal_form
            except EvaluationError:
                continue
            compared += 1
            with self.subTest(index=index, term=print_term(term), depth=depth):
                self.assertTrue(alpha_equal(result.final_term, expected),
                                f"{print_term(result.final_term)} != {print_term(expected)}")
        logger.info("property_statuses %s", dict(statuses))
        self.assertEqual(sum(statuses.values()), CASES)
        self.assertGreater(compared, CASES // 2, f"statuses {dict(statuses)}")
        self.assertLess(statuses[RunStatus.FAULT] + statuses[RunStatus.STALLED], CASES // 4,
                        f"statuses {dict(statuses)}")

    def test_pure_terms_match_a_naive_reducer(self):
        for term in pure_terms(random.Random(SEED), 60):
            naive = NaiveReducer().normalize(term)
            if naive is None:
                continue
            with self.subTest(term=print_term(term)):
                self.assertTrue(alpha_equal(reduce(term).normal_form, naive))
                result = run(compile(term))
                if result.status == RunStatus.RESOLVED:
                    self.assertTrue(alpha_equal(result.final_term, naive),
                                    f"{print_term(result.final_term)} != {print_term(naive)}")


class StaticRoundTripTests(SimpleTestCase):
    def generated(self, count=300):
        generator = TermGenerator(random.Random(SEED + 1))
        return [generator.case()[0] for _ in range(count)]

    def test_printed_terms_parse_back(self):
        for term in self.generated():
            with self.subTest(term=print_term(term)):
                self.assertEqual(parse(print_term(term)), term)

    def test_compiled_graph_reads_back_the_source(self):
        for term in self.generated():
            with self.subTest(term=print_term(term)):
                self.assertEqual(readback_static(compile(term)), term)


class TickInvariantTests(SimpleTestCase):
    TICKS = 80

    def powered(self, term, depth):
        cfg = ClusterConfig(activated_depth=depth)
        state = ClusterState.create(compile(term, cfg), cfg)
        settle(state)
        if depth is not None:
            inject(state, make_instruction(cfg, Opcode.ACTIVATE_DEPTH, depth=depth))
        return state

    def test_visiting_order_does_not_change_the_outcome(self):
        generator = TermGenerator(random.Random(SEED + 2))
        for index in range(60):
            term, depth = generator.case()
            forward, backward = self.powered(term, depth), self.powered(term, depth)
            with self.subTest(index=index, term=print_term(term)):
                for _ in range(self.TICKS):
                    tick(forward, order=forward.graph.allocated())
                    tick(backward, order=reversed(backward.graph.allocated()))
                    self.assertEqual(fingerprint(forward), fingerprint(backward))
                self.assertEqual(forward.collision_log, backward.collision_log)

    def test_allocation_stays_within_the_cluster(self):
        generator = TermGenerator(random.Random(SEED + 3))
        for index in range(60):
            term, depth = generator.case()
            state = self.powered(term, depth)
            with self.subTest(index=index, term=print_term(term)):
                for _ in range(self.TICKS):
                    tick(state)
                    self.assertLessEqual(state.graph.allocated_count(), state.graph.size)
                    self.assertLessEqual(state.peak_nodes, state.graph.size)

    def test_depths_agree_along_every_chain(self):
        rng = random.Random(SEED + 4)
        for mode in ClusterMode.values:
            for _ in range(20):
                items = [Name(rng.choice(SYMBOLS)) for _ in range(rng.randint(1, 6))]
                cfg = ClusterConfig(mode=mode)
                state = ClusterState.create(compile(build_list(items), cfg), cfg)
                settle(state)
                cells = chain_of(state.graph, state.graph.root)
                parents = [(CONTROLLER, "root")] + [(cell, "crp") for cell in cells[:-1]]
                with self.subTest(mode=mode, length=len(items)):
                    depths = [reported_depth(state, state.inputs[parent][slot]) for parent, slot in parents]
                    self.assertEqual(depths, list(range(len(items), 0, -1)))
