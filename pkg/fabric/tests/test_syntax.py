from django.test import SimpleTestCase

from fabric.errors import ParseError, ValueRangeError
from fabric.syntax import (
    NULL_TAIL,
    Application,
    Arith,
    ArithOp,
    DepthOrigin,
    Function,
    GoTo,
    ListCell,
    Name,
    cell_depth,
    chain_cells,
    count_nodes,
    free_names,
    make_label,
    parse,
    print_term,
    strip_labels,
    tidy_names,
)

INCREMENT_ONE = "(λn.λf.λx.f((n f) x))(λf.λx.(f x))"


class ParseTests(SimpleTestCase):
    def test_addition(self):
        self.assertEqual(parse("(δ+ 1.1)"), Arith(ArithOp.ADD, Name(1), Name(1)))

    def test_list_with_null_tail(self):
        expected = ListCell(Name("a"), ListCell(Name("b"), NULL_TAIL))
        self.assertEqual(parse("(γ a.(γ b.∅))"), expected)
        self.assertEqual(parse("(γ a.(γ b.0))"), expected)
        self.assertEqual(parse("(/g a.(/g b.null))"), expected)

    def test_applied_comparison_with_negative_ancestor(self):
        term = parse("(δ< a.b) -1")
        self.assertEqual(term, Application(Arith(ArithOp.LESS_ZERO, Name("a"), Name("b")), Name(-1)))

    def test_lambda_body_extends_right(self):
        self.assertEqual(parse("λx.x y"), Function("x", Application(Name("x"), Name("y"))))
        self.assertEqual(parse("\\x.x"), Function("x", Name("x")))

    def test_application_is_left_associative(self):
        self.assertEqual(parse("a b c"), Application(Application(Name("a"), Name("b")), Name("c")))

    def test_operator_aliases(self):
        self.assertEqual(parse("(δ× 2.3)").op, ArithOp.MULT)
        self.assertEqual(parse("(δ= a.b)").op, ArithOp.EQUAL_ZERO)

    def test_out_of_range_literal(self):
        with self.assertRaises(ValueRangeError):
            parse("(δ+ 128.1)")
        self.assertEqual(parse("(δ+ 127.-128)"), Arith(ArithOp.ADD, Name(127), Name(-128)))
        with self.assertRaises(ValueRangeError):
            parse("8", value_width=4)

    def test_list_tail_must_be_a_list(self):
        with self.assertRaisesMessage(ParseError, "list tail must be a list or NULL"):
            parse("(γ a.b)")

    def test_null_only_inside_lists(self):
        for text in ("∅", "f ∅", "∅ a", "λx.∅", "(δ+ ∅.1)", "(γ a.∅) null"):
            with self.subTest(text=text):
                with self.assertRaisesMessage(ParseError, "may only end a list"):
                    parse(text)
        self.assertEqual(parse("(γ ∅.∅)"), ListCell(NULL_TAIL, NULL_TAIL))
        self.assertEqual(parse("(γ null.(γ a.null))"), ListCell(NULL_TAIL, ListCell(Name("a"), NULL_TAIL)))

    def test_delta_missing_pieces(self):
        with self.assertRaisesMessage(ParseError, "missing its operator"):
            parse("(δ 1.1)")
        with self.assertRaisesMessage(ParseError, "missing an operand"):
            parse("(δ+ 1)")

    def test_error_reports_position(self):
        with self.assertRaises(ParseError) as ctx:
            parse("(λx.x")
        self.assertEqual(ctx.exception.position, 5)
        self.assertIn("at position 5", str(ctx.exception))

    def test_unexpected_character(self):
        with self.assertRaises(ParseError):
            parse("a $ b")


class PrintTests(SimpleTestCase):
    def test_print_forms(self):
        self.assertEqual(print_term(parse("(δ+ 1.1)")), "(δ+ 1.1)")
        self.assertEqual(print_term(parse("(γ a.∅)")), "(γ a.∅)")
        self.assertEqual(print_term(parse("(λf.f) a")), "((λf.f) a)")

    def test_printed_term_parses_back(self):
        for text in ("(δ+ (δ+ 1.1).(δ+ 1.1))", "(γ (λf.f).(γ (λf.e).∅)) a", INCREMENT_ONE):
            term = parse(text)
            self.assertEqual(parse(print_term(term)), term)

    def test_goto_prints_its_target(self):
        self.assertEqual(print_term(GoTo(Name("a"))), "a")


class NodeCountTests(SimpleTestCase):
    def test_published_rows(self):
        cases = {
            "(δ+ 1.1)": 3,
            "(δ* 3.3)": 3,
            "(δ< a.b) -1": 5,
            "(λf.f)(γ a.(γ b.∅))": 8,
            "(λf.f)(γ (δ+ 3.3).(γ (δ* 3.3).∅))": 12,
            "(γ (λf.f).(γ (λf.e).∅)) a": 10,
        }
        for text, nodes in cases.items():
            with self.subTest(text=text):
                self.assertEqual(count_nodes(parse(text)), nodes)

    def test_nested_addition_costs_every_leaf(self):
        self.assertEqual(count_nodes(parse("(δ+ (δ+ 1.1).(δ+ 1.1))")), 7)

    def test_increment_applied_to_one(self):
        self.assertEqual(count_nodes(parse(INCREMENT_ONE)), 21)


class HelperTests(SimpleTestCase):
    def test_free_names(self):
        self.assertEqual(free_names(parse("λx.x y (δ+ z.1)")), {"y", "z"})

    def test_strip_labels(self):
        term = Function(make_label("x", 3), Name(make_label("x", 3)))
        self.assertEqual(strip_labels(term), Function("x", Name("x")))

    def test_tidy_names_avoids_capture(self):
        term = Function(make_label("y", 1), Application(Name(make_label("y", 1)), Name("y")))
        self.assertEqual(tidy_names(term), Function("y1", Application(Name("y1"), Name("y"))))

    def test_cell_depths(self):
        cells = chain_cells(parse("(γ a.(γ b.(γ c.∅)))"))
        self.assertEqual([cell.item for cell in cells], [Name("a"), Name("b"), Name("c")])
        self.assertEqual([cell_depth(i, 3, DepthOrigin.INNERMOST) for i in range(3)], [2, 1, 0])
        self.assertEqual([cell_depth(i, 3, DepthOrigin.OUTERMOST) for i in range(3)], [0, 1, 2])
