from django.test import SimpleTestCase, override_settings

from fabric.buses import ClusterMode, ExpressionKind
from fabric.compiler import ClusterConfig, NodeGraph, compile, dump, place, readback_static, term_at
from fabric.errors import ClusterLimitExceeded, ConfigError, GraphIntegrityError
from fabric.syntax import NULL_TAIL, Name, parse


class CompileTests(SimpleTestCase):
    def test_addition_layout(self):
        graph = compile(parse("(δ+ 1.1)"))
        self.assertEqual(graph.allocated_count(), 3)
        root = graph[graph.root]
        self.assertEqual(root.kind, ExpressionKind.ADD)
        for child in (root.clp, root.crp):
            self.assertEqual((graph[child].kind, graph[child].payload, graph[child].rsf),
                             (ExpressionKind.NAME, 1, 1))

    def test_function_owns_a_binder_node(self):
        graph = compile(parse("λx.x"))
        function = graph[graph.root]
        binder, body = graph[function.clp], graph[function.crp]
        self.assertEqual(binder.kind, ExpressionKind.NAME)
        self.assertEqual(binder.label, function.label)
        self.assertEqual(body.label, function.label)

    def test_binder_labels_are_unique(self):
        graph = compile(parse("(λx.x) (λx.x)"))
        labels = [graph[uni].label for uni in graph.allocated() if graph[uni].kind == ExpressionKind.FUNCTION]
        self.assertEqual(len(set(labels)), 2)

    def test_comparison_flags(self):
        applied = compile(parse("(δ< a.b) 1"))
        self.assertEqual(applied[applied[applied.root].clp].rdf, 0)
        bare = compile(parse("(δ< a.b)"))
        self.assertEqual(bare[bare.root].rdf, 1)

    def test_list_rows_fit(self):
        self.assertEqual(compile(parse("(λf.f)(γ a.(γ b.∅))")).allocated_count(), 8)
        self.assertEqual(compile(parse("(γ (λf.f).(γ (λf.e).∅)) a")).allocated_count(), 10)

    def test_cluster_limit(self):
        with self.assertRaisesMessage(ClusterLimitExceeded, "need 21, limit 16"):
            compile(parse("(λn.λf.λx.f((n f) x))(λf.λx.(f x))"))

    def test_empty_expression(self):
        with self.assertRaises(GraphIntegrityError):
            compile(NULL_TAIL)

    def test_static_readback(self):
        for text in ("(δ+ (δ+ 1.1).(δ+ 1.1))", "(γ (λf.f).(γ (λf.e).∅)) a", "λx.λy.x y"):
            with self.subTest(text=text):
                self.assertEqual(readback_static(compile(parse(text))), parse(text))

    def test_dump_format(self):
        lines = dump(compile(parse("(δ+ 1.1)"))).splitlines()
        self.assertEqual(lines, ["1 Add 0 2 3 0 0", "2 Name 1 0 0 1 0", "3 Name 1 0 0 1 0"])


class GraphIntegrityTests(SimpleTestCase):
    def test_dangling_pointer(self):
        graph = compile(parse("(δ+ 1.1)"))
        graph[graph.root].crp = 9
        with self.assertRaisesMessage(GraphIntegrityError, "dangling pointer"):
            term_at(graph, graph.root)

    def test_cycle(self):
        graph = compile(parse("(δ+ 1.1)"))
        graph[graph.root].crp = graph.root
        with self.assertRaisesMessage(GraphIntegrityError, "cycle"):
            term_at(graph, graph.root)

    def test_place_reuses_free_nodes(self):
        graph = NodeGraph(size=4)
        self.assertEqual(place(graph, Name("z")), 1)
        with self.assertRaises(ClusterLimitExceeded):
            place(graph, parse("(δ+ 1.(δ+ 1.1))"))


class ClusterConfigTests(SimpleTestCase):
    def test_defaults(self):
        cfg = ClusterConfig()
        self.assertEqual((cfg.nodes_per_cluster, cfg.alu_queue_capacity, cfg.mode),
                         (16, 16, ClusterMode.DEDICATED_DEPTH))

    def test_mode_spelling(self):
        self.assertEqual(ClusterConfig(mode="paper-faithful").mode, ClusterMode.PAPER_FAITHFUL)

    def test_invalid_combinations(self):
        for overrides in ({"nodes_per_cluster": 17, "id_width": 4}, {"value_width": 1}, {"mode": "wide"},
                          {"alu_queue_capacity": -1}, {"max_ticks": 0}):
            with self.subTest(overrides=overrides):
                with self.assertRaises(ConfigError):
                    ClusterConfig(**overrides)

    @override_settings(FABRIC_NODES_PER_CLUSTER=8, FABRIC_MODE="paper_faithful")
    def test_from_settings(self):
        cfg = ClusterConfig.from_settings(max_ticks=50)
        self.assertEqual((cfg.nodes_per_cluster, cfg.mode, cfg.max_ticks), (8, "paper_faithful", 50))
