import json
import os
import sys

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from fabric.bench import BenchCase, load_bench, run_bench, run_case
from fabric.buses import ClusterMode, normalize_mode
from fabric.compiler import ClusterConfig, compile, dump
from fabric.errors import BenchFormatError, ConfigError, EvaluationError, FabricError, ParseError
from fabric.machine import run
from fabric.oracle import EvalConfig, alt_node_count, church_expand, reduce
from fabric.syntax import Arith, ArithOp, DepthOrigin, Name, count_nodes, parse, print_term

# Church-encoded 127 + 127 as published for comparison.
PUBLISHED_CHURCH_127_PLUS_127 = 1041


def _usage(message):
    return CommandError(message, returncode=2)


class Command(BaseCommand):
    help = "Compile, simulate and check extended λ-calculus expressions on a node cluster."

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest="action", required=True)

        run_parser = actions.add_parser("run", help="Run one expression through compiler and simulator.")
        run_parser.add_argument("expression")
        self._cluster_flags(run_parser)
        run_parser.add_argument("--trace", action="store_true", help="Print per-tick bus frames.")
        run_parser.add_argument("--json", action="store_true")

        bench_parser = actions.add_parser("bench", help="Run every case of a bench file.")
        bench_parser.add_argument("path")
        self._cluster_flags(bench_parser, depth=False)
        bench_parser.add_argument("--json", action="store_true")
        bench_parser.add_argument("--dispatch", choices=("local", "celery"), default="local")
        bench_parser.add_argument("--envelope", type=int, default=None,
                                  help="Allowed ticks as a multiple of the expected figure.")

        oracle_parser = actions.add_parser("oracle", help="Reduce with the reference evaluator only.")
        oracle_parser.add_argument("expression")
        oracle_parser.add_argument("--depth", type=int, default=None)
        oracle_parser.add_argument("--origin", choices=DepthOrigin.values, default=None)
        oracle_parser.add_argument("--value-width", type=int, default=None)
        oracle_parser.add_argument("--max-steps", type=int, default=None)
        oracle_parser.add_argument("--json", action="store_true")

        expand_parser = actions.add_parser("expand", help="Church-expand and count alternative nodes.")
        expand_parser.add_argument("expression")
        expand_parser.add_argument("--value-width", type=int, default=None)

        dump_parser = actions.add_parser("dump", help="Print the compiled node table.")
        dump_parser.add_argument("expression")
        self._cluster_flags(dump_parser)
        dump_parser.add_argument("--trace", action="store_true", help="Also run and print the trace.")

    @staticmethod
    def _cluster_flags(parser, depth=True):
        if depth:
            parser.add_argument("--depth", type=int, default=None, help="Activated list depth.")
        parser.add_argument("--mode", type=normalize_mode, choices=ClusterMode.values, default=None)
        parser.add_argument("--origin", choices=DepthOrigin.values, default=None)
        parser.add_argument("--cluster-size", type=int, default=None)
        parser.add_argument("--value-width", type=int, default=None)
        parser.add_argument("--max-ticks", type=int, default=None)
        parser.add_argument("--local-compare", action="store_true", default=None)

    def handle(self, *args, **options):
        handler = getattr(self, f"handle_{options['action']}")
        try:
            return handler(options)
        except (ConfigError, BenchFormatError, OSError) as exc:
            raise _usage(str(exc)) from exc

    def _config(self, options):
        overrides = {
            "mode": options.get("mode"),
            "depth_origin": options.get("origin"),
            "value_width": options.get("value_width"),
            "max_ticks": options.get("max_ticks"),
            "local_compare": options.get("local_compare"),
            "activated_depth": options.get("depth"),
        }
        size = options.get("cluster_size")
        if size is not None:
            overrides["nodes_per_cluster"] = size
            # widen ids to fit the requested size
            overrides["id_width"] = max(settings.FABRIC_ID_WIDTH, (size - 1).bit_length())
        return ClusterConfig.from_settings(**overrides)

    def _parse(self, text, value_width):
        try:
            return parse(text, value_width=value_width)
        except ParseError as exc:
            raise _usage(f"cannot parse expression: {exc}") from exc

    def handle_run(self, options):
        cfg = self._config(options)
        self._parse(options["expression"], cfg.value_width)
        case = BenchCase(expression=options["expression"], activated_depth=cfg.activated_depth)
        report = run_case(case, cfg, trace=options["trace"])
        if options["json"]:
            self.stdout.write(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
        else:
            for line in report.trace:
                self.stdout.write(line)
            self.stdout.write(f"result: {report.sim_result}")
            self.stdout.write(f"oracle: {report.oracle_result}")
            self.stdout.write(f"status: {report.status}")
            self.stdout.write(f"nodes: {report.nodes}  peak: {report.peak_nodes}  ticks: {report.ticks}"
                              f"  readback ticks: {report.readback_ticks}")
            for collision in report.collisions:
                self.stdout.write(f"collision: {collision}")
            if report.error:
                self.stderr.write(report.error)
        if report.error or not report.result_match:
            raise CommandError("simulator result does not match the reference evaluator", returncode=1)

    def handle_bench(self, options):
        cfg = self._config(options)
        cases = load_bench(options["path"])
        report = run_bench(cases, cfg, dispatch=options["dispatch"], envelope=options["envelope"])
        self.stdout.write(report.render_json() if options["json"] else report.render_table())
        if not report.passed:
            raise CommandError(f"{len(report.failures)} of {len(report.cases)} cases failed", returncode=1)

    def handle_oracle(self, options):
        cfg = EvalConfig.from_settings(
            value_width=options["value_width"],
            activated_depth=options["depth"],
            depth_origin=options["origin"],
            max_steps=options["max_steps"],
        )
        term = self._parse(options["expression"], cfg.value_width)
        try:
            result = reduce(term, cfg)
        except EvaluationError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        if options["json"]:
            payload = {"normal_form": print_term(result.normal_form), "steps": result.steps,
                       "suspended": result.suspended}
            self.stdout.write(json.dumps(payload, ensure_ascii=False))
        else:
            self.stdout.write(print_term(result.normal_form))
            self.stdout.write(f"steps: {result.steps}  suspended: {result.suspended}")

    def handle_expand(self, options):
        width = options["value_width"] or settings.FABRIC_VALUE_WIDTH
        term = self._parse(options["expression"], width)
        try:
            expanded = church_expand(term)
        except FabricError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        self.stdout.write(print_term(expanded))
        self.stdout.write(f"nodes: {count_nodes(term)}  alt nodes: {count_nodes(expanded)}")
        reference = alt_node_count(Arith(ArithOp.ADD, Name(127), Name(127)))
        self.stdout.write(f"church 127+127: {reference} nodes (published {PUBLISHED_CHURCH_127_PLUS_127:,})")

    def handle_dump(self, options):
        cfg = self._config(options)
        term = self._parse(options["expression"], cfg.value_width)
        try:
            graph = compile(term, cfg)
        except FabricError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        self.stdout.write(dump(graph))
        if options["trace"]:
            result = run(graph, cfg, trace=True)
            for line in result.trace:
                self.stdout.write(line)
            self.stdout.write(f"status: {result.status}  ticks: {result.ticks}")


def main(argv=None) -> int:
    """Run the ``fabric`` command outside ``manage.py`` and return its exit code."""
    from django.core.management import execute_from_command_line

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "lambda_fabric.settings")
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        execute_from_command_line(["manage.py", "fabric", *argv])
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
