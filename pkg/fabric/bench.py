"""Test-bench files, per-case runs against the oracle, and bench reports."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from django.conf import settings
from django.db import models

from .buses import ClusterMode, normalize_mode
from .compiler import ClusterConfig, compile
from .errors import BenchFormatError, ChurchEncodingError, ClusterLimitExceeded, EvaluationError, \
    GraphIntegrityError, ParseError
from .machine import RunStatus, run
from .oracle import EvalConfig, alpha_equal, alt_node_count, reduce
from .syntax import DepthOrigin, count_nodes, parse, print_term

logger = logging.getLogger(__name__)


class CaseStatus(models.TextChoices):
    PARSE_ERROR = "parse_error", "Parse error"
    ORACLE_ERROR = "oracle_error", "Oracle error"
    COMPILE_ERROR = "compile_error", "Compile error"


@dataclass(frozen=True)
class BenchCase:
    expression: str
    activated_depth: Optional[int] = None
    expected_result: Optional[str] = None
    expected_nodes: Optional[int] = None
    expected_ticks: Optional[int] = None
    mode: Optional[str] = None
    depth_origin: Optional[str] = None
    expected_status: str = RunStatus.RESOLVED
    row: str = ""
    published_alt_nodes: Optional[int] = None
    line_no: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchCase":
        return cls(**data)


# field name -> (BenchCase attribute, converter)
_FIELDS = {
    "depth": ("activated_depth", int),
    "expect": ("expected_result", str),
    "nodes": ("expected_nodes", int),
    "ticks": ("expected_ticks", int),
    "mode": ("mode", normalize_mode),
    "origin": ("depth_origin", str.lower),
    "status": ("expected_status", str.lower),
    "row": ("row", str),
    "alt": ("published_alt_nodes", int),
}


def parse_bench_line(line: str, line_no: int = 0) -> BenchCase:
    expression, *parts = [part.strip() for part in line.split("|")]
    if not expression:
        raise BenchFormatError(line_no, "missing expression")
    values: dict = {"expression": expression, "line_no": line_no}
    for part in parts:
        key, _, raw = part.partition(" ")
        raw = raw.strip()
        if key not in _FIELDS:
            raise BenchFormatError(line_no, f"unknown field {key!r}")
        if not raw:
            raise BenchFormatError(line_no, f"field {key!r} has no value")
        attr, convert = _FIELDS[key]
        if attr in values:
            raise BenchFormatError(line_no, f"field {key!r} given twice")
        try:
            values[attr] = convert(raw)
        except ValueError:
            raise BenchFormatError(line_no, f"field {key!r} expects a number, got {raw!r}") from None
    if values.get("mode") not in (None, *ClusterMode.values):
        raise BenchFormatError(line_no, f"unknown mode {values['mode']!r}")
    if values.get("depth_origin") not in (None, *DepthOrigin.values):
        raise BenchFormatError(line_no, f"unknown depth origin {values['depth_origin']!r}")
    if values.get("expected_status", RunStatus.RESOLVED) not in RunStatus.values:
        raise BenchFormatError(line_no, f"unknown status {values['expected_status']!r}")
    if values.get("activated_depth", 0) < 0:
        raise BenchFormatError(line_no, "depth must be non-negative")
    return BenchCase(**values)


def load_bench(path: str | Path) -> list[BenchCase]:
    """Read a bench file: one case per line, ``#`` comments and blank lines skipped."""
    path = Path(path)
    if not path.exists() and not path.is_absolute():
        candidate = Path(settings.FABRIC_BENCH_DIR) / path
        if candidate.exists():
            path = candidate
    cases = []
    with path.open(encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                cases.append(parse_bench_line(line, line_no))
    logger.info("bench_loaded path=%s cases=%d", path, len(cases))
    return cases


@dataclass
class CaseReport:
    index: int
    row: str
    expression: str
    depth: Optional[int] = None
    mode: str = ""
    nodes: Optional[int] = None
    expected_nodes: Optional[int] = None
    alt_nodes: Optional[int] = None
    published_alt_nodes: Optional[int] = None
    ticks: Optional[int] = None
    expected_ticks: Optional[int] = None
    readback_ticks: Optional[int] = None
    peak_nodes: Optional[int] = None
    sim_result: Optional[str] = None
    oracle_result: Optional[str] = None
    expected_result: Optional[str] = None
    status: str = ""
    expected_status: str = RunStatus.RESOLVED
    oracle_match: bool = False
    expected_match: bool = True
    nodes_match: bool = True
    ticks_within_envelope: bool = True
    collisions: list[str] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    error: str = ""

    @property
    def result_match(self) -> bool:
        return self.oracle_match and self.expected_match

    @property
    def passed(self) -> bool:
        return (not self.error and self.result_match and self.nodes_match
                and self.ticks_within_envelope and self.status == self.expected_status)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["result_match"] = self.result_match
        data["passed"] = self.passed
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CaseReport":
        names = {item.name for item in dataclasses.fields(cls)}
        return cls(**{key: value for key, value in data.items() if key in names})


def case_config(case: BenchCase, cfg: Optional[ClusterConfig] = None) -> ClusterConfig:
    cfg = cfg or ClusterConfig.from_settings()
    overrides = {"activated_depth": case.activated_depth}
    if case.mode:
        overrides["mode"] = case.mode
    if case.depth_origin:
        overrides["depth_origin"] = case.depth_origin
    return dataclasses.replace(cfg, **overrides)


def run_case(case: BenchCase, cfg: Optional[ClusterConfig] = None, *, index: int = 0,
             envelope: Optional[int] = None, trace: bool = False) -> CaseReport:
    """Compile, simulate and read back one case, then check it against the oracle.

    Failures never raise; they end up in ``status`` and ``error``.
    """
    cfg = case_config(case, cfg)
    envelope = envelope if envelope is not None else settings.FABRIC_TICK_ENVELOPE
    report = CaseReport(
        index=index,
        row=case.row,
        expression=case.expression,
        depth=case.activated_depth,
        mode=cfg.mode,
        expected_nodes=case.expected_nodes,
        expected_ticks=case.expected_ticks,
        expected_result=case.expected_result,
        expected_status=case.expected_status,
        published_alt_nodes=case.published_alt_nodes,
    )

    try:
        term = parse(case.expression, value_width=cfg.value_width)
        expected = (parse(case.expected_result, value_width=cfg.value_width)
                    if case.expected_result is not None else None)
    except ParseError as exc:
        return _failed(report, CaseStatus.PARSE_ERROR, str(exc))

    report.nodes = count_nodes(term)
    report.nodes_match = case.expected_nodes is None or report.nodes == case.expected_nodes
    try:
        report.alt_nodes = alt_node_count(term)
    except ChurchEncodingError:
        report.alt_nodes = None

    try:
        graph = compile(term, cfg)
    except (ClusterLimitExceeded, GraphIntegrityError) as exc:
        return _failed(report, CaseStatus.COMPILE_ERROR, str(exc))

    result = run(graph, cfg, trace=trace)
    report.ticks = result.ticks
    report.readback_ticks = result.readback_ticks
    report.peak_nodes = result.peak_nodes
    report.status = result.status
    report.collisions = [str(entry) for entry in result.collision_log]
    report.trace = list(result.trace)
    report.ticks_within_envelope = (case.expected_ticks is None
                                    or result.ticks <= envelope * case.expected_ticks)
    if result.final_term is not None:
        report.sim_result = print_term(result.final_term)
    if expected is not None:
        report.expected_match = result.final_term is not None and alpha_equal(result.final_term, expected)

    eval_cfg = EvalConfig.from_settings(
        value_width=cfg.value_width,
        activated_depth=cfg.activated_depth,
        depth_origin=cfg.depth_origin,
    )
    try:
        oracle = reduce(term, eval_cfg)
    except EvaluationError as exc:
        return _failed(report, CaseStatus.ORACLE_ERROR, str(exc))
    report.oracle_result = print_term(oracle.normal_form)
    report.oracle_match = (result.final_term is not None
                           and alpha_equal(result.final_term, oracle.normal_form))

    if not report.passed:
        logger.warning("bench_case_failed index=%d status=%s expr=%s", index, report.status,
                       case.expression)
    return report


def _failed(report: CaseReport, status: str, error: str) -> CaseReport:
    report.status = status
    report.error = error
    logger.warning("bench_case_failed index=%d status=%s error=%s", report.index, status, error)
    return report


@dataclass
class BenchReport:
    cases: list[CaseReport]

    @property
    def passed(self) -> bool:
        return all(case.passed for case in self.cases)

    @property
    def failures(self) -> list[CaseReport]:
        return [case for case in self.cases if not case.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "total": len(self.cases),
            "failed": len(self.failures),
            "cases": [case.to_dict() for case in self.cases],
        }

    def render_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def render_table(self) -> str:
        header = ("row", "expression", "nodes", "ticks", "depth", "alt nodes", "result", "oracle",
                  "status", "correct?")
        rows = [header]
        for case in self.cases:
            rows.append((
                case.row or str(case.index + 1),
                case.expression,
                _cell(case.nodes),
                _cell(case.ticks),
                _cell(case.depth, "N/A"),
                _alt_cell(case),
                _cell(case.sim_result),
                _cell(case.oracle_result),
                case.status,
                "Success" if case.passed else "FAIL",
            ))
        widths = [max(len(row[col]) for row in rows) for col in range(len(header))]
        lines = ["  ".join(text.ljust(width) for text, width in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, "  ".join("-" * width for width in widths))
        for case in self.cases:
            if case.error:
                lines.append(f"{case.row or case.index + 1}: {case.error}")
            for collision in case.collisions:
                lines.append(f"{case.row or case.index + 1}: {collision}")
        lines.append(f"{len(self.cases) - len(self.failures)}/{len(self.cases)} cases passed")
        return "\n".join(lines)


def _cell(value, empty: str = "-") -> str:
    return empty if value is None else str(value)


def _alt_cell(case: CaseReport) -> str:
    text = _cell(case.alt_nodes)
    if case.published_alt_nodes is not None:
        text += f" ({case.published_alt_nodes})"
    return text


def config_to_dict(cfg: ClusterConfig) -> dict:
    return dataclasses.asdict(cfg)


def run_bench(cases: Iterable[BenchCase], cfg: Optional[ClusterConfig] = None, *,
              dispatch: str = "local", envelope: Optional[int] = None) -> BenchReport:
    """Run every case; ``dispatch="celery"`` fans them out as a task group.

    Reports keep case order either way.
    """
    cases = list(cases)
    cfg = cfg or ClusterConfig.from_settings()
    if dispatch == "celery":
        from celery import group

        from .tasks import run_case_task

        job = group(
            run_case_task.s(case.to_dict(), config_to_dict(cfg), index=index, envelope=envelope)
            for index, case in enumerate(cases)
        )
        results = [item.get() for item in job.apply_async().results]
        reports = sorted((CaseReport.from_dict(item) for item in results), key=lambda item: item.index)
    elif dispatch == "local":
        reports = [run_case(case, cfg, index=index, envelope=envelope) for index, case in enumerate(cases)]
    else:
        raise ValueError(f"unknown dispatch {dispatch!r}")
    report = BenchReport(reports)
    logger.info("bench_done cases=%d failed=%d dispatch=%s", len(reports), len(report.failures), dispatch)
    return report
