"""Command-line driver: ``mirsl FILE... [--function NAME] [--trace] [--format text|json]``.

Exit status: 0 when every selected function verifies, 1 when at least one
fails, 2 on unreadable or ill-formed input or when the path limit is hit.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field

from .errors import PathLimitExceeded
from .executor import VerificationResult, node_to_json, verify_function
from .frontend import ParseError, SourceFile, parse_program
from .symbolic import SymbolSource


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...]
    function_filter: str | None = None
    emit_trace: bool = False
    output_format: str = "text"
    max_paths: int = 10_000

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input file is required")
        if self.output_format not in ("text", "json"):
            raise ValueError(f"unknown format {self.output_format!r}")
        if self.max_paths < 1:
            raise ValueError("max_paths must be positive")


@dataclass
class FunctionReport:
    file: str
    result: VerificationResult


@dataclass
class Report:
    functions: list[FunctionReport] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def totals(self) -> dict:
        return {
            "functions": len(self.functions),
            "verified": sum(f.result.verified for f in self.functions),
            "failed": sum(not f.result.verified for f in self.functions),
            "skipped_unwind": sum(f.result.skipped_unwind for f in self.functions),
        }

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        return 1 if any(not f.result.verified for f in self.functions) else 0


def run(cfg: RunConfig, out=None, err=None) -> tuple[Report, int]:
    """Parse, verify and print a report; returns the report and the exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    start = time.perf_counter()
    report = Report()
    src = SymbolSource()
    for path in cfg.inputs:
        try:
            program = parse_program(SourceFile.read(path))
        except OSError as e:
            report.errors.append(f"{path}: error: {e.strerror or e}")
            continue
        except UnicodeDecodeError as e:
            report.errors.append(f"{path}: error: EncodingError: invalid UTF-8 at byte {e.start}")
            continue
        except ParseError as e:
            report.errors.extend(f"{path}:{d}" for d in e.diagnostics)
            continue
        for name in sorted(program.function_map):
            if cfg.function_filter is not None and name != cfg.function_filter:
                continue
            try:
                result = verify_function(program, program.function_map[name], cfg.emit_trace, cfg.max_paths, src)
            except PathLimitExceeded as e:
                report.errors.append(f"{path}: error: PathLimitExceeded: {e.detail}")
                continue
            report.functions.append(FunctionReport(path, result))
    report.functions.sort(key=lambda f: (f.result.function, f.file))
    report.wall_time = time.perf_counter() - start
    for line in report.errors:
        print(line, file=err)
    out.write(render_report(report, cfg.output_format))
    return report, report.exit_code


def _function_json(f: FunctionReport) -> dict:
    r = f.result
    entry = {
        "file": f.file,
        "function": r.function,
        "status": r.status,
        "paths": r.paths_explored,
        "skipped_unwind": r.skipped_unwind,
        "failure": None,
    }
    if r.first_failure is not None:
        ff = r.first_failure
        entry["failure"] = {"location": ff.location(), "kind": ff.kind, "detail": ff.detail}
    if r.tree is not None:
        entry["trace"] = node_to_json(r.tree)
    return entry


def _trace_lines(node, depth: int = 0):
    pad = "    " + "  " * depth
    status = "" if node.outcome == "ongoing" else f"  => {node.outcome}"
    if node.error is not None:
        status += f" ({node.error})"
    yield f"{pad}{node.block}[{node.step_index}] {node.step}{status}"
    yield f"{pad}  heap: {{{', '.join(node.state.heap.render())}}}"
    yield f"{pad}  pc:   {{{', '.join(map(str, node.state.pc.facts))}}}"
    for c in node.children:
        yield from _trace_lines(c, depth + (len(node.children) > 1))


def render_report(report: Report, fmt: str = "text") -> str:
    if fmt == "json":
        doc = {
            "functions": [_function_json(f) for f in report.functions],
            "totals": report.totals,
            "wall_time": round(report.wall_time, 6),
            "errors": list(report.errors),
        }
        return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    lines = []
    for f in report.functions:
        r = f.result
        lines.append(f"{r.function}: {r.status.upper()} ({r.paths_explored} paths)")
        if r.skipped_unwind:
            lines.append(f"  {r.skipped_unwind} unwind path(s) not verified")
        if r.first_failure is not None:
            ff = r.first_failure
            lines.append(f"  at {f.file}:{ff.line}:{ff.column} ({ff.block}[{ff.step}]): {ff.kind}: {ff.detail}")
        if r.tree is not None:
            lines.extend(_trace_lines(r.tree))
    t = report.totals
    lines.append(f"totals: {t['verified']} verified, {t['failed']} failed, {t['skipped_unwind']} skipped-unwind")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mirsl", description="Verify mini-MIR functions against their contracts.")
    ap.add_argument("files", nargs="+", metavar="FILE", help=".mmir source files")
    ap.add_argument("--function", dest="function_filter", metavar="NAME", help="verify only this function")
    ap.add_argument("--trace", action="store_true", help="include the symbolic execution tree")
    ap.add_argument("--format", choices=("text", "json"), default="text")
    ap.add_argument("--max-paths", type=int, default=10_000, metavar="N")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.max_paths < 1:
        ap.error("--max-paths must be positive")
    cfg = RunConfig(tuple(args.files), args.function_filter, args.trace, args.format, args.max_paths)
    _, code = run(cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
