"""Command line entry point: ``gsl2sql compile|emit-schema|interpret|verify``."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import List, Optional

import click

from . import sql as S
from .backend import MUTATIONS, CompileError, compile_operation
from .model import ModelError, check_model
from .parser import ParseError, SourceUnit, parse_model
from .paths import ResolveError, resolve_program, table_model_for
from .semantics import EvalError, dump_io, dump_state, eval_gsl, load_state
from .tables import SchemaError, emit_ddl
from .verifier import (
    Bounds, Violation, case_header, check_simulation, generate_case, hrs_fixture_cases, run_case,
)

STAGES = (
    (ParseError, "parse"),
    (ModelError, "model"),
    (SchemaError, "schema"),
    (ResolveError, "resolve"),
    (CompileError, "compile"),
    (EvalError, "interpret"),
)


class Failure(Exception):
    """Diagnostic already rendered for the user; exit status 1."""


def _stage_error(e: Exception, where: str = "") -> Failure:
    stage = next((name for cls, name in STAGES if isinstance(e, cls)), "internal")
    loc = f" in {where}" if where and not isinstance(e, ParseError) else ""
    return Failure(f"{stage} error{loc}: {e}")


def _load_model(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise click.BadParameter(f"cannot read {path}: {e.strerror}")
    try:
        return check_model(parse_model(SourceUnit(text, path)))
    except (ParseError, ModelError) as e:
        raise _stage_error(e)


def _write(text: str, output: Optional[str]):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _compile_all(m, guard_mode: str, mutations=()) -> List[str]:
    tm = table_model_for(m)
    out = []
    for c in m.classes:
        for name, body in c.operations:
            where = f"{c.name}.{name}"
            try:
                ro = resolve_program(m, c.name, name, body)
                proc, _ = compile_operation(ro, tm, mutations, guard_mode)
            except (ResolveError, CompileError, SchemaError) as e:
                raise _stage_error(e, where)
            out.append(S.emit_procedure(proc))
    return out


def _ddl(m) -> List[str]:
    try:
        return emit_ddl(table_model_for(m))
    except SchemaError as e:
        raise _stage_error(e)


guard_option = click.option("--guard-mode", type=click.Choice(["skip", "signal"]), default="skip",
                            show_default=True, help="Behaviour of a violated guard in generated SQL.")
output_option = click.option("--output", type=click.Path(dir_okay=False, writable=True), default=None,
                             help="Write to this file instead of standard output.")


@click.group(context_settings={"help_option_names": ["--help"]})
def main():
    """Compile guarded-command operations of an object model to SQL and check the translation."""


@main.command("compile")
@click.argument("model", type=click.Path(dir_okay=False))
@output_option
@guard_option
def compile_cmd(model, output, guard_mode):
    """Emit table DDL followed by one stored procedure per operation."""
    m = _load_model(model)
    parts = ["\n".join(_ddl(m))] + _compile_all(m, guard_mode)
    _write("\n\n".join(parts) + "\n", output)


@main.command("emit-schema")
@click.argument("model", type=click.Path(dir_okay=False))
@output_option
def emit_schema_cmd(model, output):
    """Emit only the table DDL."""
    m = _load_model(model)
    _write("\n".join(_ddl(m)) + "\n", output)


@main.command("interpret")
@click.argument("model", type=click.Path(dir_okay=False))
@click.option("--operation", required=True, metavar="CLASS.OP", help="Operation to evaluate.")
@click.option("--state", "state_path", required=True, type=click.Path(dir_okay=False),
              help="State dump with io lines, as written by this tool.")
@output_option
def interpret_cmd(model, operation, state_path, output):
    """Evaluate an operation on a state fixture and print every after-state."""
    m = _load_model(model)
    cls, _, op = operation.partition(".")
    c = m.cls(cls)
    if c is None or not op or c.operation(op) is None:
        raise click.BadParameter(f"no operation {operation}", param_hint="--operation")
    try:
        s, io = load_state(Path(state_path).read_text(encoding="utf-8"), m)
    except OSError as e:
        raise click.BadParameter(f"cannot read {state_path}: {e.strerror}", param_hint="--state")
    except (ValueError, EvalError) as e:
        raise Failure(f"state error in {state_path}: {e}")
    try:
        ro = resolve_program(m, cls, op, c.operation(op))
        results = eval_gsl(s, io, ro.obj)
    except (ResolveError, EvalError) as e:
        raise _stage_error(e, operation)
    chunks = []
    for i, (rs, rio) in enumerate(results, 1):
        chunks.append(f"-- after-state {i} of {len(results)}\n{dump_state(rs)}\n{dump_io(rio)}".rstrip("\n"))
    _write("\n".join(chunks) + "\n", output)


@main.command("verify")
@click.option("--seed", type=int, default=0, show_default=True, help="First generator seed.")
@click.option("--cases", type=click.IntRange(min=0), default=1000, show_default=True,
              help="Number of generated cases.")
@guard_option
@click.option("--mutation", "mutations", multiple=True, type=click.Choice(list(MUTATIONS)),
              help="Compile with a deliberately broken backend pattern (repeatable).")
@click.option("--violate-guard", is_flag=True, help="Generate states that violate the operation guard.")
@click.option("--verbose", is_flag=True, help="Print the full report of every violation.")
@click.option("--report-dir", type=click.Path(file_okay=False), default=None,
              help="Write one report file per violation into this directory.")
@output_option
def verify_cmd(seed, cases, guard_mode, mutations, violate_guard, verbose, report_dir, output):
    """Check the translation on bundled fixtures and on generated cases."""
    lines = []
    failed = 0
    for name, m, cls, op, s, io in hrs_fixture_cases():
        v = check_simulation(m, cls, op, s, io, mutations, guard_mode)
        ok = not isinstance(v, Violation)
        failed += not ok
        lines.append(f"fixture {name}: {'simulated' if ok else 'VIOLATION ' + v.kind}")
        if not ok and verbose:
            lines.append(v.report(f"fixture: {name}"))
    coverage = {}
    first = None
    for k in range(cases):
        case = generate_case(seed + k, Bounds(), violate_guard)
        v = run_case(case, mutations, guard_mode=guard_mode)
        for cell in v.coverage:
            coverage[cell] = coverage.get(cell, 0) + 1
        if isinstance(v, Violation):
            failed += 1
            header = case_header(case, mutations, guard_mode)
            first = first or v.report(header)
            if report_dir:
                Path(report_dir).mkdir(parents=True, exist_ok=True)
                Path(report_dir, f"violation-{case.seed}.txt").write_text(v.report(header), encoding="utf-8")
            lines.append(f"case {case.seed}: VIOLATION {v.kind}"
                         + (f" ({v.conjunct})" if v.conjunct else "")
                         + f" pattern {case.cell}")
            if verbose:
                lines.append(v.report(header))
    lines.append(f"cases: {cases}")
    for cell in sorted(coverage):
        lines.append(f"coverage pattern {cell}: {coverage[cell]}")
    if first and not verbose:
        lines += ["first violation:", first.rstrip("\n")]
    lines.append(f"violations: {failed}")
    _write("\n".join(lines) + "\n", output)
    if failed:
        raise Failure("")


def run(argv=None) -> int:
    """Run the command line and return the exit status."""
    try:
        main.main(args=argv, prog_name="gsl2sql", standalone_mode=False)
    except Failure as e:
        if str(e):
            click.echo(str(e), err=True)
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code
    return 0


def entry():
    sys.exit(run())


if __name__ == "__main__":
    entry()
