"""Command-line entry point.

Machine-readable output goes to stdout; diagnostics and warnings to stderr.
Exit codes: 0 success, 1 validation failure, 2 I/O or transport failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import deploy, metrics
from .grader import ModelConfig, TransportError, http_backend, run_batch
from .render import render_diagram
from .rubric import (
    BadRubricFile,
    BadSheetFile,
    SheetRubricMismatch,
    load_grade_sheets,
    load_rubric,
)
from .service import _sheet_from_dict, _sheet_to_dict
from .utml import ParseError, parse_document

VALIDATION_ERRORS = (
    ParseError,
    BadRubricFile,
    BadSheetFile,
    SheetRubricMismatch,
    metrics.NoOverlap,
    ValueError,
)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(str(exc), 2)
        raise AssertionError  # unreachable


@click.group()
def main() -> None:
    """Grade UML class diagrams with an LLM and compare against TA sheets."""


@main.command()
@click.argument("input_path")
@click.option("--out", "out_path", default=None, help="Write JSON here instead of stdout.")
def parse(input_path: str, out_path: str | None) -> None:
    """Parse a UTML JSON file into a repaired diagram model."""
    raw = _read(input_path)
    try:
        outcome = parse_document(raw)
    except ParseError as exc:
        _fail(str(exc), 1)
        return
    for warning in outcome.diagram.warnings:
        click.echo(f"warning: {warning}", err=True)
    doc = {
        "classes": [{"id": c.id, "name": c.name} for c in outcome.diagram.classes],
        "associations": [
            {
                "source_id": a.source_id,
                "target_id": a.target_id,
                "name": a.name,
                "source_multiplicity": a.source_multiplicity.text()
                if a.source_multiplicity else None,
                "target_multiplicity": a.target_multiplicity.text()
                if a.target_multiplicity else None,
                "repair_notes": a.repair_notes,
            }
            for a in outcome.diagram.associations
        ],
        "warnings": outcome.diagram.warnings,
        "repaired_count": outcome.repaired_count,
        "warning_count": outcome.warning_count,
    }
    payload = json.dumps(doc, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    else:
        click.echo(payload)


@main.command()
@click.argument("input_path")
def render(input_path: str) -> None:
    """Render a UTML JSON file as the natural-language grading description."""
    try:
        outcome = parse_document(_read(input_path))
        click.echo(render_diagram(outcome.diagram).text)
    except ParseError as exc:
        _fail(str(exc), 1)


@main.command()
@click.option("--rubric", "rubric_path", required=True)
@click.option("--diagrams", "diagrams_dir", required=True, help="Directory of UTML JSON files.")
@click.option("--model", "model_name", default=lambda: os.environ.get("LLM_MODEL", ""))
@click.option("--endpoint", default="", help="Base URL; defaults to $LLM_BASE_URL.")
@click.option("--max-in-flight", default=4, show_default=True)
@click.option("--max-retries", default=1, show_default=True)
@click.option("--out", "out_path", default=None)
def grade(rubric_path, diagrams_dir, model_name, endpoint, max_in_flight,
          max_retries, out_path) -> None:
    """Grade every diagram in a directory via the chat-completions endpoint."""
    if not model_name:
        _fail("no model name (use --model or $LLM_MODEL)", 1)
    try:
        rubric = load_rubric(_read(rubric_path))
        diagrams = []
        for path in sorted(Path(diagrams_dir).glob("*.json")):
            diagrams.append((path.stem, parse_document(_read(str(path))).diagram))
        if not diagrams:
            _fail(f"no .json diagrams in {diagrams_dir}", 1)
        cfg = ModelConfig(
            model_name=model_name, endpoint_url=endpoint, max_retries=max_retries
        )
        run = run_batch(
            diagrams, rubric, cfg, http_backend(cfg), max_in_flight=max_in_flight
        )
    except VALIDATION_ERRORS as exc:
        _fail(str(exc), 1)
        return
    except TransportError as exc:
        _fail(str(exc), 2)
        return
    for diagram_id, message in run.failures:
        click.echo(f"failed: {diagram_id}: {message}", err=True)
    doc = {
        "run_id": run.run_id,
        "model_name": run.model_name,
        "sheets": [_sheet_to_dict(s) for s in run.sheets],
        "failures": [list(f) for f in run.failures],
    }
    payload = json.dumps(doc, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    else:
        click.echo(payload)


@main.command()
@click.option("--ta", "ta_path", required=True, help="TA grade-sheet CSV.")
@click.option("--run", "run_path", required=True, help="Run JSON from `grade`.")
@click.option("--rubric", "rubric_path", required=True)
@click.option("--threshold", default=0.75, show_default=True)
@click.option("--out", "out_path", default=None)
def compare(ta_path, run_path, rubric_path, threshold, out_path) -> None:
    """Compare a grading run against TA sheets."""
    try:
        rubric = load_rubric(_read(rubric_path))
        ta_sheets = load_grade_sheets(_read(ta_path), rubric)
        run_doc = json.loads(_read(run_path))
        llm_sheets = [_sheet_from_dict(d) for d in run_doc["sheets"]]
        report = metrics.build_report(
            ta_sheets, llm_sheets, rubric,
            model_name=run_doc.get("model_name", "unknown"),
            flag_threshold=threshold,
        )
    except VALIDATION_ERRORS as exc:
        _fail(str(exc), 1)
        return
    except (KeyError, json.JSONDecodeError) as exc:
        _fail(f"bad run file: {exc}", 1)
        return
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    else:
        click.echo(payload)


@main.command()
@click.option("--in", "in_path", required=True, help="Report JSON from `compare`.")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
def report(in_path, fmt) -> None:
    """Print a comparison report as a table or JSON."""
    doc = json.loads(_read(in_path))
    if fmt == "json":
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
        return
    lines = [
        f"Comparison report for model {doc.get('model_name', '?')}",
        f"  overall accuracy : {doc['overall_accuracy']:.4f}",
        f"  pearson r        : "
        + ("undefined" if doc["pearson_r"] is None else f"{doc['pearson_r']:.4f}"),
        f"  mae              : {doc['mae']:.4f}",
        f"  mean bias        : {doc['mean_bias']:+.4f}",
        f"  harshness ratio  : "
        + ("undefined" if doc["harshness_ratio"] is None else f"{doc['harshness_ratio']:.4f}"),
        f"  flagged criteria : {doc['flagged']}",
    ]
    click.echo("\n".join(lines))


@main.command()
@click.option("--layers", required=True, type=int)
@click.option("--kv-heads", required=True, type=int)
@click.option("--head-dim", required=True, type=int)
@click.option("--context", required=True, type=int)
@click.option("--batch", default=1, show_default=True, type=int)
@click.option("--bytes-per-elem", default=2, show_default=True, type=int)
@click.option("--params", default=0, type=int, help="Model parameter count.")
@click.option("--weight-bits", default=4, show_default=True, type=int)
@click.option("--budget", default=0, type=int, help="VRAM budget in bytes.")
def estimate(layers, kv_heads, head_dim, context, batch, bytes_per_elem,
             params, weight_bits, budget) -> None:
    """Estimate KV-cache and weight memory, and whether it fits the budget."""
    try:
        cfg = deploy.DeploymentConfig(
            batch=batch, layers=layers, kv_heads=kv_heads, head_dim=head_dim,
            context=context, bytes_per_element=bytes_per_elem,
            param_count=params, weight_bits=weight_bits,
        )
        est = deploy.check_fit(cfg, budget)
    except (ValueError, deploy.UnsupportedPrecision) as exc:
        _fail(str(exc), 1)
        return
    click.echo(json.dumps(est.to_json_dict(), indent=2, sort_keys=True))
    click.echo(
        f"kv {est.kv_bytes / deploy.GIB:.2f} GiB + weights "
        f"{est.weight_bytes / deploy.GIB:.2f} GiB = "
        f"{est.total_bytes / deploy.GIB:.2f} GiB "
        f"({'fits' if est.fits else 'does not fit'})",
        err=True,
    )


@main.command()
@click.option("--workspace", "workspace_dir", required=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(workspace_dir, port, host) -> None:
    """Run the review REST service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(workspace_dir), host=host, port=port)


if __name__ == "__main__":
    main()
