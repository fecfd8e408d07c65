"""Workspace persistence and the review REST API.

A workspace is a directory of JSON documents (rubric, diagrams, runs) plus
an append-only JSON-lines review log. Grades are event-sourced: original TA
and LLM sheets are never mutated; the effective score of a cell is the last
review action for it, if any. Review writes use an optimistic old-score
precondition and fail with StaleAction on concurrent edits.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

try:  # the REST layer is optional at import time
    from fastapi import HTTPException, Query, Request
    from fastapi.responses import JSONResponse
except ImportError:  # pragma: no cover
    HTTPException = Query = Request = JSONResponse = None

from . import metrics
from .grader import GradingRun, ModelConfig, http_backend, run_batch
from .render import render_diagram
from .rubric import (
    GradeSheet,
    Rubric,
    SheetEntry,
    Source,
    load_grade_sheets,
    load_rubric,
)
from .utml import ParseError, parse_document


class NotFound(Exception):
    pass


class Conflict(Exception):
    pass


class StaleAction(Conflict):
    pass


@dataclass(frozen=True)
class ReviewAction:
    actor: str
    run_id: str
    diagram_id: str
    criterion_id: int
    old_score: float
    new_score: float
    rationale: str
    timestamp: str = ""

    def to_json_dict(self) -> dict:
        return asdict(self)


def _sheet_to_dict(sheet: GradeSheet) -> dict:
    return {
        "diagram_id": sheet.diagram_id,
        "grader_id": sheet.grader_id,
        "source": sheet.source.value,
        "created_at": sheet.created_at,
        "entries": {
            str(cid): {"score": e.score, "clarification": e.clarification}
            for cid, e in sheet.entries.items()
        },
    }


def _sheet_from_dict(doc: dict) -> GradeSheet:
    return GradeSheet(
        diagram_id=doc["diagram_id"],
        grader_id=doc["grader_id"],
        source=Source(doc["source"]),
        created_at=doc.get("created_at", ""),
        entries={
            int(cid): SheetEntry(score=e["score"], clarification=e.get("clarification"))
            for cid, e in doc["entries"].items()
        },
    )


def apply_review_log(
    sheets: list[GradeSheet], log: list[ReviewAction], run_id: str
) -> list[GradeSheet]:
    """Replay review actions over original sheets, producing the effective view."""
    effective = [
        GradeSheet(
            diagram_id=s.diagram_id,
            grader_id=s.grader_id,
            source=s.source,
            created_at=s.created_at,
            entries=dict(s.entries),
        )
        for s in sheets
    ]
    by_diagram = {s.diagram_id: s for s in effective}
    for action in log:
        if action.run_id != run_id:
            continue
        sheet = by_diagram.get(action.diagram_id)
        if sheet is None or action.criterion_id not in sheet.entries:
            continue
        old = sheet.entries[action.criterion_id]
        sheet.entries[action.criterion_id] = SheetEntry(
            score=action.new_score, clarification=old.clarification
        )
        sheet.source = Source.ADJUSTED
    return effective


class Workspace:
    """Durable store for one course's diagrams, sheets, runs and reviews."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "diagrams").mkdir(exist_ok=True)
        (self.root / "runs").mkdir(exist_ok=True)
        self._write_lock = threading.Lock()

    # -- rubric ------------------------------------------------------------

    def put_rubric(self, raw: str) -> Rubric:
        rubric = load_rubric(raw)  # validate before persisting
        with self._write_lock:
            (self.root / "rubric.txt").write_text(raw, encoding="utf-8")
        return rubric

    def get_rubric(self) -> Rubric:
        path = self.root / "rubric.txt"
        if not path.exists():
            raise NotFound("no rubric loaded")
        return load_rubric(path.read_text(encoding="utf-8"))

    # -- diagrams ----------------------------------------------------------

    def put_diagram(self, raw: str, diagram_id: Optional[str] = None) -> tuple[str, list[str]]:
        outcome = parse_document(raw)  # validate before persisting
        if diagram_id is None:
            diagram_id = f"d{uuid.uuid4().hex[:8]}"
        with self._write_lock:
            (self.root / "diagrams" / f"{diagram_id}.json").write_text(
                raw, encoding="utf-8"
            )
        return diagram_id, outcome.diagram.warnings

    def get_diagram(self, diagram_id: str):
        path = self.root / "diagrams" / f"{diagram_id}.json"
        if not path.exists():
            raise NotFound(f"diagram {diagram_id!r} not found")
        return parse_document(path.read_text(encoding="utf-8"))

    def list_diagram_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "diagrams").glob("*.json"))

    # -- TA sheets ---------------------------------------------------------

    def put_sheets(self, raw: str) -> int:
        rubric = self.get_rubric()
        sheets = load_grade_sheets(raw, rubric)
        existing = self._load_sheet_docs()
        by_key = {(s["diagram_id"], s["grader_id"]): s for s in existing}
        for sheet in sheets:
            by_key[(sheet.diagram_id, sheet.grader_id)] = _sheet_to_dict(sheet)
        with self._write_lock:
            (self.root / "ta_sheets.json").write_text(
                json.dumps(sorted(by_key.values(), key=lambda d: d["diagram_id"])),
                encoding="utf-8",
            )
        return len(sheets)

    def _load_sheet_docs(self) -> list[dict]:
        path = self.root / "ta_sheets.json"
        if not path.exists():
            return []
        return json.loads(path.read_text(encoding="utf-8"))

    def get_ta_sheets(self) -> list[GradeSheet]:
        return [_sheet_from_dict(d) for d in self._load_sheet_docs()]

    # -- runs --------------------------------------------------------------

    def _run_path(self, run_id: str) -> Path:
        return self.root / "runs" / f"{run_id}.json"

    def put_run(self, run: GradingRun, status: str = "done") -> None:
        path = self._run_path(run.run_id)
        with self._write_lock:
            if path.exists() and status == "done":
                existing = json.loads(path.read_text(encoding="utf-8"))
                if existing.get("status") == "done":
                    raise Conflict(f"run {run.run_id!r} already exists")
            doc = {
                "run_id": run.run_id,
                "model_name": run.model_name,
                "rubric_id": run.rubric_id,
                "status": status,
                "sheets": [_sheet_to_dict(s) for s in run.sheets],
                "failures": [list(f) for f in run.failures],
            }
            path.write_text(json.dumps(doc), encoding="utf-8")

    def get_run(self, run_id: str) -> tuple[GradingRun, str]:
        path = self._run_path(run_id)
        if not path.exists():
            raise NotFound(f"run {run_id!r} not found")
        doc = json.loads(path.read_text(encoding="utf-8"))
        run = GradingRun(
            run_id=doc["run_id"],
            model_name=doc["model_name"],
            rubric_id=doc.get("rubric_id", ""),
            sheets=[_sheet_from_dict(d) for d in doc["sheets"]],
            failures=[tuple(f) for f in doc.get("failures", [])],
        )
        return run, doc.get("status", "done")

    def list_run_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "runs").glob("*.json"))

    # -- review log --------------------------------------------------------

    def review_log(self) -> list[ReviewAction]:
        path = self.root / "reviews.jsonl"
        if not path.exists():
            return []
        actions = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                actions.append(ReviewAction(**json.loads(line)))
        return actions

    def effective_llm_sheets(self, run_id: str) -> list[GradeSheet]:
        run, _ = self.get_run(run_id)
        return apply_review_log(run.sheets, self.review_log(), run_id)

    def apply_review(self, action: ReviewAction) -> GradeSheet:
        """Append a review action; returns the updated effective sheet."""
        if action.new_score not in (0.0, 0.5, 1.0):
            raise ValueError(f"new_score {action.new_score!r} not in {{0, 0.5, 1}}")
        with self._write_lock:
            effective = self.effective_llm_sheets(action.run_id)
            sheet = next(
                (s for s in effective if s.diagram_id == action.diagram_id), None
            )
            if sheet is None:
                raise NotFound(
                    f"diagram {action.diagram_id!r} not in run {action.run_id!r}"
                )
            if action.criterion_id not in sheet.entries:
                raise NotFound(f"criterion {action.criterion_id} not in sheet")
            current = sheet.entries[action.criterion_id].score
            if current != action.old_score:
                raise StaleAction(
                    f"criterion {action.criterion_id} of diagram "
                    f"{action.diagram_id!r} is {current}, not {action.old_score}"
                )
            if not action.timestamp:
                action = ReviewAction(
                    **{**asdict(action), "timestamp": datetime.now(timezone.utc).isoformat()}
                )
            with (self.root / "reviews.jsonl").open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(action.to_json_dict()) + "\n")
        updated = self.effective_llm_sheets(action.run_id)
        return next(s for s in updated if s.diagram_id == action.diagram_id)

    # -- reports -----------------------------------------------------------

    def rebuild_report(
        self, run_id: str, flag_threshold: float = 0.75
    ) -> metrics.ComparisonReport:
        rubric = self.get_rubric()
        run, _ = self.get_run(run_id)
        ta = self.get_ta_sheets()
        if not ta:
            raise NotFound("no TA sheets loaded")
        return metrics.build_report(
            ta, self.effective_llm_sheets(run_id), rubric,
            model_name=run.model_name, flag_threshold=flag_threshold,
        )

    def list_flags(self, run_id: str, k: int = 10, flag_threshold: float = 0.75) -> list[dict]:
        """Flagged criteria, worst first, with per-diagram disagreement cells."""
        rubric = self.get_rubric()
        report = self.rebuild_report(run_id, flag_threshold)
        flagged_ids = metrics.flag_high_error(report, max(k, 1))[:k]
        ta_by_diagram = {s.diagram_id: s for s in self.get_ta_sheets()}
        run, _ = self.get_run(run_id)
        original_by_diagram = {s.diagram_id: s for s in run.sheets}
        effective_by_diagram = {
            s.diagram_id: s for s in self.effective_llm_sheets(run_id)
        }
        reviewed = {
            (a.diagram_id, a.criterion_id)
            for a in self.review_log()
            if a.run_id == run_id
        }

        stats_by_id = {s.criterion_id: s for s in report.per_criterion}
        result = []
        for cid in flagged_ids:
            criterion = rubric.by_id(cid)
            stats = stats_by_id[cid]
            cells = []
            for diagram_id in sorted(set(ta_by_diagram) & set(effective_by_diagram)):
                ta_entry = ta_by_diagram[diagram_id].entries.get(cid)
                eff_entry = effective_by_diagram[diagram_id].entries.get(cid)
                orig_entry = original_by_diagram[diagram_id].entries.get(cid)
                if ta_entry is None or eff_entry is None:
                    continue
                if ta_entry.score == eff_entry.score:
                    continue
                cells.append({
                    "diagram_id": diagram_id,
                    "ta_score": ta_entry.score,
                    "llm_score": orig_entry.score if orig_entry else None,
                    "effective_score": eff_entry.score,
                    "adjusted": (diagram_id, cid) in reviewed,
                    "clarification": eff_entry.clarification,
                })
            result.append({
                "criterion_id": cid,
                "description": criterion.description,
                "category": criterion.category.value,
                "accuracy": stats.accuracy,
                "bias": stats.bias,
                "disagreements": cells,
            })
        return result


def create_app(workspace_root: Path | str, backend_factory=None):
    """Build the FastAPI app. ``backend_factory(ModelConfig) -> ChatBackend``
    defaults to the OpenAI-style HTTP transport."""
    from fastapi import FastAPI

    if backend_factory is None:
        backend_factory = http_backend

    app = FastAPI(title="umlgrade review service")
    root = Path(workspace_root)
    workspaces: dict[str, Workspace] = {}

    def ws(name: str) -> Workspace:
        if name not in workspaces:
            workspaces[name] = Workspace(root / name)
        return workspaces[name]

    @app.exception_handler(NotFound)
    async def _not_found(request, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(Conflict)
    async def _conflict(request, exc):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.post("/workspaces/{name}/rubric")
    async def post_rubric(name: str, request: Request):
        raw = (await request.body()).decode("utf-8")
        try:
            rubric = ws(name).put_rubric(raw)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"criteria": len(rubric.criteria)}

    @app.post("/workspaces/{name}/diagrams")
    async def post_diagram(name: str, request: Request, diagram_id: Optional[str] = None):
        raw = (await request.body()).decode("utf-8")
        try:
            diagram_id, warnings = ws(name).put_diagram(raw, diagram_id)
        except ParseError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"diagram_id": diagram_id, "warnings": warnings}

    @app.get("/workspaces/{name}/diagrams/{diagram_id}")
    async def get_diagram(name: str, diagram_id: str):
        outcome = ws(name).get_diagram(diagram_id)
        desc = render_diagram(outcome.diagram)
        return {
            "diagram_id": diagram_id,
            "text": desc.text,
            "class_count": desc.class_count,
            "association_count": desc.association_count,
            "warnings": outcome.diagram.warnings,
            "repaired_count": outcome.repaired_count,
        }

    @app.post("/workspaces/{name}/sheets")
    async def post_sheets(name: str, request: Request):
        raw = (await request.body()).decode("utf-8")
        try:
            count = ws(name).put_sheets(raw)
        except NotFound:
            raise
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"sheets": count}

    @app.post("/workspaces/{name}/runs")
    async def post_run(name: str, body: dict):
        workspace = ws(name)
        rubric = workspace.get_rubric()
        diagram_ids = body.get("diagram_ids") or workspace.list_diagram_ids()
        try:
            cfg = ModelConfig(
                model_name=body["model_name"],
                endpoint_url=body.get("endpoint_url", ""),
                max_retries=int(body.get("max_retries", 1)),
            )
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        run_id = body.get("run_id") or f"run-{uuid.uuid4().hex[:8]}"
        if run_id in workspace.list_run_ids():
            raise Conflict(f"run {run_id!r} already exists")
        diagrams = [
            (d, workspace.get_diagram(d).diagram) for d in diagram_ids
        ]
        placeholder = GradingRun(run_id=run_id, model_name=cfg.model_name, rubric_id="")
        workspace.put_run(placeholder, status="running")

        def work():
            try:
                run = run_batch(
                    diagrams, rubric, cfg, backend_factory(cfg),
                    max_in_flight=int(body.get("max_in_flight", 4)), run_id=run_id,
                )
                workspace.put_run(run, status="done")
            except Exception as exc:  # surface failures via run status
                failed = GradingRun(
                    run_id=run_id, model_name=cfg.model_name, rubric_id="",
                    failures=[("*", str(exc))],
                )
                workspace.put_run(failed, status="failed")

        threading.Thread(target=work, daemon=True).start()
        return {"run_id": run_id}

    @app.get("/workspaces/{name}/runs/{run_id}")
    async def get_run(name: str, run_id: str):
        run, status = ws(name).get_run(run_id)
        return {
            "run_id": run_id,
            "status": status,
            "model_name": run.model_name,
            "sheet_count": len(run.sheets),
            "failures": [list(f) for f in run.failures],
        }

    @app.get("/workspaces/{name}/reports/{run_id}")
    async def get_report(name: str, run_id: str, threshold: float = Query(0.75)):
        report = ws(name).rebuild_report(run_id, threshold)
        return report.to_json_dict()

    @app.get("/workspaces/{name}/flags/{run_id}")
    async def get_flags(
        name: str, run_id: str, k: int = Query(10), threshold: float = Query(0.75)
    ):
        return {"flags": ws(name).list_flags(run_id, k, threshold)}

    @app.get("/workspaces/{name}/cells/{run_id}/{diagram_id}/{criterion_id}")
    async def get_cell(name: str, run_id: str, diagram_id: str, criterion_id: int):
        workspace = ws(name)
        run, _ = workspace.get_run(run_id)
        original = next((s for s in run.sheets if s.diagram_id == diagram_id), None)
        effective = next(
            (s for s in workspace.effective_llm_sheets(run_id)
             if s.diagram_id == diagram_id),
            None,
        )
        if original is None or criterion_id not in original.entries:
            raise NotFound(f"no cell {diagram_id!r}/{criterion_id} in run {run_id!r}")
        ta_sheet = next(
            (s for s in workspace.get_ta_sheets() if s.diagram_id == diagram_id), None
        )
        adjusted = any(
            a.run_id == run_id and a.diagram_id == diagram_id
            and a.criterion_id == criterion_id
            for a in workspace.review_log()
        )
        return {
            "diagram_id": diagram_id,
            "criterion_id": criterion_id,
            "ta_score": ta_sheet.entries[criterion_id].score
            if ta_sheet and criterion_id in ta_sheet.entries else None,
            "llm_score": original.entries[criterion_id].score,
            "effective_score": effective.entries[criterion_id].score,
            "adjusted": adjusted,
            "clarification": original.entries[criterion_id].clarification,
        }

    @app.post("/workspaces/{name}/reviews")
    async def post_review(name: str, body: dict):
        try:
            action = ReviewAction(
                actor=body["actor"],
                run_id=body["run_id"],
                diagram_id=body["diagram_id"],
                criterion_id=int(body["criterion_id"]),
                old_score=float(body["old_score"]),
                new_score=float(body["new_score"]),
                rationale=body.get("rationale", ""),
            )
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            sheet = ws(name).apply_review(action)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        entry = sheet.entries[action.criterion_id]
        return {
            "diagram_id": action.diagram_id,
            "criterion_id": action.criterion_id,
            "effective_score": entry.score,
            "source": sheet.source.value,
        }

    return app
