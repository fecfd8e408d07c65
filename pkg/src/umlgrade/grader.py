"""Grading prompt construction, chat-completion transport, and response parsing.

The transport is an abstract callable taking (system, user) message texts and
returning the model's reply, so deterministic mocks and real OpenAI-style
HTTP endpoints are interchangeable. Requests always go out with temperature 0.
"""

from __future__ import annotations

import hashlib
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import requests

from .diagram import Diagram
from .render import NlDescription, render_diagram
from .rubric import (
    GradeSheet,
    Rubric,
    SheetEntry,
    Source,
    format_score,
    parse_score,
    validate_sheet,
)


class EmptyRubric(Exception):
    pass


class TransportError(Exception):
    pass


class ResponseParseError(Exception):
    """Base class for failures turning a model reply into a grade sheet."""


class MissingCriteria(ResponseParseError):
    def __init__(self, ids: list[int]):
        super().__init__(f"response missing criteria {ids}")
        self.ids = ids


class InvalidScore(ResponseParseError):
    def __init__(self, criterion_id: int, token: str):
        super().__init__(f"criterion {criterion_id}: score {token!r} not in {{0, 0.5, 1}}")
        self.criterion_id = criterion_id
        self.token = token


class DuplicateCriterion(ResponseParseError):
    def __init__(self, criterion_id: int):
        super().__init__(f"criterion {criterion_id} graded more than once")
        self.criterion_id = criterion_id


class UngradableResponse(Exception):
    def __init__(self, diagram_id: str, raw: str, cause: Exception):
        super().__init__(f"diagram {diagram_id!r}: could not parse response ({cause})")
        self.raw = raw
        self.cause = cause


@dataclass(frozen=True)
class Prompt:
    system_text: str
    user_text: str

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.system_text.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(self.user_text.encode("utf-8"))
        return digest.hexdigest()


@dataclass(frozen=True)
class ModelConfig:
    model_name: str
    endpoint_url: str = ""
    temperature: float = 0.0
    max_retries: int = 1
    timeout: float = 120.0
    api_key: str = ""

    def __post_init__(self) -> None:
        if self.temperature != 0:
            raise ValueError("grading requires temperature 0 for determinism")


@dataclass
class GradingRun:
    run_id: str
    model_name: str
    rubric_id: str
    sheets: list[GradeSheet] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)


ChatBackend = Callable[[str, str], str]


SYSTEM_TEXT = (
    "You are a strict but fair teaching assistant grading a student's UML "
    "class diagram against a rubric. Grade each criterion independently "
    "using only the diagram description provided."
)

_FORMAT_HEADER = "Answer format (exactly one line per criterion, nothing else):"


def build_prompt(desc: NlDescription, rubric: Rubric) -> Prompt:
    """Assemble the deterministic grading prompt for one diagram."""
    if not rubric.criteria:
        raise EmptyRubric("rubric has no criteria")
    parts: list[str] = []
    if rubric.exam_case:
        parts.append("The students were given the following exam case:\n")
        parts.append(rubric.exam_case)
        parts.append("")
    parts.append("The student's class diagram contains the following:\n")
    parts.append(desc.text)
    parts.append("")
    parts.append("Grade the diagram against each rubric criterion below.")
    parts.append("Award 1 point if fully satisfied, 0.5 if partially satisfied, "
                 "0 if not satisfied.")
    parts.append("")
    for criterion in rubric.criteria:
        parts.append(f"{criterion.id}. [{criterion.category.value}] {criterion.description}")
    parts.append("")
    parts.append(_FORMAT_HEADER)
    parts.append("<criterion number>: <score> | <clarification>")
    parts.append("")
    parts.append(
        "For every criterion you must provide a brief clarification after the "
        "'|' explaining why you awarded that score. Use only the scores 0, 0.5 "
        "or 1. Do not sum the scores and do not add any other commentary."
    )
    return Prompt(system_text=SYSTEM_TEXT, user_text="\n".join(parts))


_LINE_RE = re.compile(r"^\s*(\d+)\s*[:.]\s*([^|]+?)\s*\|\s*(.+?)\s*$")


def parse_response(
    raw: str, rubric: Rubric, diagram_id: str, model_name: str
) -> GradeSheet:
    """Extract per-criterion scores from a model reply.

    Tolerates markdown fences, surrounding prose and reordered lines;
    rejects scores outside the 0 / 0.5 / 1 domain.
    """
    known = set(rubric.criterion_ids())
    entries: dict[int, SheetEntry] = {}
    for line in raw.splitlines():
        line = line.strip().strip("`").strip()
        match = _LINE_RE.match(line)
        if not match:
            continue
        cid = int(match.group(1))
        if cid not in known:
            continue
        if cid in entries:
            raise DuplicateCriterion(cid)
        token = match.group(2).strip()
        try:
            score = parse_score(token)
        except ValueError:
            raise InvalidScore(cid, token) from None
        entries[cid] = SheetEntry(score=score, clarification=match.group(3).strip())

    missing = sorted(known - set(entries))
    if missing:
        raise MissingCriteria(missing)
    sheet = GradeSheet(
        diagram_id=diagram_id, grader_id=model_name, source=Source.LLM, entries=entries
    )
    validate_sheet(sheet, rubric)
    return sheet


def serialize_sheet_as_response(sheet: GradeSheet) -> str:
    """Render a sheet in the answer format requested from the model."""
    lines = []
    for cid in sorted(sheet.entries):
        entry = sheet.entries[cid]
        clarification = entry.clarification or "as graded"
        lines.append(f"{cid}: {format_score(entry.score)} | {clarification}")
    return "\n".join(lines)


def http_backend(cfg: ModelConfig) -> ChatBackend:
    """Chat backend speaking the OpenAI-style /chat/completions contract."""
    base_url = cfg.endpoint_url or os.environ.get("LLM_BASE_URL", "")
    if not base_url:
        raise TransportError("no endpoint configured (set LLM_BASE_URL or endpoint_url)")
    api_key = cfg.api_key or os.environ.get("LLM_API_KEY", "")
    url = base_url.rstrip("/") + "/chat/completions"

    def call(system_text: str, user_text: str) -> str:
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": cfg.model_name,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        }
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=cfg.timeout)
            resp.raise_for_status()
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise TransportError(str(exc)) from exc

    return call


_CORRECTION_NOTE = (
    "\n\nYour previous answer could not be parsed. Reply again using exactly "
    "one line per criterion in the form '<criterion number>: <score> | "
    "<clarification>' with scores from 0, 0.5, 1 only."
)


def grade_diagram(
    prompt: Prompt,
    cfg: ModelConfig,
    backend: ChatBackend,
    rubric: Rubric,
    diagram_id: str,
) -> GradeSheet:
    """Issue one grading request, retrying on parse failure with a correction note."""
    attempts = cfg.max_retries + 1
    last_error: Optional[Exception] = None
    last_raw = ""
    user_text = prompt.user_text
    for attempt in range(attempts):
        try:
            raw = backend(prompt.system_text, user_text)
        except TransportError as exc:
            last_error = exc
            if attempt + 1 >= attempts:
                raise
            continue
        last_raw = raw
        try:
            return parse_response(raw, rubric, diagram_id, cfg.model_name)
        except ResponseParseError as exc:
            last_error = exc
            user_text = prompt.user_text + _CORRECTION_NOTE
    assert last_error is not None
    raise UngradableResponse(diagram_id, last_raw, last_error)


def run_batch(
    diagrams: list[tuple[str, Diagram]],
    rubric: Rubric,
    cfg: ModelConfig,
    backend: ChatBackend,
    max_in_flight: int = 4,
    run_id: str = "",
    rubric_id: str = "",
) -> GradingRun:
    """Grade diagrams with bounded concurrency; per-diagram failures become data."""
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    run = GradingRun(
        run_id=run_id or f"run-{cfg.model_name}",
        model_name=cfg.model_name,
        rubric_id=rubric_id,
    )

    def grade_one(item: tuple[str, Diagram]):
        diagram_id, diagram = item
        prompt = build_prompt(render_diagram(diagram), rubric)
        return grade_diagram(prompt, cfg, backend, rubric, diagram_id)

    results: dict[str, GradeSheet] = {}
    failures: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = {pool.submit(grade_one, item): item[0] for item in diagrams}
        for future, diagram_id in futures.items():
            try:
                results[diagram_id] = future.result()
            except (TransportError, UngradableResponse) as exc:
                failures[diagram_id] = str(exc)

    # deterministic merge regardless of completion order
    for diagram_id in sorted(results):
        run.sheets.append(results[diagram_id])
    for diagram_id in sorted(failures):
        run.failures.append((diagram_id, failures[diagram_id]))
    return run
