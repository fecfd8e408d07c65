"""Rubric, criterion categories and grade sheets shared by TA and LLM sides.

File formats:
- Rubric: the exam case between ``---CASE---`` delimiter lines, then one
  criterion per line as ``<id>|<CATEGORY>|<description>``.
- Grade sheets: CSV rows ``diagram_id,grader_id,source,criterion_id,score
  [,clarification]`` with scores written exactly as ``0``, ``0.5``, ``1``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Optional


class Category(Enum):
    CLASS = "CLASS"
    ASSOCIATION = "ASSOCIATION"
    MULTIPLICITY = "MULTIPLICITY"


class Source(Enum):
    TA = "TA"
    LLM = "LLM"
    ADJUSTED = "ADJUSTED"


SCORE_VALUES = (0.0, 0.5, 1.0)


class BadRubricFile(Exception):
    pass


class BadSheetFile(Exception):
    pass


class SheetRubricMismatch(Exception):
    pass


def parse_score(token: str) -> float:
    """Map a serialized score token onto the 0 / 0.5 / 1 domain."""
    if token in ("0", "0.0"):
        return 0.0
    if token == "0.5":
        return 0.5
    if token in ("1", "1.0"):
        return 1.0
    raise ValueError(f"score {token!r} not in {{0, 0.5, 1}}")


def format_score(score: float) -> str:
    if score == 0.0:
        return "0"
    if score == 0.5:
        return "0.5"
    if score == 1.0:
        return "1"
    raise ValueError(f"score {score!r} not in {{0, 0.5, 1}}")


@dataclass(frozen=True)
class Criterion:
    id: int
    description: str
    category: Category
    max_points: int = 1


@dataclass(frozen=True)
class Rubric:
    criteria: tuple[Criterion, ...]
    exam_case: str = ""

    def criterion_ids(self) -> list[int]:
        return [c.id for c in self.criteria]

    def by_id(self, criterion_id: int) -> Criterion:
        for c in self.criteria:
            if c.id == criterion_id:
                return c
        raise KeyError(criterion_id)


@dataclass(frozen=True)
class SheetEntry:
    score: float
    clarification: Optional[str] = None


@dataclass
class GradeSheet:
    diagram_id: str
    grader_id: str
    source: Source
    entries: dict[int, SheetEntry] = field(default_factory=dict)
    created_at: str = ""

    def __post_init__(self) -> None:
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()


def validate_sheet(sheet: GradeSheet, rubric: Rubric) -> None:
    """Raise SheetRubricMismatch unless entries cover exactly the rubric ids."""
    want = set(rubric.criterion_ids())
    have = set(sheet.entries)
    missing = sorted(want - have)
    extra = sorted(have - want)
    if missing or extra:
        raise SheetRubricMismatch(
            f"sheet for diagram {sheet.diagram_id!r} by {sheet.grader_id!r}: "
            f"missing criteria {missing}, extra criteria {extra}"
        )
    if sheet.source is Source.LLM:
        bare = sorted(
            cid for cid, e in sheet.entries.items() if not (e.clarification or "").strip()
        )
        if bare:
            raise SheetRubricMismatch(
                f"LLM sheet for diagram {sheet.diagram_id!r} lacks clarification "
                f"for criteria {bare}"
            )


def load_rubric(raw: str) -> Rubric:
    lines = raw.splitlines()
    exam_case = ""
    body_start = 0
    delims = [i for i, line in enumerate(lines) if line.strip() == "---CASE---"]
    if delims:
        if len(delims) < 2:
            raise BadRubricFile("unterminated ---CASE--- block")
        exam_case = "\n".join(lines[delims[0] + 1 : delims[1]]).strip()
        body_start = delims[1] + 1

    criteria: list[Criterion] = []
    seen: set[int] = set()
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|", 2)
        if len(parts) != 3:
            raise BadRubricFile(f"line {lineno}: expected <id>|<CATEGORY>|<description>")
        id_text, cat_text, description = (p.strip() for p in parts)
        try:
            cid = int(id_text)
        except ValueError:
            raise BadRubricFile(f"line {lineno}: bad criterion id {id_text!r}") from None
        if cid in seen:
            raise BadRubricFile(f"line {lineno}: duplicate criterion id {cid}")
        try:
            category = Category(cat_text)
        except ValueError:
            raise BadRubricFile(f"line {lineno}: unknown category {cat_text!r}") from None
        if not description:
            raise BadRubricFile(f"line {lineno}: empty description")
        seen.add(cid)
        criteria.append(Criterion(id=cid, description=description, category=category))

    if not criteria:
        raise BadRubricFile("rubric contains no criteria")
    criteria.sort(key=lambda c: c.id)
    if [c.id for c in criteria] != list(range(1, len(criteria) + 1)):
        raise BadRubricFile(
            f"criterion ids must be consecutive from 1, got {[c.id for c in criteria]}"
        )
    return Rubric(criteria=tuple(criteria), exam_case=exam_case)


def sum_points(sheet: GradeSheet, rubric: Rubric) -> float:
    validate_sheet(sheet, rubric)
    return sum(e.score for e in sheet.entries.values())


def load_grade_sheets(raw: str, rubric: Rubric) -> list[GradeSheet]:
    """Read grade-sheet CSV rows into one validated sheet per (diagram, grader)."""
    sheets: dict[tuple[str, str], GradeSheet] = {}
    reader = csv.reader(io.StringIO(raw))
    for rownum, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) not in (5, 6):
            raise BadSheetFile(f"row {rownum}: expected 5 or 6 fields, got {len(row)}")
        diagram_id, grader_id, source_text, cid_text, score_text = (
            f.strip() for f in row[:5]
        )
        clarification = row[5].strip() if len(row) == 6 and row[5].strip() else None
        try:
            source = Source(source_text)
        except ValueError:
            raise BadSheetFile(f"row {rownum}: unknown source {source_text!r}") from None
        try:
            cid = int(cid_text)
        except ValueError:
            raise BadSheetFile(f"row {rownum}: bad criterion id {cid_text!r}") from None
        try:
            score = parse_score(score_text)
        except ValueError as exc:
            raise BadSheetFile(f"row {rownum}: {exc}") from None
        key = (diagram_id, grader_id)
        sheet = sheets.setdefault(
            key, GradeSheet(diagram_id=diagram_id, grader_id=grader_id, source=source)
        )
        if cid in sheet.entries:
            raise BadSheetFile(
                f"row {rownum}: duplicate entry for diagram {diagram_id!r} "
                f"criterion {cid}"
            )
        sheet.entries[cid] = SheetEntry(score=score, clarification=clarification)

    result = list(sheets.values())
    for sheet in result:
        validate_sheet(sheet, rubric)
    return result


def dump_grade_sheets(sheets: list[GradeSheet]) -> str:
    """Serialize sheets back to the CSV format accepted by load_grade_sheets."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for sheet in sheets:
        for cid in sorted(sheet.entries):
            entry = sheet.entries[cid]
            row = [
                sheet.diagram_id,
                sheet.grader_id,
                sheet.source.value,
                str(cid),
                format_score(entry.score),
            ]
            if entry.clarification is not None:
                row.append(entry.clarification)
            writer.writerow(row)
    return out.getvalue()
