"""Parser for UTML-style diagram JSON with multiplicity-label repair.

Accepted document shape: ``{"nodes": [{"id", "type", "text"}, ...],
"edges": [{"id", "type", "source", "target", "startLabel", "middleLabel",
"endLabel"}, ...]}``. Unknown fields are ignored; unknown node types become
warnings. Labels may carry multiplicities or the association name in the
wrong field; ``repair_labels`` reassigns them deterministically.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .diagram import Association, ClassEntity, Diagram, Multiplicity


class ParseError(Exception):
    """Base class for document-level parse failures."""


class MalformedJson(ParseError):
    pass


class SchemaViolation(ParseError):
    pass


class EmptyDocument(ParseError):
    pass


@dataclass
class RawEdge:
    id: str
    source_node: str
    target_node: str
    start_label: Optional[str] = None
    end_label: Optional[str] = None
    middle_label: Optional[str] = None


@dataclass
class ParseOutcome:
    diagram: Diagram
    repaired_count: int
    warning_count: int


_WORD_NUMBERS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
_RANGE_RE = re.compile(r"^(\d+)\.\.(\d+|\*)$", re.ASCII)


def extract_multiplicity(token: Optional[str]) -> Optional[Multiplicity]:
    """Parse one label token as a multiplicity, or return None.

    Accepts unsigned integers, ``n..m`` ranges, ``n..*``, bare ``*``,
    the written numbers zero through ten, and ``many`` (case-insensitive).
    Surrounding whitespace is ignored.
    """
    if token is None:
        return None
    t = token.strip()
    if not t:
        return None
    if t == "*":
        return Multiplicity(0, None)
    if t.isascii() and t.isdigit():
        n = int(t)
        return Multiplicity(n, n)
    m = _RANGE_RE.match(t)
    if m:
        lower = int(m.group(1))
        if m.group(2) == "*":
            return Multiplicity(lower, None)
        upper = int(m.group(2))
        if upper < lower:
            return None
        return Multiplicity(lower, upper)
    word = t.lower()
    if word == "many":
        return Multiplicity(0, None)
    if word in _WORD_NUMBERS:
        n = _WORD_NUMBERS[word]
        return Multiplicity(n, n)
    return None


def repair_labels(
    edge: RawEdge, classes: list[ClassEntity], warnings: Optional[list[str]] = None
) -> Association:
    """Assign edge labels to multiplicity ends and name, repairing misplacement.

    A multiplicity found in the start label binds to the source end, in the
    end label to the target end, and in the middle label to the first
    unfilled end (source first). The single remaining non-multiplicity token
    becomes the association name; anything left over is discarded into
    ``warnings``. Every non-canonical placement is logged in repair_notes.
    """
    if warnings is None:
        warnings = []
    notes: list[str] = []
    source_mult: Optional[Multiplicity] = None
    target_mult: Optional[Multiplicity] = None
    name: Optional[str] = None

    labels = {
        "start": edge.start_label.strip() if edge.start_label else "",
        "end": edge.end_label.strip() if edge.end_label else "",
        "middle": edge.middle_label.strip() if edge.middle_label else "",
    }
    mults = {pos: extract_multiplicity(text) for pos, text in labels.items()}

    if mults["start"] is not None:
        source_mult = mults["start"]
    if mults["end"] is not None:
        target_mult = mults["end"]
    if mults["middle"] is not None:
        if source_mult is None:
            source_mult = mults["middle"]
            notes.append(
                f"edge {edge.id}: multiplicity {labels['middle']!r} moved from "
                "middle label to source end"
            )
        elif target_mult is None:
            target_mult = mults["middle"]
            notes.append(
                f"edge {edge.id}: multiplicity {labels['middle']!r} moved from "
                "middle label to target end"
            )
        else:
            warnings.append(
                f"edge {edge.id}: discarded extra multiplicity {labels['middle']!r} "
                "(both ends already assigned)"
            )

    text_tokens = [
        (pos, text) for pos, text in labels.items() if text and mults[pos] is None
    ]
    # middle label is the canonical place for the name
    text_tokens.sort(key=lambda item: 0 if item[0] == "middle" else 1)
    for pos, text in text_tokens:
        if name is None:
            name = text
            if pos != "middle":
                notes.append(
                    f"edge {edge.id}: name {text!r} taken from {pos} label"
                )
        else:
            warnings.append(
                f"edge {edge.id}: discarded free text {text!r} "
                "(cannot be associated with a relationship end)"
            )

    return Association(
        source_id=edge.source_node,
        target_id=edge.target_node,
        name=name,
        source_multiplicity=source_mult,
        target_multiplicity=target_mult,
        repair_notes=notes,
    )


def parse_document(raw: str) -> ParseOutcome:
    """Convert a raw UTML JSON document into a repaired Diagram."""
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedJson(f"document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("top-level JSON value must be an object")

    nodes = doc.get("nodes", [])
    edges = doc.get("edges", [])
    if not isinstance(nodes, list) or not isinstance(edges, list):
        raise SchemaViolation("'nodes' and 'edges' must be arrays")
    if not nodes:
        raise EmptyDocument("document contains no nodes")

    warnings: list[str] = []
    classes: list[ClassEntity] = []
    seen_ids: set[str] = set()
    for node in nodes:
        if not isinstance(node, dict) or "id" not in node or "type" not in node:
            raise SchemaViolation(f"node missing required id/type fields: {node!r}")
        if node["type"] != "ClassNode":
            warnings.append(f"node {node['id']!r}: unknown type {node['type']!r}, skipped")
            continue
        name = str(node.get("text", "")).strip()
        if not name:
            raise SchemaViolation(f"ClassNode {node['id']!r} has an empty name")
        node_id = str(node["id"])
        if node_id in seen_ids:
            raise SchemaViolation(f"duplicate node id {node_id!r}")
        seen_ids.add(node_id)
        classes.append(ClassEntity(id=node_id, name=name))

    associations: list[Association] = []
    repaired = 0
    for edge in edges:
        if not isinstance(edge, dict) or "id" not in edge:
            raise SchemaViolation(f"edge missing required id field: {edge!r}")
        source = str(edge.get("source", ""))
        target = str(edge.get("target", ""))
        if source not in seen_ids or target not in seen_ids:
            raise SchemaViolation(
                f"edge {edge['id']!r} references unknown node "
                f"({source!r} -> {target!r})"
            )
        raw_edge = RawEdge(
            id=str(edge["id"]),
            source_node=source,
            target_node=target,
            start_label=edge.get("startLabel"),
            end_label=edge.get("endLabel"),
            middle_label=edge.get("middleLabel"),
        )
        assoc = repair_labels(raw_edge, classes, warnings)
        if assoc.repair_notes:
            repaired += 1
        associations.append(assoc)

    diagram = Diagram(classes=classes, associations=associations, warnings=warnings)
    return ParseOutcome(
        diagram=diagram, repaired_count=repaired, warning_count=len(warnings)
    )
