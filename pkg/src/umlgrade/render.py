"""Deterministic natural-language rendering of a diagram for grading prompts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .diagram import Diagram, validate


class InvalidDiagram(Exception):
    pass


@dataclass(frozen=True)
class NlDescription:
    text: str
    class_count: int
    association_count: int


def render_diagram(diagram: Diagram) -> NlDescription:
    """Render every class and association as fixed English sentences.

    Classes are listed sorted by (name, id); associations by (source name,
    target name, association name). Duplicate class names are disambiguated
    with their node ids so the text stays injective.
    """
    violations = validate(diagram)
    if violations:
        raise InvalidDiagram("; ".join(violations))

    name_counts = Counter(c.name for c in diagram.classes)

    def display_name(class_id: str) -> str:
        cls = diagram.class_by_id(class_id)
        assert cls is not None
        if name_counts[cls.name] > 1:
            return f"{cls.name} (#{cls.id})"
        return cls.name

    lines: list[str] = []
    for cls in sorted(diagram.classes, key=lambda c: (c.name, c.id)):
        lines.append(f"There is a class named {display_name(cls.id)}.")

    def assoc_key(a):
        return (
            display_name(a.source_id),
            display_name(a.target_id),
            a.name or "",
        )

    for assoc in sorted(diagram.associations, key=assoc_key):
        src = display_name(assoc.source_id)
        dst = display_name(assoc.target_id)
        sentence = f"Class {src} is associated with class {dst}"
        if assoc.name:
            sentence += f" via '{assoc.name}'"
        if assoc.source_multiplicity is not None:
            sentence += (
                f" with multiplicity {assoc.source_multiplicity.text()} on {src}'s end"
            )
            if assoc.target_multiplicity is not None:
                sentence += (
                    f" and multiplicity {assoc.target_multiplicity.text()} on {dst}'s end"
                )
        elif assoc.target_multiplicity is not None:
            sentence += (
                f" with multiplicity {assoc.target_multiplicity.text()} on {dst}'s end"
            )
        lines.append(sentence + ".")

    return NlDescription(
        text="\n".join(lines),
        class_count=len(diagram.classes),
        association_count=len(diagram.associations),
    )
